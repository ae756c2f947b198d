//! Facility polygons, point-in-polygon containment and the message ↔ facility
//! spatial join.
//!
//! Containment is planar in (lon, lat) degrees. Parks are small enough that
//! curvature does not matter at city scale.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::corpus::MessageRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    RegionalPark,
    NeighborhoodParkOrPlayground,
    CivicPlazaOrSquare,
    Other(String),
}

impl Category {
    /// Maps free-form labels (`"Regional Park"`, `"regional_park"`,
    /// `"RegionalPark"`) onto the enum; anything unknown becomes `Other`.
    pub fn parse(label: &str) -> Category {
        let key: String = label
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "regionalpark" | "regionalparks" => Category::RegionalPark,
            "neighborhoodparkorplayground" | "neighborhoodparksandplaygrounds" | "neighborhoodpark" => {
                Category::NeighborhoodParkOrPlayground
            }
            "civicplazaorsquare" | "civicplazasandsquares" | "civicplaza" => Category::CivicPlazaOrSquare,
            _ => Category::Other(label.trim().to_string()),
        }
    }

    /// Identifier used in files and on the command line.
    pub fn key(&self) -> &str {
        match self {
            Category::RegionalPark => "RegionalPark",
            Category::NeighborhoodParkOrPlayground => "NeighborhoodParkOrPlayground",
            Category::CivicPlazaOrSquare => "CivicPlazaOrSquare",
            Category::Other(s) => s,
        }
    }

    /// Report order: the three primary categories, then others by name.
    pub fn order_key(&self) -> (u8, &str) {
        match self {
            Category::RegionalPark => (0, ""),
            Category::NeighborhoodParkOrPlayground => (1, ""),
            Category::CivicPlazaOrSquare => (2, ""),
            Category::Other(s) => (3, s),
        }
    }

    /// Human-readable name for reports.
    pub fn display_name(&self) -> &str {
        match self {
            Category::RegionalPark => "Regional Park",
            Category::NeighborhoodParkOrPlayground => "Neighborhood Park or Playground",
            Category::CivicPlazaOrSquare => "Civic Plaza or Square",
            Category::Other(s) => s,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Category::parse(&s))
    }
}

/// Closed ring of `(lon, lat)` vertices; the last vertex repeats the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    vertices: Vec<(f64, f64)>,
}

impl Ring {
    pub fn new(mut vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite vertex".into()));
        }
        let distinct: BTreeSet<(u64, u64)> = vertices.iter().map(|(x, y)| (x.to_bits(), y.to_bits())).collect();
        if distinct.len() < 3 {
            return Err(Error::DegenerateRing {
                distinct: distinct.len(),
            });
        }
        if vertices.first() != vertices.last() {
            vertices.push(vertices[0]);
        }
        Ok(Ring { vertices })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn on_boundary(&self, p: GeoPoint) -> bool {
        let (px, py) = (p.lon, p.lat);
        self.edges().any(|((ax, ay), (bx, by))| {
            let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
            cross == 0.0 && px >= ax.min(bx) && px <= ax.max(bx) && py >= ay.min(by) && py <= ay.max(by)
        })
    }

    /// Even-odd ray cast toward +lon. Boundary points are not special-cased.
    pub fn crossings_odd(&self, p: GeoPoint) -> bool {
        let (px, py) = (p.lon, p.lat);
        let mut inside = false;
        for ((ax, ay), (bx, by)) in self.edges() {
            if (ay > py) != (by > py) {
                let x_at = ax + (py - ay) * (bx - ax) / (by - ay);
                if px < x_at {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Inside or on the ring.
    pub fn covers(&self, p: GeoPoint) -> bool {
        self.on_boundary(p) || self.crossings_odd(p)
    }

    /// Shoelace area in square degrees.
    pub fn planar_area(&self) -> f64 {
        self.edges()
            .map(|((ax, ay), (bx, by))| ax * by - bx * ay)
            .sum::<f64>()
            .abs()
            / 2.0
    }

    fn bbox(&self) -> BBox {
        BBox::of(self.vertices.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    fn of(points: impl Iterator<Item = (f64, f64)>) -> BBox {
        let mut b = BBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            b.min_lon = b.min_lon.min(x);
            b.max_lon = b.max_lon.max(x);
            b.min_lat = b.min_lat.min(y);
            b.max_lat = b.max_lat.max(y);
        }
        b
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }

    fn union(self, o: BBox) -> BBox {
        BBox {
            min_lon: self.min_lon.min(o.min_lon),
            min_lat: self.min_lat.min(o.min_lat),
            max_lon: self.max_lon.max(o.max_lon),
            max_lat: self.max_lat.max(o.max_lat),
        }
    }
}

/// Outer ring plus holes. Holes must lie within the outer ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    outer: Ring,
    holes: Vec<Ring>,
    bbox: BBox,
}

impl Polygon {
    pub fn new(outer: Vec<(f64, f64)>, holes: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let outer = Ring::new(outer)?;
        let holes = holes.into_iter().map(Ring::new).collect::<Result<Vec<_>>>()?;
        for h in &holes {
            if let Some(&(lon, lat)) = h
                .vertices()
                .iter()
                .find(|&&(lon, lat)| !outer.covers(GeoPoint { lat, lon }))
            {
                return Err(Error::InvalidGeometry(format!(
                    "hole vertex ({lon}, {lat}) lies outside its outer ring"
                )));
            }
        }
        let bbox = outer.bbox();
        Ok(Polygon { outer, holes, bbox })
    }

    pub fn outer(&self) -> &Ring {
        &self.outer
    }

    pub fn holes(&self) -> &[Ring] {
        &self.holes
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Outer area minus hole areas, in square degrees.
    pub fn planar_area(&self) -> f64 {
        self.outer.planar_area() - self.holes.iter().map(Ring::planar_area).sum::<f64>()
    }

    fn to_coordinates(&self) -> Value {
        let ring = |r: &Ring| -> Value { r.vertices().iter().map(|&(x, y)| json!([x, y])).collect() };
        std::iter::once(ring(&self.outer))
            .chain(self.holes.iter().map(ring))
            .collect()
    }
}

/// True when `p` is inside the outer ring and outside every hole.
/// Points on any ring edge count as inside.
pub fn point_in_polygon(p: GeoPoint, poly: &Polygon) -> bool {
    if !poly.bbox.contains(p) {
        return false;
    }
    if poly.outer.on_boundary(p) || poly.holes.iter().any(|h| h.on_boundary(p)) {
        return true;
    }
    poly.outer.crossings_odd(p) && !poly.holes.iter().any(|h| h.crossings_odd(p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParkFacility {
    pub id: String,
    pub name: String,
    pub category: Category,
    pub polygons: Vec<Polygon>,
    pub acres: f64,
}

impl ParkFacility {
    pub fn contains(&self, p: GeoPoint) -> bool {
        self.polygons.iter().any(|poly| point_in_polygon(p, poly))
    }

    pub fn bbox(&self) -> BBox {
        self.polygons
            .iter()
            .map(Polygon::bbox)
            .reduce(BBox::union)
            .expect("facility has at least one polygon")
    }

    pub fn tag(&self) -> FacilityTag {
        FacilityTag {
            id: self.id.clone(),
            category: self.category.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacilityTag {
    pub id: String,
    pub category: Category,
}

/// A message with the facility it was posted from, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedMessage {
    #[serde(flatten)]
    pub record: MessageRecord,
    pub facility: Option<FacilityTag>,
}

impl AnnotatedMessage {
    pub fn point(&self) -> GeoPoint {
        GeoPoint::new(self.record.lat, self.record.lon)
    }
}

fn parse_ring(v: &Value) -> Result<Vec<(f64, f64)>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::InvalidGeometry("ring is not an array".into()))?;
    arr.iter()
        .map(|pt| {
            let c = pt.as_array().filter(|c| c.len() >= 2);
            match c.map(|c| (c[0].as_f64(), c[1].as_f64())) {
                Some((Some(x), Some(y))) => Ok((x, y)),
                _ => Err(Error::InvalidGeometry(format!("bad position {pt}"))),
            }
        })
        .collect()
}

fn parse_polygon(rings: &Value) -> Result<Polygon> {
    let rings = rings
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::InvalidGeometry("polygon has no rings".into()))?;
    let outer = parse_ring(&rings[0])?;
    let holes = rings[1..].iter().map(parse_ring).collect::<Result<Vec<_>>>()?;
    Polygon::new(outer, holes)
}

/// Polygons of a GeoJSON `Polygon` or `MultiPolygon` geometry object.
fn parse_geometry(geom: &Value) -> Result<Vec<Polygon>> {
    let coords = &geom["coordinates"];
    match geom["type"].as_str() {
        Some("Polygon") => Ok(vec![parse_polygon(coords)?]),
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| Error::InvalidGeometry("MultiPolygon coordinates".into()))?
            .iter()
            .map(parse_polygon)
            .collect(),
        Some("GeometryCollection") => {
            let mut out = Vec::new();
            for g in geom["geometries"].as_array().into_iter().flatten() {
                out.extend(parse_geometry(g)?);
            }
            Ok(out)
        }
        other => Err(Error::InvalidGeometry(format!("unsupported geometry type {other:?}"))),
    }
}

fn features(doc: &Value) -> Result<Vec<&Value>> {
    match doc["type"].as_str() {
        Some("FeatureCollection") => Ok(doc["features"]
            .as_array()
            .map(|f| f.iter().collect())
            .unwrap_or_default()),
        Some("Feature") => Ok(vec![doc]),
        other => Err(Error::InvalidGeometry(format!(
            "expected a FeatureCollection, got {other:?}"
        ))),
    }
}

fn prop_string(props: &Value, key: &str) -> Option<String> {
    match &props[key] {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Reads facilities from a GeoJSON FeatureCollection. Every feature needs
/// `id`, `name`, `category` and `acres` properties.
pub fn load_facilities<R: Read>(reader: R) -> Result<Vec<ParkFacility>> {
    let doc: Value = serde_json::from_reader(reader)?;
    let mut out: Vec<ParkFacility> = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, f) in features(&doc)?.into_iter().enumerate() {
        let props = &f["properties"];
        let missing = |k: &str| Error::InvalidGeometry(format!("feature {i}: missing property {k:?}"));
        let id = prop_string(props, "id").ok_or_else(|| missing("id"))?;
        let name = prop_string(props, "name").ok_or_else(|| missing("name"))?;
        if name.trim().is_empty() {
            return Err(Error::InvalidGeometry(format!("feature {i}: empty name")));
        }
        let category = Category::parse(&prop_string(props, "category").ok_or_else(|| missing("category"))?);
        let acres = props["acres"].as_f64().ok_or_else(|| missing("acres"))?;
        if !(acres.is_finite() && acres > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "facility {id:?}: acres must be positive"
            )));
        }
        let polygons = parse_geometry(&f["geometry"])?;
        if polygons.is_empty() {
            return Err(Error::InvalidGeometry(format!("facility {id:?} has no polygons")));
        }
        if !ids.insert(id.clone()) {
            return Err(Error::InvalidGeometry(format!("duplicate facility id {id:?}")));
        }
        out.push(ParkFacility {
            id,
            name,
            category,
            polygons,
            acres,
        });
    }
    Ok(out)
}

/// Reads every polygon of a GeoJSON document (e.g. a water mask).
pub fn load_polygons<R: Read>(reader: R) -> Result<Vec<Polygon>> {
    let doc: Value = serde_json::from_reader(reader)?;
    if doc["type"] == "FeatureCollection" || doc["type"] == "Feature" {
        let mut out = Vec::new();
        for f in features(&doc)? {
            out.extend(parse_geometry(&f["geometry"])?);
        }
        Ok(out)
    } else {
        parse_geometry(&doc)
    }
}

fn geometry_value(polygons: &[Polygon]) -> Value {
    if polygons.len() == 1 {
        json!({"type": "Polygon", "coordinates": polygons[0].to_coordinates()})
    } else {
        json!({
            "type": "MultiPolygon",
            "coordinates": polygons.iter().map(Polygon::to_coordinates).collect::<Vec<_>>()
        })
    }
}

pub fn facilities_to_geojson(facilities: &[ParkFacility]) -> Value {
    let features: Vec<Value> = facilities
        .iter()
        .map(|f| {
            json!({
                "type": "Feature",
                "properties": {
                    "id": f.id,
                    "name": f.name,
                    "category": f.category.key(),
                    "acres": f.acres,
                },
                "geometry": geometry_value(&f.polygons),
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn polygons_to_geojson(polygons: &[Polygon]) -> Value {
    let features: Vec<Value> = polygons
        .iter()
        .map(|p| json!({"type": "Feature", "properties": {}, "geometry": geometry_value(std::slice::from_ref(p))}))
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Facility containing `p`; overlaps resolve to the smallest area, then the
/// lexicographically smallest id.
pub fn locate(p: GeoPoint, facilities: &[ParkFacility]) -> Option<&ParkFacility> {
    facilities
        .iter()
        .filter(|f| f.contains(p))
        .min_by(|a, b| a.acres.total_cmp(&b.acres).then_with(|| a.id.cmp(&b.id)))
}

pub fn spatial_join(messages: &[MessageRecord], facilities: &[ParkFacility]) -> Vec<AnnotatedMessage> {
    messages
        .par_iter()
        .map(|m| AnnotatedMessage {
            record: m.clone(),
            facility: locate(GeoPoint::new(m.lat, m.lon), facilities).map(ParkFacility::tag),
        })
        .collect()
}
