//! NDVI, per-facility vegetation statistics and the per-category summary.
//!
//! A pixel belongs to a facility when its center lies inside the facility
//! geometry. Pixels whose center lies in any water polygon are excluded, as
//! are nodata pixels. A valid pixel counts as vegetated when its NDVI is at
//! least the threshold.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{point_in_polygon, Category, GeoPoint, ParkFacility, Polygon};

pub const DEFAULT_VEG_THRESHOLD: f64 = 0.2;

/// `(nir − red) / (nir + red)`, or `None` when both are zero.
pub fn ndvi(nir: f64, red: f64) -> Result<Option<f64>> {
    if !(nir.is_finite() && red.is_finite()) || nir < 0.0 || red < 0.0 {
        return Err(Error::InvalidReflectance { nir, red });
    }
    let sum = nir + red;
    Ok((sum > 0.0).then(|| (nir - red) / sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandEncoding {
    Csv,
    F32le,
    F64le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPaths {
    pub nir: PathBuf,
    pub red: PathBuf,
}

/// On-disk header. Band paths are relative to the header's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub width: usize,
    pub height: usize,
    /// (lon, lat) of the top-left corner.
    pub origin: [f64; 2],
    /// Degrees per pixel along x and y. y is usually negative.
    pub pixel_size: [f64; 2],
    #[serde(default)]
    pub nodata: Option<f64>,
    pub encoding: BandEncoding,
    pub bands: BandPaths,
}

/// Two-band raster, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    origin: [f64; 2],
    pixel_size: [f64; 2],
    nodata: Option<f64>,
    nir: Vec<f64>,
    red: Vec<f64>,
}

impl RasterGrid {
    pub fn new(
        width: usize,
        height: usize,
        origin: [f64; 2],
        pixel_size: [f64; 2],
        nodata: Option<f64>,
        nir: Vec<f64>,
        red: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("empty raster {width}x{height}")));
        }
        if pixel_size.iter().any(|s| *s == 0.0 || !s.is_finite()) || origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidRaster(format!(
                "bad georeference: origin {origin:?}, pixel size {pixel_size:?}"
            )));
        }
        let n = width * height;
        for (name, band) in [("nir", &nir), ("red", &red)] {
            if band.len() != n {
                return Err(Error::InvalidRaster(format!(
                    "{name} band has {} values, expected {width}x{height} = {n}",
                    band.len()
                )));
            }
        }
        Ok(RasterGrid {
            width,
            height,
            origin,
            pixel_size,
            nodata,
            nir,
            red,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> GeoPoint {
        GeoPoint {
            lon: self.origin[0] + (col as f64 + 0.5) * self.pixel_size[0],
            lat: self.origin[1] + (row as f64 + 0.5) * self.pixel_size[1],
        }
    }

    /// Band values at a pixel, or `None` for nodata.
    pub fn values(&self, col: usize, row: usize) -> Option<(f64, f64)> {
        let i = row * self.width + col;
        let (n, r) = (self.nir[i], self.red[i]);
        let missing = |v: f64| v.is_nan() || self.nodata.is_some_and(|nd| v == nd);
        (!missing(n) && !missing(r)).then_some((n, r))
    }

    /// Index range along one axis whose pixel centers fall in `[lo, hi]`.
    fn axis_range(origin: f64, step: f64, len: usize, lo: f64, hi: f64) -> std::ops::Range<usize> {
        // center(i) = origin + (i + 0.5) * step
        let (a, b) = ((lo - origin) / step - 0.5, (hi - origin) / step - 0.5);
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let start = a.ceil().max(0.0);
        let end = (b.floor() + 1.0).min(len as f64);
        if end <= start {
            0..0
        } else {
            start as usize..end as usize
        }
    }

    pub fn load(header_path: &Path) -> Result<Self> {
        let header: RasterHeader = serde_json::from_reader(std::io::BufReader::new(fs::File::open(header_path)?))?;
        let dir = header_path.parent().unwrap_or(Path::new("."));
        let n = header.width * header.height;
        let read = |p: &Path| -> Result<Vec<f64>> {
            let path = dir.join(p);
            let vals = match header.encoding {
                BandEncoding::Csv => read_csv_band(&path, header.width)?,
                BandEncoding::F32le => fs::read(&path)?
                    .chunks(4)
                    .map(|c| c.try_into().map(|b| f32::from_le_bytes(b) as f64))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::InvalidRaster(format!("{} is not a whole number of f32", path.display())))?,
                BandEncoding::F64le => fs::read(&path)?
                    .chunks(8)
                    .map(|c| c.try_into().map(f64::from_le_bytes))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::InvalidRaster(format!("{} is not a whole number of f64", path.display())))?,
            };
            if vals.len() != n {
                return Err(Error::InvalidRaster(format!(
                    "{} has {} values, expected {n}",
                    path.display(),
                    vals.len()
                )));
            }
            Ok(vals)
        };
        let nir = read(&header.bands.nir)?;
        let red = read(&header.bands.red)?;
        RasterGrid::new(
            header.width,
            header.height,
            header.origin,
            header.pixel_size,
            header.nodata,
            nir,
            red,
        )
    }

    /// Header `<stem>.json` plus `<stem>_nir.csv` and `<stem>_red.csv`, as
    /// (file name, contents) pairs.
    pub fn csv_files(&self, stem: &str) -> Result<Vec<(String, Vec<u8>)>> {
        let header = RasterHeader {
            width: self.width,
            height: self.height,
            origin: self.origin,
            pixel_size: self.pixel_size,
            nodata: self.nodata,
            encoding: BandEncoding::Csv,
            bands: BandPaths {
                nir: format!("{stem}_nir.csv").into(),
                red: format!("{stem}_red.csv").into(),
            },
        };
        let mut files = vec![(
            format!("{stem}.json"),
            (serde_json::to_string_pretty(&header)? + "\n").into_bytes(),
        )];
        for (path, band) in [(&header.bands.nir, &self.nir), (&header.bands.red, &self.red)] {
            let mut out = Vec::new();
            for row in band.chunks(self.width) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(","))?;
            }
            files.push((path.display().to_string(), out));
        }
        Ok(files)
    }

    /// Writes [`RasterGrid::csv_files`] into `dir` and returns the header path.
    pub fn save_csv(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        for (name, bytes) in self.csv_files(stem)? {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(dir.join(format!("{stem}.json")))
    }
}

fn read_csv_band(path: &Path, width: usize) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::InvalidRaster(format!(
                "{} row {} has {} values, expected {width}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        for v in rec.iter() {
            let x = if v.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                v.parse::<f64>()
                    .map_err(|_| Error::InvalidRaster(format!("{} row {}: bad value {v:?}", path.display(), i + 1)))?
            };
            out.push(x);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkVegStats {
    pub facility_id: String,
    pub mean_ndvi: f64,
    /// Share of valid pixels at or above the threshold, in percent.
    pub percent_vegetated: f64,
    pub pixels_total: u64,
    pub pixels_water: u64,
    pub pixels_nodata: u64,
    pub pixels_valid: u64,
    pub pixels_vegetated: u64,
}

/// Compensated running sum.
#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn park_stats(
    raster: &RasterGrid,
    facility: &ParkFacility,
    water: &[Polygon],
    veg_threshold: f64,
) -> Result<ParkVegStats> {
    if !veg_threshold.is_finite() {
        return Err(Error::InvalidConfig(format!("vegetation threshold {veg_threshold}")));
    }
    let bb = facility.bbox();
    let cols = RasterGrid::axis_range(
        raster.origin[0],
        raster.pixel_size[0],
        raster.width,
        bb.min_lon,
        bb.max_lon,
    );
    let rows = RasterGrid::axis_range(
        raster.origin[1],
        raster.pixel_size[1],
        raster.height,
        bb.min_lat,
        bb.max_lat,
    );
    let mut s = ParkVegStats {
        facility_id: facility.id.clone(),
        mean_ndvi: f64::NAN,
        percent_vegetated: f64::NAN,
        pixels_total: 0,
        pixels_water: 0,
        pixels_nodata: 0,
        pixels_valid: 0,
        pixels_vegetated: 0,
    };
    let mut sum = Neumaier::default();
    for row in rows {
        for col in cols.clone() {
            let p = raster.pixel_center(col, row);
            if !facility.contains(p) {
                continue;
            }
            s.pixels_total += 1;
            if water.iter().any(|w| point_in_polygon(p, w)) {
                s.pixels_water += 1;
                continue;
            }
            let value = match raster.values(col, row) {
                Some((nir, red)) => ndvi(nir, red)?,
                None => None,
            };
            match value {
                None => s.pixels_nodata += 1,
                Some(v) => {
                    s.pixels_valid += 1;
                    s.pixels_vegetated += u64::from(v >= veg_threshold);
                    sum.add(v);
                }
            }
        }
    }
    if s.pixels_valid == 0 {
        return Err(Error::NoValidPixels {
            facility: facility.id.clone(),
        });
    }
    s.mean_ndvi = sum.value() / s.pixels_valid as f64;
    s.percent_vegetated = 100.0 * s.pixels_vegetated as f64 / s.pixels_valid as f64;
    Ok(s)
}

/// `park_stats` for every facility, in input order.
pub fn all_park_stats(
    raster: &RasterGrid,
    facilities: &[ParkFacility],
    water: &[Polygon],
    veg_threshold: f64,
) -> Vec<Result<ParkVegStats>> {
    facilities
        .par_iter()
        .map(|f| park_stats(raster, f, water, veg_threshold))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    pub count: u64,
    pub mean_acres: f64,
    pub mean_ndvi: f64,
    pub mean_percent_vegetated: f64,
}

pub const REPORT_HEADER: [&str; 5] = ["Category", "Count", "Mean Acres", "Mean NDVI", "Mean Percent Vegetated"];

type Groups<'a> = BTreeMap<(u8, String), (Category, Vec<(f64, &'a ParkVegStats)>)>;

/// Unweighted per-category means. The three primary categories come first.
pub fn category_report(stats: &[ParkVegStats], facilities: &[ParkFacility]) -> Result<Vec<CategoryRow>> {
    let by_id: BTreeMap<&str, &ParkFacility> = facilities.iter().map(|f| (f.id.as_str(), f)).collect();
    let mut groups: Groups = BTreeMap::new();
    for s in stats {
        let f = by_id
            .get(s.facility_id.as_str())
            .ok_or_else(|| Error::InvalidConfig(format!("statistics for unknown facility {:?}", s.facility_id)))?;
        groups
            .entry({
                let (rank, name) = f.category.order_key();
                (rank, name.to_string())
            })
            .or_insert_with(|| (f.category.clone(), Vec::new()))
            .1
            .push((f.acres, s));
    }
    Ok(groups
        .into_values()
        .map(|(category, members)| {
            let n = members.len() as f64;
            let mean = |g: &dyn Fn(&(f64, &ParkVegStats)) -> f64| {
                let mut acc = Neumaier::default();
                members.iter().for_each(|m| acc.add(g(m)));
                acc.value() / n
            };
            CategoryRow {
                count: members.len() as u64,
                mean_acres: mean(&|m| m.0),
                mean_ndvi: mean(&|m| m.1.mean_ndvi),
                mean_percent_vegetated: mean(&|m| m.1.percent_vegetated),
                category,
            }
        })
        .collect())
}

pub fn write_report_csv<W: std::io::Write>(rows: &[CategoryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.category.display_name().to_string(),
            r.count.to_string(),
            r.mean_acres.to_string(),
            r.mean_ndvi.to_string(),
            r.mean_percent_vegetated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<(f64, f64)> {
        vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    }

    fn facility(id: &str, category: Category, acres: f64, ring: Vec<(f64, f64)>) -> ParkFacility {
        ParkFacility {
            id: id.into(),
            name: id.into(),
            category,
            polygons: vec![Polygon::new(ring, vec![]).unwrap()],
            acres,
        }
    }

    /// 8x8 raster of unit pixels covering lon 0..8, lat 0..8.
    fn grid(f: impl Fn(usize, usize) -> (f64, f64)) -> RasterGrid {
        let (mut nir, mut red) = (Vec::new(), Vec::new());
        for row in 0..8 {
            for col in 0..8 {
                let (n, r) = f(col, row);
                nir.push(n);
                red.push(r);
            }
        }
        RasterGrid::new(8, 8, [0.0, 8.0], [1.0, -1.0], Some(-9999.0), nir, red).unwrap()
    }

    #[test]
    fn ndvi_examples() {
        assert_eq!(ndvi(0.5, 0.5).unwrap(), Some(0.0));
        assert_eq!(ndvi(1.0, 0.0).unwrap(), Some(1.0));
        assert!((ndvi(0.6, 0.2).unwrap().unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ndvi(0.0, 0.0).unwrap(), None);
        assert!(ndvi(-0.1, 0.2).is_err());
        assert!(ndvi(f64::NAN, 0.2).is_err());
    }

    #[test]
    fn uniform_raster() {
        let r = grid(|_, _| (0.6, 0.2));
        let f = facility("p", Category::RegionalPark, 1.0, square(0.0, 0.0, 8.0, 8.0));
        let s = park_stats(&r, &f, &[], DEFAULT_VEG_THRESHOLD).unwrap();
        assert_eq!(s.pixels_total, 64);
        assert!((s.mean_ndvi - 0.5).abs() < 1e-15);
        assert_eq!(s.percent_vegetated, 100.0);
    }

    #[test]
    fn checkerboard() {
        let r = grid(|c, rw| if (c + rw) % 2 == 0 { (7.0, 3.0) } else { (5.0, 5.0) });
        let f = facility("p", Category::RegionalPark, 1.0, square(0.0, 0.0, 8.0, 8.0));
        let s = park_stats(&r, &f, &[], 0.2).unwrap();
        assert_eq!(s.mean_ndvi, 0.2);
        assert_eq!(s.percent_vegetated, 50.0);
        assert_eq!(s.pixels_vegetated, 32);
    }

    #[test]
    fn water_half_and_nodata() {
        let r = grid(|c, _| if c == 7 { (-9999.0, 1.0) } else { (0.6, 0.2) });
        let f = facility("p", Category::RegionalPark, 1.0, square(0.0, 0.0, 8.0, 8.0));
        let water = Polygon::new(square(0.0, 0.0, 8.0, 4.0), vec![]).unwrap();
        let s = park_stats(&r, &f, &[water], 0.2).unwrap();
        assert_eq!(s.pixels_total, 64);
        assert_eq!(s.pixels_water, 32);
        assert_eq!(s.pixels_nodata, 4);
        assert_eq!(s.pixels_valid, 28);
        assert!((s.mean_ndvi - 0.5).abs() < 1e-15);
        assert_eq!(s.percent_vegetated, 100.0);
    }

    #[test]
    fn facility_outside_raster_has_no_pixels() {
        let r = grid(|_, _| (0.6, 0.2));
        let f = facility("far", Category::RegionalPark, 1.0, square(20.0, 20.0, 21.0, 21.0));
        assert!(matches!(park_stats(&r, &f, &[], 0.2), Err(Error::NoValidPixels { .. })));
    }

    #[test]
    fn report_means_and_order() {
        let fs = vec![
            facility("c", Category::CivicPlazaOrSquare, 2.0, square(0.0, 0.0, 1.0, 1.0)),
            facility("a", Category::RegionalPark, 10.0, square(0.0, 0.0, 1.0, 1.0)),
            facility("b", Category::RegionalPark, 20.0, square(0.0, 0.0, 1.0, 1.0)),
        ];
        let stat = |id: &str, ndvi: f64, pct: f64| ParkVegStats {
            facility_id: id.into(),
            mean_ndvi: ndvi,
            percent_vegetated: pct,
            pixels_total: 1,
            pixels_water: 0,
            pixels_nodata: 0,
            pixels_valid: 1,
            pixels_vegetated: 1,
        };
        let rows = category_report(
            &[stat("a", 0.1, 50.0), stat("b", 0.3, 70.0), stat("c", 0.05, 10.0)],
            &fs,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].category, Category::RegionalPark);
        assert_eq!(rows[0].count, 2);
        assert!((rows[0].mean_ndvi - 0.2).abs() < 1e-15);
        assert_eq!(rows[0].mean_acres, 15.0);
        assert_eq!(rows[1].mean_percent_vegetated, 10.0);
        let mut out = Vec::new();
        write_report_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("Category,Count,Mean Acres,Mean NDVI,Mean Percent Vegetated\n"));
        assert!(category_report(&[stat("zz", 0.1, 1.0)], &fs).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("veg-rt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let r = grid(|c, rw| (c as f64 * 0.1, rw as f64 * 0.07));
        let h = r.save_csv(&dir, "scene").unwrap();
        assert_eq!(RasterGrid::load(&h).unwrap(), r);
        fs::remove_dir_all(&dir).unwrap();
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn antisymmetric(a in 0.0f64..1e4, b in 0.0f64..1e4) {
                prop_assert_eq!(ndvi(a, b).unwrap().map(|v| -v), ndvi(b, a).unwrap());
            }

            #[test]
            fn mean_bounded_and_threshold_monotone(
                vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 64),
                t1 in -1.0f64..1.0, t2 in -1.0f64..1.0,
            ) {
                let r = grid(|c, rw| vals[rw * 8 + c]);
                let f = facility("p", Category::RegionalPark, 1.0, square(0.5, 0.5, 7.5, 7.5));
                if let Ok(s) = park_stats(&r, &f, &[], t1.min(t2)) {
                    let px: Vec<f64> = vals.iter().filter_map(|&(n, rd)| ndvi(n, rd).unwrap()).collect();
                    let lo = px.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(s.mean_ndvi >= lo - 1e-12 && s.mean_ndvi <= hi + 1e-12);
                    let s2 = park_stats(&r, &f, &[], t1.max(t2)).unwrap();
                    prop_assert!(s2.percent_vegetated <= s.percent_vegetated);
                    let water = Polygon::new(square(0.0, 0.0, 3.0, 3.0), vec![]).unwrap();
                    if let Ok(s3) = park_stats(&r, &f, &[water], t1) {
                        prop_assert!(s3.pixels_valid <= s.pixels_valid);
                    }
                }
            }
        }
    }
}
