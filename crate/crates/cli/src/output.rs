//! Output files, metadata sidecars and atomic commits.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// One data file produced by a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Artifact {
        Artifact {
            name: name.into(),
            bytes,
        }
    }

    pub fn csv(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(greenspace::Error::from)?;
        for r in rows {
            w.write_record(&r).map_err(greenspace::Error::from)?;
        }
        let bytes = w.into_inner().map_err(|e| greenspace::Error::Io(e.into_error()))?;
        Ok(Artifact::new(name, bytes))
    }

    pub fn json(name: &str, value: &impl Serialize) -> Result<Artifact, CliError> {
        let mut bytes = serde_json::to_vec(value).map_err(greenspace::Error::from)?;
        bytes.push(b'\n');
        Ok(Artifact::new(name, bytes))
    }

    pub fn jsonl<T: Serialize>(name: &str, items: &[T]) -> Result<Artifact, CliError> {
        let mut bytes = Vec::new();
        for item in items {
            serde_json::to_writer(&mut bytes, item).map_err(greenspace::Error::from)?;
            bytes.push(b'\n');
        }
        Ok(Artifact::new(name, bytes))
    }
}

/// Empty for missing values, shortest round-trip text otherwise.
pub fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Everything recorded next to each output.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub command: String,
    pub inputs: Vec<PathBuf>,
    pub config: Value,
    pub seed: u64,
    pub streams: Value,
    pub details: Value,
}

impl RunMeta {
    fn sidecar(&self, artifact: &Artifact, input_hashes: &[Value], created: u64) -> Value {
        json!({
            "tool": "greenspace",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "output": artifact.name,
            "output_sha256": sha256_hex(&artifact.bytes),
            "inputs": input_hashes,
            "seed": self.seed,
            "streams": self.streams,
            "config": self.config,
            "details": self.details,
            "created_unix": created,
        })
    }
}

fn sidecar_name(name: &str) -> String {
    format!("{name}.meta.json")
}

/// Writes every artifact and its sidecar into `dir`. All files are staged
/// as temporaries first, so a failure leaves no partial outputs behind.
pub fn commit(dir: &Path, artifacts: &[Artifact], meta: &RunMeta) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(greenspace::Error::from)?;
    let input_hashes = meta
        .inputs
        .iter()
        .map(|p| Ok(json!({"path": p.display().to_string(), "sha256": hash_file(p)?})))
        .collect::<Result<Vec<_>, CliError>>()?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut staged = Vec::new();
    for a in artifacts {
        let mut side =
            serde_json::to_vec_pretty(&meta.sidecar(a, &input_hashes, created)).map_err(greenspace::Error::from)?;
        side.push(b'\n');
        for (name, bytes) in [(a.name.clone(), &a.bytes), (sidecar_name(&a.name), &side)] {
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(greenspace::Error::from)?;
            tmp.write_all(bytes).map_err(greenspace::Error::from)?;
            tmp.as_file().sync_all().map_err(greenspace::Error::from)?;
            staged.push((tmp, dir.join(name)));
        }
    }
    let mut written = Vec::new();
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| greenspace::Error::from(e.error))?;
        written.push(target);
    }
    Ok(written)
}
