use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_pgm, Image};
use crate::error::{Error, Result};
use crate::problems::{ProblemConfig, ProblemKind};

/// One input/target pair. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub problem: ProblemKind,
    pub vf: f64,
    pub input: String,
    pub target: String,
    pub objective: f64,
    pub iters: usize,
    pub config_fingerprint: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

/// Hex SHA-256 of the JSON-serialized configuration.
pub fn config_fingerprint(cfg: &ProblemConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("configuration serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<ManifestRecord>>>()?;
        Ok(Self { records })
    }

    /// Checks that volume fractions strictly increase and that every
    /// referenced file exists under `dir`.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        for pair in self.records.windows(2) {
            if !(pair[1].vf > pair[0].vf) {
                return Err(Error::Manifest(format!(
                    "volume fractions not strictly increasing: {} then {}",
                    pair[0].vf, pair[1].vf
                )));
            }
        }
        for r in &self.records {
            for file in [&r.input, &r.target] {
                if !dir.join(file).is_file() {
                    return Err(Error::Manifest(format!(
                        "record vf={} references missing file {}",
                        r.vf,
                        dir.join(file).display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fails if any record was produced with a different configuration
    /// than `base` at the record's volume fraction.
    pub fn verify_config(&self, base: &ProblemConfig) -> Result<()> {
        for r in &self.records {
            let expected = config_fingerprint(&base.with_vf_target(r.vf));
            if r.problem != base.kind() || r.config_fingerprint != expected {
                return Err(Error::Manifest(format!(
                    "configuration drift at vf={}: fingerprint {} != {}",
                    r.vf, r.config_fingerprint, expected
                )));
            }
        }
        Ok(())
    }

    pub fn find(&self, vf: f64) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| (r.vf - vf).abs() < 1e-9)
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    write_atomic(path, manifest.to_jsonl().as_bytes())
}

/// Reads and validates the manifest at `path`.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = Manifest::from_jsonl(&text)?;
    m.validate(manifest_dir(path))?;
    Ok(m)
}

pub(crate) fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

/// Loads the `(input, target)` images of one record.
pub fn load_pair(dir: &Path, record: &ManifestRecord) -> Result<(Image, Image)> {
    Ok((read_image(&dir.join(&record.input))?, read_image(&dir.join(&record.target))?))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_pgm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    tmp.set_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
