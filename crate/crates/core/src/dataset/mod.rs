//! Training corpus: conditioning images, solver targets and the manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! {out}/{problem}/input_{vf×100:03}.pgm
//! {out}/{problem}/target_{vf×100:03}.pgm
//! {out}/{problem}/sample_{vf×100:03}.json   resume record
//! {out}/{problem}/manifest.jsonl
//! {out}/{problem}/config.json
//! {out}/{problem}/failures.jsonl           only when a solve failed
//! ```

mod image;
mod manifest;
mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use image::{make_input_image, Image};
pub use manifest::{
    config_fingerprint, load_pair, read_image, read_manifest, write_manifest, Manifest, ManifestRecord,
};
pub use manifest::write_atomic;
pub use pgm::{read_pgm, write_pgm};

use crate::error::{Error, Result};
use crate::problems::{ProblemConfig, ProblemKind};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const CONFIG_FILE: &str = "config.json";

/// Slack allowed between a target's mean density and its volume fraction.
pub const VOLUME_TOLERANCE: f64 = 1e-3;

/// Volume fractions `min, min + step, …, max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VfSweep {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for VfSweep {
    fn default() -> Self {
        Self {
            min: 0.01,
            max: 0.95,
            step: 0.01,
        }
    }
}

impl VfSweep {
    pub fn single(vf: f64) -> Self {
        Self {
            min: vf,
            max: vf,
            step: 0.01,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.min <= self.max && self.max < 1.0) || !(self.step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bad volume-fraction sweep {}..{} step {}",
                self.min, self.max, self.step
            )));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        let vfs: Vec<f64> = (0..count)
            .map(|i| ((self.min + i as f64 * self.step) * 1e6).round() / 1e6)
            .collect();
        let mut tags: Vec<u32> = vfs.iter().map(|&v| vf_tag(v)).collect();
        tags.dedup();
        if tags.len() != vfs.len() {
            return Err(Error::InvalidInput(format!(
                "sweep step {} is finer than the 0.01 file-name resolution",
                self.step
            )));
        }
        Ok(vfs)
    }
}

/// `round(100 vf)`, the number used in sample file names.
pub fn vf_tag(vf: f64) -> u32 {
    (vf * 100.0).round() as u32
}

/// A volume fraction whose solve failed or broke the volume invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub problem: ProblemKind,
    pub vf: f64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub failures: Vec<Failure>,
}

impl Dataset {
    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }
}

#[derive(Serialize)]
struct ConfigFile<'a> {
    config: &'a ProblemConfig,
    boundary_conditions: String,
    objective: &'static str,
    sweep: VfSweep,
}

/// Directory holding the samples of `problem` under `out_dir`.
pub fn problem_dir(out_dir: &Path, problem: ProblemKind) -> PathBuf {
    out_dir.join(problem.as_str())
}

/// Solves `base` at every volume fraction of `sweep` and writes the pairs.
///
/// Samples whose resume record matches the configuration fingerprint are
/// reused. A failed solve is recorded and skipped; I/O errors abort.
pub fn generate_dataset(base: &ProblemConfig, sweep: &VfSweep, out_dir: &Path, threads: usize) -> Result<Dataset> {
    let vfs = sweep.values()?;
    for &vf in &vfs {
        base.with_vf_target(vf).validate()?;
    }
    let dir = problem_dir(out_dir, base.kind());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cfg_json = serde_json::to_string_pretty(&ConfigFile {
        config: base,
        boundary_conditions: base.boundary_conditions(),
        objective: base.objective_name(),
        sweep: *sweep,
    })
    .expect("configuration serializes");
    write_atomic(&dir.join(CONFIG_FILE), cfg_json.as_bytes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<Outcome>> =
        pool.install(|| vfs.par_iter().map(|&vf| sample(base, vf, &dir)).collect());

    let mut manifest = Manifest::default();
    let mut failures = Vec::new();
    for o in outcomes {
        match o? {
            Outcome::Done(r) => manifest.records.push(r),
            Outcome::Failed(f) => failures.push(f),
        }
    }
    write_manifest(&dir.join(MANIFEST_FILE), &manifest)?;
    let failures_path = dir.join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        let text: String = failures
            .iter()
            .map(|f| serde_json::to_string(f).expect("failure serializes") + "\n")
            .collect();
        write_atomic(&failures_path, text.as_bytes())?;
    }
    Ok(Dataset {
        dir,
        manifest,
        failures,
    })
}

enum Outcome {
    Done(ManifestRecord),
    Failed(Failure),
}

fn sample(base: &ProblemConfig, vf: f64, dir: &Path) -> Result<Outcome> {
    let cfg = base.with_vf_target(vf);
    let fingerprint = config_fingerprint(&cfg);
    let tag = vf_tag(vf);
    let input = format!("input_{tag:03}.pgm");
    let target = format!("target_{tag:03}.pgm");
    let record_path = dir.join(format!("sample_{tag:03}.json"));

    if record_path.exists() {
        let text = fs::read_to_string(&record_path).map_err(|e| Error::io(&record_path, e))?;
        let previous: ManifestRecord = serde_json::from_str(&text).map_err(|e| {
            Error::Manifest(format!("corrupted resume record {}: {e}", record_path.display()))
        })?;
        if previous.config_fingerprint == fingerprint
            && dir.join(&previous.input).is_file()
            && dir.join(&previous.target).is_file()
        {
            return Ok(Outcome::Done(previous));
        }
    }

    let fail = |error: String| {
        Ok(Outcome::Failed(Failure {
            problem: cfg.kind(),
            vf,
            error,
        }))
    };
    let solution = match cfg.solve() {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let mean = solution.density.mean();
    let volume_ok = match cfg.kind() {
        ProblemKind::Arch => mean <= vf + VOLUME_TOLERANCE,
        _ => (mean - vf).abs() <= VOLUME_TOLERANCE,
    };
    if !volume_ok {
        return fail(format!("target mean density {mean} violates volume fraction {vf}"));
    }

    let grid = cfg.grid()?;
    let input_img = make_input_image(vf, grid.nelx(), grid.nely())?;
    write_atomic(&dir.join(&input), &write_pgm(&input_img)?)?;
    write_atomic(&dir.join(&target), &write_pgm(&Image::from_density(&solution.density))?)?;
    let record = ManifestRecord {
        problem: cfg.kind(),
        vf,
        input,
        target,
        objective: solution.objective,
        iters: solution.iterations,
        config_fingerprint: fingerprint,
    };
    let json = serde_json::to_string(&record).expect("record serializes");
    write_atomic(&record_path, json.as_bytes())?;
    Ok(Outcome::Done(record))
}
