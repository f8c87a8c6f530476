//! Volume and objective errors of predicted designs, and n-sweep reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_image, Manifest, CONFIG_FILE, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::fem::DensityField;
use crate::nn::{infer, load_checkpoint, Model};
use crate::problems::{ProblemConfig, ProblemKind};

fn check_finite(rho: &DensityField, what: &str) -> Result<()> {
    if let Some(i) = rho.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} density at element {i}")));
    }
    Ok(())
}

/// `100 |mean(pred) − mean(target)| / mean(target)`.
pub fn volume_error(pred: &DensityField, target: &DensityField) -> Result<f64> {
    if pred.grid() != target.grid() {
        return Err(Error::shape(
            format!("{}x{} prediction", target.grid().nelx(), target.grid().nely()),
            format!("{}x{}", pred.grid().nelx(), pred.grid().nely()),
        ));
    }
    check_finite(pred, "predicted")?;
    let t = target.mean();
    if !(t > 0.0) {
        return Err(Error::UndefinedMetric("target volume fraction is zero".into()));
    }
    Ok(100.0 * (pred.mean() - t).abs() / t)
}

/// `100 |a − b| / |b|` for objective values `a` (predicted) and `b` (target).
pub fn relative_error(pred: f64, target: f64) -> Result<f64> {
    if !pred.is_finite() || !target.is_finite() {
        return Err(Error::NonFinite(format!("objectives {pred} and {target}")));
    }
    if target == 0.0 {
        return Err(Error::UndefinedMetric("target objective is zero".into()));
    }
    Ok(100.0 * (pred - target).abs() / target.abs())
}

/// Relative objective error with both designs re-evaluated under `cfg`.
/// Returns `(error, predicted objective, target objective)`.
pub fn objective_error_detail(pred: &DensityField, target: &DensityField, cfg: &ProblemConfig) -> Result<(f64, f64, f64)> {
    check_finite(pred, "predicted")?;
    let p = cfg.evaluate(pred)?;
    let t = cfg.evaluate(target)?;
    Ok((relative_error(p, t)?, p, t))
}

pub fn objective_error(pred: &DensityField, target: &DensityField, cfg: &ProblemConfig) -> Result<f64> {
    Ok(objective_error_detail(pred, target, cfg)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub problem: ProblemKind,
    pub vf: f64,
    pub n: usize,
    pub v_err: f64,
    pub obj_err: f64,
    pub pred_objective: f64,
    pub target_objective: f64,
}

/// One `(vf, n)` cell of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum EvalRow {
    Ok(EvalRecord),
    /// No checkpoint for this `n`.
    Absent { problem: ProblemKind, vf: f64, n: usize },
    Error {
        problem: ProblemKind,
        vf: f64,
        n: usize,
        error: String,
    },
}

impl EvalRow {
    pub fn key(&self) -> (ProblemKind, f64, usize) {
        match self {
            EvalRow::Ok(r) => (r.problem, r.vf, r.n),
            EvalRow::Absent { problem, vf, n } | EvalRow::Error { problem, vf, n, .. } => (*problem, *vf, *n),
        }
    }

    pub fn record(&self) -> Option<&EvalRecord> {
        match self {
            EvalRow::Ok(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("report line: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<10} {:>5} {:>6} {:>9} {:>9} {:>13} {:>13}  {}\n",
            "problem", "vf", "n", "V_err%", "Obj_err%", "pred_obj", "target_obj", "status"
        );
        for row in &self.rows {
            let (p, vf, n) = row.key();
            let _ = match row {
                EvalRow::Ok(r) => writeln!(
                    s,
                    "{:<10} {:>5.2} {:>6} {:>9.3} {:>9.3} {:>13.6e} {:>13.6e}  ok",
                    p.as_str(),
                    vf,
                    n,
                    r.v_err,
                    r.obj_err,
                    r.pred_objective,
                    r.target_objective
                ),
                EvalRow::Absent { .. } => {
                    writeln!(s, "{:<10} {vf:>5.2} {n:>6} {:>9} {:>9} {:>13} {:>13}  absent", p.as_str(), "-", "-", "-", "-")
                }
                EvalRow::Error { error, .. } => writeln!(
                    s,
                    "{:<10} {vf:>5.2} {n:>6} {:>9} {:>9} {:>13} {:>13}  error: {error}",
                    p.as_str(),
                    "-",
                    "-",
                    "-",
                    "-"
                ),
            };
        }
        s
    }

    pub fn n_ok(&self) -> usize {
        self.rows.iter().filter(|r| r.record().is_some()).count()
    }
}

#[derive(Deserialize)]
struct DatasetConfigFile {
    config: ProblemConfig,
}

/// Solver configuration stored next to a dataset's manifest.
pub fn read_dataset_config(dataset_dir: &Path) -> Result<ProblemConfig> {
    let path = dataset_dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file: DatasetConfigFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(file.config)
}

/// Manifest records without checking that the referenced files exist.
pub fn read_manifest_records(dataset_dir: &Path) -> Result<Manifest> {
    let path = dataset_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Manifest::from_jsonl(&text)
}

/// Record for one prediction against its target image.
pub fn evaluate_prediction(model: &Model, n: usize, vf: f64, target: &DensityField, base: &ProblemConfig) -> Result<EvalRecord> {
    let pred = infer(model, vf)?;
    let cfg = base.with_vf_target(vf);
    let v_err = volume_error(&pred, target)?;
    let (obj_err, p, t) = objective_error_detail(&pred, target, &cfg)?;
    Ok(EvalRecord {
        problem: cfg.kind(),
        vf,
        n,
        v_err,
        obj_err,
        pred_objective: p,
        target_objective: t,
    })
}

/// Evaluates every `(n, vf)` pair, `n` in the order of `checkpoints`.
///
/// `checkpoints` maps an adaptive width to its checkpoint file; a missing
/// file gives `Absent` rows, any other failure gives `Error` rows.
pub fn eval_report(dataset_dir: &Path, checkpoints: &[(usize, PathBuf)], vfs: &[f64]) -> Result<EvalReport> {
    let base = read_dataset_config(dataset_dir)?;
    let manifest = read_manifest_records(dataset_dir)?;
    let problem = base.kind();
    let mut models: BTreeMap<usize, std::result::Result<Model, String>> = BTreeMap::new();
    let mut absent = Vec::new();
    for (n, path) in checkpoints {
        if !path.exists() {
            absent.push(*n);
            continue;
        }
        models.insert(*n, load_checkpoint(path).map(|c| c.model).map_err(|e| e.to_string()));
    }
    let cells: Vec<(usize, f64)> = checkpoints
        .iter()
        .flat_map(|&(n, _)| vfs.iter().map(move |&vf| (n, vf)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(n, vf)| {
            if absent.contains(&n) {
                return EvalRow::Absent { problem, vf, n };
            }
            let result = models[&n].as_ref().map_err(Clone::clone).and_then(|model| {
                let rec = manifest
                    .find(vf)
                    .ok_or_else(|| format!("no target for vf={vf} in the manifest"))?;
                let target = read_image(&dataset_dir.join(&rec.target))
                    .and_then(|img| img.to_density())
                    .map_err(|e| e.to_string())?;
                evaluate_prediction(model, n, vf, &target, &base).map_err(|e| e.to_string())
            });
            match result {
                Ok(r) => EvalRow::Ok(r),
                Err(error) => EvalRow::Error { problem, vf, n, error },
            }
        })
        .collect();
    Ok(EvalReport { rows })
}
