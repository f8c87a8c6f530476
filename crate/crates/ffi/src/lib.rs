//! C ABI over `topocnn`.
//!
//! Every fallible call returns a [`TopocnnStatus`] and writes results through
//! out-pointers. On failure the message is kept per thread and read with
//! [`topocnn_last_error_message`]. Handles are opaque; each `*_new`, `*_load`,
//! `*_solve` or `*_infer` result must be released with the matching `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use topocnn::dataset::{write_atomic, write_pgm, Image};
use topocnn::fem::{DensityField, Grid};
use topocnn::metrics::{objective_error, volume_error};
use topocnn::nn::{infer, load_checkpoint, Model};
use topocnn::problems::{ProblemConfig, ProblemKind};
use topocnn::Error;

/// Result of every fallible call. Values 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopocnnStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    NullArgument = 1,
    /// Parameters out of range or shapes that do not match.
    Validation = 2,
    /// Unreadable or malformed files.
    Data = 3,
    /// Solver breakdown or non-finite values.
    Numeric = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopocnnProblemKind {
    Cantilever = 0,
    Arch = 1,
    Micro = 2,
}

impl From<TopocnnProblemKind> for ProblemKind {
    fn from(k: TopocnnProblemKind) -> Self {
        match k {
            TopocnnProblemKind::Cantilever => ProblemKind::Cantilever,
            TopocnnProblemKind::Arch => ProblemKind::Arch,
            TopocnnProblemKind::Micro => ProblemKind::Micro,
        }
    }
}

/// Problem configuration with solver settings.
pub struct TopocnnProblem(ProblemConfig);

/// Element densities on a structured grid, row-major from the top-left.
pub struct TopocnnDensity(DensityField);

/// Trained network loaded from a checkpoint.
pub struct TopocnnModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TopocnnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => TopocnnStatus::Validation,
            3 => TopocnnStatus::Data,
            _ => TopocnnStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TopocnnStatus::NullArgument, format!("{what} is null"))
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TopocnnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TopocnnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            TopocnnStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(TopocnnStatus::NullArgument, "path is not valid UTF-8".into()))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn topocnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn topocnn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default configuration for `kind` on an `nelx × nely` grid.
#[no_mangle]
pub unsafe extern "C" fn topocnn_problem_new(
    kind: TopocnnProblemKind,
    nelx: usize,
    nely: usize,
    vf: f64,
    out_problem: *mut *mut TopocnnProblem,
) -> TopocnnStatus {
    guard(|| {
        let slot = out(out_problem, "out_problem")?;
        let cfg = ProblemConfig::new(kind.into(), nelx, nely, vf);
        cfg.validate()?;
        *slot = boxed(TopocnnProblem(cfg));
        Ok(())
    })
}

/// Configuration from JSON, in the format of a dataset's `config.json` entry.
#[no_mangle]
pub unsafe extern "C" fn topocnn_problem_from_json(
    json: *const c_char,
    out_problem: *mut *mut TopocnnProblem,
) -> TopocnnStatus {
    guard(|| {
        let slot = out(out_problem, "out_problem")?;
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure(TopocnnStatus::NullArgument, "json is not valid UTF-8".into()))?;
        let cfg: ProblemConfig =
            serde_json::from_str(text).map_err(|e| Failure(TopocnnStatus::Data, format!("problem json: {e}")))?;
        cfg.validate()?;
        *slot = boxed(TopocnnProblem(cfg));
        Ok(())
    })
}

/// Changes the target volume fraction.
#[no_mangle]
pub unsafe extern "C" fn topocnn_problem_set_vf(problem: *mut TopocnnProblem, vf: f64) -> TopocnnStatus {
    guard(|| {
        let p = out(problem, "problem")?;
        let next = p.0.with_vf_target(vf);
        next.validate()?;
        p.0 = next;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn topocnn_problem_free(problem: *mut TopocnnProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs the optimizer. `out_objective` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn topocnn_problem_solve(
    problem: *const TopocnnProblem,
    out_density: *mut *mut TopocnnDensity,
    out_objective: *mut f64,
) -> TopocnnStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        let slot = out(out_density, "out_density")?;
        let sol = p.0.solve()?;
        if let Some(o) = out_objective.as_mut() {
            *o = sol.objective;
        }
        *slot = boxed(TopocnnDensity(sol.density));
        Ok(())
    })
}

/// Objective of `density` under the problem's physics.
#[no_mangle]
pub unsafe extern "C" fn topocnn_problem_evaluate(
    problem: *const TopocnnProblem,
    density: *const TopocnnDensity,
    out_objective: *mut f64,
) -> TopocnnStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        let d = deref(density, "density")?;
        *out(out_objective, "out_objective")? = p.0.evaluate(&d.0)?;
        Ok(())
    })
}

/// Copies `len == nelx * nely` values in `[0, 1]`.
#[no_mangle]
pub unsafe extern "C" fn topocnn_density_new(
    nelx: usize,
    nely: usize,
    values: *const f64,
    len: usize,
    out_density: *mut *mut TopocnnDensity,
) -> TopocnnStatus {
    guard(|| {
        let slot = out(out_density, "out_density")?;
        if values.is_null() {
            return Err(null("values"));
        }
        let grid = Grid::new(nelx, nely)?;
        if len != grid.n_elements() {
            return Err(Error::Shape {
                expected: format!("{} values", grid.n_elements()),
                actual: len.to_string(),
            }
            .into());
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        *slot = boxed(TopocnnDensity(DensityField::new(grid, v)?));
        Ok(())
    })
}

/// Elements along x, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn topocnn_density_width(density: *const TopocnnDensity) -> usize {
    density.as_ref().map_or(0, |d| d.0.grid().nelx())
}

/// Elements along y, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn topocnn_density_height(density: *const TopocnnDensity) -> usize {
    density.as_ref().map_or(0, |d| d.0.grid().nely())
}

#[no_mangle]
pub unsafe extern "C" fn topocnn_density_mean(density: *const TopocnnDensity, out_mean: *mut f64) -> TopocnnStatus {
    guard(|| {
        *out(out_mean, "out_mean")? = deref(density, "density")?.0.mean();
        Ok(())
    })
}

/// Copies the values into `buffer`, which must hold exactly `width * height` doubles.
#[no_mangle]
pub unsafe extern "C" fn topocnn_density_copy_values(
    density: *const TopocnnDensity,
    buffer: *mut f64,
    len: usize,
) -> TopocnnStatus {
    guard(|| {
        let d = deref(density, "density")?;
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let v = d.0.values();
        if len != v.len() {
            return Err(Error::Shape {
                expected: format!("buffer of {}", v.len()),
                actual: len.to_string(),
            }
            .into());
        }
        std::slice::from_raw_parts_mut(buffer, len).copy_from_slice(v);
        Ok(())
    })
}

/// Writes the field as a binary PGM (solid is black).
#[no_mangle]
pub unsafe extern "C" fn topocnn_density_write_pgm(density: *const TopocnnDensity, path: *const c_char) -> TopocnnStatus {
    guard(|| {
        let d = deref(density, "density")?;
        let path = path_arg(path)?;
        write_atomic(&path, &write_pgm(&Image::from_density(&d.0))?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn topocnn_density_free(density: *mut TopocnnDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

#[no_mangle]
pub unsafe extern "C" fn topocnn_model_load(path: *const c_char, out_model: *mut *mut TopocnnModel) -> TopocnnStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let path = path_arg(path)?;
        *slot = boxed(TopocnnModel(load_checkpoint(&path)?.model));
        Ok(())
    })
}

/// Side length of the square input image, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn topocnn_model_input_size(model: *const TopocnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.profile().input_size)
}

/// Width of the adaptive dense layer (0 for a single dense layer or NULL).
#[no_mangle]
pub unsafe extern "C" fn topocnn_model_adaptive_width(model: *const TopocnnModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.profile().adaptive)
}

/// Predicted design for volume fraction `vf`.
#[no_mangle]
pub unsafe extern "C" fn topocnn_model_infer(
    model: *const TopocnnModel,
    vf: f64,
    out_density: *mut *mut TopocnnDensity,
) -> TopocnnStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let slot = out(out_density, "out_density")?;
        *slot = boxed(TopocnnDensity(infer(&m.0, vf)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn topocnn_model_free(model: *mut TopocnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Volume error in percent of the target volume.
#[no_mangle]
pub unsafe extern "C" fn topocnn_volume_error(
    pred: *const TopocnnDensity,
    target: *const TopocnnDensity,
    out_percent: *mut f64,
) -> TopocnnStatus {
    guard(|| {
        let (p, t) = (deref(pred, "pred")?, deref(target, "target")?);
        *out(out_percent, "out_percent")? = volume_error(&p.0, &t.0)?;
        Ok(())
    })
}

/// Objective error in percent of the target objective.
#[no_mangle]
pub unsafe extern "C" fn topocnn_objective_error(
    problem: *const TopocnnProblem,
    pred: *const TopocnnDensity,
    target: *const TopocnnDensity,
    out_percent: *mut f64,
) -> TopocnnStatus {
    guard(|| {
        let cfg = deref(problem, "problem")?;
        let (p, t) = (deref(pred, "pred")?, deref(target, "target")?);
        *out(out_percent, "out_percent")? = objective_error(&p.0, &t.0, &cfg.0)?;
        Ok(())
    })
}
