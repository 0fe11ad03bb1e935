//! C interface.
//!
//! Every function returns a [`BoStatus`]; on failure the message is kept per
//! thread and read with [`bo_last_error_message`]. Handles are opaque and
//! released with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use branchopt::driver::{alternate_descent, DescentReport, OptimizationConfig, Problem};
use branchopt::fieldsio::{mosaic_of_field, write_outputs, GlobalRaster};
use branchopt::{Error, RunConfig};
use thiserror::Error;

#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum BoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidDecomposition = 4,
    InvalidLoad = 5,
    SolveFailed = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Objective split into its parts.
#[repr(C)]
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct BoObjective {
    pub elastic: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub total: f64,
}

/// A resolved run: decomposition, loads, assembled constraints and settings.
pub struct BoProblem {
    problem: Problem,
    opt: OptimizationConfig,
    echo: serde_json::Value,
}

/// Outcome of one descent.
pub struct BoResult {
    report: DescentReport,
    phase: GlobalRaster,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("null pointer for `{0}`")]
    Null(&'static str),
    #[error("`{0}` is not valid UTF-8")]
    Utf8(&'static str),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("buffer holds {len} values, {needed} needed")]
    BufferTooSmall { len: usize, needed: usize },
    #[error("panic: {0}")]
    Panic(String),
}

impl FfiError {
    fn status(&self) -> BoStatus {
        match self {
            FfiError::Null(_) => BoStatus::NullPointer,
            FfiError::Utf8(_) => BoStatus::InvalidUtf8,
            FfiError::BufferTooSmall { .. } => BoStatus::BufferTooSmall,
            FfiError::Panic(_) => BoStatus::Panic,
            FfiError::Core(e) => match e {
                Error::Decomp(_) => BoStatus::InvalidDecomposition,
                Error::Assembly(_) => BoStatus::InvalidLoad,
                Error::Solve(_) => BoStatus::SolveFailed,
                Error::Io(_) => BoStatus::Io,
                Error::Config(_) | Error::Json(_) => BoStatus::InvalidConfig,
            },
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> BoStatus {
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown".into());
        Err(FfiError::Panic(msg))
    });
    match r {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BoStatus::Ok
        }
        Err(e) => {
            let s = e.status();
            set_last_error(e.to_string());
            s
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| FfiError::Utf8(name))
}

unsafe fn opt_path(p: *const c_char, name: &'static str) -> Result<PathBuf, FfiError> {
    if p.is_null() {
        Ok(PathBuf::new())
    } else {
        Ok(PathBuf::from(str_arg(p, name)?))
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, FfiError> {
    p.as_ref().ok_or(FfiError::Null(name))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, FfiError> {
    p.as_mut().ok_or(FfiError::Null(name))
}

fn build(cfg: RunConfig, source: &str) -> Result<Box<BoProblem>, FfiError> {
    let (decomp, loads, opt) = cfg.resolve()?;
    let problem = Problem::from_config(decomp, loads.clone(), &opt)?;
    let echo = serde_json::json!({
        "config_file": source,
        "decomposition": problem.decomp.spec(),
        "loads": loads,
        "optimization": opt,
    });
    Ok(Box::new(BoProblem { problem, opt, echo }))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn bo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a problem from a JSON run configuration. Relative paths inside it
/// resolve against `base_dir`, which may be null for the working directory.
///
/// # Safety
/// `json` and a non-null `base_dir` must be NUL-terminated strings; `out`
/// must be writable. On success `*out` owns a handle for [`bo_problem_free`].
#[no_mangle]
pub unsafe extern "C" fn bo_problem_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut BoProblem,
) -> BoStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let base = opt_path(base_dir, "base_dir")?;
        let cfg = RunConfig::from_json(text, &base).map_err(FfiError::Core)?;
        *out = Box::into_raw(build(cfg, "<inline>")?);
        Ok(())
    })
}

/// Builds a problem from a JSON run configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bo_problem_from_file(path: *const c_char, out: *mut *mut BoProblem) -> BoStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = str_arg(path, "path")?;
        let cfg = RunConfig::from_file(Path::new(p))?;
        *out = Box::into_raw(build(cfg, p)?);
        Ok(())
    })
}

/// Checks a configuration without keeping the problem.
///
/// # Safety
/// As for [`bo_problem_from_json`].
#[no_mangle]
pub unsafe extern "C" fn bo_validate_json(json: *const c_char, base_dir: *const c_char) -> BoStatus {
    let mut p: *mut BoProblem = ptr::null_mut();
    let s = bo_problem_from_json(json, base_dir, &mut p);
    bo_problem_free(p);
    s
}

/// # Safety
/// `problem` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bo_problem_free(problem: *mut BoProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Sizes of the assembled problem. Any output pointer may be null.
///
/// # Safety
/// `problem` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn bo_problem_sizes(
    problem: *const BoProblem,
    unknowns: *mut usize,
    rows: *mut usize,
    cells: *mut usize,
) -> BoStatus {
    guard(|| {
        let p = &handle(problem, "problem")?.problem;
        for (dst, v) in [(unknowns, p.layout.n_dofs()), (rows, p.reduced.n_rows()), (cells, p.layout.n_cells())] {
            if let Some(d) = dst.as_mut() {
                *d = v;
            }
        }
        Ok(())
    })
}

/// Overrides the outer iteration cap and stopping tolerance; a zero cap or
/// non-positive tolerance keeps the current value.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bo_problem_set_limits(problem: *mut BoProblem, max_iters: usize, stop_tol: f64) -> BoStatus {
    guard(|| {
        let p = out_ptr(problem, "problem")?;
        if max_iters > 0 {
            p.opt.outer_max_iters = max_iters;
        }
        if stop_tol > 0.0 {
            p.opt.stop_tol = stop_tol;
        }
        Ok(())
    })
}

/// Runs the alternating descent from the default start.
///
/// # Safety
/// `problem` must be a live handle and `out` writable. On success `*out`
/// owns a handle for [`bo_result_free`].
#[no_mangle]
pub unsafe extern "C" fn bo_problem_run(problem: *mut BoProblem, out: *mut *mut BoResult) -> BoStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = out_ptr(problem, "problem")?;
        let report = alternate_descent(&mut p.problem, &p.opt, None)?;
        let phase = mosaic_of_field(&p.problem.decomp, &p.problem.layout, &report.field.values)?;
        *out = Box::into_raw(Box::new(BoResult { report, phase }));
        Ok(())
    })
}

/// # Safety
/// `result` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn bo_result_free(result: *mut BoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Convergence flag, iteration count and monotonicity flag. Any output
/// pointer may be null.
///
/// # Safety
/// `result` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn bo_result_status(
    result: *const BoResult,
    converged: *mut bool,
    iterations: *mut usize,
    monotone: *mut bool,
) -> BoStatus {
    guard(|| {
        let r = &handle(result, "result")?.report;
        if let Some(c) = converged.as_mut() {
            *c = r.converged;
        }
        if let Some(i) = iterations.as_mut() {
            *i = r.iterations();
        }
        if let Some(m) = monotone.as_mut() {
            *m = r.monotone;
        }
        Ok(())
    })
}

/// Objective after the last iteration.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bo_result_objective(result: *const BoResult, out: *mut BoObjective) -> BoStatus {
    guard(|| {
        let o = handle(result, "result")?.report.final_objective();
        *out_ptr(out, "out")? =
            BoObjective { elastic: o.elastic, volume: o.volume, perimeter: o.perimeter, total: o.total };
        Ok(())
    })
}

/// Raster size of the phase mosaic, `nx` columns by `ny` rows.
///
/// # Safety
/// `result` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn bo_result_raster_size(result: *const BoResult, nx: *mut usize, ny: *mut usize) -> BoStatus {
    guard(|| {
        let r = &handle(result, "result")?.phase;
        *out_ptr(nx, "nx")? = r.nx;
        *out_ptr(ny, "ny")? = r.ny;
        Ok(())
    })
}

/// Copies the phase mosaic, bottom row first, into `buf`. With a short or
/// null buffer returns `BufferTooSmall` after storing the needed length in
/// `needed` (which may be null).
///
/// # Safety
/// `result` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bo_result_phase(
    result: *const BoResult,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> BoStatus {
    guard(|| {
        let values = &handle(result, "result")?.phase.values;
        if let Some(n) = needed.as_mut() {
            *n = values.len();
        }
        if buf.is_null() || len < values.len() {
            return Err(FfiError::BufferTooSmall { len: if buf.is_null() { 0 } else { len }, needed: values.len() });
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// Writes the image, field and report files into `dir`.
///
/// # Safety
/// Both handles must be live, `result` must come from running `problem`,
/// and `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bo_write_outputs(
    problem: *const BoProblem,
    result: *const BoResult,
    dir: *const c_char,
) -> BoStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let r = handle(result, "result")?;
        let dir = str_arg(dir, "dir")?;
        if r.report.field.len() != p.problem.layout.n_cells() {
            return Err(FfiError::Core(Error::Config("result does not belong to this problem".into())));
        }
        write_outputs(Path::new(dir), &p.problem, &r.report, p.echo.clone())?;
        Ok(())
    })
}
