//! C ABI over `lcflow`.
//!
//! Every fallible entry point returns an [`LcflowStatus`]; on failure a
//! message is available from [`lcflow_last_error`] on the same thread.
//! Objects are opaque handles released with their `*_free` function.
//! Panics never cross the boundary; they surface as `LCFLOW_STATUS_PANIC`.

use lcflow::bvp1d::{extract_pair, find_lambda_star, MinimizerPair};
use lcflow::config::RunConfig;
use lcflow::eulerflow::{flow_report_with, to_flow};
use lcflow::geometry;
use lcflow::pipeline::Pipeline;
use lcflow::strip2d::{continuation, Field2D};
use lcflow::{Error, Mode, ProblemSpec};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

/// Outcome of an API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Checkpoint = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// Boundary data of the strip problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcflowMode {
    Ramp = 0,
    Zero = 1,
}

impl From<LcflowMode> for Mode {
    fn from(m: LcflowMode) -> Self {
        match m {
            LcflowMode::Ramp => Mode::Ramp,
            LcflowMode::Zero => Mode::Zero,
        }
    }
}

/// Run configuration.
pub struct LcflowConfig(RunConfig);

/// Trivial and nontrivial one-dimensional minimizers at the critical coupling.
pub struct LcflowPair(MinimizerPair);

/// Stream function on the strip grid.
pub struct LcflowField {
    field: Field2D,
    lambda: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> LcflowStatus {
    if e.is_numerical() {
        return LcflowStatus::Numerical;
    }
    match e.root() {
        Error::Config(_) => LcflowStatus::Config,
        Error::InvalidArgument(_) | Error::BoundaryMismatch { .. } | Error::TraceMismatch { .. } => {
            LcflowStatus::InvalidArgument
        }
        Error::Io(_) => LcflowStatus::Io,
        Error::Checkpoint { .. } | Error::Json(_) => LcflowStatus::Checkpoint,
        _ => LcflowStatus::Other,
    }
}

enum Fail {
    Lib(Error),
    Status(LcflowStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LcflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LcflowStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            LcflowStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(LcflowStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(LcflowStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

fn copy_out(src: &[f64], buf: *mut f64, len: usize, written: *mut usize) -> Result<(), Fail> {
    let written = unsafe { out(written, "written")? };
    *written = src.len();
    if len < src.len() {
        return Err(Fail::Status(
            LcflowStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    Ok(())
}

/// Last error message on this thread, or null. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn lcflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lcflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lcflow_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration for `mode`.
///
/// # Safety
/// `out_cfg` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_config_default(mode: LcflowMode, out_cfg: *mut *mut LcflowConfig) -> LcflowStatus {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        *slot = Box::into_raw(Box::new(LcflowConfig(RunConfig::for_mode(mode.into()))));
        Ok(())
    })
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out_cfg` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_config_from_toml(toml: *const c_char, out_cfg: *mut *mut LcflowConfig) -> LcflowStatus {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        let cfg = RunConfig::from_toml_str(c_str(toml, "toml")?)?;
        *slot = Box::into_raw(Box::new(LcflowConfig(cfg)));
        Ok(())
    })
}

/// Effective configuration as TOML; release with [`lcflow_string_free`].
///
/// # Safety
/// `cfg` must be a live handle and `out_toml` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_config_to_toml(cfg: *const LcflowConfig, out_toml: *mut *mut c_char) -> LcflowStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        *out(out_toml, "out_toml")? = c_string(cfg.0.to_toml_string());
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcflow_config_free(cfg: *mut LcflowConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Critical coupling and minimizer pair on the strip's vertical grid.
///
/// # Safety
/// `cfg` must be a live handle and `out_pair` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_pair_compute(cfg: *const LcflowConfig, out_pair: *mut *mut LcflowPair) -> LcflowStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        let slot = out(out_pair, "out_pair")?;
        let opts = cfg.bvp1d_for_strip();
        let star = find_lambda_star(cfg.mode, &opts)?;
        let pair = extract_pair(&star, &opts)?;
        *slot = Box::into_raw(Box::new(LcflowPair(pair)));
        Ok(())
    })
}

/// Critical coupling and the coupling actually used for the pair.
///
/// # Safety
/// `pair` must be a live handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lcflow_pair_lambda(
    pair: *const LcflowPair,
    lambda_star: *mut f64,
    lambda_used: *mut f64,
) -> LcflowStatus {
    guard(|| {
        let p = &borrow(pair, "pair")?.0;
        *out(lambda_star, "lambda_star")? = p.lambda_star;
        *out(lambda_used, "lambda_used")? = p.lambda_used;
        Ok(())
    })
}

/// Copies the nontrivial profile (`m + 1` nodal values) into `buf`.
/// `written` always receives the required length.
///
/// # Safety
/// `pair` must be a live handle, `buf` valid for `len` doubles, `written` valid.
#[no_mangle]
pub unsafe extern "C" fn lcflow_pair_phibar(
    pair: *const LcflowPair,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> LcflowStatus {
    guard(|| copy_out(borrow(pair, "pair")?.0.phibar.values(), buf, len, written))
}

/// # Safety
/// `pair` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcflow_pair_free(pair: *mut LcflowPair) {
    if !pair.is_null() {
        drop(Box::from_raw(pair));
    }
}

/// Heteroclinic stream function by continuation in the strip length.
///
/// # Safety
/// `cfg` and `pair` must be live handles and `out_field` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_heteroclinic(
    cfg: *const LcflowConfig,
    pair: *const LcflowPair,
    out_field: *mut *mut LcflowField,
) -> LcflowStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        let p = &borrow(pair, "pair")?.0;
        let slot = out(out_field, "out_field")?;
        let r = continuation(&p.spec(), &p.phi, &p.phibar, &cfg.strip2d, &cfg.continuation)?;
        *slot = Box::into_raw(Box::new(LcflowField { field: r.field, lambda: p.lambda_used }));
        Ok(())
    })
}

/// Grid of a field: node `(i, j)` sits at `(x_min + i hx, j hy)`.
///
/// # Safety
/// `field` must be a live handle; the outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lcflow_field_grid(
    field: *const LcflowField,
    nx: *mut usize,
    ny: *mut usize,
    x_min: *mut f64,
    hx: *mut f64,
    hy: *mut f64,
) -> LcflowStatus {
    guard(|| {
        let u = &borrow(field, "field")?.field;
        *out(nx, "nx")? = u.nx();
        *out(ny, "ny")? = u.ny();
        *out(x_min, "x_min")? = u.x_min();
        *out(hx, "hx")? = u.hx();
        *out(hy, "hy")? = u.hy();
        Ok(())
    })
}

/// Copies the nodal values, column by column (`k = i ny + j`).
///
/// # Safety
/// `field` must be a live handle, `buf` valid for `len` doubles, `written` valid.
#[no_mangle]
pub unsafe extern "C" fn lcflow_field_values(
    field: *const LcflowField,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> LcflowStatus {
    guard(|| copy_out(borrow(field, "field")?.field.values(), buf, len, written))
}

/// Bilinear interpolation of the field at `(x, y)`, clamped to the grid.
///
/// # Safety
/// `field` must be a live handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_field_eval(field: *const LcflowField, x: f64, y: f64, value: *mut f64) -> LcflowStatus {
    guard(|| {
        let u = &borrow(field, "field")?.field;
        if !(x.is_finite() && y.is_finite()) {
            return Err(Fail::Status(LcflowStatus::InvalidArgument, "coordinates must be finite".into()));
        }
        *out(value, "value")? = geometry::eval(u, x, y);
        Ok(())
    })
}

/// Flow checks of the field as a JSON object; release with [`lcflow_string_free`].
///
/// # Safety
/// `cfg` and `field` must be live handles and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_flow_report_json(
    cfg: *const LcflowConfig,
    field: *const LcflowField,
    out_json: *mut *mut c_char,
) -> LcflowStatus {
    guard(|| {
        let cfg = &borrow(cfg, "cfg")?.0;
        let f = borrow(field, "field")?;
        let slot = out(out_json, "out_json")?;
        let spec = ProblemSpec::new(f.field.mode(), f.lambda);
        let v = to_flow(&f.field, &spec, cfg.continuation.end_margin);
        let report = flow_report_with(&v, Some(f.field.mode()), &cfg.flow);
        *slot = c_string(serde_json::to_string(&report).map_err(Error::from)?);
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcflow_field_free(field: *mut LcflowField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Runs every stage into `out_dir` and returns the report as JSON.
/// A stage failure is reported inside the JSON; the status is then the
/// failing stage's category.
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` a NUL-terminated path and
/// `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lcflow_run(
    cfg: *const LcflowConfig,
    out_dir: *const c_char,
    resume: bool,
    out_json: *mut *mut c_char,
) -> LcflowStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?.0.clone();
        let dir = PathBuf::from(c_str(out_dir, "out_dir")?);
        let slot = out(out_json, "out_json")?;
        let result = Pipeline::new(cfg, Some(dir), resume).run();
        *slot = c_string(serde_json::to_string(&result.report).map_err(Error::from)?);
        match result.report.error {
            None => Ok(()),
            Some(e) => Err(Fail::Status(
                if e.numerical { LcflowStatus::Numerical } else { LcflowStatus::Other },
                format!("stage `{}` failed: {}", e.stage, e.message),
            )),
        }
    })
}
