//! C ABI over the `thz-alloc` solvers.
//!
//! Configurations and reports are opaque handles owned by the caller and
//! released with their `*_free` function. Every fallible call returns a
//! [`ThzStatus`]; the message of the last failure on the calling thread is
//! available from [`thz_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use thz_alloc::cli::config::{ExperimentConfig, Strategy};
use thz_alloc::cli::sweep::{report_json, run_strategy};
use thz_alloc::solver::SolveReport;
use thz_alloc::spectrum::esb_plan;
use thz_alloc::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Infeasible = 4,
    ModeMismatch = 5,
    Numerical = 6,
    CapExceeded = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Allocation strategy.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThzStrategy {
    Esb = 0,
    Asb = 1,
    Damc = 2,
    Eq = 3,
}

impl From<ThzStrategy> for Strategy {
    fn from(s: ThzStrategy) -> Self {
        match s {
            ThzStrategy::Esb => Strategy::Esb,
            ThzStrategy::Asb => Strategy::Asb,
            ThzStrategy::Damc => Strategy::Damc,
            ThzStrategy::Eq => Strategy::Eq,
        }
    }
}

/// Opaque experiment configuration.
pub struct ThzConfig {
    inner: ExperimentConfig,
}

/// Opaque solve result.
pub struct ThzReport {
    report: SolveReport,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ThzStatus {
    match e {
        Error::InvalidInput(_)
        | Error::Domain(_)
        | Error::Precondition(_)
        | Error::RegionMismatch(_)
        | Error::InsufficientData(_)
        | Error::Extrapolation(_) => ThzStatus::InvalidInput,
        Error::Config(_) => ThzStatus::Config,
        Error::Infeasible { .. } => ThzStatus::Infeasible,
        Error::ModeMismatch(_) => ThzStatus::ModeMismatch,
        Error::Numerical(_) => ThzStatus::Numerical,
        Error::CapExceeded { .. } => ThzStatus::CapExceeded,
        Error::Io(_) | Error::Json(_) => ThzStatus::Io,
    }
}

/// Runs `f`, recording failures and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (ThzStatus, String)>) -> ThzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ThzStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside thz-alloc".into());
            ThzStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ThzStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (ThzStatus, String) {
    (ThzStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn thz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn thz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default experiment configuration. Never null.
#[no_mangle]
pub extern "C" fn thz_config_default() -> *mut ThzConfig {
    Box::into_raw(Box::new(ThzConfig {
        inner: ExperimentConfig::default(),
    }))
}

/// Parses a TOML configuration into `*out`.
///
/// # Safety
/// `toml` must be a valid NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_config_from_toml(toml: *const c_char, out: *mut *mut ThzConfig) -> ThzStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null_err("toml"));
        }
        if out.is_null() {
            return Err(null_err("out"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (ThzStatus::InvalidInput, format!("config is not UTF-8: {e}")))?;
        let inner = ExperimentConfig::from_toml_str(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ThzConfig { inner }));
        Ok(())
    })
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `cfg` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn thz_config_free(cfg: *mut ThzConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Solves the scenario of `seed` with `strategy` into `*out`.
///
/// # Safety
/// `cfg` must be a live configuration and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_solve(
    cfg: *const ThzConfig,
    seed: u64,
    strategy: ThzStrategy,
    out: *mut *mut ThzReport,
) -> ThzStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null_err("cfg"))?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        let (report, spec) = run_strategy(&cfg.inner, seed, strategy.into()).map_err(lib_err)?;
        let text = serde_json::to_string(&report_json(&report, &spec, cfg.inner.output.record_timing))
            .map_err(|e| lib_err(e.into()))?;
        let json = CString::new(text).map_err(|e| (ThzStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(ThzReport { report, json }));
        Ok(())
    })
}

/// Releases a report; null is ignored.
///
/// # Safety
/// `report` must come from [`thz_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn thz_report_free(report: *mut ThzReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Max-min throughput, bit/s; NaN for a null report.
///
/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn thz_report_objective_bps(report: *const ThzReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.objective_bps)
}

/// Sum throughput, bit/s; NaN for a null report.
///
/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn thz_report_aggregate_bps(report: *const ThzReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.aggregate_bps)
}

/// Whether the solve met its stopping criteria; false for a null report.
///
/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn thz_report_converged(report: *const ThzReport) -> bool {
    report.as_ref().is_some_and(|r| r.report.converged)
}

/// Number of users; 0 for a null report.
///
/// # Safety
/// `report` must be null or a live report.
#[no_mangle]
pub unsafe extern "C" fn thz_report_num_users(report: *const ThzReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.per_user_bps.len())
}

/// Copies per-user throughputs (bit/s) into `buf` of length `len`.
///
/// # Safety
/// `report` must be a live report and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn thz_report_per_user_bps(report: *const ThzReport, buf: *mut f64, len: usize) -> ThzStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null_err("report"))?;
        if buf.is_null() {
            return Err(null_err("buf"));
        }
        let src = &r.report.per_user_bps;
        if len < src.len() {
            return Err((
                ThzStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", src.len()),
            ));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(())
    })
}

/// Full report as JSON, owned by the report; null for a null report.
///
/// # Safety
/// `report` must be null or a live report. The string dies with the report.
#[no_mangle]
pub unsafe extern "C" fn thz_report_json(report: *const ThzReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// Equal sub-band width of `s` bands in `b_tot` with guard bands `b_g`, Hz.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_esb_width_hz(f_ref: f64, b_tot: f64, b_g: f64, s: usize, out: *mut f64) -> ThzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let plan = esb_plan(f_ref, b_tot, b_g, s).map_err(lib_err)?;
        *out = plan.bandwidths[0];
        Ok(())
    })
}
