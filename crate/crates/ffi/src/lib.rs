//! C interface to the laboratory.
//!
//! Every function returns a [`ConfsymStatus`]. On failure a message is kept per
//! thread and can be copied out with [`confsym_last_error`]. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use confsym::config::{self, Config};
use confsym::dynamics::{self, MapSystem};
use confsym::experiments;
use confsym::report::Report;
use confsym::systems::Dynamics;
use confsym::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfsymStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    InvalidInput = 10,
    InvalidParameter = 11,
    Domain = 12,
    Jacobian = 13,
    Quadrature = 14,
    Divergence = 15,
    DegenerateSampling = 16,
    DegenerateEmbedding = 17,
    Topology = 18,
    NoFixedClass = 19,
    NotApplicable = 20,
    NoIntersection = 21,
    Usage = 22,
    Io = 23,
    Panic = 99,
}

impl From<&Error> for ConfsymStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => Self::InvalidInput,
            Error::InvalidParameter(_) => Self::InvalidParameter,
            Error::Domain { .. } => Self::Domain,
            Error::Jacobian { .. } => Self::Jacobian,
            Error::Quadrature { .. } => Self::Quadrature,
            Error::Divergence { .. } => Self::Divergence,
            Error::DegenerateSampling { .. } => Self::DegenerateSampling,
            Error::DegenerateEmbedding { .. } => Self::DegenerateEmbedding,
            Error::Topology { .. } => Self::Topology,
            Error::NoFixedClass => Self::NoFixedClass,
            Error::NotApplicable(_) => Self::NotApplicable,
            Error::NoIntersection { .. } => Self::NoIntersection,
            Error::Usage(_) => Self::Usage,
            Error::Io(_) | Error::Json(_) => Self::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: ConfsymStatus, message: impl Into<String>) -> ConfsymStatus {
    LAST_ERROR.with(|m| *m.borrow_mut() = message.into());
    status
}

fn guard(body: impl FnOnce() -> Result<(), ConfsymStatus>) -> ConfsymStatus {
    LAST_ERROR.with(|m| m.borrow_mut().clear());
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ConfsymStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(ConfsymStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> ConfsymStatus {
    fail((&e).into(), e.to_string())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, ConfsymStatus> {
    if p.is_null() {
        return Err(fail(ConfsymStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(ConfsymStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// `key=value` pairs separated by `;` or newlines; null means none.
unsafe fn settings(p: *const c_char) -> Result<Vec<(String, String)>, ConfsymStatus> {
    if p.is_null() {
        return Ok(Vec::new());
    }
    let raw = text(p, "settings")?;
    config::parse_file(&raw.replace(';', "\n")).map_err(lib)
}

/// Copies `s` with a terminating NUL. `needed` receives the full size in bytes;
/// `Err` carries that size when the buffer is null or short.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), usize> {
    let size = s.len() + 1;
    if !needed.is_null() {
        *needed = size;
    }
    if buf.is_null() || len < size {
        return Err(size);
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copies the calling thread's last error message into `buf`. Leaves the
/// message in place, so a size query with a null buffer can be followed by a copy.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null; `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn confsym_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> ConfsymStatus {
    let msg = LAST_ERROR.with(|m| m.borrow().clone());
    match copy_out(&msg, buf, len, needed) {
        Ok(()) => ConfsymStatus::Ok,
        Err(_) => ConfsymStatus::BufferTooSmall,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn confsym_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A catalog system as a map: discrete maps as they are, flows through their time-`t` map.
pub struct ConfsymSystem {
    map: MapSystem,
    flow: bool,
}

/// Builds a catalog system by name. `settings` takes the keys of the
/// `conformality` experiment (`a`, `c`, `alpha`, `field`, `t`, `dt`, `method`, ...).
///
/// # Safety
/// `name` must be a NUL-terminated string, `settings` one or null, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn confsym_system_new(
    name: *const c_char,
    settings_text: *const c_char,
    out: *mut *mut ConfsymSystem,
) -> ConfsymStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(ConfsymStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let name = text(name, "name")?;
        let mut flags = settings(settings_text)?;
        flags.push(("system".into(), name.into()));
        let cfg = Config::resolve("conformality", &[], &flags).map_err(lib)?;
        let dynamics = experiments::system_from(&cfg).map_err(lib)?;
        let flow = matches!(dynamics, Dynamics::Flow(_));
        let map = experiments::as_map(dynamics, &cfg).map_err(lib)?;
        *out = Box::into_raw(Box::new(ConfsymSystem { map, flow }));
        Ok(())
    })
}

/// # Safety
/// `sys` must come from [`confsym_system_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn confsym_system_free(sys: *mut ConfsymSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

unsafe fn system<'a>(sys: *const ConfsymSystem) -> Result<&'a ConfsymSystem, ConfsymStatus> {
    sys.as_ref().ok_or_else(|| fail(ConfsymStatus::NullPointer, "system is null"))
}

unsafe fn point<'a>(x: *const f64, dim: usize) -> Result<&'a [f64], ConfsymStatus> {
    if x.is_null() {
        return Err(fail(ConfsymStatus::NullPointer, "point is null"));
    }
    let x = std::slice::from_raw_parts(x, dim);
    if x.iter().any(|c| !c.is_finite()) {
        return Err(fail(ConfsymStatus::InvalidInput, format!("non-finite point {x:?}")));
    }
    Ok(x)
}

/// Chart dimension of the system, 0 for a null handle.
///
/// # Safety
/// `sys` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn confsym_system_dim(sys: *const ConfsymSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.map.dim())
}

/// 1 when the system was built from a flow, 0 for a discrete map or null.
///
/// # Safety
/// `sys` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn confsym_system_is_flow(sys: *const ConfsymSystem) -> i32 {
    sys.as_ref().map_or(0, |s| s.flow as i32)
}

/// One step of the map; `x` and `out` hold `dim` values.
///
/// # Safety
/// `x` and `out` must be valid for `dim` doubles where `dim` is the system dimension.
#[no_mangle]
pub unsafe extern "C" fn confsym_system_step(sys: *const ConfsymSystem, x: *const f64, out: *mut f64) -> ConfsymStatus {
    guard(|| {
        let s = system(sys)?;
        let n = s.map.dim();
        let y = s.map.step(point(x, n)?).map_err(lib)?;
        if out.is_null() {
            return Err(fail(ConfsymStatus::NullPointer, "out is null"));
        }
        ptr::copy_nonoverlapping(y.as_ptr(), out, n);
        Ok(())
    })
}

/// Jacobian of one step at `x`, row-major into `out` (`dim × dim` values).
///
/// # Safety
/// `x` valid for `dim` doubles, `out` for `dim²`.
#[no_mangle]
pub unsafe extern "C" fn confsym_system_jacobian(sys: *const ConfsymSystem, x: *const f64, out: *mut f64) -> ConfsymStatus {
    guard(|| {
        let s = system(sys)?;
        let n = s.map.dim();
        let j = s.map.jacobian(point(x, n)?).map_err(lib)?;
        if out.is_null() {
            return Err(fail(ConfsymStatus::NullPointer, "out is null"));
        }
        for r in 0..n {
            for c in 0..n {
                *out.add(r * n + c) = j[(r, c)];
            }
        }
        Ok(())
    })
}

/// Sampled estimate of `a` in `f*ω = aω` and the largest deviation from it.
///
/// # Safety
/// `estimate` and `max_residual` must be writable.
#[no_mangle]
pub unsafe extern "C" fn confsym_conformality_ratio(
    sys: *const ConfsymSystem,
    samples: usize,
    seed: u64,
    estimate: *mut f64,
    max_residual: *mut f64,
) -> ConfsymStatus {
    guard(|| {
        let s = system(sys)?;
        if estimate.is_null() || max_residual.is_null() {
            return Err(fail(ConfsymStatus::NullPointer, "output is null"));
        }
        let r = dynamics::conformality_ratio(&s.map, samples, seed).map_err(lib)?;
        *estimate = r.estimate;
        *max_residual = r.max_residual;
        Ok(())
    })
}

/// Result of an experiment run.
pub struct ConfsymReport(Report);

/// Runs an experiment by its CLI name with optional `key=value` settings.
/// A run whose checks fail still succeeds here; query [`confsym_report_pass`].
///
/// # Safety
/// `experiment` must be a NUL-terminated string, `settings` one or null, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn confsym_run(
    experiment: *const c_char,
    settings_text: *const c_char,
    out: *mut *mut ConfsymReport,
) -> ConfsymStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(ConfsymStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let name = text(experiment, "experiment")?;
        let cfg = Config::resolve(name, &[], &settings(settings_text)?).map_err(lib)?;
        let start = std::time::Instant::now();
        let outcome = experiments::run(&cfg).map_err(lib)?;
        let seed = cfg.seed().map_err(lib)?;
        let report = Report::new(name, seed, cfg.echo(), outcome, start.elapsed().as_secs_f64());
        *out = Box::into_raw(Box::new(ConfsymReport(report)));
        Ok(())
    })
}

/// 1 when every check passed, 0 otherwise or for null.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn confsym_report_pass(report: *const ConfsymReport) -> i32 {
    report.as_ref().map_or(0, |r| r.0.pass as i32)
}

/// Number of checks in the report.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn confsym_report_check_count(report: *const ConfsymReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.checks.len())
}

/// The report as JSON. With a null or short buffer, returns `BufferTooSmall`
/// and stores the required size in `needed`.
///
/// # Safety
/// `buf` valid for `len` bytes or null; `needed` writable or null.
#[no_mangle]
pub unsafe extern "C" fn confsym_report_json(
    report: *const ConfsymReport,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> ConfsymStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| fail(ConfsymStatus::NullPointer, "report is null"))?;
        let json = r.0.to_json().map_err(lib)?;
        copy_out(&json, buf, len, needed).map_err(|size| fail(ConfsymStatus::BufferTooSmall, format!("need {size} bytes")))
    })
}

/// # Safety
/// `report` must come from [`confsym_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn confsym_report_free(report: *mut ConfsymReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
