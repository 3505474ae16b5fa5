//! C interface to `koopman-sparse`.
//!
//! Objects are opaque handles created by `ks_*_new`/`ks_*_build` style
//! functions and released with the matching `ks_*_free`. Every fallible call
//! returns a [`KsStatus`]; on failure the message is available through
//! [`ks_last_error`] on the same thread. Strings handed out by the library
//! must be released with [`ks_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use koopman_sparse::cli::exit_code;
use koopman_sparse::dynamics::{SparseSystem, SystemSpec};
use koopman_sparse::moment::{
    export_sdpa, solve, verify_feasibility, MomentConfig, MomentProblem, SdpSolution, SolveOptions, SolveStatus,
};
use koopman_sparse::sparsity_graph::IndexSet;
use koopman_sparse::Error;

/// Result codes; the numeric values of 1–4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsStatus {
    Ok = 0,
    Io = 1,
    Invalid = 2,
    Overflow = 3,
    Numerical = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsSolveStatus {
    Optimal = 0,
    MaxIter = 1,
    InfeasibleDetected = 2,
}

pub struct KsSystem {
    inner: SparseSystem,
}

pub struct KsMomentProblem {
    inner: MomentProblem,
}

pub struct KsSolution {
    inner: SdpSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(KsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match exit_code(&e) {
            1 => KsStatus::Io,
            3 => KsStatus::Overflow,
            4 => KsStatus::Numerical,
            _ => KsStatus::Invalid,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> KsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            KsStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            KsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(KsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(KsStatus::Invalid, format!("{what} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(KsStatus::Invalid, "string contains NUL".into()))?;
    put(out, c.into_raw(), "out")
}

fn json_err(e: serde_json::Error) -> Fail {
    Fail(KsStatus::Invalid, format!("JSON: {e}"))
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn ks_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn ks_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ks_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a system from its JSON description (inline components or a builtin).
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ks_system_from_json(json: *const c_char, out: *mut *mut KsSystem) -> KsStatus {
    guard(|| {
        let spec: SystemSpec = serde_json::from_str(str_arg(json, "json")?).map_err(json_err)?;
        let sys = spec.build()?;
        put(out, Box::into_raw(Box::new(KsSystem { inner: sys })), "out")
    })
}

/// # Safety
/// `sys` must come from [`ks_system_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ks_system_free(sys: *mut KsSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// State dimension, 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ks_system_dim(sys: *const KsSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.inner.n())
}

/// `out = f(x)`, both of length `n` (the vector field or the map).
///
/// # Safety
/// `x` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ks_system_eval(sys: *const KsSystem, x: *const f64, n: usize, out: *mut f64) -> KsStatus {
    guard(|| {
        let s = &obj(sys, "sys")?.inner;
        if n != s.n() {
            return Err(Fail(KsStatus::Invalid, format!("length {n} for a system on R^{}", s.n())));
        }
        let fx = s.eval(slice(x, n, "x")?);
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(fx.as_ptr(), out, n);
        Ok(())
    })
}

/// Whether the 1-based indices form a subsystem.
///
/// # Safety
/// `idx` must hold `len` entries, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ks_system_is_subsystem(
    sys: *const KsSystem,
    idx: *const usize,
    len: usize,
    out: *mut bool,
) -> KsStatus {
    guard(|| {
        let s = &obj(sys, "sys")?.inner;
        let set = IndexSet::new(slice(idx, len, "idx")?.iter().copied())?;
        put(out, s.graph().is_subsystem(&set)?, "out")
    })
}

/// JSON array of all subsystems (1-based index arrays). Fails with
/// `KS_STATUS_OVERFLOW` when there are more than `cap`.
///
/// # Safety
/// `out` must be valid; release the string with [`ks_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ks_system_subsystems_json(
    sys: *const KsSystem,
    cap: usize,
    out: *mut *mut c_char,
) -> KsStatus {
    guard(|| {
        let s = &obj(sys, "sys")?.inner;
        let subs = s.graph().enumerate_subsystems(cap)?;
        let list: Vec<&[usize]> = subs.iter().map(|x| x.as_slice()).collect();
        put_string(out, serde_json::to_string(&list).map_err(json_err)?)
    })
}

/// Assembles a moment problem, e.g. `{"mode":"full","degree":8,"cost":"x1"}`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ks_moment_problem_build(
    sys: *const KsSystem,
    config_json: *const c_char,
    out: *mut *mut KsMomentProblem,
) -> KsStatus {
    guard(|| {
        let s = &obj(sys, "sys")?.inner;
        let cfg: MomentConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(json_err)?;
        let p = cfg.build(s)?;
        put(out, Box::into_raw(Box::new(KsMomentProblem { inner: p })), "out")
    })
}

/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ks_moment_problem_free(p: *mut KsMomentProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of moment variables, 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ks_moment_problem_nvars(p: *const KsMomentProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.nvars)
}

/// Counts (variables, equalities, block sizes) as JSON.
///
/// # Safety
/// `out` must be valid; release the string with [`ks_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ks_moment_problem_counts_json(p: *const KsMomentProblem, out: *mut *mut c_char) -> KsStatus {
    guard(|| {
        let p = &obj(p, "problem")?.inner;
        put_string(out, serde_json::to_string(&p.counts()).map_err(json_err)?)
    })
}

/// Writes SDPA sparse format to `path` and the sidecar next to it.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ks_moment_problem_export_sdpa(p: *const KsMomentProblem, path: *const c_char) -> KsStatus {
    guard(|| {
        let p = &obj(p, "problem")?.inner;
        export_sdpa(p, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Largest equality violation and smallest PSD-block eigenvalue at `y`.
///
/// # Safety
/// `y` must hold `len` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ks_moment_problem_verify(
    p: *const KsMomentProblem,
    y: *const f64,
    len: usize,
    tol: f64,
    equality_max: *mut f64,
    psd_min_eig: *mut f64,
    feasible: *mut bool,
) -> KsStatus {
    guard(|| {
        let p = &obj(p, "problem")?.inner;
        let r = verify_feasibility(slice(y, len, "y")?, p, tol)?;
        put(equality_max, r.equality_max, "equality_max")?;
        put(psd_min_eig, r.psd_min_eig, "psd_min_eig")?;
        put(feasible, r.feasible, "feasible")
    })
}

/// Solves with the built-in ADMM solver. `options_json` may be null for
/// defaults, e.g. `{"max_iter":20000,"tol":1e-9}`.
///
/// # Safety
/// `options_json` must be null or NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ks_solve(
    p: *const KsMomentProblem,
    options_json: *const c_char,
    out: *mut *mut KsSolution,
) -> KsStatus {
    guard(|| {
        let p = &obj(p, "problem")?.inner;
        let opts: SolveOptions = if options_json.is_null() {
            SolveOptions::default()
        } else {
            serde_json::from_str(str_arg(options_json, "options_json")?).map_err(json_err)?
        };
        let sol = solve(p, &opts)?;
        put(out, Box::into_raw(Box::new(KsSolution { inner: sol })), "out")
    })
}

/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ks_solution_free(s: *mut KsSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Objective value, NaN for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ks_solution_objective(s: *const KsSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.inner.objective)
}

/// # Safety
/// `s` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ks_solution_status(s: *const KsSolution, out: *mut KsSolveStatus) -> KsStatus {
    guard(|| {
        let st = match obj(s, "solution")?.inner.status {
            SolveStatus::Optimal => KsSolveStatus::Optimal,
            SolveStatus::MaxIter => KsSolveStatus::MaxIter,
            SolveStatus::InfeasibleDetected => KsSolveStatus::InfeasibleDetected,
        };
        put(out, st, "out")
    })
}

/// Copies the moment vector into `buf` (capacity `len`) and stores its
/// length in `written`. With `len` too small nothing is copied, `written`
/// still receives the required length and the call fails.
///
/// # Safety
/// `buf` must hold `len` doubles, `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ks_solution_moments(
    s: *const KsSolution,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> KsStatus {
    guard(|| {
        let y = &obj(s, "solution")?.inner.y;
        put(written, y.len(), "written")?;
        if len < y.len() {
            return Err(Fail(KsStatus::Invalid, format!("buffer holds {len}, need {}", y.len())));
        }
        if !y.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(y.as_ptr(), buf, y.len());
        }
        Ok(())
    })
}

/// Full solution report as JSON.
///
/// # Safety
/// `out` must be valid; release the string with [`ks_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ks_solution_json(s: *const KsSolution, out: *mut *mut c_char) -> KsStatus {
    guard(|| {
        let s = &obj(s, "solution")?.inner;
        put_string(out, serde_json::to_string(s).map_err(json_err)?)
    })
}
