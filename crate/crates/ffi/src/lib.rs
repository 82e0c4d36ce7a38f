//! C ABI over the solver and the frequency diagnostics.
//!
//! Problems and solutions are opaque handles created and destroyed through
//! this interface. Every fallible call returns an [`OlStatus`]; on failure
//! [`ol_last_error_message`] describes the error on the calling thread.
//! Strings returned to the caller are released with [`ol_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use obstacle_lab::fields::{validate_spec, ProblemConfig, ProblemSpec};
use obstacle_lab::geometry::Grid;
use obstacle_lab::pipeline::diagnose;
use obstacle_lab::solver::{solve, Initial, SolveResult, SolverOptions};
use obstacle_lab::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON, unknown keys or bad grid parameters.
    Config = 3,
    /// An expression string failed to parse.
    Parse = 4,
    /// The problem violates the structural hypotheses.
    Validation = 5,
    /// Newton iteration did not reach the tolerance.
    NoConvergence = 6,
    /// A point or radius outside the admissible range.
    Domain = 7,
    BufferTooSmall = 8,
    /// Any other failure inside the library.
    Internal = 9,
    Panic = 10,
}

/// Problem specification on a fixed grid.
pub struct OlProblem {
    spec: ProblemSpec,
}

/// Converged (or last) iterate of a solve, tied to its problem.
pub struct OlSolution {
    spec: ProblemSpec,
    result: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> OlStatus {
    match err {
        Error::Config(_) | Error::InvalidGrid(_) | Error::Json(_) => OlStatus::Config,
        Error::Parse { .. } => OlStatus::Parse,
        Error::Validation(_) => OlStatus::Validation,
        Error::NonConvergence { .. } => OlStatus::NoConvergence,
        Error::Domain(_) | Error::BelowResolution { .. } => OlStatus::Domain,
        _ => OlStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), OlStatus>) -> OlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside obstacle-lab");
            OlStatus::Panic
        }
    }
}

fn fail(err: Error) -> OlStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> OlStatus {
    set_error(format!("`{what}` is null"));
    OlStatus::NullPointer
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, OlStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|e| {
        set_error(format!("`{what}` is not UTF-8: {e}"));
        OlStatus::InvalidUtf8
    })
}

unsafe fn read_point(x: *const f64, dim: usize, expected: usize) -> Result<[f64; 3], OlStatus> {
    if x.is_null() {
        return Err(null("x"));
    }
    if dim != expected {
        set_error(format!("point has {dim} coordinates, problem dimension is {expected}"));
        return Err(OlStatus::Domain);
    }
    let mut p = [0.0; 3];
    p[..dim].copy_from_slice(std::slice::from_raw_parts(x, dim));
    Ok(p)
}

/// Build a problem from the JSON form of the `problem` section of an
/// experiment config on a grid with `cells_per_axis` nodes per lateral axis,
/// and check the ellipticity, symmetry and boundary hypotheses.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` owns a handle to release with [`ol_problem_free`].
#[no_mangle]
pub unsafe extern "C" fn ol_problem_from_json(
    json: *const c_char,
    cells_per_axis: usize,
    out: *mut *mut OlProblem,
) -> OlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let cfg: ProblemConfig = serde_json::from_str(text).map_err(|e| fail(Error::Config(e.to_string())))?;
        let grid = Grid::new(cfg.dim, cells_per_axis).map_err(fail)?;
        let spec = cfg.build(&grid).map_err(fail)?;
        validate_spec(&spec).into_result().map_err(fail)?;
        *out = Box::into_raw(Box::new(OlProblem { spec }));
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from [`ol_problem_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ol_problem_free(problem: *mut OlProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of grid nodes of the problem.
///
/// # Safety
/// `problem` must be null or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn ol_problem_node_count(problem: *const OlProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.spec.grid.node_count())
}

/// Minimize the discrete energy from the zero field. `tol <= 0` and
/// `max_iter == 0` select the defaults.
///
/// A solve that stops short of the tolerance still returns its last iterate
/// in `*out` together with [`OlStatus::NoConvergence`].
///
/// # Safety
/// `problem` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ol_solve(
    problem: *const OlProblem,
    tol: f64,
    max_iter: usize,
    out: *mut *mut OlSolution,
) -> OlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let mut opts = SolverOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        if max_iter > 0 {
            opts.max_iter = max_iter;
        }
        let spec = p.spec.clone();
        match solve(&spec, Initial::Zero, &opts) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(OlSolution { spec, result }));
                Ok(())
            }
            Err(Error::NonConvergence {
                iterations,
                gradient_norm,
                last,
            }) => {
                set_error(format!(
                    "no convergence after {iterations} iterations (gradient norm {gradient_norm:e})"
                ));
                *out = Box::into_raw(Box::new(OlSolution { spec, result: *last }));
                Err(OlStatus::NoConvergence)
            }
            Err(e) => Err(fail(e)),
        }
    })
}

/// # Safety
/// `solution` must be null or a handle from [`ol_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ol_solution_free(solution: *mut OlSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ol_solution_node_count(solution: *const OlSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.result.u.values().len())
}

/// Copy the nodal values into `buf`, row-major over `(x1, .., xn)` with `xn`
/// fastest; `xn` has `(m + 1) / 2` nodes, the other axes `m`.
///
/// # Safety
/// `solution` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ol_solution_copy_values(solution: *const OlSolution, buf: *mut f64, len: usize) -> OlStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = s.result.u.values();
        if len < v.len() {
            set_error(format!("buffer holds {len} values, solution has {}", v.len()));
            return Err(OlStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Final discrete energy, NaN for a null handle.
///
/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ol_solution_energy(solution: *const OlSolution) -> f64 {
    solution
        .as_ref()
        .and_then(|s| s.result.energy_history.last().copied())
        .unwrap_or(f64::NAN)
}

/// Max-norm residual of the discrete weak form, NaN for a null handle.
///
/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ol_solution_weak_residual(solution: *const OlSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.result.weak_residual)
}

/// Newton iterations used.
///
/// # Safety
/// `solution` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn ol_solution_iterations(solution: *const OlSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.result.iterations)
}

/// Multilinear interpolation of the solution at `x[0..dim]`.
///
/// # Safety
/// `solution` must be a live handle, `x` must point to `dim` doubles and
/// `value` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn ol_solution_interpolate(
    solution: *const OlSolution,
    x: *const f64,
    dim: usize,
    value: *mut f64,
) -> OlStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        let p = read_point(x, dim, s.spec.dim())?;
        *value = s.result.u.interpolate(&p).map_err(fail)?;
        Ok(())
    })
}

/// Frequency profile of the solution recentred at the slab point
/// `x0[0..dim]` (last coordinate 0), as CSV. `rho_max <= 0` selects 0.9 and
/// `rungs == 0` the full ladder down to the resolution floor.
///
/// # Safety
/// `solution` must be a live handle, `x0` must point to `dim` doubles and
/// `out` to a writable pointer. The string in `*out` is released with
/// [`ol_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ol_frequency_profile_csv(
    solution: *const OlSolution,
    x0: *const f64,
    dim: usize,
    rho_max: f64,
    rungs: usize,
    out: *mut *mut c_char,
) -> OlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let p = read_point(x0, dim, s.spec.dim())?;
        let rho = if rho_max > 0.0 { rho_max } else { 0.9 };
        let d = diagnose(&s.spec, &s.result.u, &p, rho, (rungs > 0).then_some(rungs)).map_err(fail)?;
        let csv = CString::new(d.profile.to_csv()).map_err(|_| {
            set_error("profile CSV contains NUL");
            OlStatus::Internal
        })?;
        *out = csv.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ol_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into the library from the same thread; do not free.
#[no_mangle]
pub extern "C" fn ol_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
