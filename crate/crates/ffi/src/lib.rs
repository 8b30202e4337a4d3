//! C ABI over the liquidation solver.
//!
//! Problems and reports are opaque handles created and destroyed through this
//! interface. Every fallible call returns a [`LiqStatus`]; on failure the
//! message is kept per thread and can be read with [`liq_last_error_message`].
//! Matrices are copied out row-major, one row per time node.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use liquidation::hamiltonian::hamiltonian;
use liquidation::problem_file::{ProblemFile, ProblemFileError};
use liquidation::{solve, CostModel, LiquidationProblem, SolveError, SolveReport, SolverConfig, StepSize};

/// Status codes. Values 1–4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiqStatus {
    Ok = 0,
    /// Problem or parameters failed validation.
    Validation = 1,
    /// Iteration cap hit, or the residual check failed. A report is still returned.
    NotConverged = 2,
    Diverged = 3,
    /// Not produced here; reserved so codes match the command line.
    OraclePrecondition = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
    /// Malformed JSON.
    Parse = 7,
    /// Output buffer too small.
    BufferTooSmall = 8,
    /// Internal panic caught at the boundary.
    Panic = 9,
}

/// Opaque validated problem.
pub struct LiqProblem {
    inner: LiquidationProblem,
}

/// Opaque solver result.
pub struct LiqReport {
    inner: SolveReport,
}

/// Solver settings. Non-positive `dtheta`, `tol_grad` or `tol_residual`
/// select the automatic value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LiqSolveOptions {
    pub dtheta: f64,
    pub safety: f64,
    pub max_iters: usize,
    pub tol_grad: f64,
    pub tol_residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn clear_error() {
    LAST_ERROR.with(|e| e.borrow_mut().clear());
}

fn fail(status: LiqStatus, msg: impl Into<String>) -> LiqStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> LiqStatus) -> LiqStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(LiqStatus::Panic, format!("panic: {msg}"))
        }
    }
}

impl LiqSolveOptions {
    fn config(&self) -> SolverConfig {
        let auto = |x: f64| (x > 0.0).then_some(x);
        SolverConfig {
            dtheta: auto(self.dtheta).map_or(StepSize::Auto, StepSize::Fixed),
            safety: self.safety,
            max_iters: self.max_iters,
            tol_grad: auto(self.tol_grad),
            tol_residual: auto(self.tol_residual),
        }
    }
}

/// Default settings: automatic step at 0.9 · 2/K, automatic tolerances.
#[no_mangle]
pub extern "C" fn liq_solve_options_default() -> LiqSolveOptions {
    let c = SolverConfig::default();
    LiqSolveOptions {
        dtheta: 0.0,
        safety: c.safety,
        max_iters: c.max_iters,
        tol_grad: 0.0,
        tol_residual: 0.0,
    }
}

/// Parses and validates a JSON problem document. On success `*out` owns a
/// problem that must be released with [`liq_problem_free`].
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn liq_problem_from_json(json: *const c_char, out: *mut *mut LiqProblem) -> LiqStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(LiqStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(LiqStatus::InvalidUtf8, e.to_string()),
        };
        let problem = ProblemFile::parse(text).and_then(|f| f.to_problem());
        match problem {
            Ok(p) => {
                *out = Box::into_raw(Box::new(LiqProblem { inner: p }));
                LiqStatus::Ok
            }
            Err(e @ ProblemFileError::Parse { .. }) => fail(LiqStatus::Parse, e.to_string()),
            Err(e) => fail(LiqStatus::Validation, e.to_string()),
        }
    })
}

/// # Safety
/// `problem` must come from [`liq_problem_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn liq_problem_free(problem: *mut LiqProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of assets and number of time slices.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn liq_problem_shape(
    problem: *const LiqProblem,
    assets: *mut usize,
    steps: *mut usize,
) -> LiqStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return fail(LiqStatus::NullPointer, "null problem");
        };
        if assets.is_null() || steps.is_null() {
            return fail(LiqStatus::NullPointer, "null output");
        }
        *assets = p.inner.dim();
        *steps = p.inner.steps();
        LiqStatus::Ok
    })
}

/// Runs the solver. `options` may be null for defaults. On `Ok` and on
/// `NotConverged`, `*out` owns a report to release with [`liq_report_free`];
/// on any other status it is null.
///
/// # Safety
/// `problem` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn liq_solve(
    problem: *const LiqProblem,
    options: *const LiqSolveOptions,
    out: *mut *mut LiqReport,
) -> LiqStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return fail(LiqStatus::NullPointer, "null problem");
        };
        if out.is_null() {
            return fail(LiqStatus::NullPointer, "null output");
        }
        *out = ptr::null_mut();
        let opts = options.as_ref().copied().unwrap_or_else(|| liq_solve_options_default());
        let (report, status) = match solve(&p.inner, &opts.config()) {
            Ok(r) if r.converged => (r, LiqStatus::Ok),
            Ok(r) => {
                set_error(format!(
                    "residual {:e} or participation excess {:e} above {:e}",
                    r.final_residual, r.participation_excess, r.tol_residual
                ));
                (r, LiqStatus::NotConverged)
            }
            Err(e @ SolveError::NotConverged(_)) => {
                set_error(e.to_string());
                let SolveError::NotConverged(r) = e else { unreachable!() };
                (*r, LiqStatus::NotConverged)
            }
            Err(e @ SolveError::Diverged { .. }) => return fail(LiqStatus::Diverged, e.to_string()),
            Err(e) => return fail(LiqStatus::Validation, e.to_string()),
        };
        *out = Box::into_raw(Box::new(LiqReport { inner: report }));
        status
    })
}

/// # Safety
/// `report` must come from [`liq_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn liq_report_free(report: *mut LiqReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize, needed: *mut usize) -> LiqStatus {
    if !needed.is_null() {
        *needed = src.len();
    }
    if buf.is_null() {
        return if needed.is_null() {
            fail(LiqStatus::NullPointer, "null buffer")
        } else {
            LiqStatus::Ok
        };
    }
    if len < src.len() {
        return fail(
            LiqStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    LiqStatus::Ok
}

/// Copies the `(N+1) × d` holdings. Pass a null `buf` to query the length
/// through `needed`.
///
/// # Safety
/// `buf` must hold `len` doubles; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn liq_report_holdings(
    report: *const LiqReport,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> LiqStatus {
    guard(|| match report.as_ref() {
        Some(r) => copy_out(r.inner.q_star.as_slice(), buf, len, needed),
        None => fail(LiqStatus::NullPointer, "null report"),
    })
}

/// Copies the `N × d` dual path. Same conventions as [`liq_report_holdings`].
///
/// # Safety
/// See [`liq_report_holdings`].
#[no_mangle]
pub unsafe extern "C" fn liq_report_dual(
    report: *const LiqReport,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> LiqStatus {
    guard(|| match report.as_ref() {
        Some(r) => copy_out(r.inner.p_star.as_slice(), buf, len, needed),
        None => fail(LiqStatus::NullPointer, "null report"),
    })
}

/// Iteration count, convergence flag, system residual and final dual objective.
///
/// # Safety
/// Output pointers may be null; non-null ones must be writable.
#[no_mangle]
pub unsafe extern "C" fn liq_report_summary(
    report: *const LiqReport,
    iterations: *mut usize,
    converged: *mut bool,
    residual: *mut f64,
    objective: *mut f64,
) -> LiqStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return fail(LiqStatus::NullPointer, "null report");
        };
        let r = &r.inner;
        if !iterations.is_null() {
            *iterations = r.iterations;
        }
        if !converged.is_null() {
            *converged = r.converged;
        }
        if !residual.is_null() {
            *residual = r.final_residual;
        }
        if !objective.is_null() {
            *objective = *r.j_history.last().unwrap_or(&f64::NAN);
        }
        LiqStatus::Ok
    })
}

/// Capped Hamiltonian `H(p)` and its slope for one cost model.
///
/// # Safety
/// `value` and `slope` must be writable.
#[no_mangle]
pub unsafe extern "C" fn liq_hamiltonian(
    eta: f64,
    phi: f64,
    psi: f64,
    rho_max: f64,
    p: f64,
    value: *mut f64,
    slope: *mut f64,
) -> LiqStatus {
    guard(|| {
        if value.is_null() || slope.is_null() {
            return fail(LiqStatus::NullPointer, "null output");
        }
        let ok = eta > 0.0 && psi >= 0.0 && phi > 0.0 && phi <= 1.0 && rho_max > 0.0 && p.is_finite();
        if !ok {
            return fail(
                LiqStatus::Validation,
                format!("bad parameters: eta={eta} phi={phi} psi={psi} rho_max={rho_max} p={p}"),
            );
        }
        let h = hamiltonian(&CostModel::new(eta, phi, psi, rho_max), p);
        *value = h.value;
        *slope = h.slope;
        LiqStatus::Ok
    })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length in bytes, excluding
/// the terminator. Returns 0 when there is no error.
///
/// # Safety
/// `buf` must hold `len` bytes, or be null to query the length.
#[no_mangle]
pub unsafe extern "C" fn liq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
