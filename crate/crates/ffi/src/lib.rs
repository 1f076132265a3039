//! C interface to the planning library.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every entry point returns a [`TjStatus`];
//! on failure [`tj_last_error`] describes the problem until the next call on
//! the same thread. Strings returned by the library are freed with
//! [`tj_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use tep_jcc::cases::garver6;
use tep_jcc::drjcc::{JccProblem, JccScheme};
use tep_jcc::network::{Case, Configuration, Horizon, Network};
use tep_jcc::solver::{backend_from_env, solve_certified, SolveStatus, SolverConfig};
use tep_jcc::uncertainty::compute_q;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Infeasible = 3,
    Backend = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TjScheme {
    Sla = 0,
    La = 1,
    Sfla = 2,
    Wcvar = 3,
    Exact = 4,
}

/// A case with its network and candidate configurations.
pub struct TjCase {
    case: Case,
    net: Network,
    configs: Vec<Configuration>,
}

/// A linear program with one chance-constrained block.
pub struct TjJcc {
    problem: JccProblem,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn guard(f: impl FnOnce() -> Result<(), (TjStatus, String)>) -> TjStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TjStatus::Ok,
        Ok(Err((st, msg))) => {
            set_error(msg);
            st
        }
        Err(_) => {
            set_error("internal panic");
            TjStatus::Panic
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> (TjStatus, String) {
    (TjStatus::InvalidInput, e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, (TjStatus, String)> {
    if p.is_null() {
        return Err((TjStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p).to_str().map_err(invalid)
}

unsafe fn check_out<T>(p: *mut T) -> Result<(), (TjStatus, String)> {
    if p.is_null() {
        Err((TjStatus::NullPointer, "null output pointer".into()))
    } else {
        Ok(())
    }
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, (TjStatus, String)> {
    p.as_ref().ok_or((TjStatus::NullPointer, "null handle".into()))
}

fn case_handle(case: Case) -> Result<*mut TjCase, (TjStatus, String)> {
    let net = Network::from_case(&case).map_err(invalid)?;
    let buses: Vec<usize> = case.participants.iter().map(|p| p.bus).collect();
    let configs = net.enumerate_configurations(&buses);
    Ok(Box::into_raw(Box::new(TjCase { case, net, configs })))
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Seeded Garver 6-bus case over `years` planning years.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tj_case_garver(seed: u64, years: usize, out: *mut *mut TjCase) -> TjStatus {
    guard(|| {
        check_out(out)?;
        if years == 0 {
            return Err(invalid("years must be positive"));
        }
        *out = case_handle(garver6(seed, Horizon { years, ..Horizon::default() }))?;
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tj_case_from_json(json: *const c_char, out: *mut *mut TjCase) -> TjStatus {
    guard(|| {
        check_out(out)?;
        let case = Case::from_json(read_str(json)?).map_err(invalid)?;
        *out = case_handle(case)?;
        Ok(())
    })
}

/// # Safety
/// `case` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tj_case_to_json(case: *const TjCase, out: *mut *mut c_char) -> TjStatus {
    guard(|| {
        check_out(out)?;
        let c = handle(case)?;
        *out = CString::new(c.case.to_json()).map_err(invalid)?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `case` must be null or a handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn tj_case_free(case: *mut TjCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Bus, line and configuration counts.
///
/// # Safety
/// `case` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn tj_case_dims(
    case: *const TjCase,
    buses: *mut usize,
    lines: *mut usize,
    configurations: *mut usize,
) -> TjStatus {
    guard(|| {
        check_out(buses)?;
        check_out(lines)?;
        check_out(configurations)?;
        let c = handle(case)?;
        *buses = c.net.num_buses();
        *lines = c.net.num_lines();
        *configurations = c.configs.len();
        Ok(())
    })
}

/// Writes the PTDF of configuration `config` row-major (`lines x buses`).
/// Fails with `BufferTooSmall` when `len` is short; `needed` receives the size
/// either way.
///
/// # Safety
/// `case` must be a live handle, `out` must hold `len` doubles and `needed`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn tj_case_ptdf(
    case: *const TjCase,
    config: usize,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> TjStatus {
    guard(|| {
        check_out(needed)?;
        let c = handle(case)?;
        let cfg = c.configs.get(config).ok_or_else(|| invalid(format!("configuration {config} out of range")))?;
        let (nl, nb) = (c.net.num_lines(), c.net.num_buses());
        *needed = nl * nb;
        if len < nl * nb {
            return Err((TjStatus::BufferTooSmall, format!("need {} values", nl * nb)));
        }
        check_out(out)?;
        let p = c.net.compute_ptdf(cfg).map_err(invalid)?;
        let dst = std::slice::from_raw_parts_mut(out, nl * nb);
        for l in 0..nl {
            for b in 0..nb {
                dst[l * nb + b] = p.get(l, b);
            }
        }
        Ok(())
    })
}

/// Value-at-risk style quantile of `values` at risk level `eps`.
///
/// # Safety
/// `values` must hold `n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tj_compute_q(values: *const f64, n: usize, eps: f64, out: *mut f64) -> TjStatus {
    guard(|| {
        check_out(out)?;
        if values.is_null() || n == 0 {
            return Err(invalid("need at least one value"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps must lie in (0, 1)"));
        }
        *out = compute_q(std::slice::from_raw_parts(values, n), eps);
        Ok(())
    })
}

/// Parses a chance-constrained LP from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tj_jcc_from_json(json: *const c_char, out: *mut *mut TjJcc) -> TjStatus {
    guard(|| {
        check_out(out)?;
        let problem = JccProblem::from_json(read_str(json)?).map_err(invalid)?;
        problem.instance.validate().map_err(invalid)?;
        *out = Box::into_raw(Box::new(TjJcc { problem }));
        Ok(())
    })
}

/// Decision dimension of the problem.
///
/// # Safety
/// `jcc` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tj_jcc_dim(jcc: *const TjJcc, out: *mut usize) -> TjStatus {
    guard(|| {
        check_out(out)?;
        *out = handle(jcc)?.problem.instance.dim_x();
        Ok(())
    })
}

/// Solves the problem under `scheme` with unit sample weights (optimal row
/// weights for `Wcvar`). `big_m` is used by `Exact` only. Writes the
/// objective and, when `x_len` suffices, the optimal decision.
///
/// # Safety
/// `jcc` must be a live handle, `objective` must be valid and `x` must hold
/// `x_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tj_jcc_solve(
    jcc: *const TjJcc,
    scheme: TjScheme,
    big_m: f64,
    objective: *mut f64,
    x: *mut f64,
    x_len: usize,
) -> TjStatus {
    guard(|| {
        check_out(objective)?;
        let p = &handle(jcc)?.problem;
        let n = p.instance.n();
        let dim = p.instance.dim_x();
        if x_len < dim {
            return Err((TjStatus::BufferTooSmall, format!("need {dim} values")));
        }
        check_out(x)?;
        let s = match scheme {
            TjScheme::Sla => JccScheme::Sla { kappa: vec![1.0; n] },
            TjScheme::La => JccScheme::La { kappa: vec![1.0; n] },
            TjScheme::Sfla => JccScheme::Sfla { kappa: vec![1.0; n] },
            TjScheme::Wcvar => JccScheme::Wcvar { weights: p.instance.optimal_weights() },
            TjScheme::Exact => {
                if !(big_m > 0.0) {
                    return Err(invalid("Exact needs a positive big_m"));
                }
                JccScheme::Exact { big_m, strengthened: true }
            }
        };
        let (model, vars) = p.build(&s).map_err(invalid)?;
        let res = solve_certified(backend_from_env().as_ref(), &model, &SolverConfig::default(), None)
            .map_err(|e| (TjStatus::Backend, e.to_string()))?;
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                return Err((TjStatus::Infeasible, res.status.as_str().into()));
            }
            _ => return Err((TjStatus::Backend, format!("{}: {}", res.status.as_str(), res.message))),
        }
        *objective = res.objective.unwrap_or(f64::NAN);
        let dst = std::slice::from_raw_parts_mut(x, dim);
        for (j, v) in vars.iter().enumerate() {
            dst[j] = res.primal[v.0];
        }
        Ok(())
    })
}

/// # Safety
/// `jcc` must be null or a handle from this library, released once.
#[no_mangle]
pub unsafe extern "C" fn tj_jcc_free(jcc: *mut TjJcc) {
    if !jcc.is_null() {
        drop(Box::from_raw(jcc));
    }
}
