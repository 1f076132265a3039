use super::{Backend, Incumbent, SolveError, SolveResult, SolveStatus, SolverConfig};
use crate::model::{Model, ObjSense, RowSense, VarKind};
use highs_sys::*;
use std::ffi::CString;
use std::os::raw::c_void;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

/// In-process HiGHS. The MIP progress log is written to a file and parsed after
/// the run to recover the incumbent history.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

static LOG_COUNTER: AtomicUsize = AtomicUsize::new(0);

struct Handle(*mut c_void);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { Highs_destroy(self.0) }
    }
}

impl Handle {
    fn set_str(&self, opt: &str, val: &str) -> Result<(), SolveError> {
        let o = CString::new(opt).unwrap();
        let v = CString::new(val).map_err(|e| SolveError::Backend(e.to_string()))?;
        check(unsafe { Highs_setStringOptionValue(self.0, o.as_ptr(), v.as_ptr()) }, opt)
    }
    fn set_f64(&self, opt: &str, val: f64) -> Result<(), SolveError> {
        let o = CString::new(opt).unwrap();
        check(unsafe { Highs_setDoubleOptionValue(self.0, o.as_ptr(), val) }, opt)
    }
    fn set_int(&self, opt: &str, val: i32) -> Result<(), SolveError> {
        let o = CString::new(opt).unwrap();
        check(unsafe { Highs_setIntOptionValue(self.0, o.as_ptr(), val as HighsInt) }, opt)
    }
    fn set_bool(&self, opt: &str, val: bool) -> Result<(), SolveError> {
        let o = CString::new(opt).unwrap();
        check(unsafe { Highs_setBoolOptionValue(self.0, o.as_ptr(), val as HighsInt) }, opt)
    }
    fn info_f64(&self, name: &str) -> Option<f64> {
        let n = CString::new(name).unwrap();
        let mut v = 0.0;
        let st = unsafe { Highs_getDoubleInfoValue(self.0, n.as_ptr(), &mut v) };
        (st != kHighsStatusError).then_some(v)
    }
    fn info_int(&self, name: &str) -> Option<i32> {
        let n = CString::new(name).unwrap();
        let mut v: HighsInt = 0;
        let st = unsafe { Highs_getIntInfoValue(self.0, n.as_ptr(), &mut v) };
        (st != kHighsStatusError).then_some(v as i32)
    }
}

fn check(status: HighsInt, what: &str) -> Result<(), SolveError> {
    if status == kHighsStatusError {
        Err(SolveError::Backend(format!("HiGHS rejected {what}")))
    } else {
        Ok(())
    }
}

fn temp_log_path() -> PathBuf {
    let n = LOG_COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("tepjcc-highs-{}-{}.log", std::process::id(), n))
}

impl Backend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, model: &Model, cfg: &SolverConfig, start: Option<&[f64]>) -> Result<SolveResult, SolveError> {
        if model.has_bilinear() {
            return Err(SolveError::Unsupported("bilinear rows (use binary expansion or export the model)".into()));
        }
        let n = model.vars.len();
        let m = model.rows.len();

        let mut cost = vec![0.0; n];
        for &(v, c) in &model.objective.terms {
            cost[v.0] += c;
        }
        let lower: Vec<f64> = model.vars.iter().map(|v| clamp_inf(v.lower)).collect();
        let upper: Vec<f64> = model.vars.iter().map(|v| clamp_inf(v.upper)).collect();
        let integrality: Vec<HighsInt> = model
            .vars
            .iter()
            .map(|v| if v.kind == VarKind::Continuous { kHighsVarTypeContinuous } else { kHighsVarTypeInteger })
            .collect();
        let mut row_lo = Vec::with_capacity(m);
        let mut row_up = Vec::with_capacity(m);
        for r in &model.rows {
            let (lo, up) = match r.sense {
                RowSense::Le => (f64::NEG_INFINITY, r.rhs),
                RowSense::Ge => (r.rhs, f64::INFINITY),
                RowSense::Eq => (r.rhs, r.rhs),
            };
            row_lo.push(clamp_inf(lo));
            row_up.push(clamp_inf(up));
        }
        // row-wise sparse matrix; rows were compacted on insertion
        let mut a_start: Vec<HighsInt> = Vec::with_capacity(m + 1);
        let mut a_index: Vec<HighsInt> = Vec::new();
        let mut a_value: Vec<f64> = Vec::new();
        for r in &model.rows {
            a_start.push(a_index.len() as HighsInt);
            for &(v, c) in &r.terms {
                a_index.push(v.0 as HighsInt);
                a_value.push(c);
            }
        }
        let is_mip = model.has_integers();

        let h = Handle(unsafe { Highs_create() });
        let log_path = cfg.log_path.clone().unwrap_or_else(temp_log_path);
        let _ = std::fs::remove_file(&log_path);
        h.set_bool("output_flag", true)?;
        h.set_bool("log_to_console", false)?;
        h.set_str("log_file", &log_path.to_string_lossy())?;
        h.set_f64("time_limit", cfg.time_limit_s)?;
        h.set_f64("mip_rel_gap", cfg.mip_gap)?;
        h.set_f64("primal_feasibility_tolerance", cfg.feasibility_tol.max(1e-10))?;
        h.set_f64("dual_feasibility_tolerance", cfg.feasibility_tol.max(1e-10))?;
        h.set_f64("mip_feasibility_tolerance", cfg.integrality_tol.max(1e-10))?;
        h.set_int("random_seed", (cfg.seed % (i32::MAX as u64)) as i32)?;
        h.set_int("threads", cfg.threads.max(1) as i32)?;

        let sense = match model.objective.sense {
            ObjSense::Minimize => kHighsObjSenseMinimize,
            ObjSense::Maximize => kHighsObjSenseMaximize,
        };
        let st = unsafe {
            Highs_passModel(
                h.0,
                n as HighsInt,
                m as HighsInt,
                a_value.len() as HighsInt,
                0,
                kHighsMatrixFormatRowwise,
                kHighsHessianFormatTriangular,
                sense,
                model.objective.constant,
                cost.as_ptr(),
                lower.as_ptr(),
                upper.as_ptr(),
                row_lo.as_ptr(),
                row_up.as_ptr(),
                a_start.as_ptr(),
                a_index.as_ptr(),
                a_value.as_ptr(),
                std::ptr::null(),
                std::ptr::null(),
                std::ptr::null(),
                if is_mip { integrality.as_ptr() } else { std::ptr::null() },
            )
        };
        check(st, "model")?;
        if let Some(x0) = start {
            let st = unsafe { Highs_setSolution(h.0, x0.as_ptr(), std::ptr::null(), std::ptr::null(), std::ptr::null()) };
            check(st, "warm start")?;
        }

        let t0 = Instant::now();
        let run = unsafe { Highs_run(h.0) };
        let elapsed = t0.elapsed().as_secs_f64();
        if run == kHighsStatusError {
            let _ = std::fs::remove_file(&log_path);
            return Ok(SolveResult::failed(SolveStatus::Error, "HiGHS run returned an error", self.name(), elapsed));
        }
        let ms = unsafe { Highs_getModelStatus(h.0) };
        let has_primal = h.info_int("primal_solution_status") == Some(kHighsSolutionStatusFeasible as i32);
        let status = match ms {
            s if s == kHighsModelStatusOptimal => SolveStatus::Optimal,
            s if s == kHighsModelStatusInfeasible => SolveStatus::Infeasible,
            s if s == kHighsModelStatusUnbounded => SolveStatus::Unbounded,
            s if s == kHighsModelStatusUnboundedOrInfeasible => {
                if is_mip {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::Unbounded
                }
            }
            s if s == kHighsModelStatusModelEmpty => SolveStatus::Optimal,
            s if (s == kHighsModelStatusTimeLimit
                || s == kHighsModelStatusIterationLimit
                || s == kHighsModelStatusSolutionLimit
                || s == kHighsModelStatusInterrupt
                || s == kHighsModelStatusObjectiveBound
                || s == kHighsModelStatusObjectiveTarget
                || s == kHighsModelStatusUnknown)
                && has_primal =>
            {
                SolveStatus::FeasibleAtLimit
            }
            s if s == kHighsModelStatusTimeLimit => SolveStatus::Infeasible,
            _ => SolveStatus::Error,
        };
        let log = std::fs::read_to_string(&log_path).unwrap_or_default();
        if cfg.log_path.is_none() {
            let _ = std::fs::remove_file(&log_path);
        }
        if !status.has_solution() {
            let mut r = SolveResult::failed(status, format!("HiGHS model status {ms}"), self.name(), elapsed);
            if ms == kHighsModelStatusTimeLimit {
                r.message = "time limit reached without a feasible point".into();
            }
            return Ok(r);
        }

        let mut col_value = vec![0.0; n];
        let mut col_dual = vec![0.0; n];
        let mut row_value = vec![0.0; m];
        let mut row_dual = vec![0.0; m];
        unsafe {
            Highs_getSolution(
                h.0,
                col_value.as_mut_ptr(),
                col_dual.as_mut_ptr(),
                row_value.as_mut_ptr(),
                row_dual.as_mut_ptr(),
            );
        }
        let objective = unsafe { Highs_getObjectiveValue(h.0) };
        let (best_bound, gap) = if is_mip {
            (h.info_f64("mip_dual_bound"), h.info_f64("mip_gap"))
        } else {
            (Some(objective), Some(0.0))
        };
        let mut incumbents = if is_mip { parse_mip_log(&log) } else { Vec::new() };
        if incumbents.is_empty() {
            incumbents.push(Incumbent { time_s: elapsed, objective });
        }
        Ok(SolveResult {
            status,
            message: String::new(),
            objective: Some(objective),
            best_bound,
            mip_gap: gap,
            primal: col_value,
            row_duals: (!is_mip).then_some(row_dual),
            col_duals: (!is_mip).then_some(col_dual),
            time_s: elapsed,
            incumbents,
            backend: self.name().to_string(),
        })
    }
}

fn clamp_inf(v: f64) -> f64 {
    if v >= 1e30 {
        f64::INFINITY
    } else if v <= -1e30 {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Extracts `(time, objective)` pairs from the MIP progress table. Rows that
/// report a new incumbent start with a one-letter source code.
pub(crate) fn parse_mip_log(log: &str) -> Vec<Incumbent> {
    let mut sol_col: Option<usize> = None;
    let mut out: Vec<Incumbent> = Vec::new();
    for line in log.lines() {
        let toks: Vec<&str> = line.split_whitespace().filter(|t| *t != "|").collect();
        if toks.first() == Some(&"Src") {
            sol_col = toks.iter().position(|t| *t == "BestSol");
            continue;
        }
        let Some(col) = sol_col else { continue };
        if toks.len() <= col + 1 {
            continue;
        }
        let src = toks[0];
        if src.len() != 1 || !src.chars().all(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        let Some(time) = toks.last().and_then(|t| t.strip_suffix('s')).and_then(|t| t.parse::<f64>().ok()) else {
            continue;
        };
        let Ok(obj) = toks[col].parse::<f64>() else { continue };
        if !obj.is_finite() {
            continue;
        }
        if out.last().map(|l| l.objective != obj).unwrap_or(true) {
            out.push(Incumbent { time_s: time, objective: obj });
        }
    }
    out
}

/// Reads a model file with the HiGHS parser and solves it; used to cross-check exports.
pub fn solve_model_file(path: &Path, time_limit_s: f64) -> Result<(SolveStatus, Option<f64>), SolveError> {
    let h = Handle(unsafe { Highs_create() });
    h.set_bool("output_flag", false)?;
    h.set_f64("time_limit", time_limit_s)?;
    h.set_f64("mip_rel_gap", 1e-9)?;
    let p = CString::new(path.to_string_lossy().as_bytes()).map_err(|e| SolveError::Backend(e.to_string()))?;
    check(unsafe { Highs_readModel(h.0, p.as_ptr()) }, "model file")?;
    check(unsafe { Highs_run(h.0) }, "run")?;
    let ms = unsafe { Highs_getModelStatus(h.0) };
    if ms == kHighsModelStatusOptimal {
        Ok((SolveStatus::Optimal, Some(unsafe { Highs_getObjectiveValue(h.0) })))
    } else if ms == kHighsModelStatusInfeasible {
        Ok((SolveStatus::Infeasible, None))
    } else {
        Ok((SolveStatus::Error, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_incumbent_rows() {
        let log = "\
        Nodes      |    B&B Tree     |            Objective Bounds              |  Dynamic Constraints |       Work
Src  Proc. InQueue |  Leaves   Expl. | BestBound       BestSol              Gap |   Cuts   InLp Confl. | LpIters     Time

 J       0       0         0   0.00%   inf             15               Large        0      0      0         0     0.0s
         0       0         0   0.00%   12              15               25.00%       0      0      0         3     0.1s
 T       5       0         2  50.00%   12              13                8.33%       1      1      0        10     1.5s
";
        let inc = parse_mip_log(log);
        assert_eq!(inc, vec![Incumbent { time_s: 0.0, objective: 15.0 }, Incumbent { time_s: 1.5, objective: 13.0 }]);
    }
}
