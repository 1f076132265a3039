use super::{Backend, Incumbent, SolveError, SolveResult, SolveStatus, SolverConfig};
use crate::model::{Model, ObjSense, RowSense, VarKind};
use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, SolutionStatus, SolveOutcome};
use std::time::{Duration, Instant};

/// Pure-Rust simplex and branch-and-bound. Slower than HiGHS and without dual
/// values; kept as an independent second opinion on small models.
#[derive(Debug, Clone, Copy, Default)]
pub struct MicroLpBackend;

impl Backend for MicroLpBackend {
    fn name(&self) -> &str {
        "microlp"
    }

    fn solve(&self, model: &Model, cfg: &SolverConfig, _start: Option<&[f64]>) -> Result<SolveResult, SolveError> {
        if model.has_bilinear() {
            return Err(SolveError::Unsupported("bilinear rows".into()));
        }
        let dir = match model.objective.sense {
            ObjSense::Minimize => OptimizationDirection::Minimize,
            ObjSense::Maximize => OptimizationDirection::Maximize,
        };
        let mut p = Problem::new(dir);
        p.set_time_limit(Duration::from_secs_f64(cfg.time_limit_s.max(0.001)));
        let mut cost = vec![0.0; model.vars.len()];
        for &(v, c) in &model.objective.terms {
            cost[v.0] += c;
        }
        let mut vars = Vec::with_capacity(model.vars.len());
        for (j, v) in model.vars.iter().enumerate() {
            let var = match v.kind {
                VarKind::Continuous => p.add_var(cost[j], (v.lower, v.upper)),
                VarKind::Binary if v.lower <= 0.0 && v.upper >= 1.0 => p.add_binary_var(cost[j]),
                _ => {
                    let lo = if v.lower.is_finite() { v.lower.ceil() as i32 } else { i32::MIN };
                    let hi = if v.upper.is_finite() { v.upper.floor() as i32 } else { i32::MAX };
                    p.add_integer_var(cost[j], (lo, hi))
                }
            };
            vars.push(var);
        }
        for r in &model.rows {
            let mut e = LinearExpr::empty();
            for &(v, c) in &r.terms {
                e.add(vars[v.0], c);
            }
            let op = match r.sense {
                RowSense::Le => ComparisonOp::Le,
                RowSense::Ge => ComparisonOp::Ge,
                RowSense::Eq => ComparisonOp::Eq,
            };
            p.add_constraint(e, op, r.rhs);
        }
        let t0 = Instant::now();
        let out = p.solve();
        let elapsed = t0.elapsed().as_secs_f64();
        match out {
            Err(microlp::Error::Infeasible) => Ok(SolveResult::failed(SolveStatus::Infeasible, "infeasible", self.name(), elapsed)),
            Err(microlp::Error::Unbounded) => Ok(SolveResult::failed(SolveStatus::Unbounded, "unbounded", self.name(), elapsed)),
            Err(e) => Ok(SolveResult::failed(SolveStatus::Error, e.to_string(), self.name(), elapsed)),
            Ok(SolveOutcome::Interrupted(_)) => Ok(SolveResult::failed(
                SolveStatus::Infeasible,
                "time limit reached without a feasible point",
                self.name(),
                elapsed,
            )),
            Ok(SolveOutcome::Solution(sol)) => {
                let primal: Vec<f64> = vars.iter().map(|&v| sol.var_value_raw(v)).collect();
                let status = match sol.status() {
                    SolutionStatus::Optimal => SolveStatus::Optimal,
                    SolutionStatus::Feasible => SolveStatus::FeasibleAtLimit,
                };
                let objective = sol.objective() + model.objective.constant;
                Ok(SolveResult {
                    status,
                    message: String::new(),
                    objective: Some(objective),
                    best_bound: None,
                    mip_gap: sol.gap(),
                    primal,
                    row_duals: None,
                    col_duals: None,
                    time_s: elapsed,
                    incumbents: vec![Incumbent { time_s: elapsed, objective }],
                    backend: self.name().to_string(),
                })
            }
        }
    }
}
