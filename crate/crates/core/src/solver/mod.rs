//! Backend-neutral solve interface.
//!
//! A [`Backend`] turns a [`Model`] into a [`SolveResult`]. Returned primal
//! points are re-checked against the model on this side of the boundary, so a
//! backend bug surfaces as an `Error` status instead of a silently wrong plan.
//!
//! Dual values follow one convention for every backend: the row dual is the
//! derivative of the optimal objective (in the model's own sense) with respect
//! to the row's right-hand side.

mod highs_backend;
mod microlp_backend;
pub mod mps;

pub use highs_backend::{solve_model_file, HighsBackend};
pub use microlp_backend::MicroLpBackend;

use crate::model::{Model, VarKind};
use std::path::PathBuf;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub time_limit_s: f64,
    pub mip_gap: f64,
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub threads: usize,
    pub seed: u64,
    /// Backend log destination; a temporary file is used when absent.
    pub log_path: Option<PathBuf>,
    /// Tolerance used when re-checking the returned point.
    pub certify_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            time_limit_s: 600.0,
            mip_gap: 1e-6,
            feasibility_tol: 1e-9,
            integrality_tol: 1e-9,
            threads: 1,
            seed: 0,
            log_path: None,
            certify_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    FeasibleAtLimit,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleAtLimit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleAtLimit => "feasible-at-limit",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Incumbent {
    pub time_s: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub message: String,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub mip_gap: Option<f64>,
    pub primal: Vec<f64>,
    pub row_duals: Option<Vec<f64>>,
    pub col_duals: Option<Vec<f64>>,
    pub time_s: f64,
    pub incumbents: Vec<Incumbent>,
    pub backend: String,
}

impl SolveResult {
    pub fn failed(status: SolveStatus, message: impl Into<String>, backend: &str, time_s: f64) -> Self {
        SolveResult {
            status,
            message: message.into(),
            objective: None,
            best_bound: None,
            mip_gap: None,
            primal: Vec::new(),
            row_duals: None,
            col_duals: None,
            time_s,
            incumbents: Vec::new(),
            backend: backend.to_string(),
        }
    }

    pub fn first_feasible_s(&self) -> Option<f64> {
        self.incumbents.first().map(|i| i.time_s)
    }

    pub fn value(&self, v: crate::model::VarId) -> f64 {
        self.primal[v.0]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("backend does not support {0}")]
    Unsupported(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("warm start has length {got}, model has {want} variables")]
    BadStart { got: usize, want: usize },
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, model: &Model, cfg: &SolverConfig, start: Option<&[f64]>) -> Result<SolveResult, SolveError>;
}

/// Selects a backend by name; `TEPJCC_BACKEND` overrides the default.
pub fn backend_from_env() -> Box<dyn Backend> {
    match std::env::var("TEPJCC_BACKEND").ok().as_deref() {
        Some("microlp") => Box::new(MicroLpBackend),
        _ => Box::new(HighsBackend),
    }
}

pub fn backend_by_name(name: &str) -> Option<Box<dyn Backend>> {
    match name {
        "highs" => Some(Box::new(HighsBackend)),
        "microlp" => Some(Box::new(MicroLpBackend)),
        _ => None,
    }
}

/// Solves and re-checks the returned point against `model`.
pub fn solve_certified(
    backend: &dyn Backend,
    model: &Model,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<SolveResult, SolveError> {
    if let Some(s) = start {
        if s.len() != model.vars.len() {
            return Err(SolveError::BadStart { got: s.len(), want: model.vars.len() });
        }
    }
    let mut res = backend.solve(model, cfg, start)?;
    if res.status.has_solution() {
        let viol = model.check_point(&res.primal, cfg.certify_tol);
        if !viol.is_empty() {
            res.message = format!(
                "returned point failed certification ({} violations, first: {})",
                viol.len(),
                viol[0]
            );
            res.status = SolveStatus::Error;
        } else {
            let obj = model.objective_value(&res.primal);
            res.objective = Some(obj);
        }
    }
    Ok(res)
}

/// Fixes every integer variable at its rounded value in `primal` and re-solves the
/// remaining LP, which yields duals for the fixed-binary problem.
pub fn fix_binaries_and_resolve(
    backend: &dyn Backend,
    model: &Model,
    primal: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    let mut lp = model.clone();
    for (j, v) in lp.vars.iter_mut().enumerate() {
        if v.kind != VarKind::Continuous {
            let r = primal[j].round();
            v.kind = VarKind::Continuous;
            v.lower = r;
            v.upper = r;
        }
    }
    let res = solve_certified(backend, &lp, cfg, None)?;
    if res.status == SolveStatus::Optimal && res.row_duals.is_none() {
        return Err(SolveError::Unsupported("dual values".into()));
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, ObjSense, RowSense};

    fn small_lp(sense: ObjSense) -> Model {
        // max/min x + 2y s.t. x + y <= 4, x - y >= -2, x, y in [0, 10]
        let mut m = Model::new("lp", sense);
        let x = m.continuous("x", 0.0, 10.0);
        let y = m.continuous("y", 0.0, 10.0);
        let mut e = LinExpr::new();
        e.add_term(x, 1.0).add_term(y, 1.0);
        m.add_row("cap", &e, RowSense::Le, 4.0, "test");
        let mut f = LinExpr::new();
        f.add_term(x, 1.0).add_term(y, -1.0);
        m.add_row("diff", &f, RowSense::Ge, -2.0, "test");
        let mut o = LinExpr::new();
        o.add_term(x, 1.0).add_term(y, 2.0);
        m.set_objective(&o);
        m
    }

    fn small_mip() -> Model {
        // knapsack: max 5a + 4b + 3c s.t. 2a + 3b + c <= 4
        let mut m = Model::new("mip", ObjSense::Maximize);
        let a = m.binary("a");
        let b = m.binary("b");
        let c = m.binary("c");
        let mut e = LinExpr::new();
        e.add_term(a, 2.0).add_term(b, 3.0).add_term(c, 1.0);
        m.add_row("w", &e, RowSense::Le, 4.0, "test");
        let mut o = LinExpr::new();
        o.add_term(a, 5.0).add_term(b, 4.0).add_term(c, 3.0);
        m.set_objective(&o);
        m
    }

    fn backends() -> Vec<Box<dyn Backend>> {
        vec![Box::new(HighsBackend), Box::new(MicroLpBackend)]
    }

    #[test]
    fn lp_optimum_and_dual_convention() {
        for b in backends() {
            let m = small_lp(ObjSense::Maximize);
            let r = solve_certified(b.as_ref(), &m, &SolverConfig::default(), None).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal, "{}", b.name());
            // optimum x=1, y=3, objective 7
            assert!((r.objective.unwrap() - 7.0).abs() < 1e-7, "{}", b.name());
            if let Some(d) = &r.row_duals {
                // d obj / d rhs: cap row 1.5, diff row -0.5
                assert!((d[0] - 1.5).abs() < 1e-7, "{} {:?}", b.name(), d);
                assert!((d[1] + 0.5).abs() < 1e-7, "{} {:?}", b.name(), d);
            }
        }
    }

    #[test]
    fn min_sense_duals() {
        let m = small_lp(ObjSense::Minimize);
        let r = solve_certified(&HighsBackend, &m, &SolverConfig::default(), None).unwrap();
        assert!((r.objective.unwrap()).abs() < 1e-9);
        let d = r.row_duals.unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn mip_agrees_across_backends() {
        for b in backends() {
            let r = solve_certified(b.as_ref(), &small_mip(), &SolverConfig::default(), None).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective.unwrap() - 8.0).abs() < 1e-9, "{}", b.name());
        }
    }

    #[test]
    fn infeasible_detected() {
        for b in backends() {
            let mut m = Model::new("inf", ObjSense::Minimize);
            let x = m.continuous("x", 0.0, 1.0);
            m.add_row("r", &LinExpr::var(x), RowSense::Ge, 2.0, "test");
            let r = solve_certified(b.as_ref(), &m, &SolverConfig::default(), None).unwrap();
            assert_eq!(r.status, SolveStatus::Infeasible, "{}", b.name());
        }
    }

    #[test]
    fn fixed_binary_resolve_gives_duals() {
        let m = small_mip();
        let r = solve_certified(&HighsBackend, &m, &SolverConfig::default(), None).unwrap();
        let lp = fix_binaries_and_resolve(&HighsBackend, &m, &r.primal, &SolverConfig::default()).unwrap();
        assert_eq!(lp.status, SolveStatus::Optimal);
        assert!((lp.objective.unwrap() - 8.0).abs() < 1e-9);
        assert_eq!(lp.row_duals.unwrap().len(), 1);
    }

    #[test]
    fn incumbent_log_is_recorded() {
        let r = solve_certified(&HighsBackend, &small_mip(), &SolverConfig::default(), None).unwrap();
        assert!(!r.incumbents.is_empty());
        let last = r.incumbents.last().unwrap();
        assert!((last.objective - 8.0).abs() < 1e-9);
    }

    #[test]
    fn bad_start_rejected() {
        let err = solve_certified(&HighsBackend, &small_mip(), &SolverConfig::default(), Some(&[1.0])).unwrap_err();
        assert!(matches!(err, SolveError::BadStart { .. }));
    }
}
