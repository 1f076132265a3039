//! Wasserstein distributionally robust joint chance constraints.
//!
//! A safety set is a collection of affine rows `b_p . xi + d_p - a_p . x >= 0`
//! over an uncertain vector `xi`. Given `N` samples, a risk level `eps` and a
//! radius `theta`, the emitters in this module append one of several
//! reformulations of the joint chance constraint to a [`Model`]:
//!
//! * [`emit_exact`]: the mixed-integer reformulation, optionally with the
//!   quantile strengthening rows.
//! * [`emit_la`]: the linear inner approximation with per-sample scaling `kappa`.
//! * [`emit_sla`]: the same rows plus one quantile row per safety row.
//! * [`emit_sfla`]: sample rows only where the sample is below the quantile.
//! * [`emit_wcvar`]: the worst-case CVaR approximation with row weights.
//!
//! Rows are appended in a stable order: the budget row, then sample rows
//! i-major/p-minor, then quantile rows.

use crate::model::{LinExpr, Model, RowId, RowSense, VarId};
use crate::uncertainty::risk_count;
use serde::{Deserialize, Serialize};

pub const TAG_BUDGET: &str = "jcc.budget";
pub const TAG_SAMPLE: &str = "jcc.sample";
pub const TAG_QUANTILE: &str = "jcc.quantile";
pub const TAG_EXACT_SWITCH: &str = "jcc.exact_switch";
pub const TAG_WCVAR_BUDGET: &str = "wcvar.budget";
pub const TAG_WCVAR_SAMPLE: &str = "wcvar.sample";
pub const TAG_WCVAR_NORM: &str = "wcvar.norm";

#[derive(Debug, thiserror::Error)]
pub enum JccError {
    #[error("instance is malformed: {0}")]
    Malformed(String),
    #[error("safety row {0} has a zero uncertainty coefficient vector")]
    ZeroRow(usize),
    #[error("weights must be positive and sum to one")]
    BadWeights,
    #[error("kappa entries must lie in [0, 1] and match the sample count")]
    BadKappa,
}

/// Norm used for the transport cost; rows are normalised by its dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Norm {
    L1,
    #[default]
    L2,
    LInf,
}

impl Norm {
    pub fn dual(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().map(|x| x.abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyRow {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JccInstance {
    pub rows: Vec<SafetyRow>,
    pub samples: Vec<Vec<f64>>,
    pub eps: f64,
    pub theta: f64,
    #[serde(default)]
    pub norm: Norm,
}

impl JccInstance {
    pub fn validate(&self) -> Result<(), JccError> {
        if self.rows.is_empty() || self.samples.is_empty() {
            return Err(JccError::Malformed("need at least one row and one sample".into()));
        }
        let n = self.rows[0].a.len();
        let k = self.rows[0].b.len();
        for (p, r) in self.rows.iter().enumerate() {
            if r.a.len() != n || r.b.len() != k {
                return Err(JccError::Malformed(format!("row {p} has inconsistent dimensions")));
            }
            if self.norm.dual(&r.b) == 0.0 {
                return Err(JccError::ZeroRow(p));
            }
        }
        if self.samples.iter().any(|s| s.len() != k) {
            return Err(JccError::Malformed("sample dimension does not match rows".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) || !(self.theta > 0.0) {
            return Err(JccError::Malformed("eps must lie in (0,1) and theta must be positive".into()));
        }
        if risk_count(self.eps, self.samples.len()) >= self.samples.len() {
            return Err(JccError::Malformed("eps * N must be below N".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn p(&self) -> usize {
        self.rows.len()
    }

    pub fn dim_x(&self) -> usize {
        self.rows[0].a.len()
    }

    pub fn k(&self) -> usize {
        risk_count(self.eps, self.n())
    }

    pub fn norm_b(&self, p: usize) -> f64 {
        self.norm.dual(&self.rows[p].b)
    }

    pub fn b_dot(&self, p: usize, i: usize) -> f64 {
        self.rows[p].b.iter().zip(&self.samples[i]).map(|(a, b)| a * b).sum()
    }

    /// Row value `b_p . xi_i + d_p - a_p . x`.
    pub fn slack(&self, p: usize, i: usize, x: &[f64]) -> f64 {
        let r = &self.rows[p];
        self.b_dot(p, i) + r.d - r.a.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Distance from sample `i` to the unsafe set.
    pub fn distance(&self, i: usize, x: &[f64]) -> f64 {
        (0..self.p()).map(|p| self.slack(p, i, x) / self.norm_b(p)).fold(f64::INFINITY, f64::min).max(0.0)
    }

    /// `q_p`: the `(floor(eps N) + 1)`-th smallest of `b_p . xi_i`.
    pub fn q(&self, p: usize) -> f64 {
        let mut v: Vec<f64> = (0..self.n()).map(|i| self.b_dot(p, i)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[self.k()]
    }

    /// Samples that keep their row for safety row `p` in the sample-filtered scheme.
    pub fn filtered_samples(&self, p: usize) -> Vec<usize> {
        let q = self.q(p);
        (0..self.n()).filter(|&i| self.b_dot(p, i) < q).collect()
    }

    /// Direct membership test for the exact feasible set. The inner problem
    /// `max_s eps N s - sum_i (s - dist_i)^+` is concave and piecewise linear,
    /// so checking the breakpoints suffices.
    pub fn exact_membership_margin(&self, x: &[f64]) -> f64 {
        let dist: Vec<f64> = (0..self.n()).map(|i| self.distance(i, x)).collect();
        let en = self.eps * self.n() as f64;
        let value = |s: f64| en * s - dist.iter().map(|d| (s - d).max(0.0)).sum::<f64>();
        let best = dist.iter().copied().chain(std::iter::once(0.0)).map(value).fold(f64::NEG_INFINITY, f64::max);
        best - self.theta * self.n() as f64
    }

    /// Optimal W-CVaR weights, proportional to the inverse row norms.
    pub fn optimal_weights(&self) -> Vec<f64> {
        let inv: Vec<f64> = (0..self.p()).map(|p| 1.0 / self.norm_b(p)).collect();
        let s: f64 = inv.iter().sum();
        inv.iter().map(|v| v / s).collect()
    }
}

/// Fraction of `test` samples for which every safety row holds at `x`.
pub fn oos_probability(inst: &JccInstance, x: &[f64], test: &[Vec<f64>]) -> f64 {
    if test.is_empty() {
        return 1.0;
    }
    let probe = JccInstance { samples: test.to_vec(), ..inst.clone() };
    let ok = (0..test.len()).filter(|&i| (0..probe.p()).all(|p| probe.slack(p, i, x) >= -1e-9)).count();
    ok as f64 / test.len() as f64
}

#[derive(Debug, Clone)]
pub struct JccBlock {
    pub s: VarId,
    pub r: Vec<VarId>,
    pub z: Vec<VarId>,
    pub rows: Vec<RowId>,
    pub sample_rows: usize,
    pub quantile_rows: usize,
}

#[derive(Debug, Clone)]
pub struct WcvarBlock {
    pub tau: VarId,
    pub beta: VarId,
    pub alpha: Vec<VarId>,
    pub rows: Vec<RowId>,
}

fn ax_expr(row: &SafetyRow, x: &[VarId], scale: f64) -> LinExpr {
    let mut e = LinExpr::new();
    for (j, &a) in row.a.iter().enumerate() {
        e.add_term(x[j], a * scale);
    }
    e
}

fn add_s_r(m: &mut Model, inst: &JccInstance, prefix: &str) -> (VarId, Vec<VarId>) {
    let s = m.continuous(format!("{prefix}.s"), 0.0, f64::INFINITY);
    let r = (0..inst.n()).map(|i| m.continuous(format!("{prefix}.r[{i}]"), 0.0, f64::INFINITY)).collect();
    (s, r)
}

fn budget_row(m: &mut Model, inst: &JccInstance, s: VarId, r: &[VarId], prefix: &str) -> RowId {
    let n = inst.n() as f64;
    let mut e = LinExpr::term(s, inst.eps * n);
    for &ri in r {
        e.add_term(ri, -1.0);
    }
    m.add_row(format!("{prefix}.budget"), &e, RowSense::Ge, inst.theta * n, TAG_BUDGET)
}

/// `(q_p + d_p - a_p . x) / |b_p| >= s`
fn quantile_rows(m: &mut Model, inst: &JccInstance, x: &[VarId], s: VarId, prefix: &str) -> Vec<RowId> {
    (0..inst.p())
        .map(|p| {
            let nb = inst.norm_b(p);
            let mut e = ax_expr(&inst.rows[p], x, 1.0 / nb);
            e.add_term(s, 1.0);
            m.add_row(format!("{prefix}.q[{p}]"), &e, RowSense::Le, (inst.q(p) + inst.rows[p].d) / nb, TAG_QUANTILE)
        })
        .collect()
}

/// `kappa_i (b_p . xi_i + d_p - a_p . x)/|b_p| >= s - r_i`
fn sample_row(m: &mut Model, inst: &JccInstance, x: &[VarId], s: VarId, r: VarId, kappa: f64, i: usize, p: usize, prefix: &str) -> RowId {
    let nb = inst.norm_b(p);
    let mut e = ax_expr(&inst.rows[p], x, kappa / nb);
    e.add_term(s, 1.0).add_term(r, -1.0);
    let rhs = kappa * (inst.b_dot(p, i) + inst.rows[p].d) / nb;
    m.add_row(format!("{prefix}.f[{i},{p}]"), &e, RowSense::Le, rhs, TAG_SAMPLE)
}

fn check_kappa(inst: &JccInstance, kappa: &[f64]) -> Result<(), JccError> {
    if kappa.len() != inst.n() || kappa.iter().any(|k| !(0.0..=1.0).contains(k)) {
        return Err(JccError::BadKappa);
    }
    Ok(())
}

pub fn emit_la(m: &mut Model, inst: &JccInstance, x: &[VarId], kappa: &[f64], prefix: &str) -> Result<JccBlock, JccError> {
    inst.validate()?;
    check_kappa(inst, kappa)?;
    let (s, r) = add_s_r(m, inst, prefix);
    let mut rows = vec![budget_row(m, inst, s, &r, prefix)];
    for i in 0..inst.n() {
        for p in 0..inst.p() {
            rows.push(sample_row(m, inst, x, s, r[i], kappa[i], i, p, prefix));
        }
    }
    let sample_rows = inst.n() * inst.p();
    Ok(JccBlock { s, r, z: Vec::new(), rows, sample_rows, quantile_rows: 0 })
}

pub fn emit_sla(m: &mut Model, inst: &JccInstance, x: &[VarId], kappa: &[f64], prefix: &str) -> Result<JccBlock, JccError> {
    let mut b = emit_la(m, inst, x, kappa, prefix)?;
    let q = quantile_rows(m, inst, x, b.s, prefix);
    b.quantile_rows = q.len();
    b.rows.extend(q);
    Ok(b)
}

pub fn emit_sfla(m: &mut Model, inst: &JccInstance, x: &[VarId], kappa: &[f64], prefix: &str) -> Result<JccBlock, JccError> {
    inst.validate()?;
    check_kappa(inst, kappa)?;
    let (s, r) = add_s_r(m, inst, prefix);
    let mut rows = vec![budget_row(m, inst, s, &r, prefix)];
    let keep: Vec<Vec<usize>> = (0..inst.p()).map(|p| inst.filtered_samples(p)).collect();
    let mut sample_rows = 0;
    for i in 0..inst.n() {
        for p in 0..inst.p() {
            if keep[p].contains(&i) {
                rows.push(sample_row(m, inst, x, s, r[i], kappa[i], i, p, prefix));
                sample_rows += 1;
            }
        }
    }
    let q = quantile_rows(m, inst, x, s, prefix);
    let quantile_rows = q.len();
    rows.extend(q);
    Ok(JccBlock { s, r, z: Vec::new(), rows, sample_rows, quantile_rows })
}

/// Mixed-integer reformulation with switch binaries `z_i`. `big_m` must bound
/// `|s - r_i|` and every normalised row value at the points of interest.
pub fn emit_exact(
    m: &mut Model,
    inst: &JccInstance,
    x: &[VarId],
    big_m: f64,
    strengthened: bool,
    prefix: &str,
) -> Result<JccBlock, JccError> {
    inst.validate()?;
    let (s, r) = add_s_r(m, inst, prefix);
    let z: Vec<VarId> = (0..inst.n()).map(|i| m.binary(format!("{prefix}.z[{i}]"))).collect();
    let mut rows = vec![budget_row(m, inst, s, &r, prefix)];
    for i in 0..inst.n() {
        for p in 0..inst.p() {
            // f_ip + M z_i >= s - r_i
            let nb = inst.norm_b(p);
            let mut e = ax_expr(&inst.rows[p], x, 1.0 / nb);
            e.add_term(s, 1.0).add_term(r[i], -1.0).add_term(z[i], -big_m);
            let rhs = (inst.b_dot(p, i) + inst.rows[p].d) / nb;
            rows.push(m.add_row(format!("{prefix}.f[{i},{p}]"), &e, RowSense::Le, rhs, TAG_SAMPLE));
        }
        // M (1 - z_i) >= s - r_i
        let mut e = LinExpr::term(s, 1.0);
        e.add_term(r[i], -1.0).add_term(z[i], big_m);
        rows.push(m.add_row(format!("{prefix}.sw[{i}]"), &e, RowSense::Le, big_m, TAG_EXACT_SWITCH));
    }
    let mut quantile_count = 0;
    if strengthened {
        let q = quantile_rows(m, inst, x, s, prefix);
        quantile_count = q.len();
        rows.extend(q);
    }
    Ok(JccBlock { s, r, z, rows, sample_rows: inst.n() * inst.p(), quantile_rows: quantile_count })
}

pub fn emit_wcvar(m: &mut Model, inst: &JccInstance, x: &[VarId], weights: &[f64], prefix: &str) -> Result<WcvarBlock, JccError> {
    inst.validate()?;
    if weights.len() != inst.p() || weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(JccError::BadWeights);
    }
    let n = inst.n();
    let tau = m.continuous(format!("{prefix}.tau"), f64::NEG_INFINITY, f64::INFINITY);
    let beta = m.continuous(format!("{prefix}.beta"), f64::NEG_INFINITY, f64::INFINITY);
    let alpha: Vec<VarId> = (0..n).map(|i| m.continuous(format!("{prefix}.alpha[{i}]"), 0.0, f64::INFINITY)).collect();
    let mut rows = Vec::new();
    // tau + (theta beta + sum alpha / N) / eps <= 0
    let mut e = LinExpr::term(tau, 1.0);
    e.add_term(beta, inst.theta / inst.eps);
    for &a in &alpha {
        e.add_term(a, 1.0 / (n as f64 * inst.eps));
    }
    rows.push(m.add_row(format!("{prefix}.budget"), &e, RowSense::Le, 0.0, TAG_WCVAR_BUDGET));
    for i in 0..n {
        for p in 0..inst.p() {
            // alpha_i + tau - w_p a_p x >= -w_p (b_p xi_i + d_p)
            let w = weights[p];
            let mut e = ax_expr(&inst.rows[p], x, -w);
            e.add_term(alpha[i], 1.0).add_term(tau, 1.0);
            let rhs = -w * (inst.b_dot(p, i) + inst.rows[p].d);
            rows.push(m.add_row(format!("{prefix}.a[{i},{p}]"), &e, RowSense::Ge, rhs, TAG_WCVAR_SAMPLE));
        }
    }
    for p in 0..inst.p() {
        let e = LinExpr::var(beta);
        rows.push(m.add_row(format!("{prefix}.b[{p}]"), &e, RowSense::Ge, weights[p] * inst.norm_b(p), TAG_WCVAR_NORM));
    }
    Ok(WcvarBlock { tau, beta, alpha, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum JccScheme {
    Exact { big_m: f64, strengthened: bool },
    La { kappa: Vec<f64> },
    Sla { kappa: Vec<f64> },
    Sfla { kappa: Vec<f64> },
    Wcvar { weights: Vec<f64> },
}

/// A linear objective over a box together with one chance-constrained block;
/// the serialized form is used for regression fixtures and the C interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JccProblem {
    pub instance: JccInstance,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl JccProblem {
    pub fn from_json(text: &str) -> Result<JccProblem, JccError> {
        serde_json::from_str(text).map_err(|e| JccError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    /// Builds `min cost . x` subject to the box and the chosen block.
    pub fn build(&self, scheme: &JccScheme) -> Result<(Model, Vec<VarId>), JccError> {
        let n = self.instance.dim_x();
        if self.cost.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(JccError::Malformed("cost and bounds must match the decision dimension".into()));
        }
        let mut m = Model::new("jcc", crate::model::ObjSense::Minimize);
        let x: Vec<VarId> = (0..n).map(|j| m.continuous(format!("x[{j}]"), self.lower[j], self.upper[j])).collect();
        let mut obj = LinExpr::new();
        for (j, &c) in self.cost.iter().enumerate() {
            obj.add_term(x[j], c);
        }
        m.set_objective(&obj);
        match scheme {
            JccScheme::Exact { big_m, strengthened } => {
                emit_exact(&mut m, &self.instance, &x, *big_m, *strengthened, "exact")?;
            }
            JccScheme::La { kappa } => {
                emit_la(&mut m, &self.instance, &x, kappa, "la")?;
            }
            JccScheme::Sla { kappa } => {
                emit_sla(&mut m, &self.instance, &x, kappa, "sla")?;
            }
            JccScheme::Sfla { kappa } => {
                emit_sfla(&mut m, &self.instance, &x, kappa, "sfla")?;
            }
            JccScheme::Wcvar { weights } => {
                emit_wcvar(&mut m, &self.instance, &x, weights, "wcvar")?;
            }
        }
        Ok((m, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_certified, HighsBackend, SolveStatus, SolverConfig};

    /// One decision, two samples, safety set `xi <= x`.
    fn tiny() -> JccProblem {
        JccProblem {
            instance: JccInstance {
                rows: vec![SafetyRow { a: vec![-1.0], b: vec![-1.0], d: 0.0 }],
                samples: vec![vec![0.0], vec![1.0]],
                eps: 0.5,
                theta: 0.1,
                norm: Norm::L2,
            },
            cost: vec![1.0],
            lower: vec![-10.0],
            upper: vec![10.0],
        }
    }

    fn solve(p: &JccProblem, s: &JccScheme) -> (SolveStatus, Option<f64>) {
        let (m, _) = p.build(s).unwrap();
        let r = solve_certified(&HighsBackend, &m, &SolverConfig::default(), None).unwrap();
        (r.status, r.objective)
    }

    #[test]
    fn tiny_instance_minimum() {
        let p = tiny();
        for s in [
            JccScheme::Exact { big_m: 100.0, strengthened: false },
            JccScheme::Exact { big_m: 100.0, strengthened: true },
            JccScheme::Sla { kappa: vec![1.0, 1.0] },
            JccScheme::La { kappa: vec![1.0, 1.0] },
            JccScheme::Sfla { kappa: vec![1.0, 1.0] },
            JccScheme::Wcvar { weights: vec![1.0] },
        ] {
            let (st, obj) = solve(&p, &s);
            assert_eq!(st, SolveStatus::Optimal, "{s:?}");
            assert!((obj.unwrap() - 1.2).abs() < 1e-7, "{s:?} gave {obj:?}");
        }
    }

    #[test]
    fn zero_kappa_is_infeasible() {
        let (st, _) = solve(&tiny(), &JccScheme::Sla { kappa: vec![0.0, 0.0] });
        assert_eq!(st, SolveStatus::Infeasible);
    }

    #[test]
    fn distance_and_membership() {
        let inst = tiny().instance;
        assert_eq!(inst.distance(0, &[1.2]), 1.2);
        assert!((inst.distance(1, &[1.2]) - 0.2).abs() < 1e-12);
        assert_eq!(inst.distance(1, &[0.5]), 0.0);
        assert!(inst.exact_membership_margin(&[1.2]).abs() < 1e-12);
        assert!(inst.exact_membership_margin(&[1.19]) < 0.0);
        assert_eq!(inst.q(0), 0.0);
        assert_eq!(inst.filtered_samples(0), vec![1]);
    }

    #[test]
    fn row_counts() {
        let p = tiny();
        let mut m = Model::new("c", crate::model::ObjSense::Minimize);
        let x = vec![m.continuous("x", -1.0, 1.0)];
        let b = emit_sla(&mut m, &p.instance, &x, &[1.0, 1.0], "a").unwrap();
        assert_eq!(b.rows.len(), 1 + 2 + 1);
        let b = emit_la(&mut m, &p.instance, &x, &[1.0, 1.0], "b").unwrap();
        assert_eq!(b.rows.len(), 1 + 2);
        let b = emit_sfla(&mut m, &p.instance, &x, &[1.0, 1.0], "c").unwrap();
        assert_eq!(b.sample_rows, 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = tiny();
        let mut m = Model::new("c", crate::model::ObjSense::Minimize);
        let x = vec![m.continuous("x", -1.0, 1.0)];
        assert!(matches!(emit_sla(&mut m, &p.instance, &x, &[1.0], "a"), Err(JccError::BadKappa)));
        assert!(matches!(emit_wcvar(&mut m, &p.instance, &x, &[0.5], "a"), Err(JccError::BadWeights)));
        p.instance.rows[0].b = vec![0.0];
        assert!(matches!(p.instance.validate(), Err(JccError::ZeroRow(0))));
    }

    #[test]
    fn json_round_trip() {
        let p = tiny();
        assert_eq!(JccProblem::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn oos_counts_safe_samples() {
        let inst = tiny().instance;
        let test = vec![vec![0.5], vec![1.5], vec![1.0], vec![-3.0]];
        assert_eq!(oos_probability(&inst, &[1.0], &test), 0.75);
    }
}
