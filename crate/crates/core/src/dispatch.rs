//! Lower-level market clearing.
//!
//! For each planning year `t` and operating period `s` the market operator
//! maximises declared welfare subject to the power balance, participant
//! limits and a chance constraint on all line flows. The problem is described
//! once, symbolically, by [`LowerLevel`]: right-hand sides and bid
//! adjustments that depend on upper-level decisions are written as [`Sym`]
//! terms. Two consumers read that description:
//!
//! * [`solve_direct`] evaluates the symbols for a fixed investment plan and
//!   solves the resulting LP, returning prices from its duals;
//! * [`emit_kkt`] writes primal feasibility, dual feasibility, stationarity and
//!   linearised complementarity into a planning model in which the symbols are
//!   affine in upper-level variables.
//!
//! Flow terms are products of configuration binaries with nodal injections
//! (and, in stationarity, with aggregated line duals). They are linearised
//! either per line aggregate or per individual term, see [`Linearization`].

use crate::model::{LinExpr, Model, ObjSense, RowId, RowSense, VarId};
use crate::network::{grow_demand, Case, CaseError, Configuration, Network, ParticipantKind, Ptdf};
use crate::solver::{fix_binaries_and_resolve, solve_certified, Backend, SolveError, SolveStatus, SolverConfig};
use crate::uncertainty::{q_pair, risk_count, Coord, ErrorSampleSet};
use std::collections::HashMap;

pub const TAG_BALANCE: &str = "ll.balance";
pub const TAG_WIND: &str = "ll.wind_schedule";
pub const TAG_BOUND: &str = "ll.bound";
pub const TAG_AUX_BOUND: &str = "ll.aux_bound";
pub const TAG_JCC_BUDGET: &str = "ll.jcc.budget";
pub const TAG_JCC_SAMPLE: &str = "ll.jcc.sample";
pub const TAG_JCC_QUANTILE: &str = "ll.jcc.quantile";
pub const TAG_WCVAR_BUDGET: &str = "ll.wcvar.budget";
pub const TAG_WCVAR_SAMPLE: &str = "ll.wcvar.sample";
pub const TAG_WCVAR_NORM: &str = "ll.wcvar.norm";
pub const TAG_STATIONARITY: &str = "kkt.stationarity";
pub const TAG_COMP_PRIMAL: &str = "kkt.comp.primal";
pub const TAG_COMP_DUAL: &str = "kkt.comp.dual";
pub const TAG_LIN_INJECTION: &str = "lin.config_injection";
pub const TAG_LIN_DUAL: &str = "lin.config_dual";
pub const TAG_FLOW_DEF: &str = "ll.flow_definition";

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{0}")]
    Invalid(String),
}

/// Lower-level chance-constraint treatment.
#[derive(Debug, Clone, PartialEq)]
pub enum LowerScheme {
    Sla { kappa: Vec<f64> },
    La { kappa: Vec<f64> },
    /// Uniform row weights `1 / (2 |L|)`.
    Wcvar,
}

impl LowerScheme {
    pub fn name(&self) -> &'static str {
        match self {
            LowerScheme::Sla { .. } => "sla",
            LowerScheme::La { .. } => "la",
            LowerScheme::Wcvar => "wcvar",
        }
    }

    pub fn sla(n: usize) -> Self {
        LowerScheme::Sla { kappa: vec![1.0; n] }
    }

    pub fn la(n: usize) -> Self {
        LowerScheme::La { kappa: vec![1.0; n] }
    }
}

/// Quantities that depend on upper-level decisions, per `(t, s)` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sym {
    /// Rating of line `l`.
    Cap(usize),
    /// Aggregated forecast error of sample `i` on line `l`: `Xi(l, i)`.
    Xi(usize, usize),
    QMax(usize),
    QMin(usize),
    /// Large constant when line `l` has no circuit in service, else 0.
    Relax(usize),
    /// Effective volumetric tariff charged at bus `b`.
    Tariff(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub syms: Vec<(Sym, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine { constant: c, syms: Vec::new() }
    }

    pub fn with(mut self, s: Sym, c: f64) -> Self {
        self.syms.push((s, c));
        self
    }

    pub fn eval(&self, f: &impl Fn(Sym) -> f64) -> f64 {
        self.constant + self.syms.iter().map(|&(s, c)| c * f(s)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerVarKind {
    Gen(usize),
    Dem(usize),
    Sched(usize),
    Curt(usize),
    U,
    V(usize),
    Alpha(usize),
    Beta,
    Tau,
}

#[derive(Debug, Clone)]
pub struct LowerVar {
    pub kind: LowerVarKind,
    pub name: String,
    pub bus: Option<usize>,
    /// Sign of the variable in the nodal injection (generation positive).
    pub injection: f64,
    pub lower: f64,
    pub upper: f64,
    /// Coefficient in the welfare objective (maximised).
    pub objective: Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRole {
    Balance,
    WindSchedule(usize),
    Upper(usize),
    Lower(usize),
    AuxLower(usize),
    Budget,
    Sample { line: usize, sample: usize, up: bool },
    Quantile { line: usize, up: bool },
    WcvarBudget,
    WcvarSample { line: usize, sample: usize, up: bool },
    WcvarNorm { line: usize, up: bool },
}

#[derive(Debug, Clone)]
pub struct LowerRow {
    pub name: String,
    pub tag: &'static str,
    pub role: RowRole,
    /// `Le` or `Eq`; inequality rows read `lhs <= rhs`.
    pub sense: RowSense,
    pub terms: Vec<(usize, f64)>,
    /// Coefficients on line flows.
    pub flow: Vec<(usize, f64)>,
    pub rhs: Affine,
    /// Upper bound on the row slack at the points of interest.
    pub slack_bound: f64,
}

#[derive(Debug, Clone)]
pub struct LowerLevel {
    pub t: usize,
    pub s: usize,
    pub vars: Vec<LowerVar>,
    pub rows: Vec<LowerRow>,
}

impl LowerLevel {
    pub fn var_index(&self, kind: LowerVarKind) -> Option<usize> {
        self.vars.iter().position(|v| v.kind == kind)
    }

    pub fn count_role(&self, f: impl Fn(&RowRole) -> bool) -> usize {
        self.rows.iter().filter(|r| f(&r.role)).count()
    }
}

/// Aggregated line errors and quantiles per `(t, s, configuration)`.
#[derive(Debug, Clone)]
pub struct ScenarioTable {
    pub n: usize,
    /// Nodal forecast errors `[t][s][i][b]` in MW.
    pub bus_errors: Vec<Vec<Vec<Vec<f64>>>>,
    /// `xi[(t, s, c)][l][i]`
    pub xi: HashMap<(usize, usize, usize), Vec<Vec<f64>>>,
    /// `q[(t, s, c)][l] = (q_max, q_min)`
    pub q: HashMap<(usize, usize, usize), Vec<(f64, f64)>>,
}

impl ScenarioTable {
    pub fn build(
        net: &Network,
        case: &Case,
        configs: &[Configuration],
        ptdf: &[Ptdf],
        samples: &ErrorSampleSet,
        eps: f64,
    ) -> Result<ScenarioTable, DispatchError> {
        let farms: Vec<(usize, usize)> = wind_farms(case).iter().enumerate().map(|(f, p)| (f, p.bus)).collect();
        let (years, periods) = (case.horizon.years, case.horizon.operating_periods);
        let n = samples.len();
        let nb = net.num_buses();
        let mut bus_errors = vec![vec![vec![vec![0.0; nb]; n]; periods]; years];
        for t in 0..years {
            for s in 0..periods {
                for &(f, b) in &farms {
                    let k = samples
                        .coord_index(Coord { t, s, farm: f })
                        .ok_or_else(|| DispatchError::Invalid(format!("samples lack coordinate t={t} s={s} farm={f}")))?;
                    for i in 0..n {
                        bus_errors[t][s][i][b] += samples.values[i][k];
                    }
                }
            }
        }
        let mut xi = HashMap::new();
        let mut q = HashMap::new();
        for t in 0..years {
            for s in 0..periods {
                for c in configs.iter().filter(|c| c.valid) {
                    let p = &ptdf[c.id];
                    let table: Vec<Vec<f64>> = (0..net.num_lines())
                        .map(|l| (0..n).map(|i| (0..nb).map(|b| p.get(l, b) * bus_errors[t][s][i][b]).sum()).collect())
                        .collect();
                    let qs: Vec<(f64, f64)> = table.iter().map(|x| q_pair(x, eps)).collect();
                    xi.insert((t, s, c.id), table);
                    q.insert((t, s, c.id), qs);
                }
            }
        }
        Ok(ScenarioTable { n, bus_errors, xi, q })
    }
}

pub fn wind_farms(case: &Case) -> Vec<&crate::network::Participant> {
    case.participants.iter().filter(|p| p.kind == ParticipantKind::Wind).collect()
}

/// Everything needed to build lower-level problems for a case and sample set.
#[derive(Debug, Clone)]
pub struct PlanningContext {
    pub case: Case,
    pub net: Network,
    pub configs: Vec<Configuration>,
    pub ptdf: Vec<Ptdf>,
    pub scen: ScenarioTable,
    pub eps: f64,
    pub theta: f64,
    /// Bound used for line-row slacks and the `u`, `v` boxes.
    pub primal_m: Vec<f64>,
    /// Relaxation added to rows of lines without circuits.
    pub relax: f64,
    /// Bound on dual variables.
    pub dual_m: f64,
}

impl PlanningContext {
    pub fn new(case: &Case, samples: &ErrorSampleSet, eps: f64, theta: f64) -> Result<Self, DispatchError> {
        let net = Network::from_case(case)?;
        let buses: Vec<usize> = case.participants.iter().map(|p| p.bus).collect();
        let configs = net.enumerate_configurations(&buses);
        let ptdf = configs.iter().map(|c| net.compute_ptdf(c)).collect::<Result<Vec<_>, _>>()?;
        if risk_count(eps, samples.len()) >= samples.len() {
            return Err(DispatchError::Invalid("eps * N must be below N".into()));
        }
        let scen = ScenarioTable::build(&net, case, &configs, &ptdf, samples, eps)?;
        let max_factor = net.reconductor_factors.iter().cloned().fold(0.0, f64::max);
        let mut primal_m = Vec::new();
        for l in &net.lines {
            let max_circ = l.expansion.as_ref().map(|e| e.max_circuits).unwrap_or(0);
            let factor = if l.reconductorable() { max_factor } else { 0.0 };
            let cap = l.capacity(max_circ, factor);
            let mut ext: f64 = 0.0;
            for (_, table) in scen.xi.iter() {
                ext = ext.max(table[l.index].iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
            for (_, qs) in scen.q.iter() {
                ext = ext.max(qs[l.index].0.abs()).max(qs[l.index].1.abs());
            }
            primal_m.push(2.0 * (cap + ext));
        }
        let relax = primal_m.iter().cloned().fold(2.0 * theta / eps + 1.0, f64::max);
        Ok(PlanningContext {
            case: case.clone(),
            net,
            configs,
            ptdf,
            scen,
            eps,
            theta,
            primal_m,
            relax,
            dual_m: 1e4,
        })
    }

    pub fn years(&self) -> usize {
        self.case.horizon.years
    }

    pub fn periods(&self) -> usize {
        self.case.horizon.operating_periods
    }

    pub fn n(&self) -> usize {
        self.scen.n
    }

    pub fn valid_configs(&self) -> Vec<usize> {
        self.configs.iter().filter(|c| c.valid).map(|c| c.id).collect()
    }

    /// Line rating under configuration `c` with cumulative reconductoring factor.
    pub fn capacity(&self, l: usize, c: usize, factor: f64) -> f64 {
        self.net.lines[l].capacity(self.configs[c].circuits[l], factor)
    }

    pub fn line_out(&self, l: usize, c: usize) -> bool {
        self.net.lines[l].susceptance(self.configs[c].circuits[l]) == 0.0
    }

    pub fn forecast(&self, p: &crate::network::Participant, t: usize, s: usize) -> f64 {
        p.forecast_mw
            .as_ref()
            .and_then(|f| f.get(t).and_then(|r| r.get(s)))
            .copied()
            .unwrap_or(0.0)
    }

    /// Upper quantity limit of a participant in year `t` (0-based).
    pub fn qmax(&self, p: &crate::network::Participant, t: usize, s: usize) -> f64 {
        match p.kind {
            ParticipantKind::Generator => p.max_mw,
            ParticipantKind::Consumer => grow_demand(p.max_mw, self.case.horizon.demand_growth, t + 1),
            ParticipantKind::Wind => self.forecast(p, t, s),
        }
    }

    pub fn allocation(&self, l: usize, b: usize) -> f64 {
        match &self.case.tariff_policy.allocation {
            Some(a) => a.get(l).and_then(|r| r.get(b)).copied().unwrap_or(0.0),
            None => 1.0,
        }
    }

    /// Ranges of the nodal injection at each bus.
    pub fn injection_bounds(&self, t: usize, s: usize) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); self.net.num_buses()];
        for p in &self.case.participants {
            let hi = self.qmax(p, t, s);
            match p.kind {
                ParticipantKind::Generator | ParticipantKind::Wind => {
                    out[p.bus].0 += if p.kind == ParticipantKind::Wind { 0.0 } else { p.min_mw };
                    out[p.bus].1 += hi;
                }
                ParticipantKind::Consumer => {
                    out[p.bus].0 -= hi;
                    out[p.bus].1 -= p.min_mw;
                }
            }
        }
        out
    }

    /// Builds the lower-level description for block `(t, s)`.
    pub fn lower_level(&self, t: usize, s: usize, scheme: &LowerScheme) -> Result<LowerLevel, DispatchError> {
        let n = self.n();
        let mut vars: Vec<LowerVar> = Vec::new();
        let mut rows: Vec<LowerRow> = Vec::new();
        let mut balance = Vec::new();
        for p in &self.case.participants {
            let hi = self.qmax(p, t, s);
            let b = p.bus;
            match p.kind {
                ParticipantKind::Generator => {
                    vars.push(LowerVar {
                        kind: LowerVarKind::Gen(p.id),
                        name: format!("g[{}]", p.id),
                        bus: Some(b),
                        injection: 1.0,
                        lower: p.min_mw,
                        upper: hi,
                        objective: Affine::constant(-p.bid_gbp_per_mwh).with(Sym::Tariff(b), -1.0),
                    });
                    balance.push((vars.len() - 1, -1.0));
                }
                ParticipantKind::Consumer => {
                    vars.push(LowerVar {
                        kind: LowerVarKind::Dem(p.id),
                        name: format!("d[{}]", p.id),
                        bus: Some(b),
                        injection: -1.0,
                        lower: p.min_mw,
                        upper: hi,
                        objective: Affine::constant(p.bid_gbp_per_mwh).with(Sym::Tariff(b), -1.0),
                    });
                    balance.push((vars.len() - 1, 1.0));
                }
                ParticipantKind::Wind => {
                    vars.push(LowerVar {
                        kind: LowerVarKind::Sched(p.id),
                        name: format!("w[{}]", p.id),
                        bus: Some(b),
                        injection: 1.0,
                        lower: 0.0,
                        upper: hi,
                        objective: Affine::constant(0.0).with(Sym::Tariff(b), -1.0),
                    });
                    balance.push((vars.len() - 1, -1.0));
                    vars.push(LowerVar {
                        kind: LowerVarKind::Curt(p.id),
                        name: format!("cur[{}]", p.id),
                        bus: Some(b),
                        injection: 0.0,
                        lower: 0.0,
                        upper: hi,
                        objective: Affine::constant(-p.bid_gbp_per_mwh),
                    });
                }
            }
        }
        rows.push(LowerRow {
            name: "balance".into(),
            tag: TAG_BALANCE,
            role: RowRole::Balance,
            sense: RowSense::Eq,
            terms: balance,
            flow: vec![],
            rhs: Affine::constant(0.0),
            slack_bound: 0.0,
        });
        let nq = vars.len();
        for j in 0..nq {
            if let LowerVarKind::Sched(id) = vars[j].kind {
                let fore = vars[j].upper;
                rows.push(LowerRow {
                    name: format!("wind[{id}]"),
                    tag: TAG_WIND,
                    role: RowRole::WindSchedule(id),
                    sense: RowSense::Eq,
                    terms: vec![(j, 1.0), (j + 1, 1.0)],
                    flow: vec![],
                    rhs: Affine::constant(fore),
                    slack_bound: 0.0,
                });
            }
        }
        for j in 0..nq {
            if matches!(vars[j].kind, LowerVarKind::Sched(_)) {
                continue;
            }
            let (lo, hi) = (vars[j].lower, vars[j].upper);
            let name = vars[j].name.clone();
            rows.push(LowerRow {
                name: format!("{name}.max"),
                tag: TAG_BOUND,
                role: RowRole::Upper(j),
                sense: RowSense::Le,
                terms: vec![(j, 1.0)],
                flow: vec![],
                rhs: Affine::constant(hi),
                slack_bound: hi - lo,
            });
            rows.push(LowerRow {
                name: format!("{name}.min"),
                tag: TAG_BOUND,
                role: RowRole::Lower(j),
                sense: RowSense::Le,
                terms: vec![(j, -1.0)],
                flow: vec![],
                rhs: Affine::constant(-lo),
                slack_bound: hi - lo,
            });
        }

        let nl = self.net.num_lines();
        let m_line = |l: usize| self.primal_m[l] + if self.net.lines[l].existing_circuits == 0 { self.relax } else { 0.0 };
        let m_max = (0..nl).map(m_line).fold(0.0, f64::max);
        let cap_rhs = |l: usize| {
            let mut a = Affine::constant(0.0).with(Sym::Cap(l), 1.0);
            if self.net.lines[l].existing_circuits == 0 {
                a = a.with(Sym::Relax(l), 1.0);
            }
            a
        };
        let scale_aff = |a: &Affine, k: f64| Affine { constant: a.constant * k, syms: a.syms.iter().map(|&(s, c)| (s, c * k)).collect() };
        match scheme {
            LowerScheme::Sla { kappa } | LowerScheme::La { kappa } => {
                if kappa.len() != n || kappa.iter().any(|k| !(0.0..=1.0).contains(k)) {
                    return Err(DispatchError::Invalid("kappa must have one entry in [0,1] per sample".into()));
                }
                let u_max = self.relax;
                let v_max = m_max + u_max;
                vars.push(aux_var(LowerVarKind::U, "u".into(), 0.0, u_max));
                let u = vars.len() - 1;
                let v0 = vars.len();
                for i in 0..n {
                    vars.push(aux_var(LowerVarKind::V(i), format!("v[{i}]"), 0.0, v_max));
                }
                rows.push(aux_lower(u, "u.min", u_max));
                for i in 0..n {
                    rows.push(aux_lower(v0 + i, &format!("v[{i}].min"), v_max));
                }
                let en = self.eps * n as f64;
                let mut terms = vec![(u, -en)];
                terms.extend((0..n).map(|i| (v0 + i, 1.0)));
                rows.push(LowerRow {
                    name: "jcc.budget".into(),
                    tag: TAG_JCC_BUDGET,
                    role: RowRole::Budget,
                    sense: RowSense::Le,
                    terms,
                    flow: vec![],
                    rhs: Affine::constant(-self.theta * n as f64),
                    slack_bound: en * u_max,
                });
                for i in 0..n {
                    let k = kappa[i];
                    for l in 0..nl {
                        for up in [true, false] {
                            let sign = if up { 1.0 } else { -1.0 };
                            let rhs = scale_aff(&cap_rhs(l), k).with(Sym::Xi(l, i), -sign * k);
                            rows.push(LowerRow {
                                name: format!("jcc.f[{i},{l},{}]", if up { '+' } else { '-' }),
                                tag: TAG_JCC_SAMPLE,
                                role: RowRole::Sample { line: l, sample: i, up },
                                sense: RowSense::Le,
                                terms: vec![(u, 1.0), (v0 + i, -1.0)],
                                flow: if k != 0.0 { vec![(l, sign * k)] } else { vec![] },
                                rhs,
                                slack_bound: m_line(l) + v_max,
                            });
                        }
                    }
                }
                if matches!(scheme, LowerScheme::Sla { .. }) {
                    for l in 0..nl {
                        for up in [true, false] {
                            let sign = if up { 1.0 } else { -1.0 };
                            let q = if up { Sym::QMax(l) } else { Sym::QMin(l) };
                            rows.push(LowerRow {
                                name: format!("jcc.q[{l},{}]", if up { '+' } else { '-' }),
                                tag: TAG_JCC_QUANTILE,
                                role: RowRole::Quantile { line: l, up },
                                sense: RowSense::Le,
                                terms: vec![(u, 1.0)],
                                flow: vec![(l, sign)],
                                rhs: cap_rhs(l).with(q, 1.0),
                                slack_bound: m_line(l),
                            });
                        }
                    }
                }
            }
            LowerScheme::Wcvar => {
                let w = 1.0 / (2.0 * nl as f64);
                let big = m_max;
                vars.push(aux_var(LowerVarKind::Tau, "tau".into(), -2.0 * big, 2.0 * big));
                let tau = vars.len() - 1;
                vars.push(aux_var(LowerVarKind::Beta, "beta".into(), 0.0, 1.0 + w));
                let beta = vars.len() - 1;
                let a0 = vars.len();
                for i in 0..n {
                    vars.push(aux_var(LowerVarKind::Alpha(i), format!("alpha[{i}]"), 0.0, 2.0 * big));
                }
                for i in 0..n {
                    rows.push(aux_lower(a0 + i, &format!("alpha[{i}].min"), 2.0 * big));
                }
                let mut terms = vec![(tau, 1.0), (beta, self.theta / self.eps)];
                terms.extend((0..n).map(|i| (a0 + i, 1.0 / (n as f64 * self.eps))));
                rows.push(LowerRow {
                    name: "wcvar.budget".into(),
                    tag: TAG_WCVAR_BUDGET,
                    role: RowRole::WcvarBudget,
                    sense: RowSense::Le,
                    terms,
                    flow: vec![],
                    rhs: Affine::constant(0.0),
                    slack_bound: 4.0 * big / self.eps,
                });
                for i in 0..n {
                    for l in 0..nl {
                        for up in [true, false] {
                            let sign = if up { 1.0 } else { -1.0 };
                            let rhs = scale_aff(&cap_rhs(l), w).with(Sym::Xi(l, i), -sign * w);
                            rows.push(LowerRow {
                                name: format!("wcvar.a[{i},{l},{}]", if up { '+' } else { '-' }),
                                tag: TAG_WCVAR_SAMPLE,
                                role: RowRole::WcvarSample { line: l, sample: i, up },
                                sense: RowSense::Le,
                                terms: vec![(tau, -1.0), (a0 + i, -1.0)],
                                flow: vec![(l, sign * w)],
                                rhs,
                                slack_bound: w * m_line(l) + 4.0 * big,
                            });
                        }
                    }
                }
                for l in 0..nl {
                    for up in [true, false] {
                        rows.push(LowerRow {
                            name: format!("wcvar.b[{l},{}]", if up { '+' } else { '-' }),
                            tag: TAG_WCVAR_NORM,
                            role: RowRole::WcvarNorm { line: l, up },
                            sense: RowSense::Le,
                            terms: vec![(beta, -1.0)],
                            flow: vec![],
                            rhs: Affine::constant(-w),
                            slack_bound: 1.0,
                        });
                    }
                }
            }
        }
        Ok(LowerLevel { t, s, vars, rows })
    }
}

fn aux_var(kind: LowerVarKind, name: String, lower: f64, upper: f64) -> LowerVar {
    LowerVar { kind, name, bus: None, injection: 0.0, lower, upper, objective: Affine::constant(0.0) }
}

fn aux_lower(j: usize, name: &str, bound: f64) -> LowerRow {
    LowerRow {
        name: name.to_string(),
        tag: TAG_AUX_BOUND,
        role: RowRole::AuxLower(j),
        sense: RowSense::Le,
        terms: vec![(j, -1.0)],
        flow: vec![],
        rhs: Affine::constant(0.0),
        slack_bound: bound,
    }
}

/// Investment and tariff decisions held fixed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InvestmentPlan {
    /// Configuration id per year.
    pub config: Vec<usize>,
    /// `(year, line, factor index)` reconductoring actions.
    pub reconductor: Vec<(usize, usize, usize)>,
    /// Volumetric tariff per line (GBP/MWh); applies once the line is upgraded.
    pub tariff_v: Vec<f64>,
    /// Capacity tariff (GBP/MW per hour of capacity).
    pub tariff_c: f64,
}

impl InvestmentPlan {
    pub fn without_tariffs(config: Vec<usize>, reconductor: Vec<(usize, usize, usize)>, lines: usize) -> Self {
        InvestmentPlan { config, reconductor, tariff_v: vec![0.0; lines], tariff_c: 0.0 }
    }

    /// Cumulative reconductoring factor per line in year `t`.
    pub fn factors(&self, ctx: &PlanningContext, t: usize) -> Vec<f64> {
        let mut f = vec![0.0; ctx.net.num_lines()];
        for &(ty, l, j) in &self.reconductor {
            if ty <= t {
                f[l] += ctx.net.reconductor_factors[j];
            }
        }
        f
    }

    /// True when line `l` carries an investment (reconductored or added circuits) in year `t`.
    pub fn invested(&self, ctx: &PlanningContext, t: usize, l: usize) -> bool {
        self.reconductor.iter().any(|&(ty, ll, _)| ty <= t && ll == l) || ctx.configs[self.config[t]].circuits[l] > 0
    }

    pub fn tariff_at_bus(&self, ctx: &PlanningContext, t: usize, b: usize) -> f64 {
        (0..ctx.net.num_lines())
            .filter(|&l| self.invested(ctx, t, l))
            .map(|l| ctx.allocation(l, b) * self.tariff_v[l])
            .sum()
    }

    /// Investment cost in year `t` (MGBP).
    pub fn cost(&self, ctx: &PlanningContext, t: usize) -> f64 {
        let mut c = 0.0;
        for &(ty, l, j) in &self.reconductor {
            if ty == t {
                let line = &ctx.net.lines[l];
                let r = line.reconductor.as_ref().expect("reconductorable line");
                let f = ctx.net.reconductor_factors[j];
                if f > 0.0 {
                    c += r.fixed_cost_mgbp + r.variable_cost_mgbp_per_mw * f * line.base_capacity_mw;
                }
            }
        }
        for l in ctx.net.expandable_lines() {
            let e = ctx.net.lines[l].expansion.as_ref().unwrap();
            let now = ctx.configs[self.config[t]].circuits[l] as f64;
            let before = if t > 0 { ctx.configs[self.config[t - 1]].circuits[l] as f64 } else { 0.0 };
            c += e.fixed_cost_mgbp * (now - before);
        }
        c
    }

    /// Numeric value of a symbol for block `(t, s)`.
    pub fn sym_value(&self, ctx: &PlanningContext, t: usize, s: usize, sym: Sym) -> f64 {
        let c = self.config[t];
        match sym {
            Sym::Cap(l) => ctx.capacity(l, c, self.factors(ctx, t)[l]),
            Sym::Xi(l, i) => ctx.scen.xi[&(t, s, c)][l][i],
            Sym::QMax(l) => ctx.scen.q[&(t, s, c)][l].0,
            Sym::QMin(l) => ctx.scen.q[&(t, s, c)][l].1,
            Sym::Relax(l) => {
                if ctx.line_out(l, c) {
                    ctx.relax
                } else {
                    0.0
                }
            }
            Sym::Tariff(b) => self.tariff_at_bus(ctx, t, b),
        }
    }
}

/// Result of clearing one `(t, s)` block.
#[derive(Debug, Clone)]
pub struct BlockDispatch {
    pub t: usize,
    pub s: usize,
    pub values: Vec<f64>,
    pub duals: Vec<f64>,
    /// Declared welfare (GBP/h) with tariff-adjusted bids.
    pub welfare: f64,
    pub flows: Vec<f64>,
    pub system_price: f64,
    pub congestion: Vec<f64>,
    pub lmp: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DirectDispatch {
    pub status: SolveStatus,
    pub objective: f64,
    pub blocks: Vec<BlockDispatch>,
    pub lowers: Vec<LowerLevel>,
}

/// Injection at each bus as `(var index, sign)` pairs.
pub fn injection_terms(ll: &LowerLevel, nb: usize) -> Vec<Vec<(usize, f64)>> {
    let mut inj = vec![Vec::new(); nb];
    for (j, v) in ll.vars.iter().enumerate() {
        if let Some(b) = v.bus {
            if v.injection != 0.0 {
                inj[b].push((j, v.injection));
            }
        }
    }
    inj
}

/// Optional objective perturbation added to bids (GBP/MWh per variable index).
pub type Perturbation = dyn Fn(usize, usize, usize) -> f64;

/// Clears every block for a fixed plan by solving the LP directly.
pub fn solve_direct(
    ctx: &PlanningContext,
    plan: &InvestmentPlan,
    scheme: &LowerScheme,
    backend: &dyn Backend,
    cfg: &SolverConfig,
    perturb: Option<&Perturbation>,
) -> Result<DirectDispatch, DispatchError> {
    let mut m = Model::new("dispatch", ObjSense::Maximize);
    let mut lowers = Vec::new();
    let mut var_ids: Vec<Vec<VarId>> = Vec::new();
    let mut row_ids: Vec<Vec<RowId>> = Vec::new();
    let mut obj = LinExpr::new();
    let nb = ctx.net.num_buses();
    for t in 0..ctx.years() {
        let c = plan.config[t];
        if !ctx.configs[c].valid {
            return Err(DispatchError::Invalid(format!("configuration {c} is not valid")));
        }
        let ptdf = &ctx.ptdf[c];
        for s in 0..ctx.periods() {
            let ll = ctx.lower_level(t, s, scheme)?;
            let val = |sym: Sym| plan.sym_value(ctx, t, s, sym);
            let ids: Vec<VarId> = ll
                .vars
                .iter()
                .map(|v| m.continuous(format!("{}@{t},{s}", v.name), f64::NEG_INFINITY, f64::INFINITY))
                .collect();
            // box on the auxiliary variables only; participant limits are rows
            for (j, v) in ll.vars.iter().enumerate() {
                if v.bus.is_none() {
                    m.vars[ids[j].0].lower = v.lower;
                    m.vars[ids[j].0].upper = v.upper;
                }
            }
            for (j, v) in ll.vars.iter().enumerate() {
                let extra = perturb.map(|f| f(t, s, j)).unwrap_or(0.0);
                obj.add_term(ids[j], v.objective.eval(&val) + extra);
            }
            let inj = injection_terms(&ll, nb);
            let flow_expr = |l: usize| {
                let mut e = LinExpr::new();
                for b in 0..nb {
                    let f = ptdf.get(l, b);
                    if f != 0.0 {
                        for &(j, sg) in &inj[b] {
                            e.add_term(ids[j], f * sg);
                        }
                    }
                }
                e
            };
            let flows: Vec<LinExpr> = (0..ctx.net.num_lines()).map(flow_expr).collect();
            let mut rids = Vec::new();
            for r in &ll.rows {
                let mut e = LinExpr::new();
                for &(j, a) in &r.terms {
                    e.add_term(ids[j], a);
                }
                for &(l, a) in &r.flow {
                    e.add_scaled(&flows[l], a);
                }
                rids.push(m.add_row(format!("{}@{t},{s}", r.name), &e, r.sense, r.rhs.eval(&val), r.tag));
            }
            lowers.push(ll);
            var_ids.push(ids);
            row_ids.push(rids);
        }
    }
    m.set_objective(&obj);
    let res = solve_certified(backend, &m, cfg, None)?;
    if res.status != SolveStatus::Optimal {
        return Ok(DirectDispatch { status: res.status, objective: f64::NAN, blocks: vec![], lowers });
    }
    let duals = res.row_duals.clone().ok_or_else(|| SolveError::Unsupported("dual values".into()))?;
    let mut blocks = Vec::new();
    for (k, ll) in lowers.iter().enumerate() {
        let (t, s) = (ll.t, ll.s);
        let values: Vec<f64> = var_ids[k].iter().map(|v| res.primal[v.0]).collect();
        let d: Vec<f64> = row_ids[k].iter().map(|r| duals[r.0]).collect();
        let val = |sym: Sym| plan.sym_value(ctx, t, s, sym);
        blocks.push(block_from_values(ctx, ll, plan.config[t], values, d, &val));
    }
    Ok(DirectDispatch { status: res.status, objective: res.objective.unwrap_or(f64::NAN), blocks, lowers })
}

/// Clears every block for a fixed plan with the mixed-integer chance
/// constraint on per-line safety rows. Lines without a circuit carry no flow
/// and no error and are left out. Prices come from the LP obtained by fixing
/// the switch binaries.
pub fn solve_exact_dispatch(
    ctx: &PlanningContext,
    plan: &InvestmentPlan,
    backend: &dyn Backend,
    cfg: &SolverConfig,
) -> Result<DirectDispatch, DispatchError> {
    let nb = ctx.net.num_buses();
    let nl = ctx.net.num_lines();
    let mut lowers = Vec::new();
    let mut blocks = Vec::new();
    let mut objective = 0.0;
    for t in 0..ctx.years() {
        let c = plan.config[t];
        if !ctx.configs[c].valid {
            return Err(DispatchError::Invalid(format!("configuration {c} is not valid")));
        }
        let ptdf = &ctx.ptdf[c];
        for s in 0..ctx.periods() {
            let full = ctx.lower_level(t, s, &LowerScheme::la(ctx.n()))?;
            let keep: Vec<usize> = (0..full.vars.len())
                .filter(|&j| matches!(full.vars[j].kind, LowerVarKind::Gen(_) | LowerVarKind::Dem(_) | LowerVarKind::Sched(_) | LowerVarKind::Curt(_)))
                .collect();
            let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(k, &j)| (j, k)).collect();
            let rows: Vec<LowerRow> = full
                .rows
                .iter()
                .filter(|r| matches!(r.role, RowRole::Balance | RowRole::WindSchedule(_) | RowRole::Upper(_) | RowRole::Lower(_)))
                .map(|r| LowerRow { terms: r.terms.iter().map(|&(j, a)| (remap[&j], a)).collect(), ..r.clone() })
                .collect();
            let ll = LowerLevel { t, s, vars: keep.iter().map(|&j| full.vars[j].clone()).collect(), rows };
            let val = |sym: Sym| plan.sym_value(ctx, t, s, sym);

            let mut m = Model::new(format!("exact@{t},{s}"), ObjSense::Maximize);
            let ids: Vec<VarId> = ll.vars.iter().map(|v| m.continuous(format!("{}@{t},{s}", v.name), f64::NEG_INFINITY, f64::INFINITY)).collect();
            let mut obj = LinExpr::new();
            for (j, v) in ll.vars.iter().enumerate() {
                obj.add_term(ids[j], v.objective.eval(&val));
            }
            m.set_objective(&obj);
            let rids: Vec<RowId> = ll
                .rows
                .iter()
                .map(|r| {
                    let mut e = LinExpr::new();
                    for &(j, a) in &r.terms {
                        e.add_term(ids[j], a);
                    }
                    m.add_row(format!("{}@{t},{s}", r.name), &e, r.sense, r.rhs.eval(&val), r.tag)
                })
                .collect();
            let inj = injection_terms(&ll, nb);
            let live: Vec<usize> = (0..nl).filter(|&l| !ctx.line_out(l, c)).collect();
            let mut flow_vars = Vec::new();
            let mut flow_rows = Vec::new();
            for &l in &live {
                let f = m.continuous(format!("f[{l}]@{t},{s}"), f64::NEG_INFINITY, f64::INFINITY);
                let mut e = LinExpr::term(f, 1.0);
                for b in 0..nb {
                    let a = ptdf.get(l, b);
                    if a != 0.0 {
                        for &(j, sg) in &inj[b] {
                            e.add_term(ids[j], -a * sg);
                        }
                    }
                }
                flow_rows.push(m.add_row(format!("flow[{l}]@{t},{s}"), &e, RowSense::Eq, 0.0, TAG_FLOW_DEF));
                flow_vars.push(f);
            }
            if !live.is_empty() {
                let k = live.len();
                let mut safety = Vec::new();
                for (q, &l) in live.iter().enumerate() {
                    let cap = val(Sym::Cap(l));
                    for sign in [1.0, -1.0] {
                        let mut a = vec![0.0; k];
                        let mut b = vec![0.0; k];
                        a[q] = sign;
                        b[q] = -sign;
                        safety.push(crate::drjcc::SafetyRow { a, b, d: cap });
                    }
                }
                let samples = (0..ctx.n()).map(|i| live.iter().map(|&l| val(Sym::Xi(l, i))).collect()).collect();
                let inst = crate::drjcc::JccInstance { rows: safety, samples, eps: ctx.eps, theta: ctx.theta, norm: crate::drjcc::Norm::L2 };
                let big_m = 2.0 * ctx.relax;
                let blk = crate::drjcc::emit_exact(&mut m, &inst, &flow_vars, big_m, true, &format!("jcc@{t},{s}"))
                    .map_err(|e| DispatchError::Invalid(e.to_string()))?;
                m.vars[blk.s.0].upper = ctx.relax;
            }
            let res = solve_certified(backend, &m, cfg, None)?;
            if res.status != SolveStatus::Optimal {
                lowers.push(ll);
                return Ok(DirectDispatch { status: res.status, objective: f64::NAN, blocks: vec![], lowers });
            }
            let lp = fix_binaries_and_resolve(backend, &m, &res.primal, cfg)?;
            if lp.status != SolveStatus::Optimal {
                return Ok(DirectDispatch { status: SolveStatus::Error, objective: f64::NAN, blocks: vec![], lowers });
            }
            let duals = lp.row_duals.clone().unwrap_or_default();
            let values: Vec<f64> = ids.iter().map(|v| lp.primal[v.0]).collect();
            let d: Vec<f64> = rids.iter().map(|r| duals[r.0]).collect();
            let bal = ll.rows.iter().position(|r| r.role == RowRole::Balance).unwrap();
            let pi = d[bal];
            let mut mu = vec![0.0; nl];
            for (q, &l) in live.iter().enumerate() {
                mu[l] = duals[flow_rows[q].0];
            }
            let lmp: Vec<f64> = (0..nb).map(|b| pi + (0..nl).map(|l| ptdf.get(l, b) * mu[l]).sum::<f64>()).collect();
            let nodal: Vec<f64> = inj.iter().map(|ts| ts.iter().map(|&(j, sg)| sg * values[j]).sum()).collect();
            let welfare: f64 = ll.vars.iter().enumerate().map(|(j, v)| v.objective.eval(&val) * values[j]).sum();
            objective += lp.objective.unwrap_or(f64::NAN);
            blocks.push(BlockDispatch {
                t,
                s,
                flows: ctx.net.flows(ptdf, &nodal),
                values,
                duals: d,
                welfare,
                system_price: pi,
                congestion: lmp.iter().map(|p| pi - p).collect(),
                lmp,
            });
            lowers.push(ll);
        }
    }
    Ok(DirectDispatch { status: SolveStatus::Optimal, objective, blocks, lowers })
}

/// Assembles prices, flows and welfare for a block from primal and dual values.
pub fn block_from_values(
    ctx: &PlanningContext,
    ll: &LowerLevel,
    config: usize,
    values: Vec<f64>,
    duals: Vec<f64>,
    val: &impl Fn(Sym) -> f64,
) -> BlockDispatch {
    let nb = ctx.net.num_buses();
    let nl = ctx.net.num_lines();
    let ptdf = &ctx.ptdf[config];
    let inj = injection_terms(ll, nb);
    let nodal: Vec<f64> = inj.iter().map(|ts| ts.iter().map(|&(j, sg)| sg * values[j]).sum()).collect();
    let flows = ctx.net.flows(ptdf, &nodal);
    let mut agg = vec![0.0; nl];
    for (r, row) in ll.rows.iter().enumerate() {
        for &(l, a) in &row.flow {
            agg[l] += a * duals[r];
        }
    }
    let congestion: Vec<f64> = (0..nb).map(|b| (0..nl).map(|l| ptdf.get(l, b) * agg[l]).sum()).collect();
    let bal = ll.rows.iter().position(|r| r.role == RowRole::Balance).unwrap();
    let pi = duals[bal];
    let lmp: Vec<f64> = congestion.iter().map(|c| pi - c).collect();
    let welfare: f64 = ll.vars.iter().enumerate().map(|(j, v)| v.objective.eval(val) * values[j]).sum();
    BlockDispatch { t: ll.t, s: ll.s, values, duals, welfare, flows, system_price: pi, congestion, lmp }
}

/// Merchandising surplus `sum_b lmp_b (demand_b - generation_b - wind_b)` in GBP/h.
pub fn merchandising_surplus(ll: &LowerLevel, block: &BlockDispatch) -> f64 {
    ll.vars
        .iter()
        .enumerate()
        .filter_map(|(j, v)| v.bus.filter(|_| v.injection != 0.0).map(|b| -v.injection * block.lmp[b] * block.values[j]))
        .sum()
}

/// One term of the surplus rewritten through stationarity and complementarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MsTerm {
    Primal { var: usize, coef: f64 },
    Dual { row: usize, coef: f64 },
}

/// Tariff-free part of the merchandising surplus: the surplus equals this sum
/// minus `sum_b tariff_b * (generation_b + demand_b + wind_b)`.
pub fn ms_terms(ctx: &PlanningContext, ll: &LowerLevel) -> Vec<MsTerm> {
    let bid: HashMap<usize, f64> = ctx.case.participants.iter().map(|p| (p.id, p.bid_gbp_per_mwh)).collect();
    let mut out = Vec::new();
    for (r, row) in ll.rows.iter().enumerate() {
        match row.role {
            RowRole::Upper(j) | RowRole::Lower(j) => {
                let upper = matches!(row.role, RowRole::Upper(_));
                let bound = if upper { ll.vars[j].upper } else { ll.vars[j].lower };
                let coef = match (ll.vars[j].kind, upper) {
                    (LowerVarKind::Dem(_), true) => -bound,
                    (LowerVarKind::Dem(_), false) => bound,
                    (LowerVarKind::Gen(_), true) => -bound,
                    (LowerVarKind::Gen(_), false) => bound,
                    (LowerVarKind::Curt(_), true) => -bound,
                    _ => 0.0,
                };
                if coef != 0.0 {
                    out.push(MsTerm::Dual { row: r, coef });
                }
            }
            RowRole::WindSchedule(_) => out.push(MsTerm::Dual { row: r, coef: -row.rhs.constant }),
            _ => {}
        }
    }
    for (j, v) in ll.vars.iter().enumerate() {
        match v.kind {
            LowerVarKind::Dem(id) => out.push(MsTerm::Primal { var: j, coef: bid[&id] }),
            LowerVarKind::Gen(id) => out.push(MsTerm::Primal { var: j, coef: -bid[&id] }),
            LowerVarKind::Curt(id) => out.push(MsTerm::Primal { var: j, coef: -bid[&id] }),
            _ => {}
        }
    }
    out
}

/// Evaluates [`ms_terms`] minus the tariff offset at a solved block.
pub fn ms_substituted(ctx: &PlanningContext, ll: &LowerLevel, block: &BlockDispatch, tariff: &impl Fn(usize) -> f64) -> f64 {
    let base: f64 = ms_terms(ctx, ll)
        .iter()
        .map(|t| match *t {
            MsTerm::Primal { var, coef } => coef * block.values[var],
            MsTerm::Dual { row, coef } => coef * block.duals[row],
        })
        .sum();
    let offset: f64 = ll
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.injection != 0.0)
        .map(|(j, v)| tariff(v.bus.unwrap()) * block.values[j])
        .sum();
    base - offset
}

/// How products of configuration binaries with continuous quantities are linearised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    /// One product per (line, configuration) for duals and per (bus, configuration) for injections.
    #[default]
    Aggregated,
    /// One product per dual variable and per participant quantity.
    PerTerm,
}

/// A guessed bound: `|watched| <= m` whenever `relaxed` holds (always when `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct BigMRow {
    pub name: String,
    pub row: Option<RowId>,
    pub relaxed: Option<(VarId, f64)>,
    pub m: f64,
    /// Index into the owner's list of watched expressions.
    pub watched: usize,
}

/// Upper-level side of the KKT emission.
pub trait UpperView {
    fn sym(&self, t: usize, s: usize, sym: Sym) -> LinExpr;
    /// `(binary, configuration id)`; a `None` binary means the configuration is fixed.
    fn configurations(&self, t: usize) -> Vec<(Option<VarId>, usize)>;
}

#[derive(Debug, Clone)]
pub struct KktBlock {
    pub t: usize,
    pub s: usize,
    pub primal: Vec<VarId>,
    pub dual: Vec<VarId>,
    pub comp_binary: Vec<Option<VarId>>,
    /// Congestion component per bus as an expression.
    pub congestion: Vec<LinExpr>,
    pub big_m: Vec<BigMRow>,
    pub watched: Vec<LinExpr>,
}

#[derive(Debug, Clone, Copy)]
pub struct KktOptions {
    pub linearization: Linearization,
    /// Multiplies every big-M value.
    pub m_scale: f64,
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions { linearization: Linearization::Aggregated, m_scale: 1.0 }
    }
}

/// Exact linearization of `w = bin * x` for binary `bin` and `x` in `[lo, hi]`.
pub fn product(
    m: &mut Model,
    name: String,
    bin: VarId,
    x: &LinExpr,
    lo: f64,
    hi: f64,
    tag: &'static str,
) -> VarId {
    let w = m.continuous(name.clone(), lo.min(0.0), hi.max(0.0));
    // lo*bin <= w <= hi*bin
    let mut a = LinExpr::var(w);
    a.add_term(bin, -hi);
    m.add_row(format!("{name}.ub"), &a, RowSense::Le, 0.0, tag);
    let mut b = LinExpr::var(w);
    b.add_term(bin, -lo);
    m.add_row(format!("{name}.lb"), &b, RowSense::Ge, 0.0, tag);
    // lo*(1-bin) <= x - w <= hi*(1-bin)
    let mut c = x.clone().minus(&LinExpr::var(w));
    c.add_term(bin, hi);
    m.add_row(format!("{name}.xub"), &c, RowSense::Le, hi, tag);
    let mut d = x.clone().minus(&LinExpr::var(w));
    d.add_term(bin, lo);
    m.add_row(format!("{name}.xlb"), &d, RowSense::Ge, lo, tag);
    w
}

/// Writes the KKT conditions of `ll` into `m`.
pub fn emit_kkt(
    m: &mut Model,
    ctx: &PlanningContext,
    ll: &LowerLevel,
    upper: &dyn UpperView,
    opts: &KktOptions,
) -> Result<KktBlock, DispatchError> {
    let (t, s) = (ll.t, ll.s);
    let tag = format!("@{t},{s}");
    let nb = ctx.net.num_buses();
    let nl = ctx.net.num_lines();
    let md = ctx.dual_m * opts.m_scale;
    let mut big = Vec::new();
    let mut watched = Vec::new();

    let primal: Vec<VarId> = ll.vars.iter().map(|v| m.continuous(format!("{}{tag}", v.name), v.lower, v.upper)).collect();
    let configs = upper.configurations(t);
    let inj = injection_terms(ll, nb);
    let inj_bounds = ctx.injection_bounds(t, s);

    // flows as expressions in linearised products
    let mut flows = vec![LinExpr::new(); nl];
    for &(bin, c) in &configs {
        let ptdf = &ctx.ptdf[c];
        match (bin, opts.linearization) {
            (None, _) => {
                for b in 0..nb {
                    for &(j, sg) in &inj[b] {
                        for l in 0..nl {
                            let f = ptdf.get(l, b);
                            if f != 0.0 {
                                flows[l].add_term(primal[j], f * sg);
                            }
                        }
                    }
                }
            }
            (Some(o), Linearization::Aggregated) => {
                for b in 0..nb {
                    if inj[b].is_empty() || (0..nl).all(|l| ptdf.get(l, b) == 0.0) {
                        continue;
                    }
                    let mut e = LinExpr::new();
                    for &(j, sg) in &inj[b] {
                        e.add_term(primal[j], sg);
                    }
                    let (lo, hi) = inj_bounds[b];
                    let w = product(m, format!("eta_inj[{b},{c}]{tag}"), o, &e, lo, hi, TAG_LIN_INJECTION);
                    for l in 0..nl {
                        let f = ptdf.get(l, b);
                        if f != 0.0 {
                            flows[l].add_term(w, f);
                        }
                    }
                }
            }
            (Some(o), Linearization::PerTerm) => {
                for b in 0..nb {
                    if (0..nl).all(|l| ptdf.get(l, b) == 0.0) {
                        continue;
                    }
                    for &(j, sg) in &inj[b] {
                        let v = &ll.vars[j];
                        let w = product(m, format!("eta_q[{j},{c}]{tag}"), o, &LinExpr::var(primal[j]), v.lower, v.upper, TAG_LIN_INJECTION);
                        for l in 0..nl {
                            let f = ptdf.get(l, b);
                            if f != 0.0 {
                                flows[l].add_term(w, f * sg);
                            }
                        }
                    }
                }
            }
        }
    }

    // primal feasibility
    let mut slack_exprs = Vec::with_capacity(ll.rows.len());
    for r in &ll.rows {
        let mut lhs = LinExpr::new();
        for &(j, a) in &r.terms {
            lhs.add_term(primal[j], a);
        }
        for &(l, a) in &r.flow {
            lhs.add_scaled(&flows[l], a);
        }
        let mut rhs = LinExpr::constant(r.rhs.constant);
        for &(sym, c) in &r.rhs.syms {
            rhs.add_scaled(&upper.sym(t, s, sym), c);
        }
        let e = lhs.clone().minus(&rhs);
        m.add_row(format!("{}{tag}", r.name), &e, r.sense, 0.0, r.tag);
        slack_exprs.push(rhs.minus(&lhs));
    }

    // duals and complementarity
    let mut dual = Vec::with_capacity(ll.rows.len());
    let mut comp_binary = Vec::with_capacity(ll.rows.len());
    for (k, r) in ll.rows.iter().enumerate() {
        match r.sense {
            RowSense::Eq => {
                let d = m.continuous(format!("dual.{}{tag}", r.name), -md, md);
                watched.push(LinExpr::var(d));
                big.push(BigMRow { name: format!("dual.{}{tag}", r.name), row: None, relaxed: None, m: md, watched: watched.len() - 1 });
                dual.push(d);
                comp_binary.push(None);
            }
            _ => {
                let mp = r.slack_bound * opts.m_scale;
                if r.slack_bound <= 0.0 {
                    // slack is identically zero; complementarity holds for any dual
                    dual.push(m.continuous(format!("dual.{}{tag}", r.name), 0.0, md));
                    comp_binary.push(None);
                    continue;
                }
                let mu = m.continuous(format!("dual.{}{tag}", r.name), 0.0, md);
                let y = m.binary(format!("comp.{}{tag}", r.name));
                // slack <= Mp * y
                let mut a = slack_exprs[k].clone();
                a.add_term(y, -mp);
                let ra = m.add_row(format!("comp.p.{}{tag}", r.name), &a, RowSense::Le, 0.0, TAG_COMP_PRIMAL);
                // mu <= Md * (1 - y)
                let mut b = LinExpr::var(mu);
                b.add_term(y, md);
                let rb = m.add_row(format!("comp.d.{}{tag}", r.name), &b, RowSense::Le, md, TAG_COMP_DUAL);
                // participant bound rows use the exact variable range, so only other rows are audited
                if !matches!(r.role, RowRole::Upper(_) | RowRole::Lower(_)) {
                    watched.push(slack_exprs[k].clone());
                    big.push(BigMRow {
                        name: format!("comp.p.{}{tag}", r.name),
                        row: Some(ra),
                        relaxed: Some((y, 1.0)),
                        m: mp,
                        watched: watched.len() - 1,
                    });
                }
                watched.push(LinExpr::var(mu));
                big.push(BigMRow {
                    name: format!("comp.d.{}{tag}", r.name),
                    row: Some(rb),
                    relaxed: Some((y, 0.0)),
                    m: md,
                    watched: watched.len() - 1,
                });
                dual.push(mu);
                comp_binary.push(Some(y));
            }
        }
    }

    // congestion component per bus
    let mut congestion = vec![LinExpr::new(); nb];
    let mut agg = vec![LinExpr::new(); nl];
    for (k, r) in ll.rows.iter().enumerate() {
        for &(l, a) in &r.flow {
            agg[l].add_term(dual[k], a);
        }
    }
    let mut agg_var: Vec<Option<VarId>> = vec![None; nl];
    if opts.linearization == Linearization::Aggregated && configs.iter().any(|(b, _)| b.is_some()) {
        for l in 0..nl {
            if agg[l].terms.is_empty() {
                continue;
            }
            // price-like aggregate; its box is a guess audited like the dual bounds
            let d = m.continuous(format!("flowdual[{l}]{tag}"), -md, md);
            let e = LinExpr::var(d).minus(&agg[l]);
            m.add_row(format!("flowdual[{l}]{tag}"), &e, RowSense::Eq, 0.0, TAG_LIN_DUAL);
            watched.push(LinExpr::var(d));
            big.push(BigMRow { name: format!("flowdual[{l}]{tag}"), row: None, relaxed: None, m: md, watched: watched.len() - 1 });
            agg_var[l] = Some(d);
        }
    }
    for &(bin, c) in &configs {
        let ptdf = &ctx.ptdf[c];
        match (bin, opts.linearization) {
            (None, _) => {
                for b in 0..nb {
                    for l in 0..nl {
                        let f = ptdf.get(l, b);
                        if f != 0.0 {
                            congestion[b].add_scaled(&agg[l], f);
                        }
                    }
                }
            }
            (Some(o), Linearization::Aggregated) => {
                for l in 0..nl {
                    let Some(d) = agg_var[l] else { continue };
                    if (0..nb).all(|b| ptdf.get(l, b) == 0.0) {
                        continue;
                    }
                    let w = product(m, format!("eta_dual[{l},{c}]{tag}"), o, &LinExpr::var(d), -md, md, TAG_LIN_DUAL);
                    for b in 0..nb {
                        let f = ptdf.get(l, b);
                        if f != 0.0 {
                            congestion[b].add_term(w, f);
                        }
                    }
                }
            }
            (Some(o), Linearization::PerTerm) => {
                for (k, r) in ll.rows.iter().enumerate() {
                    for &(l, a) in &r.flow {
                        if (0..nb).all(|b| ptdf.get(l, b) == 0.0) {
                            continue;
                        }
                        let w = product(m, format!("eta_mu[{k},{c}]{tag}"), o, &LinExpr::var(dual[k]), 0.0, md, TAG_LIN_DUAL);
                        for b in 0..nb {
                            let f = ptdf.get(l, b);
                            if f != 0.0 {
                                congestion[b].add_term(w, f * a);
                            }
                        }
                    }
                }
            }
        }
    }

    // stationarity of the minimisation form: -grad W + sum dual * grad row = 0
    let mut stat: Vec<LinExpr> = ll
        .vars
        .iter()
        .map(|v| {
            let mut e = LinExpr::constant(-v.objective.constant);
            for &(sym, c) in &v.objective.syms {
                e.add_scaled(&upper.sym(t, s, sym), -c);
            }
            e
        })
        .collect();
    for (k, r) in ll.rows.iter().enumerate() {
        for &(j, a) in &r.terms {
            stat[j].add_term(dual[k], a);
        }
    }
    for (j, v) in ll.vars.iter().enumerate() {
        if let Some(b) = v.bus {
            if v.injection != 0.0 {
                stat[j].add_scaled(&congestion[b], v.injection);
            }
        }
    }
    for (j, e) in stat.iter().enumerate() {
        m.add_row(format!("stat.{}{tag}", ll.vars[j].name), e, RowSense::Eq, 0.0, TAG_STATIONARITY);
    }

    Ok(KktBlock { t, s, primal, dual, comp_binary, congestion, big_m: big, watched })
}

/// KKT upper view with every decision fixed by a plan.
pub struct FixedUpper<'a> {
    pub ctx: &'a PlanningContext,
    pub plan: &'a InvestmentPlan,
}

impl UpperView for FixedUpper<'_> {
    fn sym(&self, t: usize, s: usize, sym: Sym) -> LinExpr {
        LinExpr::constant(self.plan.sym_value(self.ctx, t, s, sym))
    }

    fn configurations(&self, t: usize) -> Vec<(Option<VarId>, usize)> {
        vec![(None, self.plan.config[t])]
    }
}

/// Audits big-M rows at a solution: a relaxed row whose watched quantity comes
/// within 1% of its bound means the bound may have cut off the true optimum.
pub fn audit_big_m(big: &[BigMRow], watched: &[LinExpr], x: &[f64]) -> Vec<BigMRow> {
    big.iter()
        .filter(|b| {
            if b.m <= 0.0 {
                return false;
            }
            if let Some((y, at)) = b.relaxed {
                if (x[y.0] - at).abs() > 0.5 {
                    return false;
                }
            }
            let v = watched[b.watched].eval(x).abs();
            b.m - v < 0.01 * b.m
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{garver6, two_bus, wind_samples};
    use crate::network::{Bus, Horizon, Participant, Reconductoring, TariffPolicy, SCHEMA_VERSION};
    use crate::solver::HighsBackend;
    use approx::assert_abs_diff_eq;

    fn no_wind_samples(n: usize) -> ErrorSampleSet {
        ErrorSampleSet { coords: vec![], values: vec![vec![]; n] }
    }

    fn single_bus() -> Case {
        let p = |id, kind, bid| Participant { id, kind, bus: 0, min_mw: 0.0, max_mw: 100.0, bid_gbp_per_mwh: bid, forecast_mw: None };
        Case {
            schema_version: SCHEMA_VERSION,
            name: "one".into(),
            base_mva: 100.0,
            slack_bus: None,
            buses: vec![Bus { id: 0, label: None }],
            lines: vec![],
            corridors: vec![],
            reconductoring: Reconductoring::default(),
            participants: vec![p(0, ParticipantKind::Generator, 10.0), p(1, ParticipantKind::Consumer, 50.0)],
            horizon: Horizon { years: 1, ..Horizon::default() },
            tariff_policy: TariffPolicy::default(),
        }
    }

    fn plan0(ctx: &PlanningContext) -> InvestmentPlan {
        InvestmentPlan::without_tariffs(vec![ctx.valid_configs()[0]; ctx.years()], vec![], ctx.net.num_lines())
    }

    fn kkt_objective(ctx: &PlanningContext, plan: &InvestmentPlan, scheme: &LowerScheme) -> (f64, Vec<Vec<f64>>) {
        let mut m = Model::new("kkt", ObjSense::Maximize);
        let up = FixedUpper { ctx, plan };
        let mut obj = LinExpr::new();
        let mut blocks = Vec::new();
        for t in 0..ctx.years() {
            for s in 0..ctx.periods() {
                let ll = ctx.lower_level(t, s, scheme).unwrap();
                let kb = emit_kkt(&mut m, ctx, &ll, &up, &KktOptions::default()).unwrap();
                for (j, v) in ll.vars.iter().enumerate() {
                    obj.add_term(kb.primal[j], v.objective.eval(&|sym| plan.sym_value(ctx, t, s, sym)));
                }
                blocks.push(kb);
            }
        }
        m.set_objective(&obj);
        let r = solve_certified(&HighsBackend, &m, &SolverConfig::default(), None).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "{}", r.message);
        let q = blocks.iter().map(|b| b.primal.iter().map(|v| r.primal[v.0]).collect()).collect();
        (r.objective.unwrap(), q)
    }

    #[test]
    fn single_bus_merit_order() {
        let ctx = PlanningContext::new(&single_bus(), &no_wind_samples(10), 0.1, 0.05).unwrap();
        let plan = plan0(&ctx);
        let d = solve_direct(&ctx, &plan, &LowerScheme::sla(10), &HighsBackend, &SolverConfig::default(), None).unwrap();
        assert_abs_diff_eq!(d.objective, 4000.0, epsilon = 1e-6);
        let b = &d.blocks[0];
        assert_abs_diff_eq!(b.values[0], 100.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b.values[1], 100.0, epsilon = 1e-6);
        assert!(b.system_price >= 10.0 - 1e-6 && b.system_price <= 50.0 + 1e-6);
        let (k, _) = kkt_objective(&ctx, &plan, &LowerScheme::sla(10));
        assert_abs_diff_eq!(k, 4000.0, epsilon = 1e-6);
    }

    #[test]
    fn two_bus_congestion_prices() {
        let ctx = PlanningContext::new(&two_bus(50.0, 0.0, 1), &no_wind_samples(10), 0.1, 0.05).unwrap();
        let plan = plan0(&ctx);
        for scheme in [LowerScheme::sla(10), LowerScheme::la(10)] {
            let d = solve_direct(&ctx, &plan, &scheme, &HighsBackend, &SolverConfig::default(), None).unwrap();
            assert_abs_diff_eq!(d.objective, 3990.0, epsilon = 1e-6);
            let b = &d.blocks[0];
            assert_abs_diff_eq!(b.flows[0], 49.5, epsilon = 1e-6);
            assert_abs_diff_eq!(b.lmp[0], 10.0, epsilon = 1e-6);
            assert_abs_diff_eq!(b.lmp[1], 30.0, epsilon = 1e-6);
            let ms = merchandising_surplus(&d.lowers[0], b);
            assert_abs_diff_eq!(ms, 990.0, epsilon = 1e-6);
            assert_abs_diff_eq!(ms_substituted(&ctx, &d.lowers[0], b, &|_| 0.0), ms, epsilon = 1e-6);
            let (k, _) = kkt_objective(&ctx, &plan, &scheme);
            assert_abs_diff_eq!(k, 3990.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn exact_dispatch_two_bus() {
        // eps * N = 1 so the exact set has the same theta / eps margin
        let ctx = PlanningContext::new(&two_bus(50.0, 0.0, 1), &no_wind_samples(10), 0.1, 0.05).unwrap();
        let d = solve_exact_dispatch(&ctx, &plan0(&ctx), &HighsBackend, &SolverConfig::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(d.objective, 3990.0, epsilon = 1e-6);
        let b = &d.blocks[0];
        assert_abs_diff_eq!(b.flows[0], 49.5, epsilon = 1e-6);
        assert_abs_diff_eq!(b.lmp[0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b.lmp[1], 30.0, epsilon = 1e-6);
        assert_abs_diff_eq!(merchandising_surplus(&d.lowers[0], b), 990.0, epsilon = 1e-6);
    }

    #[test]
    fn wcvar_two_bus_matches_oracle() {
        // one line, w = 1/2: margin is theta / eps as for the linear schemes
        let ctx = PlanningContext::new(&two_bus(50.0, 0.0, 1), &no_wind_samples(10), 0.1, 0.05).unwrap();
        let plan = plan0(&ctx);
        let d = solve_direct(&ctx, &plan, &LowerScheme::Wcvar, &HighsBackend, &SolverConfig::default(), None).unwrap();
        assert_abs_diff_eq!(d.blocks[0].flows[0], 49.5, epsilon = 1e-6);
        let (k, _) = kkt_objective(&ctx, &plan, &LowerScheme::Wcvar);
        assert_abs_diff_eq!(k, d.objective, epsilon = 1e-6);
    }

    #[test]
    fn tariff_offset_cancels_in_ledger() {
        let ctx = PlanningContext::new(&two_bus(50.0, 0.0, 1), &no_wind_samples(10), 0.1, 0.05).unwrap();
        let plan = plan0(&ctx);
        let d = solve_direct(&ctx, &plan, &LowerScheme::sla(10), &HighsBackend, &SolverConfig::default(), None).unwrap();
        let (ll, b) = (&d.lowers[0], &d.blocks[0]);
        let vc: f64 = ll.vars.iter().enumerate().filter(|(_, v)| v.injection != 0.0).map(|(j, _)| 2.0 * b.values[j]).sum();
        let with = ms_substituted(&ctx, ll, b, &|_| 2.0);
        let without = ms_substituted(&ctx, ll, b, &|_| 0.0);
        assert_abs_diff_eq!(with + vc, without, epsilon = 1e-9);
    }

    #[test]
    fn wind_is_scheduled_not_curtailed() {
        let ctx = PlanningContext::new(&two_bus(500.0, 100.0, 1), &wind_zero(10), 0.1, 0.05).unwrap();
        let plan = plan0(&ctx);
        let d = solve_direct(&ctx, &plan, &LowerScheme::sla(10), &HighsBackend, &SolverConfig::default(), None).unwrap();
        let ll = &d.lowers[0];
        let w = ll.var_index(LowerVarKind::Sched(3)).unwrap();
        let c = ll.var_index(LowerVarKind::Curt(3)).unwrap();
        assert_abs_diff_eq!(d.blocks[0].values[w], 50.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d.blocks[0].values[c], 0.0, epsilon = 1e-6);
    }

    fn wind_zero(n: usize) -> ErrorSampleSet {
        ErrorSampleSet { coords: vec![Coord { t: 0, s: 0, farm: 0 }], values: vec![vec![0.0]; n] }
    }

    #[test]
    fn garver_block_row_counts() {
        let case = garver6(1, Horizon::default());
        let (train, _) = wind_samples(&case, 50, 10, 1).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.05, 0.2).unwrap();
        let sla = ctx.lower_level(0, 0, &LowerScheme::sla(50)).unwrap();
        let la = ctx.lower_level(0, 0, &LowerScheme::la(50)).unwrap();
        let sample = |l: &LowerLevel| l.count_role(|r| matches!(r, RowRole::Sample { .. }));
        assert_eq!(sample(&sla), 2 * 8 * 50);
        assert_eq!(sla.count_role(|r| matches!(r, RowRole::Quantile { .. })), 16);
        assert_eq!(sla.count_role(|r| matches!(r, RowRole::Budget)), 1);
        assert_eq!(sla.rows.len(), la.rows.len() + 16);
    }

    #[test]
    fn unbuilt_corridor_does_not_bind() {
        let case = garver6(1, Horizon::default());
        let (train, _) = wind_samples(&case, 20, 10, 1).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.05, 0.2).unwrap();
        // two circuits on (2,6); corridor (4,6) stays empty
        let c = ctx.configs.iter().find(|c| c.circuits[6] == 2 && c.circuits[7] == 0).unwrap().id;
        let plan = InvestmentPlan::without_tariffs(vec![c; 2], vec![], 8);
        let d = solve_direct(&ctx, &plan, &LowerScheme::sla(20), &HighsBackend, &SolverConfig::default(), None).unwrap();
        assert_eq!(d.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(d.blocks[0].flows[7], 0.0, epsilon = 1e-9);
    }
}
