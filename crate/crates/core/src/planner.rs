//! Upper-level investment model and single-level assembly.
//!
//! The planner chooses one network configuration per year, lumpy
//! reconductoring actions and network tariffs. Every year and operating period
//! contributes one lower-level market written through its KKT conditions, so
//! the whole problem becomes a single MILP. Merchandising surplus is expressed
//! through bids and bound duals, which keeps revenue adequacy linear; the
//! volumetric revenue term is linearized by a binary expansion of the tariff.

use crate::dispatch::{
    block_from_values, emit_kkt, ms_terms, product, solve_direct, wind_farms, BigMRow, BlockDispatch, DispatchError,
    InvestmentPlan, KktBlock, KktOptions, LowerLevel, LowerScheme, LowerVarKind, MsTerm, PlanningContext, Sym,
    UpperView,
};
use crate::model::{LinExpr, Model, ObjSense, RowSense, VarId, VarKind};
use crate::network::{ParticipantKind, TariffPolicy};
use crate::solver::{solve_certified, Backend, Incumbent, SolveStatus, SolverConfig};

pub const TAG_ONE_CONFIG: &str = "ul.one_config";
pub const TAG_RECOND_ONCE: &str = "ul.reconductor_once";
pub const TAG_PARALLEL_SINGLE: &str = "ul.parallel_single";
pub const TAG_PARALLEL_MONOTONE: &str = "ul.parallel_monotone";
pub const TAG_EXCLUSIVE: &str = "ul.exclusive";
pub const TAG_INDICATOR: &str = "ul.invested";
pub const TAG_TARIFF_AND: &str = "ul.tariff_and";
pub const TAG_TARIFF_VOLUME: &str = "ul.tariff_volume";
pub const TAG_ADEQUACY: &str = "ul.revenue_adequacy";
pub const TAG_TARIFF_BALANCE: &str = "ul.tariff_balance";

/// Upper bound on the capacity tariff (GBP per MW of capacity per hour).
pub const TAU_C_MAX: f64 = 1e3;

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Solve(#[from] crate::solver::SolveError),
    #[error("{0}")]
    Invalid(String),
}

/// How the volumetric tariff enters the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TariffMode {
    /// `tau = step * sum_k 2^k y_k` with `step = bound / (2^bits - 1)`.
    BinaryExpansion { bits: u32, bound: f64 },
    /// The same tariff on every line, not a decision.
    Fixed(f64),
    /// Continuous tariff with bilinear revenue rows; for export to solvers that accept them.
    Passthrough { bound: f64 },
}

impl TariffMode {
    pub fn from_policy(p: &TariffPolicy) -> Result<TariffMode, PlannerError> {
        if p.expansion_bits == 0 {
            return Err(PlannerError::Invalid("expansion bits must be positive".into()));
        }
        Ok(TariffMode::BinaryExpansion { bits: p.expansion_bits, bound: p.volumetric_upper_gbp_per_mwh })
    }

    pub fn step(&self) -> Option<f64> {
        match *self {
            TariffMode::BinaryExpansion { bits, bound } => Some(bound / ((1u64 << bits) - 1) as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerOptions {
    pub scheme: LowerScheme,
    pub tariff: TariffMode,
    pub kkt: KktOptions,
    /// Holds investments and tariffs at these values.
    pub fixed_plan: Option<InvestmentPlan>,
    /// Revenue adequacy and the capacity/volumetric revenue ratio.
    pub revenue_rows: bool,
}

impl PlannerOptions {
    pub fn new(ctx: &PlanningContext, scheme: LowerScheme) -> Result<Self, PlannerError> {
        Ok(PlannerOptions {
            scheme,
            tariff: TariffMode::from_policy(&ctx.case.tariff_policy)?,
            kkt: KktOptions::default(),
            fixed_plan: None,
            revenue_rows: true,
        })
    }
}

/// Upper-level decisions as model expressions.
#[derive(Debug, Clone)]
pub struct UpperVars {
    /// `(binary, configuration)` per year; the binary is absent for fixed plans.
    pub o: Vec<Vec<(Option<VarId>, usize)>>,
    /// `(year, line, factor index, binary)`
    pub recond: Vec<(usize, usize, usize, VarId)>,
    /// Rating per year and line.
    pub cap: Vec<Vec<LinExpr>>,
    /// Tariff charged for line `l` in year `t` (zero until the line is invested).
    pub eta: Vec<Vec<LinExpr>>,
    /// `(and-variable, weight)` per year and line with `eta = sum weight * and`.
    pub eta_terms: Vec<Vec<Vec<(VarId, f64)>>>,
    /// Continuous `eta` variables in passthrough mode.
    pub eta_var: Vec<Vec<Option<VarId>>>,
    /// Tariff bits `(y, weight)` per line.
    pub bits: Vec<Vec<(VarId, f64)>>,
    /// Continuous tariff per line in passthrough mode.
    pub tau_v: Vec<Option<VarId>>,
    pub tau_c: LinExpr,
    /// Lines that can carry a volumetric tariff.
    pub tariff_lines: Vec<usize>,
}

struct PlanView<'a> {
    ctx: &'a PlanningContext,
    up: &'a UpperVars,
}

impl PlanView<'_> {
    fn over_configs(&self, t: usize, f: impl Fn(usize) -> f64) -> LinExpr {
        let mut e = LinExpr::new();
        for &(bin, c) in &self.up.o[t] {
            let v = f(c);
            if v == 0.0 {
                continue;
            }
            match bin {
                Some(o) => {
                    e.add_term(o, v);
                }
                None => {
                    e.add_constant(v);
                }
            }
        }
        e
    }
}

impl UpperView for PlanView<'_> {
    fn sym(&self, t: usize, s: usize, sym: Sym) -> LinExpr {
        let ctx = self.ctx;
        match sym {
            Sym::Cap(l) => self.up.cap[t][l].clone(),
            Sym::Xi(l, i) => self.over_configs(t, |c| ctx.scen.xi[&(t, s, c)][l][i]),
            Sym::QMax(l) => self.over_configs(t, |c| ctx.scen.q[&(t, s, c)][l].0),
            Sym::QMin(l) => self.over_configs(t, |c| ctx.scen.q[&(t, s, c)][l].1),
            Sym::Relax(l) => self.over_configs(t, |c| if ctx.line_out(l, c) { ctx.relax } else { 0.0 }),
            Sym::Tariff(b) => {
                let mut e = LinExpr::new();
                for &l in &self.up.tariff_lines {
                    e.add_scaled(&self.up.eta[t][l], ctx.allocation(l, b));
                }
                e
            }
        }
    }

    fn configurations(&self, t: usize) -> Vec<(Option<VarId>, usize)> {
        self.up.o[t].clone()
    }
}

/// The assembled single-level model with handles to its parts.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub model: Model,
    pub upper: UpperVars,
    pub lowers: Vec<LowerLevel>,
    pub blocks: Vec<KktBlock>,
    pub big_m: Vec<BigMRow>,
    pub watched: Vec<LinExpr>,
    /// Per year, in MGBP and undiscounted.
    pub welfare: Vec<LinExpr>,
    pub cost: Vec<LinExpr>,
    pub ms_plus_vc: Vec<LinExpr>,
    pub cc: Vec<LinExpr>,
    pub vc: Vec<LinExpr>,
    pub vc_bilinear: Vec<Vec<(VarId, VarId, f64)>>,
    pub discount: Vec<f64>,
}

pub fn discount(ctx: &PlanningContext) -> Vec<f64> {
    (0..ctx.years()).map(|t| 1.0 / (1.0 + ctx.case.horizon.discount_rate).powi(t as i32)).collect()
}

/// Hours represented by each operating period times 1e-6 (GBP/h to MGBP).
pub fn psi_m(ctx: &PlanningContext) -> f64 {
    ctx.case.horizon.hours_per_period * 1e-6
}

/// Sum of participant maxima charged by the capacity tariff in block `(t, s)`.
pub fn capacity_base(ctx: &PlanningContext, t: usize, s: usize) -> f64 {
    ctx.case
        .participants
        .iter()
        .map(|p| match p.kind {
            ParticipantKind::Wind => p.max_mw,
            _ => ctx.qmax(p, t, s),
        })
        .sum()
}

fn tariff_lines(ctx: &PlanningContext) -> Vec<usize> {
    ctx.net.lines.iter().filter(|l| l.reconductorable() || l.expandable()).map(|l| l.index).collect()
}

fn upper_fixed(m: &mut Model, ctx: &PlanningContext, plan: &InvestmentPlan) -> Result<UpperVars, PlannerError> {
    let (years, nl) = (ctx.years(), ctx.net.num_lines());
    if plan.config.len() != years || plan.tariff_v.len() != nl {
        return Err(PlannerError::Invalid("plan does not match the case dimensions".into()));
    }
    if let Some(&c) = plan.config.iter().find(|&&c| !ctx.configs.get(c).map(|x| x.valid).unwrap_or(false)) {
        return Err(PlannerError::Invalid(format!("configuration {c} is not valid")));
    }
    let _ = m;
    let lines = tariff_lines(ctx);
    let mut cap = Vec::new();
    let mut eta = Vec::new();
    for t in 0..years {
        let f = plan.factors(ctx, t);
        cap.push((0..nl).map(|l| LinExpr::constant(ctx.capacity(l, plan.config[t], f[l]))).collect());
        eta.push(
            (0..nl)
                .map(|l| {
                    let v = if lines.contains(&l) && plan.invested(ctx, t, l) { plan.tariff_v[l] } else { 0.0 };
                    LinExpr::constant(v)
                })
                .collect(),
        );
    }
    Ok(UpperVars {
        o: plan.config.iter().map(|&c| vec![(None, c)]).collect(),
        recond: vec![],
        cap,
        eta,
        eta_terms: vec![vec![vec![]; nl]; years],
        eta_var: vec![vec![None; nl]; years],
        bits: vec![vec![]; nl],
        tau_v: vec![None; nl],
        tau_c: LinExpr::constant(plan.tariff_c),
        tariff_lines: lines,
    })
}

fn upper_free(m: &mut Model, ctx: &PlanningContext, opts: &PlannerOptions) -> Result<UpperVars, PlannerError> {
    let (years, nl) = (ctx.years(), ctx.net.num_lines());
    let valid = ctx.valid_configs();
    let lines = tariff_lines(ctx);
    let mut o = Vec::new();
    for t in 0..years {
        let row: Vec<(Option<VarId>, usize)> = valid.iter().map(|&c| (Some(m.binary(format!("o[{t},{c}]"))), c)).collect();
        let e = row.iter().fold(LinExpr::new(), |mut e, &(v, _)| {
            e.add_term(v.unwrap(), 1.0);
            e
        });
        m.add_row(format!("one_config[{t}]"), &e, RowSense::Eq, 1.0, TAG_ONE_CONFIG);
        o.push(row);
    }
    let circuits = |t: usize, l: usize, o: &Vec<Vec<(Option<VarId>, usize)>>| {
        let mut e = LinExpr::new();
        for &(v, c) in &o[t] {
            let k = ctx.configs[c].circuits[l] as f64;
            if k != 0.0 {
                e.add_term(v.unwrap(), k);
            }
        }
        e
    };
    let any_circuit = |t: usize, l: usize, o: &Vec<Vec<(Option<VarId>, usize)>>| {
        let mut e = LinExpr::new();
        for &(v, c) in &o[t] {
            if ctx.configs[c].circuits[l] > 0 {
                e.add_term(v.unwrap(), 1.0);
            }
        }
        e
    };

    let factors = &ctx.net.reconductor_factors;
    let mut recond = Vec::new();
    for l in ctx.net.reconductorable_lines() {
        let mut once = LinExpr::new();
        for t in 0..years {
            for j in 1..factors.len() {
                let v = m.binary(format!("recond[{t},{l},{j}]"));
                once.add_term(v, 1.0);
                recond.push((t, l, j, v));
            }
        }
        m.add_row(format!("recond_once[{l}]"), &once, RowSense::Le, 1.0, TAG_RECOND_ONCE);
    }
    let z_r = |t: usize, l: usize| {
        let mut e = LinExpr::new();
        for &(tt, ll, _, v) in &recond {
            if ll == l && tt <= t {
                e.add_term(v, 1.0);
            }
        }
        e
    };

    for l in ctx.net.expandable_lines() {
        for t in 0..years {
            m.add_row(format!("parallel_single[{t},{l}]"), &any_circuit(t, l, &o), RowSense::Le, 1.0, TAG_PARALLEL_SINGLE);
            if t > 0 {
                let e = circuits(t, l, &o).minus(&circuits(t - 1, l, &o));
                m.add_row(format!("parallel_monotone[{t},{l}]"), &e, RowSense::Ge, 0.0, TAG_PARALLEL_MONOTONE);
            }
            if ctx.net.lines[l].reconductorable() {
                let e = z_r(t, l).plus(&any_circuit(t, l, &o));
                m.add_row(format!("exclusive[{t},{l}]"), &e, RowSense::Le, 1.0, TAG_EXCLUSIVE);
            }
        }
    }

    let mut cap = Vec::new();
    for t in 0..years {
        let mut row = Vec::new();
        for l in 0..nl {
            let line = &ctx.net.lines[l];
            let mut e = LinExpr::constant(line.base_capacity_mw);
            for &(tt, ll, j, v) in &recond {
                if ll == l && tt <= t {
                    e.add_term(v, line.base_capacity_mw * factors[j]);
                }
            }
            if let Some(x) = &line.expansion {
                e.add_scaled(&circuits(t, l, &o), x.capacity_mw);
            }
            row.push(e.compact());
        }
        cap.push(row);
    }

    // investment indicator per year and tariffable line
    let mut indicator = vec![vec![None; nl]; years];
    for t in 0..years {
        for &l in &lines {
            let z = m.binary(format!("invested[{t},{l}]"));
            let e = LinExpr::var(z).minus(&z_r(t, l)).minus(&any_circuit(t, l, &o));
            m.add_row(format!("invested[{t},{l}]"), &e, RowSense::Eq, 0.0, TAG_INDICATOR);
            indicator[t][l] = Some(z);
        }
    }

    let mut bits = vec![vec![]; nl];
    let mut tau_v = vec![None; nl];
    let mut eta = vec![vec![LinExpr::new(); nl]; years];
    let mut eta_terms = vec![vec![vec![]; nl]; years];
    let mut eta_var = vec![vec![None; nl]; years];
    match opts.tariff {
        TariffMode::BinaryExpansion { bits: k, bound } => {
            if k == 0 || k > 30 {
                return Err(PlannerError::Invalid("expansion bits must be in 1..=30".into()));
            }
            let step = bound / ((1u64 << k) - 1) as f64;
            for &l in &lines {
                bits[l] = (0..k).map(|b| (m.binary(format!("tariff_bit[{l},{b}]")), step * (1u64 << b) as f64)).collect();
            }
            for t in 0..years {
                for &l in &lines {
                    let z = indicator[t][l].unwrap();
                    for (b, &(y, w)) in bits[l].iter().enumerate() {
                        let a = m.continuous(format!("tariff_and[{t},{l},{b}]"), 0.0, 1.0);
                        m.add_row(format!("and.z[{t},{l},{b}]"), &LinExpr::var(a).minus(&LinExpr::var(z)), RowSense::Le, 0.0, TAG_TARIFF_AND);
                        m.add_row(format!("and.y[{t},{l},{b}]"), &LinExpr::var(a).minus(&LinExpr::var(y)), RowSense::Le, 0.0, TAG_TARIFF_AND);
                        let mut e = LinExpr::var(a);
                        e.add_term(z, -1.0).add_term(y, -1.0);
                        m.add_row(format!("and.zy[{t},{l},{b}]"), &e, RowSense::Ge, -1.0, TAG_TARIFF_AND);
                        eta[t][l].add_term(a, w);
                        eta_terms[t][l].push((a, w));
                    }
                }
            }
        }
        TariffMode::Fixed(v) => {
            for t in 0..years {
                for &l in &lines {
                    let z = indicator[t][l].unwrap();
                    if v != 0.0 {
                        eta[t][l].add_term(z, v);
                        eta_terms[t][l].push((z, v));
                    }
                }
            }
        }
        TariffMode::Passthrough { bound } => {
            for &l in &lines {
                tau_v[l] = Some(m.continuous(format!("tau_v[{l}]"), 0.0, bound));
            }
            for t in 0..years {
                for &l in &lines {
                    let z = indicator[t][l].unwrap();
                    let tv = tau_v[l].unwrap();
                    let h = m.continuous(format!("eta[{t},{l}]"), 0.0, bound);
                    let mut a = LinExpr::var(h);
                    a.add_term(z, -bound);
                    m.add_row(format!("eta.z[{t},{l}]"), &a, RowSense::Le, 0.0, TAG_TARIFF_AND);
                    m.add_row(format!("eta.tau[{t},{l}]"), &LinExpr::var(h).minus(&LinExpr::var(tv)), RowSense::Le, 0.0, TAG_TARIFF_AND);
                    let mut c = LinExpr::var(h).minus(&LinExpr::var(tv));
                    c.add_term(z, -bound);
                    m.add_row(format!("eta.lb[{t},{l}]"), &c, RowSense::Ge, -bound, TAG_TARIFF_AND);
                    eta[t][l] = LinExpr::var(h);
                    eta_var[t][l] = Some(h);
                }
            }
        }
    }
    let tau_c = if opts.revenue_rows { LinExpr::var(m.continuous("tau_c", 0.0, TAU_C_MAX)) } else { LinExpr::new() };
    Ok(UpperVars { o, recond, cap, eta, eta_terms, eta_var, bits, tau_v, tau_c, tariff_lines: lines })
}

/// Builds the single-level model.
pub fn assemble(ctx: &PlanningContext, opts: &PlannerOptions) -> Result<Assembled, PlannerError> {
    let mut m = Model::new("tep", ObjSense::Maximize);
    let upper = match &opts.fixed_plan {
        Some(p) => upper_fixed(&mut m, ctx, p)?,
        None => upper_free(&mut m, ctx, opts)?,
    };
    let years = ctx.years();
    let psi = psi_m(ctx);
    let disc = discount(ctx);
    let mut lowers = Vec::new();
    let mut blocks = Vec::new();
    let mut big_m = Vec::new();
    let mut watched = Vec::new();
    let mut welfare = vec![LinExpr::new(); years];
    let mut ms_plus_vc = vec![LinExpr::new(); years];
    let mut vc = vec![LinExpr::new(); years];
    let mut vc_bilinear = vec![Vec::new(); years];
    let mut cc = vec![LinExpr::new(); years];
    let view = PlanView { ctx, up: &upper };
    let nb = ctx.net.num_buses();
    for t in 0..years {
        for s in 0..ctx.periods() {
            let ll = ctx.lower_level(t, s, &opts.scheme)?;
            let kb = emit_kkt(&mut m, ctx, &ll, &view, &opts.kkt)?;
            let off = watched.len();
            watched.extend(kb.watched.iter().cloned());
            big_m.extend(kb.big_m.iter().cloned().map(|mut b| {
                b.watched += off;
                b
            }));
            for (j, v) in ll.vars.iter().enumerate() {
                if v.objective.constant != 0.0 {
                    welfare[t].add_term(kb.primal[j], psi * v.objective.constant);
                }
            }
            for term in ms_terms(ctx, &ll) {
                match term {
                    MsTerm::Primal { var, coef } => ms_plus_vc[t].add_term(kb.primal[var], psi * coef),
                    MsTerm::Dual { row, coef } => ms_plus_vc[t].add_term(kb.dual[row], psi * coef),
                };
            }
            // volume charged per line: sum over buses of allocation times traded quantity
            let mut volume = vec![LinExpr::new(); ctx.net.num_lines()];
            let mut vmax = vec![0.0; ctx.net.num_lines()];
            for &l in &upper.tariff_lines {
                for (j, v) in ll.vars.iter().enumerate() {
                    if let Some(b) = v.bus.filter(|_| v.injection != 0.0) {
                        let a = ctx.allocation(l, b);
                        if a != 0.0 {
                            volume[l].add_term(kb.primal[j], a);
                            vmax[l] += a * v.upper;
                        }
                    }
                }
            }
            let _ = nb;
            for &l in &upper.tariff_lines {
                if opts.fixed_plan.is_some() {
                    vc[t].add_scaled(&volume[l], psi * upper.eta[t][l].constant);
                } else if let Some(h) = upper.eta_var[t][l] {
                    for &(v, c) in &volume[l].terms {
                        vc_bilinear[t].push((h, v, psi * c));
                    }
                } else {
                    for (k, &(a, w)) in upper.eta_terms[t][l].iter().enumerate() {
                        let om = product(
                            &mut m,
                            format!("vol[{t},{s},{l},{k}]"),
                            a,
                            &volume[l],
                            0.0,
                            vmax[l],
                            TAG_TARIFF_VOLUME,
                        );
                        vc[t].add_term(om, psi * w);
                    }
                }
            }
            cc[t].add_scaled(&upper.tau_c, psi * capacity_base(ctx, t, s));
            lowers.push(ll);
            blocks.push(kb);
        }
    }

    let cost = investment_cost_exprs(ctx, &upper, opts.fixed_plan.as_ref());

    if opts.revenue_rows {
        let mut adequacy = LinExpr::new();
        for t in 0..years {
            adequacy.add_scaled(&ms_plus_vc[t], disc[t]);
            adequacy.add_scaled(&cc[t], disc[t]);
            adequacy.add_scaled(&cost[t], -disc[t]);
        }
        m.add_row("revenue_adequacy", &adequacy, RowSense::Ge, 0.0, TAG_ADEQUACY);
        let rho = ctx.case.tariff_policy.capacity_to_volumetric_ratio;
        let mut bal = LinExpr::new();
        let mut bil = Vec::new();
        for t in 0..years {
            bal.add_scaled(&cc[t], 1.0);
            bal.add_scaled(&vc[t], -rho);
            bil.extend(vc_bilinear[t].iter().map(|&(a, b, c)| (a, b, -rho * c)));
        }
        if bil.is_empty() {
            m.add_row("tariff_balance", &bal, RowSense::Eq, 0.0, TAG_TARIFF_BALANCE);
        } else {
            m.add_bilinear_row("tariff_balance", &bal, bil, RowSense::Eq, 0.0, TAG_TARIFF_BALANCE);
        }
    }

    let mut obj = LinExpr::new();
    for t in 0..years {
        obj.add_scaled(&welfare[t], disc[t]);
        obj.add_scaled(&cost[t], -disc[t]);
    }
    m.set_objective(&obj);
    Ok(Assembled { model: m, upper, lowers, blocks, big_m, watched, welfare, cost, ms_plus_vc, cc, vc, vc_bilinear, discount: disc })
}

fn investment_cost_exprs(ctx: &PlanningContext, up: &UpperVars, fixed: Option<&InvestmentPlan>) -> Vec<LinExpr> {
    let years = ctx.years();
    if let Some(p) = fixed {
        return (0..years).map(|t| LinExpr::constant(p.cost(ctx, t))).collect();
    }
    let factors = &ctx.net.reconductor_factors;
    let mut out = vec![LinExpr::new(); years];
    for &(t, l, j, v) in &up.recond {
        let line = &ctx.net.lines[l];
        let r = line.reconductor.as_ref().unwrap();
        out[t].add_term(v, r.fixed_cost_mgbp + r.variable_cost_mgbp_per_mw * factors[j] * line.base_capacity_mw);
    }
    for l in ctx.net.expandable_lines() {
        let k = ctx.net.lines[l].expansion.as_ref().unwrap().fixed_cost_mgbp;
        for t in 0..years {
            for &(v, c) in &up.o[t] {
                out[t].add_term(v.unwrap(), k * ctx.configs[c].circuits[l] as f64);
            }
            if t > 0 {
                for &(v, c) in &up.o[t - 1] {
                    out[t].add_term(v.unwrap(), -k * ctx.configs[c].circuits[l] as f64);
                }
            }
        }
    }
    out.into_iter().map(|e| e.compact()).collect()
}

/// Solved plan with dispatch, prices and accounting.
#[derive(Debug, Clone)]
pub struct PlanSolution {
    pub status: SolveStatus,
    pub message: String,
    /// Discounted welfare minus investment cost (MGBP).
    pub objective: f64,
    pub best_bound: Option<f64>,
    pub mip_gap: Option<f64>,
    pub time_s: f64,
    pub first_feasible_s: Option<f64>,
    pub incumbents: Vec<Incumbent>,
    pub plan: InvestmentPlan,
    pub lowers: Vec<LowerLevel>,
    pub blocks: Vec<BlockDispatch>,
    pub welfare: Vec<f64>,
    pub cost: Vec<f64>,
    pub ms: Vec<f64>,
    pub vc: Vec<f64>,
    pub cc: Vec<f64>,
    /// Big-M bounds that the solution comes within 1% of.
    pub m_flags: Vec<String>,
    pub primal: Vec<f64>,
    pub discount_rate: f64,
}

impl PlanSolution {
    pub fn has_solution(&self) -> bool {
        self.status.has_solution()
    }

    pub fn m_suspect(&self) -> bool {
        !self.m_flags.is_empty()
    }

    /// Discounted revenue adequacy margin (MGBP).
    pub fn adequacy_margin(&self) -> f64 {
        let r = 1.0 / (1.0 + self.discount_rate);
        (0..self.cost.len()).map(|t| r.powi(t as i32) * (self.ms[t] + self.vc[t] + self.cc[t] - self.cost[t])).sum()
    }

    pub fn total_investment(&self) -> f64 {
        self.cost.iter().sum()
    }
}

impl PlanSolution {
    fn empty(status: SolveStatus, message: String, time_s: f64, years: usize, lines: usize) -> Self {
        PlanSolution {
            status,
            message,
            objective: f64::NAN,
            best_bound: None,
            mip_gap: None,
            time_s,
            first_feasible_s: None,
            incumbents: vec![],
            plan: InvestmentPlan::without_tariffs(vec![0; years], vec![], lines),
            lowers: vec![],
            blocks: vec![],
            welfare: vec![],
            cost: vec![],
            ms: vec![],
            vc: vec![],
            cc: vec![],
            m_flags: vec![],
            primal: vec![],
            discount_rate: 0.0,
        }
    }
}

/// Reads the plan encoded in a primal point.
pub fn extract_plan(ctx: &PlanningContext, a: &Assembled, x: &[f64], fixed: Option<&InvestmentPlan>) -> InvestmentPlan {
    if let Some(p) = fixed {
        return p.clone();
    }
    let config = a
        .upper
        .o
        .iter()
        .map(|row| row.iter().max_by(|p, q| x[p.0.unwrap().0].partial_cmp(&x[q.0.unwrap().0]).unwrap()).unwrap().1)
        .collect();
    let reconductor = a.upper.recond.iter().filter(|r| x[r.3 .0] > 0.5).map(|&(t, l, j, _)| (t, l, j)).collect();
    let nl = ctx.net.num_lines();
    let tariff_v = (0..nl)
        .map(|l| {
            if let Some(v) = a.upper.tau_v[l] {
                x[v.0]
            } else if !a.upper.bits[l].is_empty() {
                a.upper.bits[l].iter().map(|&(y, w)| w * x[y.0].round()).sum()
            } else {
                0.0
            }
        })
        .collect();
    InvestmentPlan { config, reconductor, tariff_v, tariff_c: a.upper.tau_c.eval(x) }
}

/// Assembles, solves and post-processes one planning problem.
pub fn solve_plan(
    ctx: &PlanningContext,
    opts: &PlannerOptions,
    backend: &dyn Backend,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<(PlanSolution, Assembled), PlannerError> {
    let a = assemble(ctx, opts)?;
    let sol = solve_assembled(ctx, opts, &a, backend, cfg, start)?;
    Ok((sol, a))
}

pub fn solve_assembled(
    ctx: &PlanningContext,
    opts: &PlannerOptions,
    a: &Assembled,
    backend: &dyn Backend,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<PlanSolution, PlannerError> {
    let res = solve_certified(backend, &a.model, cfg, start)?;
    if !res.status.has_solution() {
        let mut s = PlanSolution::empty(res.status, res.message, res.time_s, ctx.years(), ctx.net.num_lines());
        s.best_bound = res.best_bound;
        return Ok(s);
    }
    let x = &res.primal;
    let mut plan = extract_plan(ctx, a, x, opts.fixed_plan.as_ref());
    if opts.fixed_plan.is_none() {
        if let TariffMode::Fixed(v) = opts.tariff {
            for &l in &a.upper.tariff_lines {
                plan.tariff_v[l] = v;
            }
        }
    }
    let mut blocks = Vec::new();
    for (ll, kb) in a.lowers.iter().zip(&a.blocks) {
        let values: Vec<f64> = kb.primal.iter().map(|v| x[v.0]).collect();
        let duals: Vec<f64> = kb.dual.iter().map(|v| x[v.0]).collect();
        let (t, s) = (ll.t, ll.s);
        let val = |sym: Sym| plan.sym_value(ctx, t, s, sym);
        blocks.push(block_from_values(ctx, ll, plan.config[t], values, duals, &val));
    }
    let years = ctx.years();
    let vc: Vec<f64> = (0..years)
        .map(|t| a.vc[t].eval(x) + a.vc_bilinear[t].iter().map(|&(p, q, c)| c * x[p.0] * x[q.0]).sum::<f64>())
        .collect();
    let ms_plus_vc: Vec<f64> = a.ms_plus_vc.iter().map(|e| e.eval(x)).collect();
    let flags = crate::dispatch::audit_big_m(&a.big_m, &a.watched, x).into_iter().map(|b| b.name).collect();
    Ok(PlanSolution {
        status: res.status,
        message: res.message.clone(),
        objective: res.objective.unwrap_or(f64::NAN),
        best_bound: res.best_bound,
        mip_gap: res.mip_gap,
        time_s: res.time_s,
        first_feasible_s: res.first_feasible_s(),
        incumbents: res.incumbents.clone(),
        plan,
        lowers: a.lowers.clone(),
        blocks,
        welfare: a.welfare.iter().map(|e| e.eval(x)).collect(),
        cost: a.cost.iter().map(|e| e.eval(x)).collect(),
        ms: (0..years).map(|t| ms_plus_vc[t] - vc[t]).collect(),
        vc,
        cc: a.cc.iter().map(|e| e.eval(x)).collect(),
        m_flags: flags,
        primal: x.clone(),
        discount_rate: ctx.case.horizon.discount_rate,
    })
}

/// Fixes the upper-level binaries of an assembled model to `plan`.
pub fn fix_to_plan(ctx: &PlanningContext, a: &mut Assembled, plan: &InvestmentPlan) -> Result<(), PlannerError> {
    for (t, row) in a.upper.o.iter().enumerate() {
        if !row.iter().any(|&(_, c)| c == plan.config[t]) {
            return Err(PlannerError::Invalid(format!("configuration {} not available in year {t}", plan.config[t])));
        }
        for &(v, c) in row {
            if let Some(v) = v {
                a.model.fix_var(v, if c == plan.config[t] { 1.0 } else { 0.0 });
            }
        }
    }
    for &(t, l, j, v) in &a.upper.recond {
        a.model.fix_var(v, if plan.reconductor.contains(&(t, l, j)) { 1.0 } else { 0.0 });
    }
    for &l in &a.upper.tariff_lines {
        if let Some(v) = a.upper.tau_v[l] {
            a.model.fix_var(v, plan.tariff_v[l]);
        }
        let bits = &a.upper.bits[l];
        if bits.is_empty() {
            continue;
        }
        let step = bits[0].1;
        let mut code = (plan.tariff_v[l] / step).round() as u64;
        for &(y, _) in bits {
            a.model.fix_var(y, (code & 1) as f64);
            code >>= 1;
        }
    }
    let _ = ctx;
    Ok(())
}

/// Result of evaluating one candidate plan with the direct lower-level LP.
#[derive(Debug, Clone)]
pub struct Screened {
    pub plan: InvestmentPlan,
    pub objective: f64,
    pub adequacy: f64,
}

/// Evaluates a fixed plan: discounted true welfare minus cost and the adequacy margin.
pub fn evaluate_plan(
    ctx: &PlanningContext,
    plan: &InvestmentPlan,
    scheme: &LowerScheme,
    backend: &dyn Backend,
    cfg: &SolverConfig,
) -> Result<Option<Screened>, PlannerError> {
    let d = solve_direct(ctx, plan, scheme, backend, cfg, None)?;
    if d.status != SolveStatus::Optimal {
        return Ok(None);
    }
    let psi = psi_m(ctx);
    let disc = discount(ctx);
    let rho = ctx.case.tariff_policy.capacity_to_volumetric_ratio;
    let mut obj = 0.0;
    let mut adequacy = 0.0;
    let mut vc_total = 0.0;
    let mut cap_total = 0.0;
    let mut cc_weight = 0.0;
    for (ll, b) in d.lowers.iter().zip(&d.blocks) {
        let t = ll.t;
        let welfare: f64 = ll.vars.iter().enumerate().map(|(j, v)| v.objective.constant * b.values[j]).sum();
        obj += disc[t] * psi * welfare;
        let tariff = |bus: usize| plan.tariff_at_bus(ctx, t, bus);
        let ms = crate::dispatch::merchandising_surplus(ll, b);
        let vc: f64 = ll
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.injection != 0.0)
            .map(|(j, v)| tariff(v.bus.unwrap()) * b.values[j])
            .sum();
        adequacy += disc[t] * psi * (ms + vc);
        vc_total += psi * vc;
        cap_total += psi * capacity_base(ctx, t, ll.s);
        cc_weight += disc[t] * psi * capacity_base(ctx, t, ll.s);
    }
    // capacity tariff implied by the revenue ratio
    let tau_c = if cap_total > 0.0 { rho * vc_total / cap_total } else { 0.0 };
    adequacy += tau_c * cc_weight;
    for t in 0..ctx.years() {
        let c = plan.cost(ctx, t);
        obj -= disc[t] * c;
        adequacy -= disc[t] * c;
    }
    let mut plan = plan.clone();
    plan.tariff_c = tau_c;
    Ok(Some(Screened { plan, objective: obj, adequacy }))
}

/// Tariff values the planner can represent under `mode`.
pub fn tariff_grid(mode: &TariffMode) -> Vec<f64> {
    match *mode {
        TariffMode::BinaryExpansion { bits, bound } => {
            let step = bound / ((1u64 << bits) - 1) as f64;
            (0..1u64 << bits).map(|k| k as f64 * step).collect()
        }
        TariffMode::Fixed(v) => vec![v],
        TariffMode::Passthrough { bound } => (0..=127).map(|k| k as f64 * bound / 127.0).collect(),
    }
}

/// Smallest uniform grid tariff under which `plan` is revenue adequate, found
/// by doubling then bisection (adequacy is treated as monotone in the tariff).
pub fn cheapest_adequate(
    ctx: &PlanningContext,
    plan: &InvestmentPlan,
    scheme: &LowerScheme,
    grid: &[f64],
    backend: &dyn Backend,
    cfg: &SolverConfig,
) -> Result<Option<Screened>, PlannerError> {
    let lines = tariff_lines(ctx);
    let eval = |k: usize| -> Result<Option<Screened>, PlannerError> {
        let mut p = plan.clone();
        for &l in &lines {
            p.tariff_v[l] = grid[k];
        }
        evaluate_plan(ctx, &p, scheme, backend, cfg)
    };
    let ok = |s: &Option<Screened>| s.as_ref().map(|s| s.adequacy >= 0.0).unwrap_or(false);
    let first = eval(0)?;
    if first.is_none() || ok(&first) || grid.len() == 1 {
        return Ok(first.filter(|s| s.adequacy >= 0.0));
    }
    let (mut lo, mut hi) = (0usize, None);
    let mut k = 1usize;
    let mut best = None;
    while k < grid.len() {
        let r = eval(k)?;
        if ok(&r) {
            hi = Some(k);
            best = r;
            break;
        }
        lo = k;
        k = if k * 2 >= grid.len() && k != grid.len() - 1 { grid.len() - 1 } else { k * 2 };
    }
    let Some(mut hi) = hi else { return Ok(None) };
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let r = eval(mid)?;
        if ok(&r) {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}

fn monotone_sequences(ctx: &PlanningContext) -> Vec<Vec<usize>> {
    let valid = ctx.valid_configs();
    let exp = ctx.net.expandable_lines();
    let mut seqs: Vec<Vec<usize>> = valid.iter().map(|&c| vec![c]).collect();
    for _ in 1..ctx.years() {
        let mut next = Vec::new();
        for s in &seqs {
            let last = &ctx.configs[*s.last().unwrap()];
            for &c in &valid {
                if exp.iter().all(|&l| ctx.configs[c].circuits[l] >= last.circuits[l]) {
                    let mut n = s.clone();
                    n.push(c);
                    next.push(n);
                }
            }
        }
        seqs = next;
    }
    seqs
}

/// Evaluates every monotone configuration sequence without reconductoring at
/// its cheapest adequate tariff, best first.
pub fn screen_plans(
    ctx: &PlanningContext,
    scheme: &LowerScheme,
    grid: &[f64],
    backend: &dyn Backend,
    cfg: &SolverConfig,
) -> Result<Vec<Screened>, PlannerError> {
    let nl = ctx.net.num_lines();
    let mut out = Vec::new();
    for seq in monotone_sequences(ctx) {
        let plan = InvestmentPlan::without_tariffs(seq, vec![], nl);
        if let Some(s) = cheapest_adequate(ctx, &plan, scheme, grid, backend, cfg)? {
            out.push(s);
        }
    }
    out.sort_by(|a, b| b.objective.total_cmp(&a.objective));
    Ok(out)
}

fn plan_valid(ctx: &PlanningContext, p: &InvestmentPlan) -> bool {
    let exp = ctx.net.expandable_lines();
    let monotone = p.config.windows(2).all(|w| exp.iter().all(|&l| ctx.configs[w[1]].circuits[l] >= ctx.configs[w[0]].circuits[l]));
    let exclusive = p.reconductor.iter().all(|&(t, l, _)| {
        (t..ctx.years()).all(|tt| ctx.configs[p.config[tt]].circuits[l] == 0)
    });
    monotone && exclusive && p.config.iter().all(|&c| ctx.configs[c].valid)
}

fn neighbours(ctx: &PlanningContext, p: &InvestmentPlan) -> Vec<InvestmentPlan> {
    let nf = ctx.net.reconductor_factors.len();
    let mut out = Vec::new();
    for l in ctx.net.reconductorable_lines() {
        let cur = p.reconductor.iter().find(|r| r.1 == l).copied();
        let (t0, j0) = cur.map(|r| (r.0, r.2 as i64)).unwrap_or((0, 0));
        for d in [1i64, -1, 2, -2, 4, -4, 8, -8] {
            let j = j0 + d;
            if j < 0 || j >= nf as i64 {
                continue;
            }
            let mut q = p.clone();
            q.reconductor.retain(|r| r.1 != l);
            if j > 0 {
                q.reconductor.push((t0, l, j as usize));
            }
            q.reconductor.sort();
            out.push(q);
        }
        if let Some((t, _, j)) = cur {
            for tt in 0..ctx.years() {
                if tt != t {
                    let mut q = p.clone();
                    q.reconductor.retain(|r| r.1 != l);
                    q.reconductor.push((tt, l, j));
                    q.reconductor.sort();
                    out.push(q);
                }
            }
        }
    }
    for t in 0..ctx.years() {
        for c in ctx.valid_configs() {
            if c != p.config[t] {
                let mut q = p.clone();
                q.config[t] = c;
                out.push(q);
            }
        }
    }
    out.retain(|q| plan_valid(ctx, q));
    out
}

/// Screening followed by first-improvement local search over reconductoring
/// steps, reconductoring year and per-year configuration. Stops after
/// `max_evals` plan evaluations.
pub fn heuristic_plan(
    ctx: &PlanningContext,
    scheme: &LowerScheme,
    mode: &TariffMode,
    backend: &dyn Backend,
    cfg: &SolverConfig,
    max_evals: usize,
) -> Result<Option<Screened>, PlannerError> {
    let grid = tariff_grid(mode);
    let screened = screen_plans(ctx, scheme, &grid, backend, cfg)?;
    let Some(mut best) = screened.into_iter().next() else { return Ok(None) };
    let mut evals = 0;
    let mut seen = std::collections::HashSet::new();
    let key = |p: &InvestmentPlan| (p.config.clone(), p.reconductor.clone());
    seen.insert(key(&best.plan));
    'outer: loop {
        let base = InvestmentPlan { tariff_v: vec![0.0; ctx.net.num_lines()], tariff_c: 0.0, ..best.plan.clone() };
        for q in neighbours(ctx, &base) {
            if !seen.insert(key(&q)) {
                continue;
            }
            if evals >= max_evals {
                break 'outer;
            }
            evals += 1;
            if let Some(s) = cheapest_adequate(ctx, &q, scheme, &grid, backend, cfg)? {
                if s.objective > best.objective + 1e-9 {
                    best = s;
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(Some(best))
}

/// Builds a full starting point by solving the model with the upper level fixed to `plan`.
pub fn start_from_plan(
    ctx: &PlanningContext,
    a: &Assembled,
    plan: &InvestmentPlan,
    backend: &dyn Backend,
    cfg: &SolverConfig,
) -> Result<Option<Vec<f64>>, PlannerError> {
    let mut fixed = a.clone();
    fix_to_plan(ctx, &mut fixed, plan)?;
    let res = solve_certified(backend, &fixed.model, cfg, None)?;
    Ok(if res.status.has_solution() { Some(res.primal) } else { None })
}

/// Re-solves with every big-M scaled by ten and returns the relative objective change.
pub fn big_m_rerun(
    ctx: &PlanningContext,
    opts: &PlannerOptions,
    base: &PlanSolution,
    backend: &dyn Backend,
    cfg: &SolverConfig,
) -> Result<(f64, PlanSolution), PlannerError> {
    let mut o = opts.clone();
    o.kkt.m_scale *= 10.0;
    let a = assemble(ctx, &o)?;
    // larger M only loosens the complementarity rows, so the base point stays feasible
    let start = if base.primal.len() == a.model.vars.len() {
        Some(base.primal.clone())
    } else if opts.fixed_plan.is_none() {
        start_from_plan(ctx, &a, &base.plan, backend, cfg)?
    } else {
        None
    };
    let sol = solve_assembled(ctx, &o, &a, backend, cfg, start.as_deref())?;
    let rel = (sol.objective - base.objective).abs() / base.objective.abs().max(1e-9);
    Ok((rel, sol))
}

/// Number of complementarity binaries in an assembled model.
pub fn complementarity_binaries(a: &Assembled) -> usize {
    a.blocks.iter().map(|b| b.comp_binary.iter().filter(|y| y.is_some()).count()).sum()
}

/// Count of binaries that belong to the upper level.
pub fn upper_binaries(a: &Assembled) -> usize {
    a.model.vars.iter().filter(|v| v.kind == VarKind::Binary).count() - complementarity_binaries(a)
}

/// Wind-farm count helper used by reports.
pub fn num_farms(ctx: &PlanningContext) -> usize {
    wind_farms(&ctx.case).len()
}

/// Quantity variable index per participant id in a lower level.
pub fn participant_var(ll: &LowerLevel, id: usize, kind: ParticipantKind) -> Option<usize> {
    let k = match kind {
        ParticipantKind::Generator => LowerVarKind::Gen(id),
        ParticipantKind::Consumer => LowerVarKind::Dem(id),
        ParticipantKind::Wind => LowerVarKind::Sched(id),
    };
    ll.var_index(k)
}

/// Maps a scheme name to a lower level usable inside the bilevel model.
pub fn bilevel_scheme(name: &str, n: usize) -> Result<LowerScheme, PlannerError> {
    match name {
        "sla" => Ok(LowerScheme::sla(n)),
        "la" => Ok(LowerScheme::la(n)),
        "wcvar" => Ok(LowerScheme::Wcvar),
        "sfla" => Err(PlannerError::Invalid(
            "sfla cannot be embedded in the bilevel model: its sample selection depends on the lower-level decision, \
             so the KKT reformulation is not valid; use sla, la or wcvar"
                .into(),
        )),
        other => Err(PlannerError::Invalid(format!("unknown scheme '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{garver6, two_bus, wind_samples};
    use crate::dispatch::TAG_JCC_QUANTILE;
    use crate::network::{Horizon, ReconductorSpec, Reconductoring};
    use crate::solver::HighsBackend;
    use crate::uncertainty::ErrorSampleSet;
    use approx::assert_abs_diff_eq;

    fn no_wind(n: usize) -> ErrorSampleSet {
        ErrorSampleSet { coords: vec![], values: vec![vec![]; n] }
    }

    /// Congested two-bus case where reconductoring the line by 0.6 removes congestion.
    fn recond_case() -> crate::network::Case {
        let mut c = two_bus(100.0, 0.0, 1);
        c.reconductoring = Reconductoring {
            factors: vec![0.0, 0.6, 1.0],
            candidates: vec![ReconductorSpec { line: 0, fixed_cost_mgbp: 1.0, variable_cost_mgbp_per_mw: 0.1 }],
        };
        c.tariff_policy.expansion_bits = 3;
        c.tariff_policy.volumetric_upper_gbp_per_mwh = 7.0;
        c
    }

    fn recond_ctx() -> PlanningContext {
        PlanningContext::new(&recond_case(), &no_wind(10), 0.1, 0.05).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig { time_limit_s: 60.0, ..Default::default() }
    }

    #[test]
    fn tariff_step_from_bits() {
        let m = TariffMode::BinaryExpansion { bits: 7, bound: 12.7 };
        assert_abs_diff_eq!(m.step().unwrap(), 0.1, epsilon = 1e-12);
        let p = TariffPolicy { expansion_bits: 0, ..Default::default() };
        assert!(TariffMode::from_policy(&p).is_err());
    }

    #[test]
    fn sfla_is_rejected() {
        let e = bilevel_scheme("sfla", 10).unwrap_err().to_string();
        assert!(e.contains("bilevel"));
        assert!(bilevel_scheme("la", 10).is_ok());
    }

    #[test]
    fn reconductoring_cost_in_model_and_plan() {
        let case = garver6(1, Horizon::default());
        let (train, _) = wind_samples(&case, 10, 1, 1).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.1, 0.05).unwrap();
        let c = ctx.valid_configs()[0];
        // factor index 10 is +50% on a 100 MW line
        let plan = InvestmentPlan::without_tariffs(vec![c, c], vec![(0, 3, 10)], 8);
        let circuits = InvestmentPlan::without_tariffs(vec![c, c], vec![], 8).cost(&ctx, 0);
        assert_abs_diff_eq!(plan.cost(&ctx, 0) - circuits, 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(plan.cost(&ctx, 1), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ctx.capacity(3, c, plan.factors(&ctx, 1)[3]), 150.0, epsilon = 1e-9);

        let mut m = Model::new("t", ObjSense::Maximize);
        let opts = PlannerOptions::new(&ctx, LowerScheme::la(10)).unwrap();
        let up = upper_free(&mut m, &ctx, &opts).unwrap();
        let cost = investment_cost_exprs(&ctx, &up, None);
        let mut x = vec![0.0; m.vars.len()];
        for &(v, cc) in &up.o[0] {
            x[v.unwrap().0] = (cc == c) as u8 as f64;
        }
        for &(v, cc) in &up.o[1] {
            x[v.unwrap().0] = (cc == c) as u8 as f64;
        }
        let r = up.recond.iter().find(|r| (r.0, r.1, r.2) == (0, 3, 10)).unwrap();
        x[r.3 .0] = 1.0;
        assert_abs_diff_eq!(cost[0].eval(&x) - circuits, 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cost[1].eval(&x), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(up.cap[1][3].eval(&x), 150.0, epsilon = 1e-9);
    }

    #[test]
    fn new_circuit_is_charged_once() {
        let case = garver6(1, Horizon::default());
        let (train, _) = wind_samples(&case, 10, 1, 1).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.1, 0.05).unwrap();
        let c = ctx.configs.iter().position(|c| c.circuits[6] == 1 && c.circuits[7] == 0).unwrap();
        let plan = InvestmentPlan::without_tariffs(vec![c, c], vec![], 8);
        assert_abs_diff_eq!(plan.cost(&ctx, 0), 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(plan.cost(&ctx, 1), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn reconductoring_oracle() {
        // without investment: 99.5 MW crosses the line, welfare 4990 GBP/h;
        // with +60%: congestion vanishes, welfare 6000 GBP/h at cost 7 MGBP,
        // and the smallest grid tariff covering the cost is 2 GBP/MWh
        let ctx = recond_ctx();
        let opts = PlannerOptions::new(&ctx, LowerScheme::sla(10)).unwrap();
        let (sol, a) = solve_plan(&ctx, &opts, &HighsBackend, &cfg(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
        assert_abs_diff_eq!(sol.objective, 6000.0 * 8760e-6 - 7.0, epsilon = 1e-6);
        assert_eq!(sol.plan.reconductor, vec![(0, 0, 1)]);
        assert!(sol.plan.tariff_v[0] >= 2.0 - 1e-9);
        assert!(sol.adequacy_margin() >= -1e-6);
        let rho = ctx.case.tariff_policy.capacity_to_volumetric_ratio;
        assert_abs_diff_eq!(sol.cc.iter().sum::<f64>(), rho * sol.vc.iter().sum::<f64>(), epsilon = 1e-6);
        assert_abs_diff_eq!(sol.ms[0], 0.0, epsilon = 1e-6);
        assert!(sol.m_flags.is_empty(), "{:?}", sol.m_flags);
        assert!(complementarity_binaries(&a) > 0);
    }

    #[test]
    fn low_fixed_tariff_blocks_investment() {
        // 1 GBP/MWh raises 2 * 8760e-6 * 300 = 5.256 MGBP < 7, so adequacy fails
        let ctx = recond_ctx();
        let mut opts = PlannerOptions::new(&ctx, LowerScheme::la(10)).unwrap();
        opts.tariff = TariffMode::Fixed(1.0);
        let (sol, _) = solve_plan(&ctx, &opts, &HighsBackend, &cfg(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
        assert!(sol.plan.reconductor.is_empty());
        assert_abs_diff_eq!(sol.objective, 4990.0 * 8760e-6, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.ms[0], 1990.0 * 8760e-6, epsilon = 1e-6);
    }

    #[test]
    fn screening_agrees_with_bilevel() {
        let ctx = recond_ctx();
        let grid: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let sc = screen_plans(&ctx, &LowerScheme::sla(10), &grid, &HighsBackend, &cfg()).unwrap();
        // screening never reconductors, so its best plan is the base network
        assert_abs_diff_eq!(sc[0].objective, 4990.0 * 8760e-6, epsilon = 1e-6);
        let plan = InvestmentPlan { config: vec![0], reconductor: vec![(0, 0, 1)], tariff_v: vec![2.0], tariff_c: 0.0 };
        let e = evaluate_plan(&ctx, &plan, &LowerScheme::sla(10), &HighsBackend, &cfg()).unwrap().unwrap();
        assert_abs_diff_eq!(e.objective, 6000.0 * 8760e-6 - 7.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.adequacy, 2.0 * 2.0 * 300.0 * 8760e-6 - 7.0, epsilon = 1e-6);
    }

    #[test]
    fn heuristic_finds_reconductoring() {
        let ctx = recond_ctx();
        let mode = TariffMode::from_policy(&ctx.case.tariff_policy).unwrap();
        let h = heuristic_plan(&ctx, &LowerScheme::sla(10), &mode, &HighsBackend, &cfg(), 50).unwrap().unwrap();
        assert_eq!(h.plan.reconductor, vec![(0, 0, 1)]);
        assert_abs_diff_eq!(h.plan.tariff_v[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h.objective, 6000.0 * 8760e-6 - 7.0, epsilon = 1e-6);
    }

    #[test]
    fn fixed_plan_matches_direct_dispatch() {
        let ctx = recond_ctx();
        let plan = InvestmentPlan { config: vec![0], reconductor: vec![(0, 0, 1)], tariff_v: vec![3.0], tariff_c: 0.0 };
        for scheme in [LowerScheme::sla(10), LowerScheme::la(10), LowerScheme::Wcvar] {
            let mut opts = PlannerOptions::new(&ctx, scheme.clone()).unwrap();
            opts.fixed_plan = Some(plan.clone());
            opts.revenue_rows = false;
            let (sol, _) = solve_plan(&ctx, &opts, &HighsBackend, &cfg(), None).unwrap();
            let e = evaluate_plan(&ctx, &plan, &scheme, &HighsBackend, &cfg()).unwrap().unwrap();
            assert_abs_diff_eq!(sol.objective, e.objective, epsilon = 1e-6);
        }
    }

    #[test]
    fn start_from_plan_is_accepted() {
        let ctx = recond_ctx();
        let opts = PlannerOptions::new(&ctx, LowerScheme::sla(10)).unwrap();
        let a = assemble(&ctx, &opts).unwrap();
        let plan = InvestmentPlan { config: vec![0], reconductor: vec![], tariff_v: vec![0.0], tariff_c: 0.0 };
        let x = start_from_plan(&ctx, &a, &plan, &HighsBackend, &cfg()).unwrap().unwrap();
        assert!(a.model.check_point(&x, 1e-6).is_empty());
        let sol = solve_assembled(&ctx, &opts, &a, &HighsBackend, &cfg(), Some(&x)).unwrap();
        assert_abs_diff_eq!(sol.objective, 6000.0 * 8760e-6 - 7.0, epsilon = 1e-6);
    }

    #[test]
    fn big_m_rerun_is_stable_on_oracle() {
        let ctx = recond_ctx();
        let opts = PlannerOptions::new(&ctx, LowerScheme::la(10)).unwrap();
        let (sol, _) = solve_plan(&ctx, &opts, &HighsBackend, &cfg(), None).unwrap();
        let (rel, again) = big_m_rerun(&ctx, &opts, &sol, &HighsBackend, &cfg()).unwrap();
        assert!(again.has_solution());
        assert!(rel < 1e-4, "{rel}");
    }

    #[test]
    fn passthrough_emits_bilinear_rows() {
        let ctx = recond_ctx();
        let mut opts = PlannerOptions::new(&ctx, LowerScheme::la(10)).unwrap();
        opts.tariff = TariffMode::Passthrough { bound: 7.0 };
        let a = assemble(&ctx, &opts).unwrap();
        assert!(a.model.has_bilinear());
        opts.tariff = TariffMode::BinaryExpansion { bits: 3, bound: 7.0 };
        assert!(!assemble(&ctx, &opts).unwrap().model.has_bilinear());
    }

    #[test]
    fn sla_adds_two_rows_per_line_and_block() {
        let case = garver6(1, Horizon::default());
        let (train, _) = wind_samples(&case, 20, 1, 1).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.05, 0.2).unwrap();
        let sla = assemble(&ctx, &PlannerOptions::new(&ctx, LowerScheme::sla(20)).unwrap()).unwrap();
        let la = assemble(&ctx, &PlannerOptions::new(&ctx, LowerScheme::la(20)).unwrap()).unwrap();
        let extra = 2 * ctx.net.num_lines() * ctx.years() * ctx.periods();
        assert_eq!(sla.model.count_rows_tagged(TAG_JCC_QUANTILE), extra);
        assert_eq!(la.model.count_rows_tagged(TAG_JCC_QUANTILE), 0);
        let others = |a: &Assembled| a.model.rows.len() - a.model.count_rows_tagged(TAG_JCC_QUANTILE);
        // each strengthening row adds one dual and, when it can be slack, one complementarity pair
        let comp = complementarity_binaries(&sla) - complementarity_binaries(&la);
        assert!(comp <= extra);
        assert_eq!(others(&sla), others(&la) + 2 * comp);
        assert_eq!(sla.model.count_rows_tagged(TAG_ONE_CONFIG), 2);
    }
}
