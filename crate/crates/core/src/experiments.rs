//! Benchmark grid, out-of-sample reliability and metrics.
//!
//! Every grid cell is identified by `(scheme, eps, theta, T, seed)`. The seed
//! fixes the case, the training and test samples and the solver seed, so all
//! schemes in a cell see the same data. Cell results are stored one JSON file
//! per cell, which makes an interrupted grid resumable; metrics that compare
//! schemes are derived from the stored records afterwards.

use crate::cases::{garver6, stream_seed, wind_samples};
use crate::dispatch::{BlockDispatch, InvestmentPlan, PlanningContext, ScenarioTable};
use crate::network::Horizon;
use crate::planner::{
    assemble, big_m_rerun, bilevel_scheme, heuristic_plan, solve_assembled, start_from_plan, Assembled, PlanSolution,
    PlannerError, PlannerOptions, TariffMode,
};
use crate::solver::{backend_by_name, Backend, Incumbent, SolveStatus, SolverConfig};
use crate::uncertainty::{ErrorSampleSet, UncertaintyError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

/// Tolerance (MW) applied to both directions of a line limit.
pub const RELIABILITY_TOL_MW: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Dispatch(#[from] crate::dispatch::DispatchError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid run spec: {0}")]
    Spec(String),
}

/// Joint satisfaction rate (percent) of all line limits per `[t][s]` under the test errors.
pub fn evaluate_reliability(
    ctx: &PlanningContext,
    plan: &InvestmentPlan,
    blocks: &[BlockDispatch],
    test: &ErrorSampleSet,
) -> Result<Vec<Vec<f64>>, ExperimentError> {
    if plan.config.len() != ctx.years() {
        return Err(ExperimentError::Spec("plan has no configuration for every year".into()));
    }
    let table = ScenarioTable::build(&ctx.net, &ctx.case, &ctx.configs, &ctx.ptdf, test, ctx.eps)?;
    let mut out = vec![vec![f64::NAN; ctx.periods()]; ctx.years()];
    if test.is_empty() {
        return Ok(out);
    }
    for b in blocks {
        let c = plan.config[b.t];
        let xi = table
            .xi
            .get(&(b.t, b.s, c))
            .ok_or_else(|| ExperimentError::Spec(format!("configuration {c} is not valid")))?;
        let f = plan.factors(ctx, b.t);
        let caps: Vec<f64> = (0..ctx.net.num_lines()).map(|l| ctx.capacity(l, c, f[l])).collect();
        let ok = (0..test.len())
            .filter(|&i| {
                (0..ctx.net.num_lines()).all(|l| {
                    let flow = b.flows[l] + xi[l][i];
                    flow <= caps[l] + RELIABILITY_TOL_MW && -flow <= caps[l] + RELIABILITY_TOL_MW
                })
            })
            .count();
        out[b.t][b.s] = 100.0 * ok as f64 / test.len() as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BilinearMode {
    #[default]
    BinaryExpansion,
    Passthrough,
}

fn d_years() -> usize {
    2
}
fn d_train() -> usize {
    50
}
fn d_test() -> usize {
    4000
}
fn d_schemes() -> Vec<String> {
    vec!["sla".into(), "la".into(), "wcvar".into()]
}
fn d_limit() -> f64 {
    600.0
}
fn d_one() -> usize {
    1
}
fn d_true() -> bool {
    true
}
fn d_evals() -> usize {
    200
}
fn d_gap() -> f64 {
    1e-6
}

/// Benchmark grid description, read from TOML.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub eps: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(default = "d_years")]
    pub years: usize,
    #[serde(default = "d_train")]
    pub n_train: usize,
    #[serde(default = "d_test")]
    pub n_test: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "d_schemes")]
    pub schemes: Vec<String>,
    #[serde(default = "d_limit")]
    pub time_limit_s: f64,
    #[serde(default)]
    pub bilinear: BilinearMode,
    /// Overrides the case's tariff expansion bits.
    #[serde(default)]
    pub bits: Option<u32>,
    #[serde(default = "d_one")]
    pub workers: usize,
    /// Start the MILP from the screening and local-search plan.
    #[serde(default = "d_true")]
    pub warm_start: bool,
    #[serde(default = "d_evals")]
    pub heuristic_evals: usize,
    /// Re-solve every accepted cell with ten times the big-M values.
    #[serde(default)]
    pub verify_big_m: bool,
    #[serde(default = "d_gap")]
    pub mip_gap: f64,
}

impl RunSpec {
    pub fn from_toml(text: &str) -> Result<RunSpec, ExperimentError> {
        let s: RunSpec = toml::from_str(text).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<RunSpec, ExperimentError> {
        RunSpec::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: &str| Err(ExperimentError::Spec(m.into()));
        if self.eps.is_empty() || self.theta.is_empty() || self.seeds.is_empty() || self.schemes.is_empty() {
            return err("eps, theta, seeds and schemes must be nonempty");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return err("seeds must be distinct");
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return err("eps must lie in (0, 1)");
        }
        if self.theta.iter().any(|&t| !(t >= 0.0)) {
            return err("theta must be nonnegative");
        }
        if self.years == 0 || self.n_train == 0 {
            return err("years and n_train must be positive");
        }
        if !(self.time_limit_s > 0.0) || self.workers == 0 {
            return err("time limit and workers must be positive");
        }
        for s in &self.schemes {
            bilevel_scheme(s, self.n_train).map_err(|e| ExperimentError::Spec(e.to_string()))?;
        }
        Ok(())
    }

    /// Cells ordered by data key then scheme.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &eps in &self.eps {
            for &theta in &self.theta {
                for &seed in &self.seeds {
                    for scheme in &self.schemes {
                        out.push(CellKey { scheme: scheme.clone(), eps, theta, years: self.years, seed });
                    }
                }
            }
        }
        out
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            time_limit_s: self.time_limit_s,
            mip_gap: self.mip_gap,
            seed: stream_seed(seed, "solver"),
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub scheme: String,
    pub eps: f64,
    pub theta: f64,
    pub years: usize,
    pub seed: u64,
}

impl CellKey {
    pub fn id(&self) -> String {
        format!("{}_eps{}_theta{}_T{}_seed{}", self.scheme, self.eps, self.theta, self.years, self.seed)
    }

    fn data_key(&self) -> (u64, u64, usize, u64) {
        (self.eps.to_bits(), self.theta.to_bits(), self.years, self.seed)
    }
}

/// Stored outcome of one grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub status: String,
    pub solvable: bool,
    pub optimal: bool,
    pub objective: Option<f64>,
    /// Wall time including the warm-start heuristic.
    pub time_s: f64,
    pub heuristic_s: f64,
    /// Incumbents with times measured from the start of the cell.
    pub incumbents: Vec<Incumbent>,
    /// Reliability (percent) per year, averaged over operating periods.
    pub reli_years: Vec<f64>,
    pub reli_mean: Option<f64>,
    pub m_flags: usize,
    pub m_rerun_rel: Option<f64>,
    pub plan: Option<InvestmentPlan>,
    pub error: Option<String>,
}

impl CellRecord {
    fn failed(key: CellKey, status: &str, time_s: f64, error: String) -> Self {
        CellRecord {
            key,
            status: status.into(),
            solvable: false,
            optimal: false,
            objective: None,
            time_s,
            heuristic_s: 0.0,
            incumbents: vec![],
            reli_years: vec![],
            reli_mean: None,
            m_flags: 0,
            m_rerun_rel: None,
            plan: None,
            error: Some(error),
        }
    }

    /// False when `spec` asks for a big-M rerun this record lacks.
    pub fn covers(&self, spec: &RunSpec) -> bool {
        !(spec.verify_big_m && self.solvable && self.m_rerun_rel.is_none())
    }

    pub fn m_suspect(&self) -> bool {
        self.m_flags > 0 && self.m_rerun_rel.map(|r| r >= 1e-4).unwrap_or(true)
    }
}

/// Planner options for a spec and lower-level scheme.
pub fn planner_options(spec: &RunSpec, ctx: &PlanningContext, scheme: &str) -> Result<PlannerOptions, ExperimentError> {
    let mut o = PlannerOptions::new(ctx, bilevel_scheme(scheme, ctx.n())?)?;
    let p = &ctx.case.tariff_policy;
    let bits = spec.bits.unwrap_or(p.expansion_bits);
    o.tariff = match spec.bilinear {
        BilinearMode::BinaryExpansion => {
            if bits == 0 {
                return Err(ExperimentError::Spec("bits must be positive".into()));
            }
            TariffMode::BinaryExpansion { bits, bound: p.volumetric_upper_gbp_per_mwh }
        }
        BilinearMode::Passthrough => TariffMode::Passthrough { bound: p.volumetric_upper_gbp_per_mwh },
    };
    Ok(o)
}

/// Case and samples shared by all schemes of a cell.
pub fn cell_data(spec: &RunSpec, key: &CellKey) -> Result<(crate::network::Case, ErrorSampleSet, ErrorSampleSet), ExperimentError> {
    let case = garver6(key.seed, Horizon { years: key.years, ..Horizon::default() });
    let (train, test) = wind_samples(&case, spec.n_train, spec.n_test, key.seed)?;
    Ok((case, train, test))
}

/// Runs one cell; failures end up in the record rather than as errors.
pub fn run_cell(spec: &RunSpec, key: &CellKey, backend: &dyn Backend) -> CellRecord {
    let t0 = Instant::now();
    match run_cell_inner(spec, key, backend, t0) {
        Ok(r) => r,
        Err(e) => CellRecord::failed(key.clone(), "error", t0.elapsed().as_secs_f64(), e.to_string()),
    }
}

/// Planner output for one case together with the time spent in the warm start.
pub struct CaseRun {
    pub solution: PlanSolution,
    pub assembled: Assembled,
    pub options: PlannerOptions,
    pub heuristic_s: f64,
}

/// Heuristic warm start followed by the single-level MILP. The time limit in
/// `cfg` covers both stages.
pub fn plan_case(
    spec: &RunSpec,
    ctx: &PlanningContext,
    scheme: &str,
    backend: &dyn Backend,
    cfg: &SolverConfig,
) -> Result<CaseRun, ExperimentError> {
    let t0 = Instant::now();
    let options = planner_options(spec, ctx, scheme)?;
    let assembled = assemble(ctx, &options)?;
    let mut start = None;
    if spec.warm_start {
        let h = heuristic_plan(ctx, &options.scheme, &options.tariff, backend, cfg, spec.heuristic_evals)?;
        if let Some(h) = h {
            start = start_from_plan(ctx, &assembled, &h.plan, backend, cfg)?;
        }
    }
    let heuristic_s = t0.elapsed().as_secs_f64();
    let mut milp = cfg.clone();
    milp.time_limit_s = (cfg.time_limit_s - heuristic_s).max(1.0);
    let solution = solve_assembled(ctx, &options, &assembled, backend, &milp, start.as_deref())?;
    Ok(CaseRun { solution, assembled, options, heuristic_s })
}

/// Mean reliability per year and overall.
pub fn reliability_summary(reli: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let years = reli.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let all: Vec<f64> = reli.iter().flatten().copied().collect();
    (years, all.iter().sum::<f64>() / all.len() as f64)
}

fn run_cell_inner(spec: &RunSpec, key: &CellKey, backend: &dyn Backend, t0: Instant) -> Result<CellRecord, ExperimentError> {
    let (case, train, test) = cell_data(spec, key)?;
    let ctx = PlanningContext::new(&case, &train, key.eps, key.theta)?;
    let cfg = spec.solver_config(key.seed);
    let run = plan_case(spec, &ctx, &key.scheme, backend, &cfg)?;
    let (sol, heuristic_s) = (&run.solution, run.heuristic_s);
    let time_s = t0.elapsed().as_secs_f64();
    let incumbents = sol.incumbents.iter().map(|i| Incumbent { time_s: i.time_s + heuristic_s, objective: i.objective }).collect();
    let mut rec = CellRecord {
        key: key.clone(),
        status: sol.status.as_str().into(),
        solvable: sol.has_solution(),
        optimal: sol.status == SolveStatus::Optimal,
        objective: sol.has_solution().then_some(sol.objective),
        time_s,
        heuristic_s,
        incumbents,
        reli_years: vec![],
        reli_mean: None,
        m_flags: sol.m_flags.len(),
        m_rerun_rel: None,
        plan: sol.has_solution().then(|| sol.plan.clone()),
        error: (!sol.has_solution()).then(|| sol.message.clone()),
    };
    if sol.has_solution() {
        let reli = evaluate_reliability(&ctx, &sol.plan, &sol.blocks, &test)?;
        let (years, mean) = reliability_summary(&reli);
        rec.reli_years = years;
        rec.reli_mean = Some(mean);
        if spec.verify_big_m {
            let (rel, rerun) = big_m_rerun(&ctx, &run.options, sol, backend, &cfg)?;
            rec.m_rerun_rel = rerun.has_solution().then_some(rel);
        }
    }
    Ok(rec)
}

fn cell_path(out: &Path, key: &CellKey) -> PathBuf {
    out.join("cells").join(format!("{}.json", key.id()))
}

pub fn load_record(out: &Path, key: &CellKey) -> Option<CellRecord> {
    let text = std::fs::read_to_string(cell_path(out, key)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Runs missing cells (up to `spec.workers` at a time), then writes
/// `metrics.csv` and `summary.md` under `out`.
pub fn run_grid(spec: &RunSpec, out: &Path, backend_name: &str) -> Result<Vec<MetricsRow>, ExperimentError> {
    spec.validate()?;
    std::fs::create_dir_all(out.join("cells"))?;
    let todo: Vec<CellKey> =
        spec.cells().into_iter().filter(|k| !load_record(out, k).is_some_and(|r| r.covers(spec))).collect();
    let errors = Mutex::new(Vec::new());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| ExperimentError::Spec(e.to_string()))?;
    pool.install(|| {
        use rayon::prelude::*;
        todo.par_iter().for_each(|k| {
            let backend = match backend_by_name(backend_name) {
                Some(b) => b,
                None => {
                    errors.lock().unwrap().push(format!("unknown backend {backend_name}"));
                    return;
                }
            };
            let rec = run_cell(spec, k, backend.as_ref());
            let write = serde_json::to_string_pretty(&rec)
                .map_err(ExperimentError::from)
                .and_then(|t| std::fs::write(cell_path(out, k), t).map_err(ExperimentError::from));
            if let Err(e) = write {
                errors.lock().unwrap().push(e.to_string());
            }
        });
    });
    if let Some(e) = errors.into_inner().unwrap().into_iter().next() {
        return Err(ExperimentError::Spec(e));
    }
    let records: Vec<CellRecord> = spec.cells().iter().filter_map(|k| load_record(out, k)).collect();
    let rows = metrics_rows(&records, spec.time_limit_s, spec.mip_gap);
    write_metrics(&rows, &out.join("metrics.csv"))?;
    let summary = compare_schemes(&rows)?;
    std::fs::write(out.join("summary.md"), summary_markdown(&summary))?;
    Ok(rows)
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scheme: String,
    pub eps: f64,
    #[serde(rename = "theta")]
    pub theta: f64,
    #[serde(rename = "T")]
    pub years: usize,
    pub seed: u64,
    pub timef_s: f64,
    pub time_s: f64,
    pub solvable: bool,
    pub obj_mgbp: Option<f64>,
    pub obj_diff_pct: Option<f64>,
    pub reli_mean_pct: Option<f64>,
    pub reli_t1: Option<f64>,
    pub reli_t2: Option<f64>,
    pub reli_t3: Option<f64>,
    pub reli_t4: Option<f64>,
    pub m_suspect: bool,
}

fn within_gap(obj: f64, target: f64, gap: f64) -> bool {
    obj >= target - gap * target.abs().max(1e-9)
}

/// Derives metrics from stored records. TimeF is the first incumbent within
/// `gap` of the SLA run's final objective in the same data cell; without a
/// feasible SLA run it is the first feasible time. Time is the limit unless
/// the run was proved optimal.
pub fn metrics_rows(records: &[CellRecord], limit: f64, gap: f64) -> Vec<MetricsRow> {
    let mut sla: BTreeMap<(u64, u64, usize, u64), &CellRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.key.scheme == "sla") {
        sla.insert(r.key.data_key(), r);
    }
    records
        .iter()
        .map(|r| {
            let reference = sla.get(&r.key.data_key()).filter(|s| s.solvable).and_then(|s| s.objective);
            let timef = if !r.solvable {
                limit
            } else if let Some(target) = reference {
                r.incumbents.iter().find(|i| within_gap(i.objective, target, gap)).map(|i| i.time_s.min(limit)).unwrap_or(limit)
            } else if r.key.scheme == "sla" {
                limit
            } else {
                r.incumbents.first().map(|i| i.time_s.min(limit)).unwrap_or(limit)
            };
            let obj_diff = match (r.objective, reference) {
                (Some(o), Some(s)) if r.solvable => Some(100.0 * (o - s) / s.abs().max(1e-9)),
                _ => None,
            };
            let year = |t: usize| r.reli_years.get(t).copied();
            MetricsRow {
                scheme: r.key.scheme.clone(),
                eps: r.key.eps,
                theta: r.key.theta,
                years: r.key.years,
                seed: r.key.seed,
                timef_s: timef,
                time_s: if r.optimal { r.time_s.min(limit) } else { limit },
                solvable: r.solvable,
                obj_mgbp: r.objective,
                obj_diff_pct: obj_diff,
                reli_mean_pct: r.reli_mean,
                reli_t1: year(0),
                reli_t2: year(1),
                reli_t3: year(2),
                reli_t4: year(3),
                m_suspect: r.m_suspect(),
            }
        })
        .collect()
}

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate of one scheme over a group of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `AR` (all runs) or `CR` (runs where every scheme found a solution).
    pub group: &'static str,
    pub scheme: String,
    pub eps: f64,
    pub theta: f64,
    pub years: usize,
    pub runs: usize,
    pub nsolvable: usize,
    pub time_mean: f64,
    pub time_p025: f64,
    pub time_p975: f64,
    pub timef_mean: f64,
    pub obj_mean: Option<f64>,
    pub obj_diff_mean: Option<f64>,
    pub reli_mean: Option<f64>,
}

/// Linear-interpolation percentile, `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = v.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(group: &'static str, scheme: &str, rows: &[&MetricsRow]) -> SummaryRow {
    let times: Vec<f64> = rows.iter().map(|r| r.time_s).collect();
    SummaryRow {
        group,
        scheme: scheme.to_string(),
        eps: rows[0].eps,
        theta: rows[0].theta,
        years: rows[0].years,
        runs: rows.len(),
        nsolvable: rows.iter().filter(|r| r.solvable).count(),
        time_mean: mean(times.iter().copied()).unwrap(),
        time_p025: percentile(&times, 2.5),
        time_p975: percentile(&times, 97.5),
        timef_mean: mean(rows.iter().map(|r| r.timef_s)).unwrap(),
        obj_mean: mean(rows.iter().filter_map(|r| r.obj_mgbp)),
        obj_diff_mean: mean(rows.iter().filter_map(|r| r.obj_diff_pct)),
        reli_mean: mean(rows.iter().filter_map(|r| r.reli_mean_pct)),
    }
}

/// All-runs and comparable-runs aggregates per `(eps, theta, T)` and scheme.
pub fn compare_schemes(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Spec("no metrics rows to summarize".into()));
    }
    let mut groups: BTreeMap<(u64, u64, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.eps.to_bits(), r.theta.to_bits(), r.years)).or_default().push(r);
    }
    let mut out = Vec::new();
    for g in groups.values() {
        let mut schemes: Vec<&str> = Vec::new();
        for r in g {
            if !schemes.contains(&r.scheme.as_str()) {
                schemes.push(&r.scheme);
            }
        }
        let seeds: Vec<u64> = {
            let mut s: Vec<u64> = g.iter().map(|r| r.seed).collect();
            s.sort();
            s.dedup();
            s
        };
        let comparable: Vec<u64> = seeds
            .into_iter()
            .filter(|&seed| schemes.iter().all(|sc| g.iter().any(|r| r.seed == seed && r.scheme == *sc && r.solvable)))
            .collect();
        for sc in &schemes {
            let all: Vec<&MetricsRow> = g.iter().copied().filter(|r| r.scheme == *sc).collect();
            out.push(summarize("AR", sc, &all));
        }
        for sc in &schemes {
            let cr: Vec<&MetricsRow> = g.iter().copied().filter(|r| r.scheme == *sc && comparable.contains(&r.seed)).collect();
            if !cr.is_empty() {
                out.push(summarize("CR", sc, &cr));
            }
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "| group | scheme | eps | theta | T | runs | Nsolvable | Time mean (s) | Time p2.5-p97.5 (s) | TimeF mean (s) | Obj (MGBP) | Obj diff (%) | Reli (%) |\n\
         |---|---|---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {:.2} | {:.2}-{:.2} | {:.2} | {} | {} | {} |\n",
            r.group,
            r.scheme,
            r.eps,
            r.theta,
            r.years,
            r.runs,
            r.nsolvable,
            r.time_mean,
            r.time_p025,
            r.time_p975,
            r.timef_mean,
            opt(r.obj_mean, 2),
            opt(r.obj_diff_mean, 2),
            opt(r.reli_mean, 2),
        ));
    }
    s
}

/// Ratio of median Time of scheme `a` to scheme `b` over the given rows.
pub fn median_time_ratio(rows: &[MetricsRow], a: &str, b: &str) -> Option<f64> {
    let t = |s: &str| -> Vec<f64> { rows.iter().filter(|r| r.scheme == s).map(|r| r.time_s).collect() };
    let (ta, tb) = (t(a), t(b));
    if ta.is_empty() || tb.is_empty() {
        return None;
    }
    Some(median(&ta) / median(&tb))
}
