//! Command-line surface: case and sample generation, single solves and the
//! benchmark grid.
//!
//! Exit codes of `solve`: 0 when a plan or dispatch was found (optimal or at
//! the time limit), 1 on invalid input, 2 when the model is infeasible and 3
//! when the backend fails. The backend is chosen with `TEPJCC_BACKEND`.

use crate::cases::{garver6, wind_samples};
use crate::dispatch::{solve_exact_dispatch, InvestmentPlan, PlanningContext};
use crate::experiments::{
    evaluate_reliability, plan_case, reliability_summary, run_grid, BilinearMode, ExperimentError, RunSpec,
};
use crate::network::{Case, Horizon};
use crate::planner::{bilevel_scheme, PlannerError};
use crate::reports::{
    dispatch_records, investment_records, price_records, tariff_records, write_csv, DISPATCH_HEADER,
    INVESTMENT_HEADER, PRICE_HEADER, TARIFF_HEADER,
};
use crate::solver::mps::export_mps;
use crate::solver::{backend_from_env, SolveStatus};
use crate::uncertainty::ErrorSampleSet;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tep-jcc", version, about = "Transmission expansion planning with chance-constrained market clearing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the seeded Garver 6-bus case as JSON.
    GenCase(GenCaseArgs),
    /// Draw wind forecast-error samples for a case.
    GenSamples(GenSamplesArgs),
    /// Solve one planning problem, or clear the market for a fixed plan.
    Solve(SolveArgs),
    /// Run a benchmark grid described by a TOML spec.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenCaseArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub years: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSamplesArgs {
    /// Case JSON; the seeded Garver case when omitted.
    #[arg(long)]
    pub case: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write this many test samples to `--test-out`.
    #[arg(long, default_value_t = 0, requires = "test_out")]
    pub n_test: usize,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Sla,
    La,
    Wcvar,
    Sfla,
    ExactDispatch,
}

impl SchemeArg {
    fn name(self) -> &'static str {
        match self {
            SchemeArg::Sla => "sla",
            SchemeArg::La => "la",
            SchemeArg::Wcvar => "wcvar",
            SchemeArg::Sfla => "sfla",
            SchemeArg::ExactDispatch => "exact-dispatch",
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Case JSON; the seeded Garver case when omitted.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Run spec whose first eps/theta and solver settings serve as defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Sla)]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub bits: Option<u32>,
    #[arg(long, value_enum)]
    pub bilinear: Option<BilinearArg>,
    /// Training samples CSV; drawn from the error model when omitted.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Test samples CSV for the reliability figure.
    #[arg(long)]
    pub test_samples: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Fixed plan JSON, required by `exact-dispatch`.
    #[arg(long, required_if_eq("scheme", "exact-dispatch"))]
    pub plan: Option<PathBuf>,
    /// Write the single-level model as `model.mps`.
    #[arg(long)]
    pub export: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BilinearArg {
    BinaryExpansion,
    Passthrough,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Dispatch(#[from] crate::dispatch::DispatchError),
    #[error(transparent)]
    Case(#[from] crate::network::CaseError),
    #[error(transparent)]
    Uncertainty(#[from] crate::uncertainty::UncertaintyError),
    #[error(transparent)]
    Mps(#[from] crate::solver::mps::MpsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use crate::dispatch::DispatchError as D;
        let solve = match self {
            CliError::Planner(PlannerError::Solve(_)) | CliError::Planner(PlannerError::Dispatch(D::Solve(_))) => true,
            CliError::Dispatch(D::Solve(_)) => true,
            CliError::Experiment(ExperimentError::Planner(PlannerError::Solve(_))) => true,
            CliError::Experiment(ExperimentError::Planner(PlannerError::Dispatch(D::Solve(_)))) => true,
            CliError::Experiment(ExperimentError::Dispatch(D::Solve(_))) => true,
            _ => false,
        };
        if solve {
            EXIT_BACKEND
        } else {
            EXIT_INPUT
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let res = match cli.command {
        Command::GenCase(a) => cmd_gen_case(&a).map(|_| EXIT_OK),
        Command::GenSamples(a) => cmd_gen_samples(&a).map(|_| EXIT_OK),
        Command::Solve(a) => cmd_solve(&a),
        Command::Bench(a) => cmd_bench(&a).map(|_| EXIT_OK),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_gen_case(a: &GenCaseArgs) -> Result<(), CliError> {
    if a.years == 0 {
        return Err(CliError::Input("years must be positive".into()));
    }
    let case = garver6(a.seed, Horizon { years: a.years, ..Horizon::default() });
    std::fs::write(&a.out, case.to_json())?;
    Ok(())
}

fn load_case(path: Option<&Path>, seed: u64) -> Result<Case, CliError> {
    match path {
        Some(p) => Ok(Case::load(p)?),
        None => Ok(garver6(seed, Horizon::default())),
    }
}

pub fn cmd_gen_samples(a: &GenSamplesArgs) -> Result<(), CliError> {
    let case = load_case(a.case.as_deref(), a.seed)?;
    let (train, test) = wind_samples(&case, a.n, a.n_test, a.seed)?;
    train.write_csv(&a.out)?;
    if let Some(p) = &a.test_out {
        test.write_csv(p)?;
    }
    Ok(())
}

fn solve_spec(a: &SolveArgs) -> Result<RunSpec, CliError> {
    let mut spec = match &a.spec {
        Some(p) => RunSpec::load(p)?,
        None => RunSpec::from_toml(&format!("eps = [0.05]\ntheta = [0.2]\nseeds = [{}]", a.seed))?,
    };
    if let Some(e) = a.eps {
        spec.eps = vec![e];
    }
    if let Some(t) = a.theta {
        spec.theta = vec![t];
    }
    if let Some(t) = a.time_limit {
        spec.time_limit_s = t;
    }
    if let Some(b) = a.bits {
        spec.bits = Some(b);
    }
    if let Some(n) = a.n_train {
        spec.n_train = n;
    }
    if let Some(n) = a.n_test {
        spec.n_test = n;
    }
    if let Some(b) = a.bilinear {
        spec.bilinear = match b {
            BilinearArg::BinaryExpansion => BilinearMode::BinaryExpansion,
            BilinearArg::Passthrough => BilinearMode::Passthrough,
        };
    }
    spec.seeds = vec![a.seed];
    spec.validate()?;
    Ok(spec)
}

fn solve_data(a: &SolveArgs, spec: &RunSpec) -> Result<(Case, ErrorSampleSet, ErrorSampleSet), CliError> {
    let case = match &a.case {
        Some(p) => Case::load(p)?,
        None => garver6(a.seed, Horizon { years: spec.years, ..Horizon::default() }),
    };
    let (mut train, mut test) = match &a.samples {
        Some(_) => (ErrorSampleSet { coords: vec![], values: vec![] }, ErrorSampleSet { coords: vec![], values: vec![] }),
        None => wind_samples(&case, spec.n_train, spec.n_test, a.seed)?,
    };
    if let Some(p) = &a.samples {
        train = ErrorSampleSet::read_csv(p)?;
    }
    if let Some(p) = &a.test_samples {
        test = ErrorSampleSet::read_csv(p)?;
    }
    Ok((case, train, test))
}

fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal | SolveStatus::FeasibleAtLimit => EXIT_OK,
        SolveStatus::Infeasible | SolveStatus::Unbounded => EXIT_INFEASIBLE,
        SolveStatus::Error => EXIT_BACKEND,
    }
}

fn write_plan_reports(
    ctx: &PlanningContext,
    plan: &InvestmentPlan,
    lowers: &[crate::dispatch::LowerLevel],
    blocks: &[crate::dispatch::BlockDispatch],
    out: &Path,
) -> Result<(), CliError> {
    write_csv(&investment_records(ctx, plan), &INVESTMENT_HEADER, &out.join("investment.csv"))?;
    write_csv(&tariff_records(ctx, plan), &TARIFF_HEADER, &out.join("tariff.csv"))?;
    write_csv(&dispatch_records(ctx, lowers, blocks), &DISPATCH_HEADER, &out.join("dispatch.csv"))?;
    write_csv(&price_records(blocks), &PRICE_HEADER, &out.join("prices.csv"))?;
    std::fs::write(out.join("plan.json"), serde_json::to_string_pretty(plan)?)?;
    Ok(())
}

pub fn cmd_solve(a: &SolveArgs) -> Result<i32, CliError> {
    if a.scheme == SchemeArg::Sfla {
        bilevel_scheme("sfla", 1)?;
    }
    let spec = solve_spec(a)?;
    let (eps, theta) = (spec.eps[0], spec.theta[0]);
    let (case, train, test) = solve_data(a, &spec)?;
    let ctx = PlanningContext::new(&case, &train, eps, theta)?;
    std::fs::create_dir_all(&a.out)?;
    let backend = backend_from_env();
    let cfg = spec.solver_config(a.seed);
    let t0 = Instant::now();
    let mut log = String::new();
    let _ = writeln!(log, "case = {}", case.name);
    let _ = writeln!(log, "scheme = {}", a.scheme.name());
    let _ = writeln!(log, "eps = {eps}\ntheta = {theta}\nseed = {}\nn_train = {}", a.seed, train.len());
    let _ = writeln!(log, "backend = {}", backend.name());

    let (status, plan, lowers, blocks) = if a.scheme == SchemeArg::ExactDispatch {
        let path = a.plan.as_ref().ok_or_else(|| CliError::Input("exact-dispatch needs --plan".into()))?;
        let plan: InvestmentPlan = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if plan.config.len() != ctx.years() || plan.tariff_v.len() != ctx.net.num_lines() {
            return Err(CliError::Input("plan does not match the case".into()));
        }
        let d = solve_exact_dispatch(&ctx, &plan, backend.as_ref(), &cfg)?;
        let _ = writeln!(log, "status = {}", d.status.as_str());
        if d.status.has_solution() {
            let _ = writeln!(log, "welfare_gbp_per_h = {}", d.objective);
        }
        (d.status, plan, d.lowers, d.blocks)
    } else {
        let scheme = a.scheme.name();
        if spec.bilinear == BilinearMode::Passthrough {
            // the bilinear tariff rows need a nonconvex solver; only the model is written
            if !a.export {
                return Err(CliError::Input("passthrough mode is export-only; add --export".into()));
            }
            let opts = crate::experiments::planner_options(&spec, &ctx, scheme)?;
            let asm = crate::planner::assemble(&ctx, &opts)?;
            export_mps(&asm.model, &a.out.join("model.mps"))?;
            let _ = writeln!(log, "status = exported");
            std::fs::write(a.out.join("solve.log"), log)?;
            return Ok(EXIT_OK);
        }
        let run = plan_case(&spec, &ctx, scheme, backend.as_ref(), &cfg)?;
        if a.export {
            export_mps(&run.assembled.model, &a.out.join("model.mps"))?;
        }
        let sol = run.solution;
        let _ = writeln!(log, "status = {}", sol.status.as_str());
        let _ = writeln!(log, "heuristic_s = {:.3}", run.heuristic_s);
        if !sol.message.is_empty() {
            let _ = writeln!(log, "message = {}", sol.message.replace('\n', " "));
        }
        if sol.has_solution() {
            let _ = writeln!(log, "objective_mgbp = {}", sol.objective);
            if let Some(b) = sol.best_bound {
                let _ = writeln!(log, "best_bound_mgbp = {b}");
            }
            let _ = writeln!(log, "adequacy_margin_mgbp = {}", sol.adequacy_margin());
            let _ = writeln!(log, "investment_mgbp = {}", sol.total_investment());
            let _ = writeln!(log, "big_m_flags = {}", sol.m_flags.len());
            for f in &sol.m_flags {
                let _ = writeln!(log, "big_m_flag = {f}");
            }
        }
        (sol.status, sol.plan, sol.lowers, sol.blocks)
    };
    if status.has_solution() {
        if !test.is_empty() {
            let reli = evaluate_reliability(&ctx, &plan, &blocks, &test)?;
            let (years, mean) = reliability_summary(&reli);
            let _ = writeln!(log, "reliability_pct = {mean}");
            let _ = writeln!(log, "reliability_years_pct = {years:?}");
        }
        write_plan_reports(&ctx, &plan, &lowers, &blocks, &a.out)?;
    }
    let _ = writeln!(log, "time_s = {:.3}", t0.elapsed().as_secs_f64());
    std::fs::write(a.out.join("solve.log"), log)?;
    Ok(status_code(status))
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let spec = RunSpec::load(&a.spec)?;
    let backend = std::env::var("TEPJCC_BACKEND").unwrap_or_else(|_| "highs".into());
    let rows = run_grid(&spec, &a.out, &backend)?;
    println!("{} metrics rows written to {}", rows.len(), a.out.join("metrics.csv").display());
    Ok(())
}
