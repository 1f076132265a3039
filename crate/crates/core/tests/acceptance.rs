//! Acceptance criteria. Each test prints one `A<n> PASS|FAIL` line.
//!
//! A7, A8, A9, A11 and A12 solve Garver grids and take over an hour on one
//! core; they are ignored by default and run with
//! `cargo test --test acceptance -- --ignored --nocapture --test-threads=1`.
//! Their cells are stored under `target/acceptance/` (or
//! `TEPJCC_ACCEPTANCE_DIR`) and reused by later runs.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;
use tep_jcc::cases::{garver6, two_bus, wind_samples};
use tep_jcc::dispatch::{
    merchandising_surplus, ms_substituted, solve_direct, InvestmentPlan, LowerLevel, LowerScheme, LowerVarKind,
    PlanningContext, RowRole,
};
use tep_jcc::drjcc::{emit_sfla, JccInstance, JccScheme, Norm, SafetyRow, TAG_SAMPLE};
use tep_jcc::experiments::{load_record, median_time_ratio, metrics_rows, run_grid, CellRecord, RunSpec};
use tep_jcc::model::{Model, ObjSense};
use tep_jcc::network::{Case, Horizon};
use tep_jcc::planner::{assemble, solve_plan, PlannerOptions};
use tep_jcc::solver::{HighsBackend, SolveStatus};

fn report(id: u32, ok: bool, detail: String) {
    println!("A{id} {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "A{id}: {detail}");
}

#[test]
fn a01_sla_is_exact_for_small_eps() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for seed in 0..50 {
        let p = random_problem(1000 + seed, 10, |rng, n| if rng.gen_bool(0.5) { 1.0 / n as f64 } else { rng.gen_range(0.2..1.0) / n as f64 });
        let n = p.instance.samples.len();
        let (s1, o1, _) = solve(&p, &JccScheme::Sla { kappa: vec![1.0; n] });
        let (s2, o2, _) = solve(&p, &JccScheme::Exact { big_m: exact_big_m(&p), strengthened: false });
        if s1 != SolveStatus::Optimal || s2 != SolveStatus::Optimal {
            ok = false;
            continue;
        }
        let (o1, o2) = (o1.unwrap(), o2.unwrap());
        worst = worst.max((o1 - o2).abs());
        ok &= close(o1, o2, 1e-6);
    }
    let secs = t0.elapsed().as_secs_f64();
    report(1, ok && secs < 60.0, format!("50 instances, max |SLA - exact| = {worst:.2e}, {secs:.1} s"));
}

#[test]
fn a02_strengthening_never_cuts() {
    let mut worst: f64 = 0.0;
    let (mut feasible, mut ok) = (0, true);
    for seed in 0..50 {
        let p = random_problem(2000 + seed, 10, |rng, _| rng.gen_range(0.05..0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kappa: Vec<f64> = (0..p.instance.samples.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let (s1, o1, _) = solve(&p, &JccScheme::Sla { kappa: kappa.clone() });
        let (s2, o2, _) = solve(&p, &JccScheme::La { kappa });
        ok &= s1 == s2;
        if s1 == SolveStatus::Optimal && s2 == SolveStatus::Optimal {
            feasible += 1;
            worst = worst.max((o1.unwrap() - o2.unwrap()).abs());
            ok &= close(o1.unwrap(), o2.unwrap(), 1e-6);
        }
    }
    report(2, ok, format!("50 instances ({feasible} feasible), max |SLA - LA| = {worst:.2e}"));
}

#[test]
fn a03_sla_points_are_exactly_feasible() {
    let (mut points, mut ok) = (0, true);
    let mut worst = f64::INFINITY;
    for seed in 0..25 {
        let p = random_problem(3000 + seed, 10, |rng, _| rng.gen_range(0.05..0.4));
        let n = p.instance.samples.len();
        let mut rng = ChaCha8Rng::seed_from_u64(77 + seed);
        for _ in 0..4 {
            let mut q = p.clone();
            q.cost = (0..q.cost.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (st, _, x) = solve(&q, &JccScheme::Sla { kappa: vec![1.0; n] });
            if st != SolveStatus::Optimal {
                ok = false;
                continue;
            }
            points += 1;
            let margin = exact_margin_oracle(&q.instance, &x);
            worst = worst.min(margin);
            // the same point through the mixed-integer model
            let mut fixed = q.clone();
            fixed.lower = x.clone();
            fixed.upper = x.clone();
            let (sx, _, _) = solve(&fixed, &JccScheme::Exact { big_m: exact_big_m(&q), strengthened: false });
            ok &= margin >= -1e-6 && sx == SolveStatus::Optimal;
        }
    }
    report(3, ok && points == 100, format!("{points} SLA points, min exact margin {worst:.2e}, all accepted by the MIP"));
}

#[test]
fn a04_weighted_cvar_matches_sla() {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for seed in 0..30 {
        let p = random_problem(4000 + seed, 10, |rng, _| rng.gen_range(0.05..0.5));
        let inv: Vec<f64> = p.instance.rows.iter().map(|r| 1.0 / l2(&r.b)).collect();
        let total: f64 = inv.iter().sum();
        let w: Vec<f64> = inv.iter().map(|v| v / total).collect();
        let (s1, o1, _) = solve(&p, &JccScheme::Wcvar { weights: w });
        let (s2, o2, _) = solve(&p, &JccScheme::Sla { kappa: vec![1.0; p.instance.samples.len()] });
        if s1 != SolveStatus::Optimal || s2 != SolveStatus::Optimal {
            ok = false;
            continue;
        }
        worst = worst.max((o1.unwrap() - o2.unwrap()).abs());
        ok &= close(o1.unwrap(), o2.unwrap(), 1e-6);
    }
    report(4, ok, format!("30 instances, max |W-CVaR - SLA| = {worst:.2e}"));
}

/// Valid configuration with the most added circuits.
fn widest_config(ctx: &PlanningContext) -> usize {
    ctx.configs.iter().filter(|c| c.valid).max_by_key(|c| c.circuits.iter().sum::<u32>()).unwrap().id
}

fn garver_plan(ctx: &PlanningContext, step: f64) -> InvestmentPlan {
    let c = widest_config(ctx);
    let mut plan = InvestmentPlan::without_tariffs(vec![c; ctx.years()], vec![(0, 3, 2)], ctx.net.num_lines());
    for l in 0..ctx.net.num_lines() {
        plan.tariff_v[l] = step * (l % 3) as f64;
    }
    plan
}

fn participant_quantities(ctx: &PlanningContext, ll: &LowerLevel, values: &[f64]) -> Vec<f64> {
    ctx.case
        .participants
        .iter()
        .filter_map(|p| {
            [LowerVarKind::Gen(p.id), LowerVarKind::Dem(p.id), LowerVarKind::Sched(p.id)]
                .into_iter()
                .find_map(|k| ll.var_index(k))
                .map(|j| values[j])
        })
        .collect()
}

fn perturb_bids(case: &mut Case, seed: u64, size: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut case.participants {
        p.bid_gbp_per_mwh += rng.gen_range(-size..size);
    }
}

#[test]
fn a05_kkt_matches_direct_dispatch() {
    let mut details = Vec::new();
    let mut ok = true;
    for perturbed in [false, true] {
        let mut case = garver6(1, Horizon::default());
        if perturbed {
            perturb_bids(&mut case, 5, 1e-4);
        }
        let (train, _) = wind_samples(&case, 20, 0, 1).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.05, 0.2).unwrap();
        for scheme in [LowerScheme::sla(20), LowerScheme::la(20), LowerScheme::Wcvar] {
            let mut opts = PlannerOptions::new(&ctx, scheme.clone()).unwrap();
            let plan = garver_plan(&ctx, opts.tariff.step().unwrap());
            opts.fixed_plan = Some(plan.clone());
            opts.revenue_rows = false;
            let direct = solve_direct(&ctx, &plan, &scheme, &HighsBackend, &cfg(), None).unwrap();
            let (sol, _) = solve_plan(&ctx, &opts, &HighsBackend, &cfg(), None).unwrap();
            if direct.status != SolveStatus::Optimal || sol.status != SolveStatus::Optimal {
                ok = false;
                details.push(format!("{}: direct {:?} kkt {:?}", scheme.name(), direct.status, sol.status));
                continue;
            }
            let kkt_obj: f64 = sol.blocks.iter().map(|b| b.welfare).sum();
            let rel = (kkt_obj - direct.objective).abs() / direct.objective.abs().max(1.0);
            ok &= rel <= 1e-5;
            let mut dq: f64 = 0.0;
            for (k, ll) in direct.lowers.iter().enumerate() {
                let a = participant_quantities(&ctx, ll, &direct.blocks[k].values);
                let b = participant_quantities(&ctx, &sol.lowers[k], &sol.blocks[k].values);
                dq = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(dq, f64::max);
            }
            if perturbed {
                ok &= dq <= 1e-4;
            }
            details.push(format!("{}{}: rel {rel:.1e} dq {dq:.1e}", scheme.name(), if perturbed { "*" } else { "" }));
        }
    }
    report(5, ok, details.join(", "));
}

/// `sum_b pi_b (d - g - w)` computed from the cleared quantities and prices.
fn surplus_from_prices(ll: &LowerLevel, values: &[f64], lmp: &[f64]) -> f64 {
    ll.vars
        .iter()
        .enumerate()
        .map(|(j, v)| match (v.kind, v.bus) {
            (LowerVarKind::Dem(_), Some(b)) => lmp[b] * values[j],
            (LowerVarKind::Gen(_) | LowerVarKind::Sched(_), Some(b)) => -lmp[b] * values[j],
            _ => 0.0,
        })
        .sum()
}

#[test]
fn a06_surplus_substitution_identity() {
    let psi = 8760e-6;
    let mut instances: Vec<(PlanningContext, InvestmentPlan)> = Vec::new();
    for (k, cap) in [40.0, 60.0, 80.0, 100.0, 120.0].into_iter().enumerate() {
        let case = two_bus(cap, 50.0 + 25.0 * k as f64, 1);
        let (train, _) = wind_samples(&case, 10, 0, k as u64 + 1).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.1, 0.05).unwrap();
        let mut plan = InvestmentPlan::without_tariffs(vec![ctx.valid_configs()[0]], vec![], 1);
        plan.tariff_v[0] = 0.5 * k as f64;
        instances.push((ctx, plan));
    }
    for seed in 1..=5u64 {
        let case = garver6(seed, Horizon::default());
        let (train, _) = wind_samples(&case, 20, 0, seed).unwrap();
        let ctx = PlanningContext::new(&case, &train, 0.05, 0.2).unwrap();
        let plan = garver_plan(&ctx, 0.25 * seed as f64);
        instances.push((ctx, plan));
    }
    let (mut worst, mut congested, mut ok) = (0.0f64, 0, true);
    for (ctx, plan) in &instances {
        let d = solve_direct(ctx, plan, &LowerScheme::sla(ctx.n()), &HighsBackend, &cfg(), None).unwrap();
        if d.status != SolveStatus::Optimal {
            ok = false;
            continue;
        }
        let mut spread: f64 = 0.0;
        for (ll, b) in d.lowers.iter().zip(&d.blocks) {
            let oracle = surplus_from_prices(ll, &b.values, &b.lmp) * psi;
            let sub = ms_substituted(ctx, ll, b, &|bus| plan.tariff_at_bus(ctx, b.t, bus)) * psi;
            worst = worst.max((oracle - sub).abs()).max((merchandising_surplus(ll, b) * psi - oracle).abs());
            let (lo, hi) = b.lmp.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &p| (l.min(p), h.max(p)));
            spread = spread.max(hi - lo);
        }
        if spread > 1e-6 {
            congested += 1;
        }
    }
    ok &= worst <= 1e-4 && congested == instances.len();
    report(6, ok, format!("{} instances ({congested} congested), max |MS_sub - MS_dual| = {worst:.2e} MGBP", instances.len()));
}

/// Per-block instance with both directions of every line limit.
fn line_instance(ctx: &PlanningContext, plan: &InvestmentPlan, t: usize, s: usize) -> JccInstance {
    let c = plan.config[t];
    let nl = ctx.net.num_lines();
    let xi = &ctx.scen.xi[&(t, s, c)];
    let mut rows = Vec::new();
    for l in 0..nl {
        for sign in [1.0, -1.0] {
            let mut a = vec![0.0; nl];
            let mut b = vec![0.0; nl];
            a[l] = sign;
            b[l] = -sign;
            rows.push(SafetyRow { a, b, d: ctx.capacity(l, c, 0.0) });
        }
    }
    let samples = (0..ctx.n()).map(|i| (0..nl).map(|l| xi[l][i]).collect()).collect();
    JccInstance { rows, samples, eps: ctx.eps, theta: ctx.theta, norm: Norm::L2 }
}

#[test]
fn a10_row_bookkeeping() {
    let case = garver6(1, Horizon::default());
    let (train, _) = wind_samples(&case, 50, 0, 1).unwrap();
    let ctx = PlanningContext::new(&case, &train, 0.05, 0.2).unwrap();
    let nl = ctx.net.num_lines();
    let k = (ctx.eps * ctx.n() as f64 + 1e-9).floor() as usize;
    let plan = garver_plan(&ctx, 0.0);
    let mut ok = true;
    let mut sfla_max = 0;
    for t in 0..ctx.years() {
        for s in 0..ctx.periods() {
            let sla = ctx.lower_level(t, s, &LowerScheme::sla(ctx.n())).unwrap();
            let la = ctx.lower_level(t, s, &LowerScheme::la(ctx.n())).unwrap();
            ok &= sla.rows.len() == la.rows.len() + 2 * nl;
            ok &= sla.count_role(|r| matches!(r, RowRole::Quantile { .. })) == 2 * nl;
            let inst = line_instance(&ctx, &plan, t, s);
            let mut m = Model::new("sfla", ObjSense::Minimize);
            let x: Vec<_> = (0..nl).map(|l| m.continuous(format!("f{l}"), -1e4, 1e4)).collect();
            let blk = emit_sfla(&mut m, &inst, &x, &vec![1.0; ctx.n()], "sfla").unwrap();
            ok &= blk.sample_rows == m.count_rows_tagged(TAG_SAMPLE) && blk.sample_rows <= k * 2 * nl;
            sfla_max = sfla_max.max(blk.sample_rows);
        }
    }
    let opts_sla = PlannerOptions::new(&ctx, LowerScheme::sla(ctx.n())).unwrap();
    let opts_la = PlannerOptions::new(&ctx, LowerScheme::la(ctx.n())).unwrap();
    let (a, b) = (assemble(&ctx, &opts_sla).unwrap(), assemble(&ctx, &opts_la).unwrap());
    let blocks = ctx.years() * ctx.periods();
    let q = a.model.count_rows_tagged(tep_jcc::dispatch::TAG_JCC_QUANTILE);
    ok &= q == 2 * nl * blocks && b.model.count_rows_tagged(tep_jcc::dispatch::TAG_JCC_QUANTILE) == 0;
    report(
        10,
        ok,
        format!("SLA = LA + {} rows per block; SFLA sample rows <= {} (max {sfla_max}); KKT model quantile rows {q}", 2 * nl, k * 2 * nl),
    );
}

// Garver grid criteria.

fn time_limit() -> f64 {
    std::env::var("TEPJCC_ACCEPTANCE_LIMIT").ok().and_then(|v| v.parse().ok()).unwrap_or(90.0)
}

fn grid_dir() -> PathBuf {
    let base = std::env::var("TEPJCC_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../target/acceptance")));
    base.join(format!("limit{}", time_limit()))
}

fn grid_spec(eps: &[f64], theta: &[f64], seeds: &[u64], schemes: &[&str]) -> RunSpec {
    let mut s = RunSpec::from_toml("eps = [0.05]\ntheta = [0.2]\nseeds = [1]").unwrap();
    s.eps = eps.to_vec();
    s.theta = theta.to_vec();
    s.seeds = seeds.to_vec();
    s.schemes = schemes.iter().map(|x| x.to_string()).collect();
    s.n_train = 50;
    s.n_test = 4000;
    s.years = 2;
    s.time_limit_s = time_limit();
    s.verify_big_m = true;
    s
}

fn run(spec: &RunSpec) -> Vec<CellRecord> {
    let dir = grid_dir();
    let backend = std::env::var("TEPJCC_BACKEND").unwrap_or_else(|_| "highs".into());
    run_grid(spec, &dir, &backend).unwrap();
    spec.cells().iter().map(|k| load_record(&dir, k).expect("cell record")).collect()
}

fn reliability_spec() -> RunSpec {
    grid_spec(&[0.05, 0.01], &[0.1, 0.2, 0.3], &[1, 2], &["sla"])
}

fn objective_spec() -> RunSpec {
    grid_spec(&[0.025], &[0.05], &[1, 2, 3, 4, 5], &["sla", "la", "wcvar"])
}

#[test]
#[ignore]
fn a07_reliability_band() {
    let recs = run(&grid_spec(&[0.05], &[0.2], &[1], &["sla"]));
    let r = &recs[0];
    let floor = 100.0 * (1.0 - 0.05 - 0.02);
    let ok = r.solvable && r.reli_years.len() == 2 && r.reli_years.iter().all(|&v| v >= floor);
    report(7, ok, format!("status {}, reliability per year {:?} (floor {floor:.0}%)", r.status, r.reli_years));
}

#[test]
#[ignore]
fn a08_objective_band() {
    let recs = run(&grid_spec(&[0.025], &[0.05], &[1, 2, 3, 4, 5], &["sla"]));
    let objs: Vec<f64> = recs.iter().filter_map(|r| r.objective).collect();
    let mean = objs.iter().sum::<f64>() / objs.len().max(1) as f64;
    let ok = objs.len() == recs.len() && (60.0..=130.0).contains(&mean);
    let per: Vec<String> = objs.iter().map(|o| format!("{o:.2}")).collect();
    report(8, ok, format!("mean SLA objective {mean:.2} MGBP over {} seeds [{}], band [60, 130]", objs.len(), per.join(", ")));
}

#[test]
#[ignore]
fn a09_reliability_grows_with_radius() {
    let spec = reliability_spec();
    let recs = run(&spec);
    let mut inversions = 0;
    let mut lines = Vec::new();
    for &eps in &spec.eps {
        let mut series = Vec::new();
        for &theta in &spec.theta {
            let vals: Vec<f64> = recs
                .iter()
                .filter(|r| r.key.eps == eps && r.key.theta == theta)
                .filter_map(|r| r.reli_mean)
                .collect();
            series.push((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64));
        }
        let known: Vec<f64> = series.iter().flatten().copied().collect();
        inversions += known.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
        let txt: Vec<String> = series.iter().map(|v| v.map(|x| format!("{x:.2}")).unwrap_or("-".into())).collect();
        lines.push(format!("eps {eps}: [{}]", txt.join(", ")));
    }
    let solved = recs.iter().filter(|r| r.solvable).count();
    report(9, inversions <= 1, format!("{}; {inversions} inversions, {solved}/{} cells solved", lines.join("; "), recs.len()));
}

#[test]
#[ignore]
fn a11_big_m_stable() {
    let mut recs = run(&grid_spec(&[0.05], &[0.2], &[1], &["sla"]));
    recs.extend(run(&reliability_spec()));
    recs.extend(run(&objective_spec()));
    let accepted: Vec<&CellRecord> = recs.iter().filter(|r| r.solvable).collect();
    let suspect: Vec<String> = accepted.iter().filter(|r| r.m_suspect()).map(|r| r.key.id()).collect();
    let worst = accepted.iter().filter_map(|r| r.m_rerun_rel).fold(0.0, f64::max);
    let ok = !accepted.is_empty() && suspect.is_empty() && accepted.iter().all(|r| r.m_rerun_rel.is_some_and(|v| v < 1e-4));
    report(11, ok, format!("{} accepted solves, max 10xM change {worst:.2e}, suspect {suspect:?}", accepted.len()));
}

#[test]
#[ignore]
fn a12_timing_report() {
    let spec = objective_spec();
    let recs = run(&spec);
    let rows = metrics_rows(&recs, spec.time_limit_s, spec.mip_gap);
    let la = median_time_ratio(&rows, "sla", "la");
    let wc = median_time_ratio(&rows, "sla", "wcvar");
    let med = |s: &str| tep_jcc::experiments::median(&rows.iter().filter(|r| r.scheme == s).map(|r| r.time_s).collect::<Vec<_>>());
    let fastest = ["sla", "la", "wcvar"].iter().map(|s| med(s)).fold(f64::INFINITY, f64::min);
    let soft = med("sla") <= 1.5 * fastest;
    let detail = format!("median Time ratio SLA:LA {la:?}, SLA:W-CVaR {wc:?}; SLA median {:.1} s, fastest {fastest:.1} s", med("sla"));
    // informational: a slow SLA only warns
    println!("A12 {} {detail}", if soft { "PASS" } else { "WARN" });
}
