#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tep_jcc::drjcc::{JccInstance, JccProblem, JccScheme, Norm, SafetyRow};
use tep_jcc::model::{Model, VarId};
use tep_jcc::solver::{solve_certified, HighsBackend, SolveStatus, SolverConfig};

pub const BOX: f64 = 5.0;

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random instance whose safety set contains `x = 0` with a robust margin,
/// so every scheme is feasible. `eps_of_n` picks eps from N.
pub fn random_problem(seed: u64, max_n: usize, eps_of_n: impl Fn(&mut ChaCha8Rng, usize) -> f64) -> JccProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=3);
    let p = rng.gen_range(1..=4);
    let n = rng.gen_range(2..=max_n);
    let eps = eps_of_n(&mut rng, n);
    let theta = rng.gen_range(0.01..0.2);
    let samples: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let rows = (0..p)
        .map(|_| {
            let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if l2(&b) < 0.1 {
                b[0] = 1.0;
            }
            let min_bx = samples.iter().map(|s| dot(&b, s)).fold(f64::INFINITY, f64::min);
            let d = theta / eps * l2(&b) - min_bx + rng.gen_range(0.1..2.0);
            SafetyRow { a, b, d }
        })
        .collect();
    let cost = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    JccProblem {
        instance: JccInstance { rows, samples, eps, theta, norm: Norm::L2 },
        cost,
        lower: vec![-BOX; dim],
        upper: vec![BOX; dim],
    }
}

/// Bound on `|s - r_i|` and on every normalised row value over the box.
pub fn exact_big_m(p: &JccProblem) -> f64 {
    let inst = &p.instance;
    let mut m: f64 = 0.0;
    for r in &inst.rows {
        let ax: f64 = r.a.iter().map(|a| a.abs() * BOX).sum();
        for s in &inst.samples {
            m = m.max((dot(&r.b, s).abs() + r.d.abs() + ax) / l2(&r.b));
        }
    }
    4.0 * m + 1.0
}

pub fn cfg() -> SolverConfig {
    SolverConfig::default()
}

pub fn solve_model(m: &Model, x: &[VarId]) -> (SolveStatus, Option<f64>, Vec<f64>) {
    let r = solve_certified(&HighsBackend, m, &cfg(), None).expect("backend");
    let xs = if r.status.has_solution() { x.iter().map(|v| r.primal[v.0]).collect() } else { vec![] };
    (r.status, r.objective, xs)
}

pub fn solve(p: &JccProblem, s: &JccScheme) -> (SolveStatus, Option<f64>, Vec<f64>) {
    let (m, x) = p.build(s).expect("build");
    solve_model(&m, &x)
}

/// Exact feasibility written out directly: sample distances to the unsafe
/// set, then `max_s eps N s - sum_i (s - dist_i)^+ >= theta N` checked at the
/// breakpoints of the concave piecewise-linear inner function.
pub fn exact_margin_oracle(inst: &JccInstance, x: &[f64]) -> f64 {
    let n = inst.samples.len() as f64;
    let dist: Vec<f64> = inst
        .samples
        .iter()
        .map(|xi| {
            inst.rows
                .iter()
                .map(|r| (dot(&r.b, xi) + r.d - dot(&r.a, x)) / l2(&r.b))
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .collect();
    let value = |s: f64| inst.eps * n * s - dist.iter().map(|d| (s - d).max(0.0)).sum::<f64>();
    let best = dist.iter().copied().chain([0.0]).map(value).fold(f64::NEG_INFINITY, f64::max);
    best - inst.theta * n
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
