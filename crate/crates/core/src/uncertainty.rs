//! Wind forecast errors: copula fitting, sampling, and quantile look-ups.
//!
//! Errors are modelled as fractions of farm capacity. Each coordinate (year,
//! operating period, farm) gets a Gaussian kernel density marginal with
//! Silverman's bandwidth, and the dependence between coordinates is a Gaussian
//! copula estimated on normal scores. Samples are converted to MW and clipped
//! so the realised output stays within `[0, capacity]`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::io::Write;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum UncertaintyError {
    #[error("need at least {need} historical rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("historical rows have inconsistent width")]
    Ragged,
    #[error("invalid risk parameters: {0}")]
    Ambiguity(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("sample file: {0}")]
    Format(String),
}

pub const MIN_HISTORY_ROWS: usize = 20;
const EIGEN_FLOOR: f64 = 1e-10;
const GRID_POINTS: usize = 4097;

/// Identifies one error coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub t: usize,
    pub s: usize,
    pub farm: usize,
}

#[derive(Debug, Clone)]
pub enum Marginal {
    PointMass(f64),
    Kde { data: Vec<f64>, bandwidth: f64, grid: Vec<f64>, cdf: Vec<f64> },
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

impl Marginal {
    pub fn fit(column: &[f64]) -> Marginal {
        let n = column.len() as f64;
        let mean = column.iter().sum::<f64>() / n;
        let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = var.sqrt();
        let mut sorted = column.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sd == 0.0 || sorted[0] == sorted[sorted.len() - 1] {
            return Marginal::PointMass(sorted[0]);
        }
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        let bandwidth = 0.9 * spread * n.powf(-0.2);
        let lo = sorted[0] - 5.0 * bandwidth;
        let hi = sorted[sorted.len() - 1] + 5.0 * bandwidth;
        let nd = std_normal();
        let grid: Vec<f64> = (0..GRID_POINTS).map(|k| lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64).collect();
        let cdf: Vec<f64> = grid.iter().map(|&x| sorted.iter().map(|&xi| nd.cdf((x - xi) / bandwidth)).sum::<f64>() / n).collect();
        Marginal::Kde { data: sorted, bandwidth, grid, cdf }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::PointMass(v) => {
                if x < *v {
                    0.0
                } else {
                    1.0
                }
            }
            Marginal::Kde { data, bandwidth, .. } => {
                let nd = std_normal();
                data.iter().map(|&xi| nd.cdf((x - xi) / bandwidth)).sum::<f64>() / data.len() as f64
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::PointMass(v) => *v,
            Marginal::Kde { grid, cdf, .. } => {
                let u = u.clamp(cdf[0], cdf[cdf.len() - 1]);
                let k = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
                let (c0, c1) = (cdf[k - 1], cdf[k]);
                let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                grid[k - 1] + w * (grid[k] - grid[k - 1])
            }
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            Marginal::PointMass(_) => None,
            Marginal::Kde { bandwidth, .. } => Some(*bandwidth),
        }
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

#[derive(Debug, Clone)]
pub struct CopulaModel {
    pub marginals: Vec<Marginal>,
    /// Normal-score correlation after the eigenvalue floor.
    pub correlation: Vec<Vec<f64>>,
    factor: DMatrix<f64>,
}

impl CopulaModel {
    pub fn dims(&self) -> usize {
        self.marginals.len()
    }

    /// Draws `n` rows of normalized errors.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dims();
        let nd = std_normal();
        (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                (0..d)
                    .map(|i| {
                        let z: f64 = (0..d).map(|j| self.factor[(i, j)] * w[j]).sum();
                        self.marginals[i].quantile(nd.cdf(z))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Fits KDE marginals and a Gaussian copula to `history` (rows x coordinates).
pub fn fit_copula(history: &[Vec<f64>]) -> Result<CopulaModel, UncertaintyError> {
    if history.len() < MIN_HISTORY_ROWS {
        return Err(UncertaintyError::TooFewRows { need: MIN_HISTORY_ROWS, got: history.len() });
    }
    let d = history[0].len();
    if history.iter().any(|r| r.len() != d) {
        return Err(UncertaintyError::Ragged);
    }
    let n = history.len();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| history.iter().map(|r| r[j]).collect()).collect();
    let marginals: Vec<Marginal> = cols.iter().map(|c| Marginal::fit(c)).collect();
    let nd = std_normal();
    let scores: Vec<Option<Vec<f64>>> = cols
        .iter()
        .zip(&marginals)
        .map(|(c, m)| match m {
            Marginal::PointMass(_) => None,
            _ => Some(ranks(c).iter().map(|r| nd.inverse_cdf(r / (n as f64 + 1.0))).collect()),
        })
        .collect();
    let mut raw = DMatrix::<f64>::identity(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            if let (Some(a), Some(b)) = (&scores[i], &scores[j]) {
                let r = pearson(a, b);
                raw[(i, j)] = r;
                raw[(j, i)] = r;
            }
        }
    }
    let eig = SymmetricEigen::new(raw);
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(EIGEN_FLOOR)).collect();
    let mut half = eig.eigenvectors.clone();
    for (k, v) in vals.iter().enumerate() {
        let s = v.sqrt();
        for i in 0..d {
            half[(i, k)] *= s;
        }
    }
    let full = &half * half.transpose();
    let scale: Vec<f64> = (0..d).map(|i| 1.0 / full[(i, i)].sqrt()).collect();
    for i in 0..d {
        for k in 0..d {
            half[(i, k)] *= scale[i];
        }
    }
    let correlation: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { full[(i, j)] * scale[i] * scale[j] }).collect())
        .collect();
    Ok(CopulaModel { marginals, correlation, factor: half })
}

/// Synthetic normalized error history with cross-farm and year-to-year dependence.
pub fn synthetic_history(coords: &[Coord], rows: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = coords.len();
    let mut cov = DMatrix::<f64>::identity(d, d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let (a, b) = (coords[i], coords[j]);
            let time = 0.6f64.powi((a.t as i32 - b.t as i32).abs() + (a.s as i32 - b.s as i32).abs());
            let space = if a.farm == b.farm { 1.0 } else { 0.5 };
            cov[(i, j)] = time * space;
        }
    }
    let chol = cov.clone().cholesky().map(|c| c.l()).unwrap_or_else(|| DMatrix::identity(d, d));
    (0..rows)
        .map(|_| {
            let w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (0..d)
                .map(|i| {
                    let z: f64 = (0..=i).map(|j| chol[(i, j)] * w[j]).sum();
                    // mildly right-skewed, scaled to roughly 12% of capacity
                    let skew = z + 0.15 * (z * z - 1.0);
                    (0.12 * skew).clamp(-0.5, 0.5)
                })
                .collect()
        })
        .collect()
}

/// Wind error samples in MW, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSampleSet {
    pub coords: Vec<Coord>,
    pub values: Vec<Vec<f64>>,
}

impl ErrorSampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coord_index(&self, c: Coord) -> Option<usize> {
        self.coords.iter().position(|&k| k == c)
    }

    /// Converts normalized rows to MW and clips so that `forecast + error` lies in `[0, capacity]`.
    pub fn from_normalized(coords: Vec<Coord>, rows: &[Vec<f64>], capacity: &[f64], forecast: &[f64]) -> Self {
        let values = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(k, &e)| (e * capacity[k]).clamp(-forecast[k], capacity[k] - forecast[k]))
                    .collect()
            })
            .collect();
        ErrorSampleSet { coords, values }
    }

    pub fn subset(&self, idx: &[usize]) -> ErrorSampleSet {
        ErrorSampleSet { coords: self.coords.clone(), values: idx.iter().map(|&i| self.values[i].clone()).collect() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), UncertaintyError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "sample_id,t,s,farm_id,error_mw")?;
        for (i, row) in self.values.iter().enumerate() {
            for (c, v) in self.coords.iter().zip(row) {
                writeln!(f, "{},{},{},{},{:.12e}", i, c.t, c.s, c.farm, v)?;
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ErrorSampleSet, UncertaintyError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let want = ["sample_id", "t", "s", "farm_id", "error_mw"];
        if headers.iter().collect::<Vec<_>>() != want {
            return Err(UncertaintyError::Format(format!("unexpected header {:?}", headers)));
        }
        let mut coords: Vec<Coord> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let p = |k: usize| -> Result<usize, UncertaintyError> {
                rec[k].trim().parse().map_err(|_| UncertaintyError::Format(format!("bad integer {}", &rec[k])))
            };
            let i = p(0)?;
            let c = Coord { t: p(1)?, s: p(2)?, farm: p(3)? };
            let v: f64 = rec[4].trim().parse().map_err(|_| UncertaintyError::Format(format!("bad value {}", &rec[4])))?;
            let k = match coords.iter().position(|&x| x == c) {
                Some(k) => k,
                None => {
                    if !values.is_empty() && i > 0 {
                        return Err(UncertaintyError::Format(format!("coordinate {:?} first seen at sample {i}", c)));
                    }
                    coords.push(c);
                    coords.len() - 1
                }
            };
            while values.len() <= i {
                values.push(Vec::new());
            }
            let row = &mut values[i];
            while row.len() <= k {
                row.push(f64::NAN);
            }
            row[k] = v;
        }
        for (i, r) in values.iter_mut().enumerate() {
            r.resize(coords.len(), f64::NAN);
            if r.iter().any(|v| v.is_nan()) {
                return Err(UncertaintyError::Format(format!("sample {i} is incomplete")));
            }
        }
        Ok(ErrorSampleSet { coords, values })
    }
}

/// Risk level, Wasserstein radius (MW) and training sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub eps: f64,
    pub theta: f64,
    pub n_train: usize,
}

impl AmbiguityConfig {
    pub fn new(eps: f64, theta: f64, n_train: usize) -> Result<Self, UncertaintyError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(UncertaintyError::Ambiguity(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(UncertaintyError::Ambiguity(format!("theta must be positive, got {theta}")));
        }
        if n_train == 0 {
            return Err(UncertaintyError::Ambiguity("need at least one training sample".into()));
        }
        Ok(AmbiguityConfig { eps, theta, n_train })
    }

    /// `floor(eps * N)`.
    pub fn k(&self) -> usize {
        risk_count(self.eps, self.n_train)
    }
}

pub fn risk_count(eps: f64, n: usize) -> usize {
    (eps * n as f64 + 1e-9).floor() as usize
}

/// The `(floor(eps N) + 1)`-th smallest of `values`.
pub fn compute_q(values: &[f64], eps: f64) -> f64 {
    assert!(!values.is_empty(), "compute_q needs samples");
    let k = risk_count(eps, values.len());
    assert!(k < values.len(), "eps * N must be below N");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[k]
}

/// Upper and lower quantile terms for one aggregated line error:
/// `q_max` over the negated samples, `q_min` over the samples themselves.
pub fn q_pair(xi: &[f64], eps: f64) -> (f64, f64) {
    let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
    (compute_q(&neg, eps), compute_q(xi, eps))
}

/// Draws a training pool and the out-of-sample test set from one model. The
/// training subset of size `n_train` is picked without replacement from the pool.
pub fn draw_train_test(
    model: &CopulaModel,
    coords: &[Coord],
    capacity: &[f64],
    forecast: &[f64],
    pool: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> (ErrorSampleSet, ErrorSampleSet) {
    let pool_rows = model.sample(pool.max(n_train), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let idx = rand::seq::index::sample(&mut rng, pool_rows.len(), n_train).into_vec();
    let train_rows: Vec<Vec<f64>> = idx.iter().map(|&i| pool_rows[i].clone()).collect();
    let test_rows = model.sample(n_test, seed ^ 0x7e57_0002);
    (
        ErrorSampleSet::from_normalized(coords.to_vec(), &train_rows, capacity, forecast),
        ErrorSampleSet::from_normalized(coords.to_vec(), &test_rows, capacity, forecast),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assume, proptest};
    use rand::Rng;

    fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn q_examples() {
        assert_eq!(compute_q(&[3.0, 1.0, 4.0, 1.0, 5.0], 0.2), 1.0);
        let (qmax, qmin) = q_pair(&[-0.2, 0.0, 0.1, 0.3], 0.25);
        assert_eq!(qmin, 0.0);
        assert_eq!(qmax, -0.1);
    }

    #[test]
    fn too_few_rows_rejected() {
        let h: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        assert!(matches!(fit_copula(&h), Err(UncertaintyError::TooFewRows { .. })));
    }

    #[test]
    fn duplicated_column_is_fully_correlated() {
        let coords: Vec<Coord> = (0..1).map(|f| Coord { t: 0, s: 0, farm: f }).collect();
        let base = synthetic_history(&coords, 100, 3);
        let h: Vec<Vec<f64>> = base.iter().map(|r| vec![r[0], r[0]]).collect();
        let m = fit_copula(&h).unwrap();
        assert!((m.correlation[0][1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_column_is_point_mass() {
        let coords = vec![Coord { t: 0, s: 0, farm: 0 }];
        let base = synthetic_history(&coords, 50, 4);
        let h: Vec<Vec<f64>> = base.iter().map(|r| vec![r[0], 0.25]).collect();
        let m = fit_copula(&h).unwrap();
        assert!(matches!(m.marginals[1], Marginal::PointMass(v) if v == 0.25));
        assert!(m.sample(20, 1).iter().all(|r| r[1] == 0.25));
    }

    #[test]
    fn marginal_matches_kde_by_ks() {
        let coords = vec![Coord { t: 0, s: 0, farm: 0 }, Coord { t: 0, s: 0, farm: 1 }];
        let hist = synthetic_history(&coords, 156, 11);
        let m = fit_copula(&hist).unwrap();
        let draws: Vec<f64> = m.sample(2000, 5).iter().map(|r| r[0]).collect();
        // independent draws straight from the kernel mixture
        let Marginal::Kde { data, bandwidth, .. } = &m.marginals[0] else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let direct: Vec<f64> = (0..2000)
            .map(|_| data[rng.gen_range(0..data.len())] + bandwidth * rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!(ks_two_sample(&draws, &direct) < 0.08);
    }

    #[test]
    fn spearman_tracks_model_correlation() {
        let coords: Vec<Coord> = (0..2).flat_map(|t| (0..2).map(move |f| Coord { t, s: 0, farm: f })).collect();
        let hist = synthetic_history(&coords, 156, 21);
        let m = fit_copula(&hist).unwrap();
        let rows = m.sample(2000, 8);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let a: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                let b: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                assert!((spearman(&a, &b) - m.correlation[i][j]).abs() < 0.1, "pair {i},{j}");
            }
        }
    }

    #[test]
    fn independent_history_gives_small_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let m = fit_copula(&h).unwrap();
        assert!(m.correlation[0][1].abs() < 0.15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let coords = vec![Coord { t: 0, s: 0, farm: 0 }, Coord { t: 1, s: 0, farm: 0 }];
        let m = fit_copula(&synthetic_history(&coords, 60, 2)).unwrap();
        assert_eq!(m.sample(10, 42), m.sample(10, 42));
        assert_ne!(m.sample(10, 42), m.sample(10, 43));
    }

    #[test]
    fn csv_round_trip_and_clip() {
        let coords = vec![Coord { t: 0, s: 0, farm: 0 }, Coord { t: 0, s: 0, farm: 1 }];
        let rows = vec![vec![0.9, -0.9], vec![0.123456789012, -0.000123456789]];
        let set = ErrorSampleSet::from_normalized(coords, &rows, &[100.0, 50.0], &[60.0, 20.0]);
        assert_eq!(set.values[0], vec![40.0, -20.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        set.write_csv(&p).unwrap();
        let back = ErrorSampleSet::read_csv(&p).unwrap();
        for (a, b) in set.values.iter().flatten().zip(back.values.iter().flatten()) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
        }
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sample_id,t,s,farm_id,error_mw\n"));
    }

    #[test]
    fn ambiguity_validation() {
        assert!(AmbiguityConfig::new(0.0, 0.1, 10).is_err());
        assert!(AmbiguityConfig::new(1.0, 0.1, 10).is_err());
        assert!(AmbiguityConfig::new(0.1, 0.0, 10).is_err());
        assert_eq!(AmbiguityConfig::new(0.05, 0.2, 50).unwrap().k(), 2);
        assert_eq!(risk_count(0.29, 100), 29);
    }

    proptest! {
        #[test]
        fn q_is_order_statistic(v in proptest::collection::vec(-100.0f64..100.0, 1..40), eps in 0.01f64..0.99) {
            prop_assume!(risk_count(eps, v.len()) < v.len());
            let q = compute_q(&v, eps);
            let k = risk_count(eps, v.len());
            let below = v.iter().filter(|&&x| x < q).count();
            let at_most = v.iter().filter(|&&x| x <= q).count();
            prop_assert!(below <= k && at_most >= k + 1);
        }

        #[test]
        fn samples_respect_clip(e in proptest::collection::vec(-2.0f64..2.0, 3), cap in 1.0f64..400.0, frac in 0.0f64..1.0) {
            let coords = vec![Coord { t: 0, s: 0, farm: 0 }];
            let rows: Vec<Vec<f64>> = e.iter().map(|x| vec![*x]).collect();
            let set = ErrorSampleSet::from_normalized(coords, &rows, &[cap], &[frac * cap]);
            for r in &set.values {
                let realised = frac * cap + r[0];
                prop_assert!(realised >= -1e-9 && realised <= cap + 1e-9);
            }
        }
    }
}
