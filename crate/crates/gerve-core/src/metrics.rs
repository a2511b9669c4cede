//! Mode-estimation metrics, synthetic mixture generators, and the seeded
//! replicate benchmark runner with per-metric hyperparameter selection.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bootstrap::hungarian;
use crate::error::{CoreError, Result};
use crate::mixture::{Domain, ParameterBounds};
use crate::modes::{resolve_modes, PruneMergeConfig};
use crate::objective::EntropyConfig;
use crate::optimizer::{
    fit, fit_fixed_cov, CovarianceStructure, FitConfig, FixedCovConfig, FixedCovStep, MixtureInit,
    Schedule, StepSizeSchedule, TemperatureSchedule,
};
use crate::points::Points;
use crate::seed::{self, tags};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Ground-truth mixture for synthetic sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl MixtureSpec {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if weights.len() != means.len() || means.len() != covariances.len() || means.is_empty() {
            return Err(CoreError::InvalidInput("spec lists must be non-empty and equal length".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w <= 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidInput("weights must be a positive simplex".into()));
        }
        let d = means[0].len();
        for (m, c) in means.iter().zip(&covariances) {
            if m.len() != d || c.nrows() != d || c.ncols() != d {
                return Err(CoreError::DimensionMismatch { expected: d, got: m.len() });
            }
            if Cholesky::new(c.clone()).is_none() {
                return Err(CoreError::InvalidInput("covariances must be SPD".into()));
            }
        }
        Ok(Self { weights, means, covariances })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }
}

/// Three equally weighted isotropic components at the nodes of an
/// equilateral triangle: `(0, 1)`, `(cos π/6, −0.5)`, `(−cos π/6, −0.5)`.
pub fn triangle_spec(sigma2: f64) -> MixtureSpec {
    let cos30 = (std::f64::consts::PI / 6.0).cos();
    let means = vec![
        DVector::from_vec(vec![0.0, 1.0]),
        DVector::from_vec(vec![cos30, -0.5]),
        DVector::from_vec(vec![-cos30, -0.5]),
    ];
    let cov = DMatrix::from_diagonal_element(2, 2, sigma2);
    MixtureSpec::new(vec![1.0 / 3.0; 3], means, vec![cov.clone(), cov.clone(), cov]).unwrap()
}

/// Two well-separated isotropic blobs, handy for bootstrap smoke tests.
pub fn two_blob_spec(separation: f64, sigma2: f64) -> MixtureSpec {
    let half = separation / 2.0;
    let cov = DMatrix::from_diagonal_element(2, 2, sigma2);
    MixtureSpec::new(
        vec![0.5, 0.5],
        vec![DVector::from_vec(vec![-half, 0.0]), DVector::from_vec(vec![half, 0.0])],
        vec![cov.clone(), cov],
    )
    .unwrap()
}

/// Draws `n` i.i.d. points: component index from the weights, then a
/// multivariate normal draw. Bitwise reproducible for a fixed seed.
pub fn gen_mixture_sample(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Points> {
    if n == 0 {
        return Err(CoreError::InvalidInput("n must be ≥ 1".into()));
    }
    let d = spec.dim();
    let chols: Vec<DMatrix<f64>> = spec
        .covariances
        .iter()
        .map(|c| Cholesky::new(c.clone()).expect("validated SPD").l())
        .collect();
    let mut cum = Vec::with_capacity(spec.weights.len());
    let mut acc = 0.0;
    for w in &spec.weights {
        acc += w;
        cum.push(acc);
    }
    let mut rng = seed::rng(seed::derive(seed, tags::GENERATE));
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u: f64 = rng.gen_range(0.0..1.0);
        let k = cum.iter().position(|c| u < *c).unwrap_or(spec.weights.len() - 1);
        let eps = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &spec.means[k] + &chols[k] * eps;
        data.extend(x.iter());
    }
    Points::from_flat(d, data)
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Number of true modes recovered within a strict tolerance:
/// `Σ_i 1{ min_k ‖û_k − u_i‖ < ε }`.
pub fn mode_recovery(estimates: &[DVector<f64>], truth: &[DVector<f64>], eps: f64) -> usize {
    truth
        .iter()
        .filter(|t| {
            estimates
                .iter()
                .map(|e| (*t - e).norm())
                .fold(f64::INFINITY, f64::min)
                < eps
        })
        .count()
}

/// Minimum assignment cost between truth and estimates over injections of
/// the smaller list into the larger (the usual case is `K ≥ I`).
pub fn hungarian_sum(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    if estimates.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| estimates.iter().map(|e| (t - e).norm()).collect())
        .collect();
    hungarian(&cost).map(|a| a.cost).unwrap_or(f64::INFINITY)
}

/// Aggregate distance from each estimate to its closest true mode.
pub fn nearest_neighbor_sum(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    estimates
        .iter()
        .map(|e| truth.iter().map(|t| (e - t).norm()).fold(f64::INFINITY, f64::min))
        .sum()
}

// ---------------------------------------------------------------------------
// Benchmark runner
// ---------------------------------------------------------------------------

/// One hyperparameter point for the mixture method: initial covariance
/// scale, annealing start/exponent, and the temperature-coupled step rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GerveHyper {
    pub sigma2_init: f64,
    pub omega1: f64,
    pub beta: f64,
    pub rho1: f64,
    pub gamma: f64,
}

/// A benchmark method with its hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BenchMethod {
    /// Annealed mixture fits resolved to modes. The `feature-significance`
    /// baseline from the comparison literature is intentionally not bundled;
    /// adding a method means adding a variant here.
    Gerve {
        name: String,
        hypers: Vec<GerveHyper>,
        max_iters: usize,
        batch_size: usize,
        entropy_samples: usize,
        bounds: ParameterBounds,
        prune_merge: PruneMergeConfig,
    },
    /// Mean-shift via the adaptive fixed-covariance loop, launched from `K`
    /// sample points, duplicates collapsed at `collapse_radius`.
    MeanShift {
        name: String,
        bandwidths: Vec<f64>,
        max_iters: usize,
        batch_size: usize,
        collapse_radius: f64,
    },
}

impl BenchMethod {
    pub fn name(&self) -> &str {
        match self {
            BenchMethod::Gerve { name, .. } => name,
            BenchMethod::MeanShift { name, .. } => name,
        }
    }

    fn hyper_count(&self) -> usize {
        match self {
            BenchMethod::Gerve { hypers, .. } => hypers.len(),
            BenchMethod::MeanShift { bandwidths, .. } => bandwidths.len(),
        }
    }

    fn hyper_label(&self, idx: usize) -> String {
        match self {
            BenchMethod::Gerve { hypers, .. } => {
                let h = &hypers[idx];
                format!(
                    "s1={},w1={},b={},r1={},g={}",
                    h.sigma2_init, h.omega1, h.beta, h.rho1, h.gamma
                )
            }
            BenchMethod::MeanShift { bandwidths, .. } => format!("h={}", bandwidths[idx]),
        }
    }
}

/// A full benchmark definition: data model, grids, methods, replicate
/// count, and the strict recovery tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub spec: MixtureSpec,
    pub n_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub n_rep: usize,
    pub methods: Vec<BenchMethod>,
    pub eps: f64,
    pub seed: u64,
}

/// One replicate outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub k: usize,
    pub hyper: usize,
    pub hyper_label: String,
    pub rep: usize,
    pub mr: f64,
    pub hm: f64,
    pub nn: f64,
    /// Set when fewer estimates than true modes forced the smaller-side
    /// assignment in `hm`.
    pub hm_undersized: bool,
    pub error: Option<String>,
}

/// Per-(method, n, k, metric) aggregate at the best hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub method: String,
    pub n: usize,
    pub k: usize,
    pub metric: String,
    pub best_hyper: usize,
    pub hyper_label: String,
    pub aggregate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<BenchSummary>,
}

/// Number of bootstrap resamples behind each median confidence interval.
pub const MEDIAN_CI_RESAMPLES: usize = 5000;

/// Runs every (method × N × K × hyperparameter × replicate) cell with
/// per-cell seeds, then aggregates per metric at the best hyperparameter:
/// means with 95% t-intervals for recovery and nearest-neighbour sums,
/// medians with bootstrap-percentile intervals for the assignment cost.
/// Cell failures are recorded, not fatal. Deterministic for a fixed seed.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResult> {
    if cfg.n_grid.is_empty() || cfg.k_grid.is_empty() || cfg.n_rep == 0 || cfg.methods.is_empty() {
        return Err(CoreError::InvalidInput("benchmark grids must be non-empty".into()));
    }
    let truth = &cfg.spec.means;

    // Cell index space: (method, n, k, hyper, rep).
    let mut cells = Vec::new();
    for (mi, method) in cfg.methods.iter().enumerate() {
        for (ni, &n) in cfg.n_grid.iter().enumerate() {
            for &k in &cfg.k_grid {
                for h in 0..method.hyper_count() {
                    for rep in 0..cfg.n_rep {
                        cells.push((mi, ni, n, k, h, rep));
                    }
                }
            }
        }
    }

    let rows: Vec<BenchRow> = cells
        .par_iter()
        .map(|&(mi, ni, n, k, h, rep)| {
            let method = &cfg.methods[mi];
            // Data are shared across methods, k, and hyperparameters: the
            // sample seed depends only on (n, rep).
            let data_seed = seed::derive2(cfg.seed, tags::GENERATE, (ni * 1_000_003 + rep) as u64);
            let cell_seed = seed::derive2(
                cfg.seed,
                tags::CELL,
                ((((mi * 37 + ni) * 41 + k) * 43 + h) * 47 + rep) as u64,
            );
            let mut row = BenchRow {
                method: method.name().to_string(),
                n,
                k,
                hyper: h,
                hyper_label: method.hyper_label(h),
                rep,
                mr: 0.0,
                hm: f64::NAN,
                nn: f64::NAN,
                hm_undersized: false,
                error: None,
            };
            match run_cell(cfg, method, n, k, h, data_seed, cell_seed) {
                Ok(estimates) => {
                    row.mr = mode_recovery(&estimates, truth, cfg.eps) as f64;
                    row.hm = hungarian_sum(&estimates, truth);
                    row.nn = nearest_neighbor_sum(&estimates, truth);
                    row.hm_undersized = estimates.len() < truth.len();
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();

    let summaries = summarise(cfg, &rows);
    Ok(BenchResult { rows, summaries })
}

fn run_cell(
    cfg: &BenchConfig,
    method: &BenchMethod,
    n: usize,
    k: usize,
    hyper: usize,
    data_seed: u64,
    cell_seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let samples = gen_mixture_sample(&cfg.spec, n, data_seed)?;
    match method {
        BenchMethod::Gerve {
            hypers,
            max_iters,
            batch_size,
            entropy_samples,
            bounds,
            prune_merge,
            ..
        } => {
            let h = &hypers[hyper];
            let fit_cfg = FitConfig {
                max_iters: *max_iters,
                batch_size: *batch_size,
                bounds: *bounds,
                schedule: Schedule {
                    temperature: TemperatureSchedule::Power { omega1: h.omega1, beta: h.beta },
                    stepsize: StepSizeSchedule::TemperatureCoupled {
                        rho1: h.rho1,
                        omega1: h.omega1,
                        gamma: h.gamma,
                    },
                },
                ecfg: EntropyConfig { n_entropy_samples: *entropy_samples, seed: 0 },
                domain: Domain::symmetric_box(cfg.spec.dim(), bounds.mu_max)?,
                structure: CovarianceStructure::Full,
                early_stop: None,
                seed: cell_seed,
                record_trajectory: false,
                snapshot_every: 0,
            };
            let init = MixtureInit::RandomInDataBox { sigma2: h.sigma2_init };
            let res = fit(&samples, k, &init, &fit_cfg)?;
            let modes = resolve_modes(&res.final_state, prune_merge, h.sigma2_init, bounds);
            Ok(modes.into_iter().map(|m| m.center).collect())
        }
        BenchMethod::MeanShift { bandwidths, max_iters, batch_size, collapse_radius, .. } => {
            let h = bandwidths[hyper];
            let mut rng = seed::rng(seed::derive(cell_seed, tags::MEANSHIFT_INIT));
            let mut finals: Vec<DVector<f64>> = Vec::with_capacity(k);
            for j in 0..k {
                let start = samples.row(rng.gen_range(0..samples.len())).to_vec();
                let ms_cfg = FixedCovConfig {
                    max_iters: *max_iters,
                    batch_size: *batch_size,
                    step: FixedCovStep::AdaptiveMeanShift,
                    mean_tol: Some(1e-7),
                    check_every: 1,
                    consecutive: 3,
                    seed: seed::derive2(cell_seed, tags::MEANSHIFT_INIT, j as u64),
                    record_trajectory: false,
                };
                let res = fit_fixed_cov(&samples, &start, 1.0 / h, &ms_cfg)?;
                finals.push(DVector::from_vec(res.final_mean));
            }
            // Collapse duplicate endpoints.
            let mut centres: Vec<DVector<f64>> = Vec::new();
            for f in finals {
                if !centres.iter().any(|c| (c - &f).norm() <= *collapse_radius) {
                    centres.push(f);
                }
            }
            Ok(centres)
        }
    }
}

fn summarise(cfg: &BenchConfig, rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut out = Vec::new();
    for method in &cfg.methods {
        for &n in &cfg.n_grid {
            for &k in &cfg.k_grid {
                for metric in ["mr", "hm", "nn"] {
                    if let Some(summary) = summarise_cell(cfg, rows, method, n, k, metric) {
                        out.push(summary);
                    }
                }
            }
        }
    }
    out
}

fn summarise_cell(
    cfg: &BenchConfig,
    rows: &[BenchRow],
    method: &BenchMethod,
    n: usize,
    k: usize,
    metric: &str,
) -> Option<BenchSummary> {
    let values_for = |h: usize| -> Vec<f64> {
        rows.iter()
            .filter(|r| {
                r.method == method.name() && r.n == n && r.k == k && r.hyper == h && r.error.is_none()
            })
            .map(|r| match metric {
                "mr" => r.mr,
                "hm" => r.hm,
                _ => r.nn,
            })
            .collect()
    };
    // Best hyperparameter per metric: max mean recovery, min median
    // assignment cost, min mean nearest-neighbour sum.
    let mut best: Option<(usize, f64)> = None;
    for h in 0..method.hyper_count() {
        let vals = values_for(h);
        if vals.is_empty() {
            continue;
        }
        let score = match metric {
            "mr" => -mean(&vals),
            "hm" => median(&vals),
            _ => mean(&vals),
        };
        if best.map(|(_, s)| score < s).unwrap_or(true) {
            best = Some((h, score));
        }
    }
    let (best_hyper, _) = best?;
    let vals = values_for(best_hyper);
    let (aggregate, ci_lo, ci_hi) = if metric == "hm" {
        let ci_seed = seed::derive2(
            cfg.seed,
            tags::BOOT_CI,
            ((n as u64) << 24) ^ ((k as u64) << 12) ^ best_hyper as u64,
        );
        median_with_bootstrap_ci(&vals, MEDIAN_CI_RESAMPLES, ci_seed)
    } else {
        mean_with_t_ci(&vals)
    };
    Some(BenchSummary {
        method: method.name().to_string(),
        n,
        k,
        metric: metric.to_string(),
        best_hyper,
        hyper_label: method.hyper_label(best_hyper),
        aggregate,
        ci_lo,
        ci_hi,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Mean with a 95% t-interval (falls back to the point value when fewer
/// than two observations exist).
pub fn mean_with_t_ci(v: &[f64]) -> (f64, f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, m, m);
    }
    let df = (v.len() - 1) as f64;
    let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / df).sqrt();
    let se = sd / (v.len() as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, df).expect("df ≥ 1").inverse_cdf(0.975);
    (m, m - t * se, m + t * se)
}

/// Median with a bootstrap-percentile 95% interval.
pub fn median_with_bootstrap_ci(v: &[f64], resamples: usize, seed: u64) -> (f64, f64, f64) {
    let med = median(v);
    if v.len() < 2 {
        return (med, med, med);
    }
    let mut rng = seed::rng(seed);
    let mut meds: Vec<f64> = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; v.len()];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = v[rng.gen_range(0..v.len())];
        }
        meds.push(median(&buf));
    }
    meds.sort_by(f64::total_cmp);
    let lo = meds[((resamples as f64) * 0.025).floor() as usize];
    let hi = meds[(((resamples as f64) * 0.975).ceil() as usize).min(resamples - 1)];
    (med, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn sample_counts_follow_weights() {
        let spec = triangle_spec(0.25);
        let n = 6000;
        let pts = gen_mixture_sample(&spec, n, 7).unwrap();
        assert_eq!(pts.len(), n);
        // Nearest-mean counts within 4 binomial SEs of n/3 (σ = 0.5 against
        // unit inter-mode distances keeps assignment errors small).
        let mut counts = [0usize; 3];
        for x in pts.rows() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, m) in spec.means.iter().enumerate() {
                let d = (v2(x[0], x[1]) - m).norm();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            counts[best] += 1;
        }
        let expect = n as f64 / 3.0;
        let se = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 4.0 * se + 40.0, "count = {c}");
        }
    }

    #[test]
    fn sample_mean_obeys_lln_and_seeds_are_bitwise_stable() {
        let spec = MixtureSpec::new(
            vec![1.0],
            vec![v2(2.0, -1.0)],
            vec![DMatrix::from_diagonal_element(2, 2, 0.49)],
        )
        .unwrap();
        let n = 20_000;
        let pts = gen_mixture_sample(&spec, n, 3).unwrap();
        let mut mean = [0.0, 0.0];
        for x in pts.rows() {
            mean[0] += x[0] / n as f64;
            mean[1] += x[1] / n as f64;
        }
        let bound = 4.0 * 0.7 / (n as f64).sqrt();
        assert!((mean[0] - 2.0).abs() < bound);
        assert!((mean[1] + 1.0).abs() < bound);

        let again = gen_mixture_sample(&spec, n, 3).unwrap();
        assert_eq!(pts, again);
    }

    #[test]
    fn mode_recovery_examples() {
        let truth = triangle_spec(0.1).means;
        let exact: Vec<DVector<f64>> = truth.clone();
        assert_eq!(mode_recovery(&exact, &truth, 1e-6), 3);

        // Strict inequality: a point at distance exactly ε is not counted.
        let eps = 0.25;
        let shifted = vec![v2(0.0, 1.0 + eps)];
        assert_eq!(mode_recovery(&shifted, &[v2(0.0, 1.0)], eps), 0);

        // Perturbation by 0.005 with ε = 0.01 recovers all three.
        let perturbed: Vec<DVector<f64>> = truth.iter().map(|m| m + v2(0.003, 0.004)).collect();
        assert_eq!(mode_recovery(&perturbed, &truth, 0.01), 3);

        assert_eq!(mode_recovery(&[], &truth, 0.5), 0);
    }

    #[test]
    fn hungarian_sum_examples() {
        let truth = vec![v2(0.0, 0.0), v2(1.0, 0.0)];
        // Estimates containing the truth exactly cost zero.
        let est = vec![v2(1.0, 0.0), v2(0.0, 0.0), v2(5.0, 5.0)];
        assert_relative_eq!(hungarian_sum(&est, &truth), 0.0);

        // Single pair at distance 0.3.
        assert_relative_eq!(hungarian_sum(&[v2(0.3, 0.0)], &[v2(0.0, 0.0)]), 0.3, epsilon = 1e-12);

        // Random 4-truth vs 6-estimate instance equals brute force.
        let mut rng = seed::rng(17);
        let truth: Vec<DVector<f64>> =
            (0..4).map(|_| v2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let est: Vec<DVector<f64>> =
            (0..6).map(|_| v2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let hs = hungarian_sum(&est, &truth);
        // Brute force over injections truth → estimates.
        let mut best = f64::INFINITY;
        let idx: Vec<usize> = (0..6).collect();
        permute(&idx, 4, &mut |sel| {
            let c: f64 = sel.iter().enumerate().map(|(i, &j)| (&truth[i] - &est[j]).norm()).sum();
            if c < best {
                best = c;
            }
        });
        assert_relative_eq!(hs, best, epsilon = 1e-10);
    }

    fn permute(pool: &[usize], depth: usize, f: &mut impl FnMut(&[usize])) {
        fn rec(pool: &mut Vec<usize>, picked: &mut Vec<usize>, depth: usize, f: &mut impl FnMut(&[usize])) {
            if picked.len() == depth {
                f(picked);
                return;
            }
            for i in 0..pool.len() {
                let c = pool.remove(i);
                picked.push(c);
                rec(pool, picked, depth, f);
                picked.pop();
                pool.insert(i, c);
            }
        }
        let mut pool = pool.to_vec();
        rec(&mut pool, &mut Vec::new(), depth, f);
    }

    #[test]
    fn nearest_neighbor_examples() {
        let truth = vec![v2(0.0, 0.0), v2(2.0, 0.0)];
        assert_relative_eq!(nearest_neighbor_sum(&truth, &truth), 0.0);
        // Equidistant estimate contributes its common distance once.
        assert_relative_eq!(nearest_neighbor_sum(&[v2(1.0, 0.0)], &truth), 1.0, epsilon = 1e-12);
        // Random instance equals the brute-force double loop.
        let mut rng = seed::rng(23);
        let est: Vec<DVector<f64>> =
            (0..5).map(|_| v2(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let nn = nearest_neighbor_sum(&est, &truth);
        let brute: f64 = est
            .iter()
            .map(|e| truth.iter().map(|t| (e - t).norm()).fold(f64::INFINITY, f64::min))
            .sum();
        assert_relative_eq!(nn, brute, epsilon = 1e-12);
    }

    #[test]
    fn metrics_are_permutation_invariant_and_mr_monotone_in_eps() {
        let mut rng = seed::rng(31);
        let a: Vec<DVector<f64>> =
            (0..5).map(|_| v2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let b: Vec<DVector<f64>> =
            (0..4).map(|_| v2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let mut a_perm = a.clone();
        a_perm.reverse();
        let mut b_perm = b.clone();
        b_perm.rotate_left(2);
        assert_eq!(mode_recovery(&a, &b, 0.3), mode_recovery(&a_perm, &b_perm, 0.3));
        assert_relative_eq!(hungarian_sum(&a, &b), hungarian_sum(&a_perm, &b_perm), epsilon = 1e-12);
        assert_relative_eq!(
            nearest_neighbor_sum(&a, &b),
            nearest_neighbor_sum(&a_perm, &b_perm),
            epsilon = 1e-12
        );
        assert!(mode_recovery(&a, &b, 0.1) <= mode_recovery(&a, &b, 0.5));

        // Joint translation invariance for HM and NN.
        let shift = v2(0.7, -0.3);
        let a_s: Vec<DVector<f64>> = a.iter().map(|x| x + &shift).collect();
        let b_s: Vec<DVector<f64>> = b.iter().map(|x| x + &shift).collect();
        assert_relative_eq!(hungarian_sum(&a, &b), hungarian_sum(&a_s, &b_s), epsilon = 1e-10);
        assert_relative_eq!(
            nearest_neighbor_sum(&a, &b),
            nearest_neighbor_sum(&a_s, &b_s),
            epsilon = 1e-10
        );
    }

    #[test]
    fn hungarian_sum_dominates_per_truth_nearest_bound() {
        let mut rng = seed::rng(47);
        for _ in 0..20 {
            let truth: Vec<DVector<f64>> =
                (0..3).map(|_| v2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let est: Vec<DVector<f64>> =
                (0..5).map(|_| v2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let hm = hungarian_sum(&est, &truth);
            let bound: f64 = truth
                .iter()
                .map(|t| est.iter().map(|e| (t - e).norm()).fold(f64::INFINITY, f64::min))
                .sum();
            assert!(hm >= bound - 1e-12);
        }
    }

    #[test]
    fn single_cell_mean_shift_benchmark_recovers_a_unimodal_mode() {
        let spec = MixtureSpec::new(
            vec![1.0],
            vec![v2(0.5, -0.25)],
            vec![DMatrix::from_diagonal_element(2, 2, 0.04)],
        )
        .unwrap();
        let cfg = BenchConfig {
            spec,
            n_grid: vec![2000],
            k_grid: vec![1],
            n_rep: 1,
            methods: vec![BenchMethod::MeanShift {
                name: "mean-shift".into(),
                bandwidths: vec![0.04],
                max_iters: 200,
                batch_size: usize::MAX,
                collapse_radius: 0.05,
            }],
            eps: 0.05,
            seed: 11,
        };
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].mr, 1.0, "row: {:?}", out.rows[0]);
        let mr = out.summaries.iter().find(|s| s.metric == "mr").unwrap();
        assert_eq!(mr.aggregate, 1.0);

        // Determinism of the whole result.
        let again = run_benchmark(&cfg).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn ci_helpers_behave() {
        let (m, lo, hi) = mean_with_t_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(m, 2.5);
        assert!(lo < m && m < hi);
        let (med, lo, hi) = median_with_bootstrap_ci(&[1.0, 2.0, 3.0, 4.0, 100.0], 500, 9);
        assert_relative_eq!(med, 3.0);
        assert!(lo <= med && med <= hi);
    }
}
