//! Bootstrap uncertainty quantification for resolved modes: refits at a
//! fixed temperature on resampled data, Hungarian matching with adaptive
//! gates in z-scored coordinates, per-mode confidence ellipses, and
//! stability scores.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::modes::{resolve_modes, PruneMergeConfig, ResolvedMode};
use crate::optimizer::{fit, FitConfig, MixtureInit, TemperatureSchedule};
use crate::points::Points;
use crate::seed::{self, tags};

// ---------------------------------------------------------------------------
// Rectangular minimum-cost assignment
// ---------------------------------------------------------------------------

/// A minimum-cost assignment: `pairs` maps `min(m, n)` rows/columns
/// injectively, sorted by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Minimum-cost rectangular assignment (Hungarian / shortest augmenting
/// path), covering `min(m, n)` pairs. Among cost-optimal assignments the
/// lexicographically smallest one (ordered by row, then column, on the
/// shorter side) is returned. An empty matrix yields an empty assignment.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let m = cost.len();
    let n = cost.first().map(|r| r.len()).unwrap_or(0);
    if m == 0 || n == 0 {
        return Ok(Assignment { pairs: Vec::new(), cost: 0.0 });
    }
    if cost.iter().any(|r| r.len() != n) {
        return Err(CoreError::InvalidInput("cost matrix rows differ in length".into()));
    }
    if cost.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidInput("cost matrix entries must be finite".into()));
    }

    if m <= n {
        let assignment = lex_minimal(cost, m, n)?;
        let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        let pairs = assignment.into_iter().enumerate().collect();
        Ok(Assignment { pairs, cost: total })
    } else {
        // Transpose: columns become the injected side.
        let t: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| cost[i][j]).collect()).collect();
        let assignment = lex_minimal(&t, n, m)?;
        let total: f64 = assignment.iter().enumerate().map(|(j, &i)| cost[i][j]).sum();
        let mut pairs: Vec<(usize, usize)> =
            assignment.into_iter().enumerate().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        Ok(Assignment { pairs, cost: total })
    }
}

/// Exact solver for `m ≤ n`; returns the column of each row.
fn solve_rows(cost: &[Vec<f64>], m: usize, n: usize) -> Vec<usize> {
    // Shortest-augmenting-path Hungarian with potentials, 1-indexed with a
    // virtual column 0.
    let mut u = vec![0.0f64; m + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; m];
    for j in 1..=n {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn assignment_cost(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Fixes rows one at a time to the smallest column index that still admits
/// an optimal completion, yielding the lexicographically smallest optimum.
fn lex_minimal(cost: &[Vec<f64>], m: usize, n: usize) -> Result<Vec<usize>> {
    let base = solve_rows(cost, m, n);
    let best_cost = assignment_cost(cost, &base);
    let tol = 1e-9 * (1.0 + best_cost.abs());

    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut available: Vec<usize> = (0..n).collect();
    let mut prefix_cost = 0.0;
    for i in 0..m {
        let mut fixed = None;
        for (slot, &c) in available.iter().enumerate() {
            let candidate_cost = prefix_cost + cost[i][c];
            if candidate_cost > best_cost + tol {
                continue;
            }
            // Completion cost over remaining rows and columns.
            let rest = if i + 1 < m {
                let cols: Vec<usize> =
                    available.iter().enumerate().filter(|&(s, _)| s != slot).map(|(_, &x)| x).collect();
                let sub: Vec<Vec<f64>> =
                    (i + 1..m).map(|r| cols.iter().map(|&x| cost[r][x]).collect()).collect();
                let sub_assign = solve_rows(&sub, m - i - 1, cols.len());
                assignment_cost(&sub, &sub_assign)
            } else {
                0.0
            };
            if candidate_cost + rest <= best_cost + tol {
                fixed = Some((slot, c));
                break;
            }
        }
        let (slot, c) = fixed.ok_or_else(|| {
            CoreError::NonFinite("assignment refinement failed to extend an optimum".into())
        })?;
        prefix_cost += cost[i][c];
        chosen.push(c);
        available.remove(slot);
    }
    Ok(chosen)
}

// ---------------------------------------------------------------------------
// Gates, frames, matching
// ---------------------------------------------------------------------------

/// Bootstrap settings. `omega0` is the fixed temperature used for the
/// baseline fit and every refit; `eta`, `tau_min`, `tau_max` shape the
/// adaptive matching gates in z-scored units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub omega0: f64,
    pub eta: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, omega0: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            replicates,
            omega0,
            eta: 0.35,
            tau_min: 0.08,
            tau_max: 0.22,
            alpha: 0.05,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(CoreError::InvalidInput("replicate count must be ≥ 1".into()));
        }
        if !(self.omega0 > 0.0) {
            return Err(CoreError::InvalidInput("omega0 must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(CoreError::InvalidInput("eta must lie in (0, 0.5)".into()));
        }
        if !(self.tau_min <= self.tau_max && self.tau_min > 0.0) {
            return Err(CoreError::InvalidInput("need 0 < tau_min ≤ tau_max".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CoreError::InvalidInput("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-axis standardisation frame built from the baseline mode centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreFrame {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScoreFrame {
    /// Population mean/std of the centres per axis. A lone centre uses
    /// std 1; a nearly collinear set floors each axis at a quarter of the
    /// widest axis spread so one degenerate direction cannot blow up
    /// matching distances.
    pub fn from_centres(centres: &[DVector<f64>]) -> Result<Self> {
        let first = centres.first().ok_or(CoreError::EmptySamples)?;
        let d = first.len();
        let n = centres.len() as f64;
        let mut mean = vec![0.0; d];
        for c in centres {
            for i in 0..d {
                mean[i] += c[i] / n;
            }
        }
        let mut std = vec![0.0; d];
        for c in centres {
            for i in 0..d {
                std[i] += (c[i] - mean[i]).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = s.sqrt();
        }
        let widest = std.iter().cloned().fold(0.0f64, f64::max);
        let floor = if widest > 0.0 { 0.25 * widest } else { 1.0 };
        for s in &mut std {
            *s = s.max(floor);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter().enumerate().map(|(i, v)| (v - self.mean[i]) / self.std[i]),
        )
    }
}

/// Adaptive per-mode gate radii `τ_k = clip(η · nn_k, τ_min, τ_max)` where
/// `nn_k` is the distance to the nearest other baseline centre; a lone
/// centre gets `τ_max`.
pub fn adaptive_gates(
    baseline_centres: &[DVector<f64>],
    eta: f64,
    tau_min: f64,
    tau_max: f64,
) -> Result<Vec<f64>> {
    if baseline_centres.is_empty() {
        return Err(CoreError::InvalidInput("need at least one baseline centre".into()));
    }
    let k = baseline_centres.len();
    Ok((0..k)
        .map(|i| {
            let nn = (0..k)
                .filter(|&j| j != i)
                .map(|j| (&baseline_centres[i] - &baseline_centres[j]).norm())
                .fold(f64::INFINITY, f64::min);
            if nn.is_finite() {
                (eta * nn).clamp(tau_min, tau_max)
            } else {
                tau_max
            }
        })
        .collect())
}

/// Hungarian assignment of replicate centres to baseline centres on the
/// Euclidean distance matrix, followed by per-mode gate rejection
/// (distance strictly above `τ_k` rejects). Returns, per baseline mode,
/// the index of the matched replicate centre if any. Inputs must share one
/// (z-scored) frame.
pub fn match_modes(
    baseline: &[DVector<f64>],
    replicate: &[DVector<f64>],
    gates: &[f64],
) -> Result<Vec<Option<usize>>> {
    if gates.len() != baseline.len() {
        return Err(CoreError::DimensionMismatch { expected: baseline.len(), got: gates.len() });
    }
    if baseline.is_empty() || replicate.is_empty() {
        return Ok(vec![None; baseline.len()]);
    }
    let cost: Vec<Vec<f64>> = baseline
        .iter()
        .map(|b| replicate.iter().map(|r| (b - r).norm()).collect())
        .collect();
    let assignment = hungarian(&cost)?;
    let mut out = vec![None; baseline.len()];
    for (row, col) in assignment.pairs {
        if cost[row][col] <= gates[row] {
            out[row] = Some(col);
        }
    }
    Ok(out)
}

/// Fraction of replicates in which each baseline mode received a gated
/// match.
pub fn stability_scores(matches: &[Vec<DVector<f64>>], replicates: usize) -> Vec<f64> {
    matches.iter().map(|m| m.len() as f64 / replicates as f64).collect()
}

// ---------------------------------------------------------------------------
// Confidence ellipses
// ---------------------------------------------------------------------------

/// A chi-square confidence ellipse: semi-axes `a ≥ b`, orientation of the
/// major axis in degrees measured as `atan2(e_x, e_y)` (relative to the
/// second/Easting axis convention), normalised to `[-90, 90]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub angle_deg: f64,
}

/// Chi-square quantile with two degrees of freedom: `−2 ln α` at level
/// `1 − α`.
pub fn chi2_quantile_2dof(alpha: f64) -> f64 {
    -2.0 * alpha.ln()
}

/// Builds the `1 − α` ellipse from ≥ 3 matched 2-D centres: empirical
/// covariance, eigendecomposition, `a = √(χ²_{2;1−α} eig₁)`,
/// `b = √(χ²_{2;1−α} eig₂)`.
pub fn confidence_ellipse(matched_centres: &[DVector<f64>], alpha: f64) -> Result<Ellipse> {
    if matched_centres.len() < 3 {
        return Err(CoreError::InsufficientMatches { got: matched_centres.len(), need: 3 });
    }
    let d = matched_centres[0].len();
    if d != 2 {
        return Err(CoreError::InvalidInput(format!(
            "confidence ellipses are 2-D; got dimension {d} (emit the covariance instead)"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CoreError::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    let n = matched_centres.len() as f64;
    let mut mean = DVector::zeros(2);
    for c in matched_centres {
        mean += c / n;
    }
    let mut cov = DMatrix::zeros(2, 2);
    for c in matched_centres {
        let delta = c - &mean;
        cov += &delta * delta.transpose() / (n - 1.0);
    }
    // Closed-form symmetric 2×2 eigensystem.
    let (sxx, sxy, syy) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (0.25 * trace * trace - det).max(0.0).sqrt();
    let eig1 = 0.5 * trace + disc;
    let eig2 = 0.5 * trace - disc;
    if !(eig1 > 0.0) || eig2 <= eig1 * 1e-10 {
        return Err(CoreError::DegenerateEllipse);
    }
    // Principal eigenvector.
    let (ex, ey) = if sxy.abs() > f64::EPSILON * trace.abs() {
        (eig1 - syy, sxy)
    } else if sxx >= syy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (ex * ex + ey * ey).sqrt();
    let (mut ex, mut ey) = (ex / norm, ey / norm);
    if ey < 0.0 || (ey == 0.0 && ex < 0.0) {
        ex = -ex;
        ey = -ey;
    }
    let chi2 = chi2_quantile_2dof(alpha);
    Ok(Ellipse {
        center: vec![mean[0], mean[1]],
        a: (chi2 * eig1).sqrt(),
        b: (chi2 * eig2).sqrt(),
        angle_deg: ex.atan2(ey).to_degrees(),
    })
}

// ---------------------------------------------------------------------------
// The bootstrap procedure
// ---------------------------------------------------------------------------

/// Full bootstrap report over `L` replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    pub baseline: Vec<ResolvedMode>,
    /// Matched replicate centres per baseline mode, in replicate order and
    /// original data coordinates.
    pub matches: Vec<Vec<DVector<f64>>>,
    pub stability: Vec<f64>,
    /// Confidence ellipse per mode (2-D, ≥ 3 non-degenerate matches only).
    pub ellipses: Vec<Option<Ellipse>>,
    /// Empirical covariance of matched centres per mode (≥ 2 matches).
    pub mode_covariances: Vec<Option<DMatrix<f64>>>,
    /// Resolved-mode counts of each replicate fit.
    pub replicate_mode_counts: Vec<usize>,
    /// Replicate fits that failed numerically (counted as unmatched).
    pub failed_replicates: usize,
    /// Set when the baseline fit resolved no modes.
    pub baseline_empty: bool,
}

/// Runs the matched-mode bootstrap: baseline fit and mode resolution on the
/// original sample, then `L` refits on i.i.d.-with-replacement resamples at
/// the same fixed temperature, each matched to the baseline in z-scored
/// coordinates through adaptive gates. Replicates run in parallel;
/// per-replicate seed streams make the result order-independent.
pub fn bootstrap_uq(
    samples: &Points,
    k: usize,
    init: &MixtureInit,
    fit_cfg: &FitConfig,
    sigma2_init: f64,
    pm_cfg: &PruneMergeConfig,
    bcfg: &BootstrapConfig,
) -> Result<BootstrapReport> {
    bcfg.validate()?;
    if samples.len() < 2 {
        return Err(CoreError::InvalidInput("bootstrap needs at least two samples".into()));
    }
    let mut base_cfg = fit_cfg.clone();
    base_cfg.schedule.temperature = TemperatureSchedule::Constant { omega: bcfg.omega0 };
    base_cfg.seed = seed::derive(bcfg.seed, tags::BASELINE);

    let baseline_fit = fit(samples, k, init, &base_cfg)?;
    let baseline = resolve_modes(&baseline_fit.final_state, pm_cfg, sigma2_init, &base_cfg.bounds);
    if baseline.is_empty() {
        return Ok(BootstrapReport {
            baseline,
            matches: Vec::new(),
            stability: Vec::new(),
            ellipses: Vec::new(),
            mode_covariances: Vec::new(),
            replicate_mode_counts: Vec::new(),
            failed_replicates: 0,
            baseline_empty: true,
        });
    }

    let centres: Vec<DVector<f64>> = baseline.iter().map(|m| m.center.clone()).collect();
    let frame = ZScoreFrame::from_centres(&centres)?;
    let centres_z: Vec<DVector<f64>> = centres.iter().map(|c| frame.apply(c)).collect();
    let gates = adaptive_gates(&centres_z, bcfg.eta, bcfg.tau_min, bcfg.tau_max)?;

    let n = samples.len();
    struct Replicate {
        matched: Vec<Option<DVector<f64>>>,
        mode_count: usize,
        failed: bool,
    }
    let replicates: Vec<Replicate> = (0..bcfg.replicates)
        .into_par_iter()
        .map(|ell| {
            let mut rng = seed::rng(seed::derive2(bcfg.seed, tags::RESAMPLE, ell as u64));
            let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let resample = samples.gather(&indices);
            let mut cfg = base_cfg.clone();
            cfg.seed = seed::derive2(bcfg.seed, tags::REFIT, ell as u64);
            match fit(&resample, k, init, &cfg) {
                Ok(res) => {
                    let modes = resolve_modes(&res.final_state, pm_cfg, sigma2_init, &cfg.bounds);
                    let rep_centres: Vec<DVector<f64>> =
                        modes.iter().map(|m| m.center.clone()).collect();
                    let rep_z: Vec<DVector<f64>> =
                        rep_centres.iter().map(|c| frame.apply(c)).collect();
                    let matched = match match_modes(&centres_z, &rep_z, &gates) {
                        Ok(assign) => assign
                            .into_iter()
                            .map(|opt| opt.map(|j| rep_centres[j].clone()))
                            .collect(),
                        Err(_) => vec![None; centres.len()],
                    };
                    Replicate { matched, mode_count: modes.len(), failed: false }
                }
                Err(_) => Replicate {
                    matched: vec![None; centres.len()],
                    mode_count: 0,
                    failed: true,
                },
            }
        })
        .collect();

    let k_hat = baseline.len();
    let mut matches: Vec<Vec<DVector<f64>>> = vec![Vec::new(); k_hat];
    let mut replicate_mode_counts = Vec::with_capacity(bcfg.replicates);
    let mut failed_replicates = 0usize;
    for rep in &replicates {
        replicate_mode_counts.push(rep.mode_count);
        if rep.failed {
            failed_replicates += 1;
        }
        for (kk, c) in rep.matched.iter().enumerate() {
            if let Some(c) = c {
                matches[kk].push(c.clone());
            }
        }
    }

    let stability = stability_scores(&matches, bcfg.replicates);
    let dim = samples.dim();
    let mut ellipses = Vec::with_capacity(k_hat);
    let mut mode_covariances = Vec::with_capacity(k_hat);
    for cloud in &matches {
        if dim == 2 {
            ellipses.push(confidence_ellipse(cloud, bcfg.alpha).ok());
        } else {
            ellipses.push(None);
        }
        mode_covariances.push(empirical_covariance(cloud));
    }

    Ok(BootstrapReport {
        baseline,
        matches,
        stability,
        ellipses,
        mode_covariances,
        replicate_mode_counts,
        failed_replicates,
        baseline_empty: false,
    })
}

fn empirical_covariance(cloud: &[DVector<f64>]) -> Option<DMatrix<f64>> {
    if cloud.len() < 2 {
        return None;
    }
    let n = cloud.len() as f64;
    let d = cloud[0].len();
    let mut mean = DVector::zeros(d);
    for c in cloud {
        mean += c / n;
    }
    let mut cov = DMatrix::zeros(d, d);
    for c in cloud {
        let delta = c - &mean;
        cov += &delta * delta.transpose() / (n - 1.0);
    }
    Some(cov)
}
