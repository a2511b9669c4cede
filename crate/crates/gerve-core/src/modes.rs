//! Post-fit mode resolution: pruning, merging, effective-cluster
//! extraction, the elbow scan for the stopping temperature, and cluster
//! assignment.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::mixture::{logits_from_weights, MixtureState, ParameterBounds};
use crate::optimizer::{fit, FitConfig, MixtureInit, TemperatureSchedule};
use crate::points::Points;
use crate::seed::{self, tags};

/// Pruning and merging thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneMergeConfig {
    /// Components lighter than this are dropped.
    pub weight_floor: f64,
    /// Spread rule coefficient: prune when
    /// `eig_max(Σ_k) > σ²_min + β (σ²_init − σ²_min)`.
    pub spread_beta: f64,
    /// Single-linkage radius for grouping component means, in data units.
    pub merge_radius: f64,
}

impl Default for PruneMergeConfig {
    fn default() -> Self {
        Self { weight_floor: 1e-3, spread_beta: 0.018, merge_radius: 0.005 }
    }
}

/// One resolved mode: a surviving (possibly merged) component.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMode {
    pub center: DVector<f64>,
    pub weight: f64,
    pub covariance: DMatrix<f64>,
    /// Indices into the pre-prune component list that fed this mode.
    pub source_components: Vec<usize>,
}

/// Drops components with weight below the floor or spread above the
/// threshold, renormalising the survivors. The heaviest component is exempt
/// so the result is never empty.
pub fn prune(
    state: &MixtureState,
    cfg: &PruneMergeConfig,
    sigma2_init: f64,
    bounds: &ParameterBounds,
) -> MixtureState {
    prune_with_indices(state, cfg, sigma2_init, bounds).0
}

/// As [`prune`], also returning the kept components' original indices.
pub fn prune_with_indices(
    state: &MixtureState,
    cfg: &PruneMergeConfig,
    sigma2_init: f64,
    bounds: &ParameterBounds,
) -> (MixtureState, Vec<usize>) {
    let weights = state.weights();
    let spread_threshold = bounds.sigma2_min + cfg.spread_beta * (sigma2_init - bounds.sigma2_min);
    // First index attaining the maximum weight, for deterministic ties.
    let mut heaviest = 0usize;
    for (i, w) in weights.iter().enumerate() {
        if *w > weights[heaviest] {
            heaviest = i;
        }
    }
    let kept: Vec<usize> = (0..state.k())
        .filter(|&k| {
            k == heaviest
                || (weights[k] >= cfg.weight_floor
                    && state.component(k).eig_max_covariance() <= spread_threshold)
        })
        .collect();
    if kept.len() == state.k() {
        return (state.clone(), kept);
    }
    let total: f64 = kept.iter().map(|&k| weights[k]).sum();
    let new_weights: Vec<f64> = kept.iter().map(|&k| weights[k] / total).collect();
    let comps = kept.iter().map(|&k| state.component(k).clone()).collect();
    let logits = logits_from_weights(&new_weights);
    (MixtureState::from_parts_unchecked(logits, comps), kept)
}

/// Merges components whose means fall within `merge_radius` under
/// single-linkage grouping. Each group becomes one component with summed
/// weight, weight-averaged mean, and the moment-matched covariance
/// `Σ̄ = Σ_i w_i (Σ_i + (μ_i − μ̄)(μ_i − μ̄)ᵀ) / Σ_i w_i`.
pub fn merge(state: &MixtureState, merge_radius: f64) -> MixtureState {
    merge_with_groups(state, merge_radius).0
}

/// As [`merge`], also returning the member indices of each merged group.
pub fn merge_with_groups(state: &MixtureState, merge_radius: f64) -> (MixtureState, Vec<Vec<usize>>) {
    let k = state.k();
    let weights = state.weights();
    // Union-find over components linked by mean distance ≤ radius.
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let dist = (state.component(i).mean() - state.component(j).mean()).norm();
            if dist <= merge_radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of_root: Vec<Option<usize>> = vec![None; k];
    for i in 0..k {
        let root = find(&mut parent, i);
        match group_of_root[root] {
            Some(g) => groups[g].push(i),
            None => {
                group_of_root[root] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    if groups.len() == k {
        return (state.clone(), groups);
    }
    let d = state.dim();
    let mut comps = Vec::with_capacity(groups.len());
    let mut merged_weights = Vec::with_capacity(groups.len());
    for group in &groups {
        let w_total: f64 = group.iter().map(|&i| weights[i]).sum();
        let mut mean = DVector::zeros(d);
        for &i in group {
            mean += state.component(i).mean() * (weights[i] / w_total);
        }
        let mut cov = DMatrix::zeros(d, d);
        for &i in group {
            let delta = state.component(i).mean() - &mean;
            cov += (state.component(i).covariance() + &delta * delta.transpose())
                * (weights[i] / w_total);
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let precision = Cholesky::new(cov.clone())
            .map(|c| c.inverse())
            .unwrap_or_else(|| pseudo_precision(&cov));
        comps.push(crate::mixture::GaussianComponent::new_unchecked(mean, precision));
        merged_weights.push(w_total);
    }
    let logits = logits_from_weights(&merged_weights);
    (MixtureState::from_parts_unchecked(logits, comps), groups)
}

/// Inverse through the eigensystem with a floor, for merged covariances
/// that are numerically singular.
fn pseudo_precision(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let scale = eig.eigenvalues.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    let floor = scale * 1e-12;
    let inv = DVector::from_iterator(
        cov.nrows(),
        eig.eigenvalues.iter().map(|&l| 1.0 / l.max(floor)),
    );
    let v = &eig.eigenvectors;
    let m = v * DMatrix::from_diagonal(&inv) * v.transpose();
    (&m + m.transpose()) * 0.5
}

/// Prune, merge, and canonically label, returning modes sorted by weight
/// descending. `source_components` index into the input state.
pub fn resolve_modes(
    state: &MixtureState,
    cfg: &PruneMergeConfig,
    sigma2_init: f64,
    bounds: &ParameterBounds,
) -> Vec<ResolvedMode> {
    let (pruned, kept) = prune_with_indices(state, cfg, sigma2_init, bounds);
    let (merged, groups) = merge_with_groups(&pruned, cfg.merge_radius);
    let canonical = merged.canonical_order();
    // Map merged components back to original indices through the canonical
    // permutation by matching on the lexicographic key order.
    let mut order: Vec<usize> = (0..merged.k()).collect();
    order.sort_by(|&a, &b| {
        lex_key(&merged, a)
            .partial_cmp(&lex_key(&merged, b))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let weights = canonical.weights();
    let mut modes: Vec<ResolvedMode> = order
        .iter()
        .enumerate()
        .map(|(pos, &orig)| ResolvedMode {
            center: canonical.component(pos).mean().clone(),
            weight: weights[pos],
            covariance: canonical.component(pos).covariance(),
            source_components: groups[orig].iter().map(|&p| kept[p]).collect(),
        })
        .collect();
    modes.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    modes
}

fn lex_key(state: &MixtureState, k: usize) -> Vec<f64> {
    let c = state.component(k);
    let mut key: Vec<f64> = c.mean().iter().cloned().collect();
    let d = state.dim();
    for i in 0..d {
        for j in 0..d {
            key.push(c.precision()[(i, j)]);
        }
    }
    key
}

/// One row of the elbow diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowRow {
    pub omega: f64,
    pub count_after_prune: usize,
    pub count_after_merge: usize,
}

/// Elbow scan outcome: per-temperature resolved-mode counts and the
/// selected stopping temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowScan {
    pub rows: Vec<ElbowRow>,
    /// Largest ω attaining the maximum merged count.
    pub omega_dagger: f64,
}

/// Fits independently (cold start, per-cell seed) at each constant
/// temperature in the descending grid and records resolved-mode counts.
pub fn elbow_scan(
    samples: &Points,
    omega_grid: &[f64],
    k: usize,
    init: &MixtureInit,
    base: &FitConfig,
    cfg: &PruneMergeConfig,
    sigma2_init: f64,
) -> Result<ElbowScan> {
    if omega_grid.is_empty() {
        return Err(CoreError::InvalidInput("omega grid must be non-empty".into()));
    }
    if omega_grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(CoreError::InvalidInput("omega grid must be strictly descending".into()));
    }
    let rows: Vec<ElbowRow> = omega_grid
        .par_iter()
        .enumerate()
        .map(|(i, &omega)| -> Result<ElbowRow> {
            let mut cell = base.clone();
            cell.schedule.temperature = TemperatureSchedule::Constant { omega };
            cell.seed = seed::derive2(base.seed, tags::CELL, i as u64);
            let fitres = fit(samples, k, init, &cell)?;
            let (pruned, _) = prune_with_indices(&fitres.final_state, cfg, sigma2_init, &cell.bounds);
            let merged = merge(&pruned, cfg.merge_radius);
            Ok(ElbowRow {
                omega,
                count_after_prune: pruned.k(),
                count_after_merge: merged.k(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_count = rows.iter().map(|r| r.count_after_merge).max().unwrap();
    let omega_dagger = rows
        .iter()
        .find(|r| r.count_after_merge == max_count)
        .map(|r| r.omega)
        .unwrap();
    Ok(ElbowScan { rows, omega_dagger })
}

/// Hard assignment by highest responsibility; degenerate points (zero total
/// density) get label −1. Ties break to the lowest component index.
pub fn assign_clusters(state: &MixtureState, samples: &Points) -> Result<Vec<i64>> {
    if samples.dim() != state.dim() {
        return Err(CoreError::DimensionMismatch { expected: state.dim(), got: samples.dim() });
    }
    let mut labels = Vec::with_capacity(samples.len());
    for x in samples.rows() {
        match state.responsibilities(x) {
            Ok(resp) => {
                let mut best = 0usize;
                for (i, r) in resp.iter().enumerate() {
                    if *r > resp[best] {
                        best = i;
                    }
                }
                labels.push(best as i64);
            }
            Err(CoreError::DegeneratePoint) => labels.push(-1),
            Err(e) => return Err(e),
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::GaussianComponent;
    use approx::assert_relative_eq;

    fn comp(mean: &[f64], sigma2: f64) -> GaussianComponent {
        GaussianComponent::isotropic(DVector::from_column_slice(mean), sigma2).unwrap()
    }

    fn bounds() -> ParameterBounds {
        ParameterBounds::new(10.0, 1e-5, 4.0, 8.0).unwrap()
    }

    #[test]
    fn prune_keeps_heavy_tight_components() {
        let state = MixtureState::new(
            vec![0.0],
            vec![comp(&[0.0], 2e-5), comp(&[1.0], 2e-5)],
        )
        .unwrap();
        let cfg = PruneMergeConfig { weight_floor: 1e-3, spread_beta: 0.018, merge_radius: 0.0 };
        let out = prune(&state, &cfg, 5e-3, &bounds());
        assert_eq!(out.k(), 2);
        assert_eq!(out, state);
    }

    #[test]
    fn prune_drops_feather_weight() {
        let w = [1.0 - 1e-4, 1e-4];
        let state = MixtureState::new(
            logits_from_weights(&w),
            vec![comp(&[0.0], 2e-5), comp(&[1.0], 2e-5)],
        )
        .unwrap();
        let cfg = PruneMergeConfig { weight_floor: 1e-3, spread_beta: 0.018, merge_radius: 0.0 };
        let out = prune(&state, &cfg, 5e-3, &bounds());
        assert_eq!(out.k(), 1);
        assert_relative_eq!(out.weights()[0], 1.0);
        assert_eq!(out.component(0).mean()[0], 0.0);
    }

    #[test]
    fn prune_spread_threshold_matches_ten_sigma_min() {
        // β = 0.018, σ²_min = 1e-5, σ²_init = 5e-3 → threshold ≈ 1e-4.
        let cfg = PruneMergeConfig { weight_floor: 1e-3, spread_beta: 0.018, merge_radius: 0.0 };
        let state = MixtureState::new(
            vec![0.0],
            vec![comp(&[0.0], 5e-5), comp(&[1.0], 2e-4)],
        )
        .unwrap();
        let out = prune(&state, &cfg, 5e-3, &bounds());
        assert_eq!(out.k(), 1, "the 2e-4-spread component must be pruned");
        assert_eq!(out.component(0).mean()[0], 0.0);
    }

    #[test]
    fn prune_never_empties_the_mixture() {
        // Both components violate the rules; the heaviest survives.
        let w = [0.6, 0.4];
        let state = MixtureState::new(
            logits_from_weights(&w),
            vec![comp(&[0.0], 1.0), comp(&[1.0], 1.0)],
        )
        .unwrap();
        let cfg = PruneMergeConfig { weight_floor: 0.9, spread_beta: 1e-9, merge_radius: 0.0 };
        let out = prune(&state, &cfg, 1.0, &bounds());
        assert_eq!(out.k(), 1);
        assert_eq!(out.component(0).mean()[0], 0.0);
    }

    #[test]
    fn merge_identity_when_all_far() {
        let state = MixtureState::new(
            vec![0.0],
            vec![comp(&[0.0, 0.0], 0.1), comp(&[3.0, 0.0], 0.1)],
        )
        .unwrap();
        let out = merge(&state, 0.5);
        assert_eq!(out, state);
    }

    #[test]
    fn merge_two_identical_components() {
        let state = MixtureState::new(
            vec![0.0],
            vec![comp(&[1.0, 2.0], 0.3), comp(&[1.0, 2.0], 0.3)],
        )
        .unwrap();
        let out = merge(&state, 1e-9);
        assert_eq!(out.k(), 1);
        assert_relative_eq!(out.weights()[0], 1.0);
        assert_relative_eq!(out.component(0).mean()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(out.component(0).covariance()[(0, 0)], 0.3, max_relative = 1e-10);
    }

    #[test]
    fn merge_moment_matches_two_displaced_components() {
        // Equal weights at ±a with common variance σ²: merged variance is
        // σ² + a².
        let a = 0.4;
        let sigma2 = 0.09;
        let state = MixtureState::new(
            vec![0.0],
            vec![comp(&[-a], sigma2), comp(&[a], sigma2)],
        )
        .unwrap();
        let out = merge(&state, 2.0 * a + 1e-9);
        assert_eq!(out.k(), 1);
        assert_relative_eq!(out.component(0).mean()[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(
            out.component(0).covariance()[(0, 0)],
            sigma2 + a * a,
            max_relative = 1e-10
        );
    }

    #[test]
    fn merge_preserves_total_weight_and_first_moment() {
        let w = [0.5, 0.3, 0.2];
        let state = MixtureState::new(
            logits_from_weights(&w),
            vec![comp(&[0.0, 0.0], 0.2), comp(&[0.05, 0.0], 0.3), comp(&[2.0, 1.0], 0.1)],
        )
        .unwrap();
        let before: DVector<f64> = state
            .components()
            .iter()
            .zip(state.weights())
            .map(|(c, w)| c.mean() * w)
            .sum();
        let out = merge(&state, 0.1);
        assert_eq!(out.k(), 2);
        let after: DVector<f64> = out
            .components()
            .iter()
            .zip(out.weights())
            .map(|(c, w)| c.mean() * w)
            .sum();
        assert_relative_eq!((before - after).norm(), 0.0, epsilon = 1e-14);
        let total: f64 = out.weights().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn prune_and_merge_are_idempotent_on_own_output() {
        let w = [0.55, 0.35, 0.1];
        let state = MixtureState::new(
            logits_from_weights(&w),
            vec![comp(&[0.0], 2e-5), comp(&[0.002], 3e-5), comp(&[5.0], 2e-5)],
        )
        .unwrap();
        let cfg = PruneMergeConfig { weight_floor: 0.2, spread_beta: 0.018, merge_radius: 0.01 };
        let p1 = prune(&state, &cfg, 5e-3, &bounds());
        let p2 = prune(&p1, &cfg, 5e-3, &bounds());
        assert_eq!(p1, p2);
        let m1 = merge(&p1, cfg.merge_radius);
        let m2 = merge(&m1, cfg.merge_radius);
        assert_eq!(m1, m2);
    }

    #[test]
    fn resolve_modes_composition() {
        let w = [0.5, 0.3, 0.15, 0.05];
        let state = MixtureState::new(
            logits_from_weights(&w),
            vec![
                comp(&[0.0, 0.0], 2e-5),
                comp(&[0.001, 0.0], 2e-5),
                comp(&[1.0, 1.0], 2e-5),
                comp(&[-1.0, 1.0], 2.0), // too spread: pruned
            ],
        )
        .unwrap();
        let cfg = PruneMergeConfig { weight_floor: 1e-3, spread_beta: 0.018, merge_radius: 0.005 };
        let modes = resolve_modes(&state, &cfg, 5e-3, &bounds());
        assert_eq!(modes.len(), 2);
        assert!(modes[0].weight > modes[1].weight);
        assert_eq!(modes[0].source_components, vec![0, 1]);
        assert_eq!(modes[1].source_components, vec![2]);
        assert!(modes.len() <= state.k());

        // Single component resolves to itself.
        let single = MixtureState::new(vec![], vec![comp(&[0.3, 0.4], 2e-5)]).unwrap();
        let m = resolve_modes(&single, &cfg, 5e-3, &bounds());
        assert_eq!(m.len(), 1);
        assert_relative_eq!(m[0].weight, 1.0);
    }

    #[test]
    fn assign_clusters_examples() {
        let single = MixtureState::new(vec![], vec![comp(&[0.0], 1.0)]).unwrap();
        let pts = Points::from_rows(&[vec![0.1], vec![-3.0], vec![7.0]]).unwrap();
        assert_eq!(assign_clusters(&single, &pts).unwrap(), vec![0, 0, 0]);

        // Fig-S2-style configuration: the point (0, 1) belongs to the broad
        // heavy component (index 1).
        let cos30 = (std::f64::consts::PI / 6.0).cos();
        let comps = vec![
            comp(&[-cos30, -0.5], 0.30),
            comp(&[0.0, 1.0], 0.95),
            comp(&[cos30, 0.0], 0.10),
        ];
        let state = MixtureState::new(logits_from_weights(&[0.16, 0.80, 0.04]), comps).unwrap();
        let pt = Points::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(assign_clusters(&state, &pt).unwrap(), vec![1]);
    }

    #[test]
    fn assign_clusters_matches_nearest_mean_when_separated() {
        use rand::Rng;
        let mut rng = seed::rng(3);
        let mut rows = Vec::new();
        for _ in 0..500 {
            let c = if rng.gen_bool(0.5) { -4.0 } else { 4.0 };
            rows.push(vec![c + rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.5]);
        }
        let pts = Points::from_rows(&rows).unwrap();
        let state =
            MixtureState::new(vec![0.0], vec![comp(&[-4.0], 0.25), comp(&[4.0], 0.25)]).unwrap();
        let labels = assign_clusters(&state, &pts).unwrap();
        let agree = pts
            .rows()
            .zip(&labels)
            .filter(|(x, &l)| {
                let nearest = if (x[0] + 4.0).abs() <= (x[0] - 4.0).abs() { 0 } else { 1 };
                nearest == l as usize
            })
            .count();
        assert!(agree as f64 >= 0.99 * pts.len() as f64, "agree = {agree}");
    }

    #[test]
    fn assign_clusters_invariant_under_canonical_order() {
        let w = [0.7, 0.3];
        let state = MixtureState::new(
            logits_from_weights(&w),
            vec![comp(&[2.0], 0.5), comp(&[-1.0], 0.5)],
        )
        .unwrap();
        let canon = state.canonical_order();
        let pts = Points::from_rows(&[vec![-1.2], vec![1.8], vec![0.4]]).unwrap();
        let a = assign_clusters(&state, &pts).unwrap();
        let b = assign_clusters(&canon, &pts).unwrap();
        // Canonical order swaps the two components here.
        let remapped: Vec<i64> = a.iter().map(|&l| 1 - l).collect();
        assert_eq!(remapped, b);
    }
}
