//! Property tests for the structural invariants.

use gerve_core::metrics::{hungarian_sum, mode_recovery, nearest_neighbor_sum};
use gerve_core::mixture::{
    logits_from_weights, outside_mass, weights_from_logits, Domain, GaussianComponent,
    MixtureState, ParameterBounds,
};
use gerve_core::modes::{merge, prune, resolve_modes, PruneMergeConfig};
use gerve_core::points::Points;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn arb_logits(k_max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-12.0..12.0f64, 0..k_max)
}

/// Random 2-D SPD precision via A Aᵀ + εI.
fn arb_precision() -> impl Strategy<Value = DMatrix<f64>> {
    (prop::collection::vec(-2.0..2.0f64, 4), 0.05..2.0f64).prop_map(|(a, jitter)| {
        let m = DMatrix::from_row_slice(2, 2, &a);
        let spd = &m * m.transpose() + DMatrix::from_diagonal_element(2, 2, jitter);
        (&spd + spd.transpose()) * 0.5
    })
}

fn arb_state(k_max: usize) -> impl Strategy<Value = MixtureState> {
    (1..=k_max).prop_flat_map(|k| {
        (
            prop::collection::vec(-6.0..6.0f64, k - 1),
            prop::collection::vec((prop::collection::vec(-3.0..3.0f64, 2), arb_precision()), k),
        )
            .prop_map(|(logits, comps)| {
                let components = comps
                    .into_iter()
                    .map(|(mean, prec)| {
                        GaussianComponent::new(DVector::from_vec(mean), prec).unwrap()
                    })
                    .collect();
                MixtureState::new(logits, components).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_a_simplex(logits in arb_logits(6)) {
        let w = weights_from_logits(&logits).unwrap();
        prop_assert_eq!(w.len(), logits.len() + 1);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        let sum: f64 = w.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        // Round trip through the inverse map.
        let v = logits_from_weights(&w);
        for (a, b) in v.iter().zip(&logits) {
            prop_assert!((a - b).abs() < 1e-9, "logit drift {a} vs {b}");
        }
    }

    #[test]
    fn responsibilities_are_a_simplex(state in arb_state(4), x in prop::collection::vec(-4.0..4.0f64, 2)) {
        let r = state.responsibilities(&x).unwrap();
        prop_assert!(r.iter().all(|v| *v >= 0.0));
        let sum: f64 = r.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn projection_is_exactly_idempotent(state in arb_state(4)) {
        let bounds = ParameterBounds::new(2.0, 0.2, 1.2, 4.0).unwrap();
        let once = state.project_to_bounds(&bounds);
        let twice = once.project_to_bounds(&bounds);
        prop_assert_eq!(&once, &twice);
        // Feasible states are fixed points.
        let thrice = twice.project_to_bounds(&bounds);
        prop_assert_eq!(&twice, &thrice);
    }

    #[test]
    fn canonical_order_preserves_density(state in arb_state(4), xs in prop::collection::vec(prop::collection::vec(-4.0..4.0f64, 2), 10)) {
        let ordered = state.canonical_order();
        for x in &xs {
            let a = state.density(x).unwrap();
            let b = ordered.density(x).unwrap();
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            prop_assert!((a - b).abs() / scale < 1e-13, "density changed: {a} vs {b}");
        }
        // Ordering is stable: applying again is the identity.
        prop_assert_eq!(&ordered.canonical_order(), &ordered);
    }

    #[test]
    fn merge_preserves_weight_and_first_moment(state in arb_state(5), radius in 0.0..3.0f64) {
        let merged = merge(&state, radius);
        prop_assert!(merged.k() >= 1 && merged.k() <= state.k());
        let total: f64 = merged.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        let moment = |s: &MixtureState| -> DVector<f64> {
            s.components().iter().zip(s.weights()).map(|(c, w)| c.mean() * w).sum()
        };
        let delta = (moment(&state) - moment(&merged)).norm();
        prop_assert!(delta < 1e-10, "first moment moved by {delta}");
        // Idempotence on its own output.
        prop_assert_eq!(&merge(&merged, radius), &merged);
    }

    #[test]
    fn prune_is_idempotent_and_never_empty(state in arb_state(5)) {
        let bounds = ParameterBounds::new(4.0, 0.05, 4.0, 8.0).unwrap();
        let cfg = PruneMergeConfig { weight_floor: 0.15, spread_beta: 0.7, merge_radius: 0.0 };
        let once = prune(&state, &cfg, 1.0, &bounds);
        prop_assert!(once.k() >= 1);
        prop_assert_eq!(&prune(&once, &cfg, 1.0, &bounds), &once);
    }

    #[test]
    fn resolve_modes_count_bounds(state in arb_state(5)) {
        let bounds = ParameterBounds::new(4.0, 0.05, 4.0, 8.0).unwrap();
        let cfg = PruneMergeConfig { weight_floor: 1e-2, spread_beta: 1.0, merge_radius: 0.5 };
        let modes = resolve_modes(&state, &cfg, 1.0, &bounds);
        prop_assert!(!modes.is_empty());
        prop_assert!(modes.len() <= state.k());
        for pair in modes.windows(2) {
            prop_assert!(pair[0].weight >= pair[1].weight);
        }
    }

    #[test]
    fn metric_properties(
        est in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..6),
        truth in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..5),
        eps in 0.01..1.0f64,
    ) {
        let est: Vec<DVector<f64>> = est.into_iter().map(DVector::from_vec).collect();
        let truth: Vec<DVector<f64>> = truth.into_iter().map(DVector::from_vec).collect();
        // MR is monotone in eps.
        prop_assert!(mode_recovery(&est, &truth, eps) <= mode_recovery(&est, &truth, 2.0 * eps));
        // HM dominates the per-truth nearest-distance relaxation when
        // estimates outnumber truths.
        if est.len() >= truth.len() {
            let bound: f64 = truth
                .iter()
                .map(|t| est.iter().map(|e| (t - e).norm()).fold(f64::INFINITY, f64::min))
                .sum();
            prop_assert!(hungarian_sum(&est, &truth) >= bound - 1e-9);
        }
        // NN and HM are invariant under joint translation.
        let shift = DVector::from_vec(vec![0.83, -1.4]);
        let est_s: Vec<DVector<f64>> = est.iter().map(|e| e + &shift).collect();
        let truth_s: Vec<DVector<f64>> = truth.iter().map(|t| t + &shift).collect();
        prop_assert!((nearest_neighbor_sum(&est, &truth) - nearest_neighbor_sum(&est_s, &truth_s)).abs() < 1e-9);
        prop_assert!((hungarian_sum(&est, &truth) - hungarian_sum(&est_s, &truth_s)).abs() < 1e-9);
    }
}

#[test]
fn component_density_integrates_to_one() {
    // Monte-Carlo integral of the density over a 10σ box, within 3 MC
    // standard errors of 1.
    let comp = GaussianComponent::new(
        DVector::from_vec(vec![0.4, -0.2]),
        DMatrix::from_row_slice(2, 2, &[1.4, 0.3, 0.3, 0.8]),
    )
    .unwrap();
    let cov = comp.covariance();
    let sd = cov[(0, 0)].max(cov[(1, 1)]).sqrt();
    let half = 10.0 * sd;
    let lower = [comp.mean()[0] - half, comp.mean()[1] - half];
    let volume = (2.0 * half) * (2.0 * half);
    let mut rng = gerve_core::seed::rng(2024);
    use rand::Rng;
    let n = 400_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let x = [
            lower[0] + rng.gen_range(0.0..2.0 * half),
            lower[1] + rng.gen_range(0.0..2.0 * half),
        ];
        let v = comp.density(&x).unwrap() * volume;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    let se = (var / n as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "integral = {mean}, se = {se}");
}

#[test]
fn outside_mass_exact_and_mc_paths_agree() {
    // Same distribution evaluated through the diagonal-exact path and
    // through Monte Carlo (forced by a rotated representation).
    let domain = Domain::new(vec![-1.2, -0.8], vec![1.5, 1.1]).unwrap();
    let diag = GaussianComponent::new(
        DVector::from_vec(vec![0.2, -0.1]),
        DMatrix::from_row_slice(2, 2, &[1.25, 0.0, 0.0, 2.0]),
    )
    .unwrap();
    let exact = outside_mass(&diag, &domain, 0, 0).unwrap();
    // Identical component with an epsilon off-diagonal entry: takes the MC
    // path while representing the same distribution up to 1e-12.
    let nearly = GaussianComponent::new(
        DVector::from_vec(vec![0.2, -0.1]),
        DMatrix::from_row_slice(2, 2, &[1.25, 1e-12, 1e-12, 2.0]),
    )
    .unwrap();
    let n_mc = 200_000;
    let mc = outside_mass(&nearly, &domain, n_mc, 99).unwrap();
    let se = (exact * (1.0 - exact) / n_mc as f64).sqrt();
    assert!((mc - exact).abs() < 4.0 * se, "exact = {exact}, mc = {mc}, se = {se}");
}

#[test]
fn points_round_trip_through_gather() {
    let p = Points::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
    let all: Vec<usize> = (0..p.len()).collect();
    assert_eq!(p.gather(&all), p);
}
