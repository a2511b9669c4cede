//! Named hyperparameter presets for the three shipped experiment families.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::mixture::{Domain, ParameterBounds};
use crate::modes::PruneMergeConfig;
use crate::objective::EntropyConfig;
use crate::optimizer::{
    CovarianceStructure, EarlyStop, FitConfig, MixtureInit, Schedule, StepSizeSchedule,
    TemperatureSchedule, FULL_BATCH,
};

/// A complete defaults bundle: fit configuration, initialisation, and the
/// prune/merge settings used to resolve modes afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPreset {
    pub name: String,
    pub k: usize,
    pub fit: FitConfig,
    pub init: MixtureInit,
    /// Initial covariance scale, also the reference for the spread prune rule.
    pub sigma2_init: f64,
    pub prune_merge: PruneMergeConfig,
}

/// Overcomplete clustering on the equilateral-triangle mixture
/// (σ² = 0.25): slow annealing with a temperature floor and a
/// temperature-coupled step size.
pub fn triangle_cluster(seed: u64) -> FitPreset {
    let sigma2_init = 2.0;
    FitPreset {
        name: "triangle-cluster".into(),
        k: 7,
        fit: FitConfig {
            max_iters: 40_000,
            batch_size: 1000,
            bounds: ParameterBounds::new(4.0, 0.05, 4.0, 8.0).unwrap(),
            schedule: Schedule {
                temperature: TemperatureSchedule::PowerWithFloor {
                    omega1: 50.0,
                    beta: 1.1,
                    floor: 0.004,
                },
                stepsize: StepSizeSchedule::TemperatureCoupled {
                    rho1: 1e-4,
                    omega1: 50.0,
                    gamma: 0.7,
                },
            },
            ecfg: EntropyConfig { n_entropy_samples: 100, seed: 0 },
            domain: Domain::symmetric_box(2, 4.0).unwrap(),
            structure: CovarianceStructure::Full,
            early_stop: None,
            seed,
            record_trajectory: false,
            snapshot_every: 0,
        },
        init: MixtureInit::RandomInBox { lower: vec![-2.0, -2.0], upper: vec![0.0, 0.0], sigma2: sigma2_init },
        sigma2_init,
        // The clustering protocol prunes on weight only; β = 1 parks the
        // spread threshold at σ²_init so it cannot bite mode-scale
        // components.
        prune_merge: PruneMergeConfig { weight_floor: 1e-3, spread_beta: 1.0, merge_radius: 0.25 },
    }
}

/// Mode estimation on the sharper triangle mixture (σ² = 0.1): vanishing
/// power schedule over 4000 iterations with k-means++ seeding.
pub fn triangle_modes(seed: u64) -> FitPreset {
    let sigma2_init = 0.5;
    FitPreset {
        name: "triangle-modes".into(),
        k: 3,
        fit: FitConfig {
            max_iters: 4000,
            batch_size: 1000,
            bounds: ParameterBounds::new(4.0, 0.05, 4.0, 8.0).unwrap(),
            schedule: Schedule {
                temperature: TemperatureSchedule::Power { omega1: 50.0, beta: 1.1 },
                stepsize: StepSizeSchedule::TemperatureCoupled {
                    rho1: 3e-4,
                    omega1: 50.0,
                    gamma: 0.7,
                },
            },
            ecfg: EntropyConfig { n_entropy_samples: 100, seed: 0 },
            domain: Domain::symmetric_box(2, 4.0).unwrap(),
            structure: CovarianceStructure::Full,
            early_stop: None,
            seed,
            record_trajectory: false,
            snapshot_every: 0,
        },
        init: MixtureInit::KmeansPlusPlus { sigma2: sigma2_init },
        sigma2_init,
        prune_merge: PruneMergeConfig { weight_floor: 1e-3, spread_beta: 1.0, merge_radius: 0.1 },
    }
}

/// Spatial hotspot detection on normalised coordinates: constant stopping
/// temperature, k-means++ initialisation, tight covariance bounds, early
/// stopping, and the fine merge radius.
pub fn hotspot(seed: u64) -> FitPreset {
    let sigma2_init = 5e-3;
    FitPreset {
        name: "hotspot".into(),
        k: 20,
        fit: FitConfig {
            max_iters: 10_000,
            batch_size: FULL_BATCH,
            bounds: ParameterBounds::new(2.05, 1e-5, 1e-2, 8.0).unwrap(),
            schedule: Schedule {
                temperature: TemperatureSchedule::Constant { omega: 1.0 },
                stepsize: StepSizeSchedule::RobbinsMonro { rho1: 0.2, alpha: 0.1 },
            },
            ecfg: EntropyConfig { n_entropy_samples: 100, seed: 0 },
            domain: Domain::symmetric_box(2, 2.05).unwrap(),
            structure: CovarianceStructure::Full,
            early_stop: Some(EarlyStop {
                check_every: 10,
                mean_tol: 1e-2,
                prec_rel_tol: 1e-1,
                consecutive: 3,
            }),
            seed,
            record_trajectory: false,
            snapshot_every: 0,
        },
        init: MixtureInit::KmeansPlusPlus { sigma2: sigma2_init },
        sigma2_init,
        prune_merge: PruneMergeConfig { weight_floor: 1e-3, spread_beta: 0.018, merge_radius: 0.005 },
    }
}

/// Looks a preset up by name.
pub fn by_name(name: &str, seed: u64) -> Result<FitPreset> {
    match name {
        "triangle-cluster" => Ok(triangle_cluster(seed)),
        "triangle-modes" => Ok(triangle_modes(seed)),
        "hotspot" => Ok(hotspot(seed)),
        other => Err(CoreError::InvalidInput(format!("unknown preset '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in ["triangle-cluster", "triangle-modes", "hotspot"] {
            let p = by_name(name, 7).unwrap();
            p.fit.validate().unwrap();
            assert!(p.fit.bounds.admits_weight_floor(p.k, p.prune_merge.weight_floor));
        }
        assert!(by_name("nope", 0).is_err());
    }

    #[test]
    fn hotspot_spread_threshold_is_ten_sigma_min() {
        // β = 0.018 with σ₁² = 5e-3 and σ²_min = 1e-5 puts the spread prune
        // threshold at ≈ 10 σ²_min.
        let p = hotspot(0);
        let thr = p.fit.bounds.sigma2_min
            + p.prune_merge.spread_beta * (p.sigma2_init - p.fit.bounds.sigma2_min);
        assert!((thr - 1e-4).abs() < 2e-6, "threshold = {thr}");
    }
}
