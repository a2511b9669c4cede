// Bootstrap calibration prototype (criterion-7 shaped).
use gerve_core::bootstrap::{bootstrap_uq, chi2_quantile_2dof, BootstrapConfig};
use gerve_core::metrics::{gen_mixture_sample, MixtureSpec};
use gerve_core::mixture::{Domain, ParameterBounds};
use gerve_core::modes::PruneMergeConfig;
use gerve_core::objective::EntropyConfig;
use gerve_core::optimizer::{
    CovarianceStructure, FitConfig, MixtureInit, Schedule, StepSizeSchedule, TemperatureSchedule,
};
use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let outer: usize = std::env::var("OUTER").map(|v| v.parse().unwrap()).unwrap_or(30);
    let l: usize = std::env::var("L").map(|v| v.parse().unwrap()).unwrap_or(200);
    let omega0: f64 = std::env::var("W0").map(|v| v.parse().unwrap()).unwrap_or(0.05);
    let t: usize = std::env::var("T").map(|v| v.parse().unwrap()).unwrap_or(400);

    let truth = DVector::from_vec(vec![0.3, -0.2]);
    let spec = MixtureSpec::new(
        vec![1.0],
        vec![truth.clone()],
        vec![DMatrix::from_partial_diagonal(2, 2, &[0.5, 0.8])],
    )
    .unwrap();

    let fit_cfg = FitConfig {
        max_iters: t,
        batch_size: 256,
        bounds: ParameterBounds::new(4.0, 0.05, 4.0, 8.0).unwrap(),
        schedule: Schedule {
            temperature: TemperatureSchedule::Constant { omega: omega0 },
            stepsize: StepSizeSchedule::RobbinsMonro { rho1: 0.2, alpha: 0.1 },
        },
        ecfg: EntropyConfig { n_entropy_samples: 64, seed: 0 },
        domain: Domain::symmetric_box(2, 6.0).unwrap(),
        structure: CovarianceStructure::Full,
        early_stop: None,
        seed: 0,
        record_trajectory: false,
        snapshot_every: 0,
    };
    let pm = PruneMergeConfig { weight_floor: 1e-3, spread_beta: 1.0, merge_radius: 0.3 };
    let init = MixtureInit::KmeansPlusPlus { sigma2: 0.5 };

    let t0 = Instant::now();
    let results: Vec<(bool, usize, f64)> = (0..outer as u64)
        .into_par_iter()
        .map(|rep| {
            let data = gen_mixture_sample(&spec, 2000, 40_000 + rep).unwrap();
            let bcfg = BootstrapConfig {
                replicates: l,
                omega0,
                eta: 0.35,
                tau_min: 0.08,
                tau_max: 0.22,
                alpha: 0.05,
                seed: 90_000 + rep,
            };
            let report =
                bootstrap_uq(&data, 2, &init, &fit_cfg, 0.5, &pm, &bcfg).unwrap();
            // Take the heaviest baseline mode; coverage via the covariance
            // quadratic form about the matched-cloud mean.
            let k_hat = report.baseline.len();
            let cloud = &report.matches[0];
            let covered = match &report.mode_covariances[0] {
                Some(cov) if cloud.len() >= 3 => {
                    let n = cloud.len() as f64;
                    let mut mean = DVector::zeros(2);
                    for c in cloud {
                        mean += c / n;
                    }
                    let delta = &truth - &mean;
                    match Cholesky::new(cov.clone()) {
                        Some(ch) => {
                            let sol = ch.solve(&delta);
                            delta.dot(&sol) <= chi2_quantile_2dof(0.05)
                        }
                        None => false,
                    }
                }
                _ => false,
            };
            {
                let c0 = &report.baseline[0].center;
                if false { eprintln!(
                    "rep {rep}: k_hat={k_hat} s={:.2} cloud={} centre=({:+.3},{:+.3}) truth_dist={:.4} cov={:?}",
                    report.stability[0],
                    cloud.len(),
                    c0[0], c0[1],
                    (c0 - &truth).norm(),
                    report.mode_covariances[0].as_ref().map(|c| (c[(0,0)], c[(1,1)]))
                ); }
                (covered, k_hat, report.stability[0])
            }
        })
        .collect();
    let covered = results.iter().filter(|r| r.0).count();
    let k_counts: Vec<usize> = results.iter().map(|r| r.1).collect();
    let min_s = results.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    println!(
        "covered {covered}/{outer}; k_hat range {:?}-{:?}; min stability {min_s:.3}; elapsed {:.1?}",
        k_counts.iter().min(),
        k_counts.iter().max(),
        t0.elapsed()
    );
}
