use gerve_core::metrics::{gen_mixture_sample, two_blob_spec};
use gerve_core::modes::{resolve_modes, PruneMergeConfig};
use gerve_core::mixture::{Domain, ParameterBounds};
use gerve_core::objective::EntropyConfig;
use gerve_core::optimizer::*;

fn main() {
    let samples = gen_mixture_sample(&two_blob_spec(4.0, 0.25), 4000, 33).unwrap();
    let cfg = FitConfig {
        max_iters: 600,
        batch_size: 256,
        bounds: ParameterBounds::new(6.0, 0.05, 6.0, 8.0).unwrap(),
        schedule: Schedule {
            temperature: TemperatureSchedule::Constant { omega: 0.05 },
            stepsize: StepSizeSchedule::RobbinsMonro { rho1: 0.2, alpha: 0.1 },
        },
        ecfg: EntropyConfig { n_entropy_samples: 64, seed: 0 },
        domain: Domain::symmetric_box(2, 8.0).unwrap(),
        structure: CovarianceStructure::Full,
        early_stop: Some(EarlyStop { check_every: 10, mean_tol: 1e-3, prec_rel_tol: 1e-2, consecutive: 3 }),
        seed: 77,
        record_trajectory: false,
        snapshot_every: 0,
    };
    let init = MixtureInit::KmeansPlusPlus { sigma2: 0.5 };
    let res = fit(&samples, 3, &init, &cfg).unwrap();
    println!("iters {} stop {:?}", res.iterations_run, res.stop_reason);
    for (k, c) in res.final_state.components().iter().enumerate() {
        println!(
            "comp {k}: w={:.4} mean=({:+.3},{:+.3}) eigmax={:.4}",
            res.final_state.weights()[k], c.mean()[0], c.mean()[1], c.eig_max_covariance()
        );
    }
    let pm = PruneMergeConfig { weight_floor: 1e-3, spread_beta: 1.0, merge_radius: 0.5 };
    let modes = resolve_modes(&res.final_state, &pm, 0.5, &cfg.bounds);
    for m in &modes {
        println!("mode: w={:.4} centre=({:+.3},{:+.3})", m.weight, m.center[0], m.center[1]);
    }
    // replicate fit on a resample
    use rand::Rng;
    let mut rng = gerve_core::seed::rng(1234);
    let idx: Vec<usize> = (0..samples.len()).map(|_| rng.gen_range(0..samples.len())).collect();
    let resample = samples.gather(&idx);
    let mut cfg2 = cfg.clone();
    cfg2.seed = 555;
    let res2 = fit(&resample, 3, &init, &cfg2).unwrap();
    let modes2 = resolve_modes(&res2.final_state, &pm, 0.5, &cfg2.bounds);
    for m in &modes2 {
        println!("replicate mode: w={:.4} centre=({:+.3},{:+.3})", m.weight, m.center[0], m.center[1]);
    }
}
