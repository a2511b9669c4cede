// Finite-difference check of assembled gradients + trajectory inspection.
use gerve_core::metrics::{gen_mixture_sample, triangle_spec};
use gerve_core::mixture::{logits_from_weights, Domain, GaussianComponent, MixtureState};
use gerve_core::objective::{
    data_gradients, empirical_objective, entropy_gradients, EntropyConfig, GradientBundle,
};
use gerve_core::optimizer::{fit, presets};
use gerve_core::points::Points;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "fd".into());
    match which.as_str() {
        "fd" => fd_check(),
        "traj" => trajectory(),
        "se" => se_probe(),
        _ => {}
    }
}

fn perturbed(
    state: &MixtureState,
    dmu: &[DVector<f64>],
    dcov: &[DMatrix<f64>],
    dpi: &[f64],
    eps: f64,
) -> MixtureState {
    let k = state.k();
    let comps: Vec<GaussianComponent> = (0..k)
        .map(|i| {
            let mean = state.component(i).mean() + &dmu[i] * eps;
            let cov = state.component(i).covariance() + &dcov[i] * eps;
            let prec = cov.try_inverse().unwrap();
            let prec = (&prec + prec.transpose()) * 0.5;
            GaussianComponent::new(mean, prec).unwrap()
        })
        .collect();
    let mut w = state.weights();
    let mut last = *w.last().unwrap();
    for (i, dp) in dpi.iter().enumerate() {
        w[i] += eps * dp;
        last -= eps * dp;
    }
    let kk = w.len();
    w[kk - 1] = last;
    MixtureState::new(logits_from_weights(&w), comps).unwrap()
}

fn fd_check() {
    let mut rng = gerve_core::seed::rng(42);
    let spec = triangle_spec(0.25);
    let samples = gen_mixture_sample(&spec, 400, 5).unwrap();
    let domain = Domain::symmetric_box(2, 8.0).unwrap();

    let cos30 = (std::f64::consts::PI / 6.0).cos();
    let comps = vec![
        GaussianComponent::isotropic(DVector::from_vec(vec![0.0, 1.0]), 0.12).unwrap(),
        GaussianComponent::isotropic(DVector::from_vec(vec![cos30, -0.5]), 0.09).unwrap(),
        GaussianComponent::isotropic(DVector::from_vec(vec![-cos30, -0.5]), 0.15).unwrap(),
    ];
    let state = MixtureState::new(logits_from_weights(&[0.5, 0.3, 0.2]), comps).unwrap();
    let k = state.k();
    let d = state.dim();

    for omega in [0.0, 0.8] {
        let be = if omega == 0.0 { 100 } else { 100_000 };
        let ecfg = EntropyConfig { n_entropy_samples: be, seed: 777 };
        let dg = data_gradients(&state, &samples).unwrap();
        let eg = entropy_gradients(&state, &domain, &ecfg).unwrap();
        let bundle = GradientBundle::assemble(&dg, &eg, omega);
        let mut worst: f64 = 0.0;
        for trial in 0..10 {
            let block = trial % 3; // 0: mean only, 1: cov only, 2: weights only
            let dmu: Vec<DVector<f64>> = (0..k)
                .map(|_| DVector::from_iterator(d, (0..d).map(|_| if block == 0 { rng.gen_range(-1.0..1.0) } else { let _ : f64 = rng.gen_range(-1.0..1.0); 0.0 })))
                .collect();
            let dcov: Vec<DMatrix<f64>> = (0..k)
                .map(|_| {
                    let a = DMatrix::from_fn(d, d, |_, _| if block == 1 { rng.gen_range(-0.03..0.03) } else { let _ : f64 = rng.gen_range(-0.3..0.3); 0.0 });
                    (&a + a.transpose()) * 0.5
                })
                .collect();
            let dpi: Vec<f64> = (0..k - 1).map(|_| if block == 2 { rng.gen_range(-0.1..0.1) } else { let _ : f64 = rng.gen_range(-0.1..0.1); 0.0 }).collect();
            let eps = 1e-5;
            let plus = perturbed(&state, &dmu, &dcov, &dpi, eps);
            let minus = perturbed(&state, &dmu, &dcov, &dpi, -eps);
            let reps = if omega == 0.0 { 1 } else { 64 };
            let mut fd = 0.0;
            for rr in 0..reps {
                let e2 = EntropyConfig { n_entropy_samples: be, seed: 555_000 + rr };
                let f_plus = empirical_objective(&plus, &samples, omega, &domain, &e2).unwrap();
                let f_minus = empirical_objective(&minus, &samples, omega, &domain, &e2).unwrap();
                fd += (f_plus - f_minus) / (2.0 * eps * reps as f64);
            }
            let mut assembled = 0.0;
            for i in 0..k {
                assembled += bundle.mean[i].dot(&dmu[i]);
                assembled += (bundle.covariance[i].transpose() * &dcov[i]).trace();
            }
            for i in 0..k - 1 {
                assembled += bundle.weight[i] * dpi[i];
            }
            let rel = (fd - assembled).abs() / fd.abs().max(assembled.abs()).max(1e-12);
            worst = worst.max(rel);
            println!("omega={omega} trial={trial}: fd={fd:.8e} assembled={assembled:.8e} rel={rel:.3e}");
        }
        println!("omega={omega}: worst rel = {worst:.3e}\n");
    }
}

fn trajectory() {
    let spec = triangle_spec(0.25);
    let data = gen_mixture_sample(&spec, 6000, 502).unwrap();
    let preset = presets::triangle_cluster(0);
    let mut cfg = preset.fit.clone();
    cfg.seed = 702; // a failing seed from the sweep
    cfg.record_trajectory = true;
    cfg.snapshot_every = 1000;
    let res = fit(&data, preset.k, &preset.init, &cfg).unwrap();
    for snap in res.trajectory.as_ref().unwrap() {
        let means: Vec<String> = snap
            .components
            .iter()
            .map(|c| format!("({:+.2},{:+.2};{:.2})", c.mean[0], c.mean[1], c.eig_max_sigma))
            .collect();
        println!(
            "t={:6} w={:7.4} rho={:.4} obj={:+.4}  {}",
            snap.iter, snap.omega, snap.rho, snap.objective_estimate, means.join(" ")
        );
    }
    let w = res.final_state.weights();
    println!("final weights: {:?}", w.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());
}

#[allow(dead_code)]
fn se_probe() {
    let comps = vec![
        GaussianComponent::isotropic(DVector::from_vec(vec![-0.5, -0.3]), 0.8).unwrap(),
        GaussianComponent::isotropic(DVector::from_vec(vec![0.4, 0.6]), 0.5).unwrap(),
        GaussianComponent::isotropic(DVector::from_vec(vec![0.0, -0.8]), 1.2).unwrap(),
    ];
    let state = MixtureState::new(logits_from_weights(&[0.5, 0.3, 0.2]), comps).unwrap();
    let domain = Domain::symmetric_box(2, 8.0).unwrap();
    let reps = 24;
    let mut gammas: Vec<Vec<f64>> = Vec::new();
    let mut etas: Vec<Vec<f64>> = Vec::new();
    let mut phis: Vec<Vec<f64>> = Vec::new();
    for s in 0..reps {
        let ecfg = EntropyConfig { n_entropy_samples: 100_000, seed: 10_000 + s };
        let eg = entropy_gradients(&state, &domain, &ecfg).unwrap();
        gammas.push(eg.mean.iter().flat_map(|v| v.iter().cloned().collect::<Vec<_>>()).collect());
        etas.push(eg.covariance.iter().flat_map(|m| m.iter().cloned().collect::<Vec<_>>()).collect());
        phis.push(eg.weight.clone());
    }
    for (name, rows) in [("gamma", &gammas), ("eta", &etas), ("phi", &phis)] {
        let cols = rows[0].len();
        let mut max_sd: f64 = 0.0;
        let mut max_mean: f64 = 0.0;
        for c in 0..cols {
            let vals: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let m = vals.iter().sum::<f64>() / reps as f64;
            let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps - 1) as f64).sqrt();
            max_sd = max_sd.max(sd);
            max_mean = max_mean.max(m.abs());
        }
        println!("{name}: max |mean| = {max_mean:.4e}, max sd = {max_sd:.4e}");
    }
}
