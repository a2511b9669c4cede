// temp probe
use gerve_core::mixture::{logits_from_weights, Domain, GaussianComponent, MixtureState};
use gerve_core::objective::{entropy_gradients, EntropyConfig};
use nalgebra::DVector;

fn main() {
    let cos30 = (std::f64::consts::PI / 6.0).cos();
    let comps = vec![
        GaussianComponent::isotropic(DVector::from_vec(vec![0.0, 1.0]), 0.12).unwrap(),
        GaussianComponent::isotropic(DVector::from_vec(vec![cos30, -0.5]), 0.09).unwrap(),
        GaussianComponent::isotropic(DVector::from_vec(vec![-cos30, -0.5]), 0.15).unwrap(),
    ];
    let state = MixtureState::new(logits_from_weights(&[0.5, 0.3, 0.2]), comps).unwrap();
    let domain = Domain::symmetric_box(2, 8.0).unwrap();
    // spread of each block across seeds
    let reps = 24u64;
    let mut store: Vec<Vec<f64>> = Vec::new();
    for s in 0..reps {
        let ecfg = EntropyConfig { n_entropy_samples: 100_000, seed: 10_000 + s };
        let eg = entropy_gradients(&state, &domain, &ecfg).unwrap();
        let mut flat: Vec<f64> = Vec::new();
        flat.extend(eg.mean.iter().flat_map(|v| v.iter().cloned().collect::<Vec<_>>()));
        flat.extend(eg.covariance.iter().flat_map(|m| m.iter().cloned().collect::<Vec<_>>()));
        flat.extend(eg.weight.iter().cloned());
        store.push(flat);
    }
    let cols = store[0].len();
    let mut max_sd = (0usize, 0.0f64);
    for c in 0..cols {
        let vals: Vec<f64> = store.iter().map(|r| r[c]).collect();
        let m = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps - 1) as f64).sqrt();
        if sd > max_sd.1 { max_sd = (c, sd); }
    }
    println!("max block sd = {:.3e} at flat index {}", max_sd.1, max_sd.0);
    for c in 0..cols {
        let vals: Vec<f64> = store.iter().map(|r| r[c]).collect();
        let m = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps - 1) as f64).sqrt();
        if sd > 2e-4 { println!("  idx {c}: mean {m:+.4e} sd {sd:.2e}"); }
    }
    // means of blocks for seed 777 (the fd seed) vs average-of-seeds
    let ecfg = EntropyConfig { n_entropy_samples: 100_000, seed: 777 };
    let eg = entropy_gradients(&state, &domain, &ecfg).unwrap();
    let mut flat777: Vec<f64> = Vec::new();
    flat777.extend(eg.mean.iter().flat_map(|v| v.iter().cloned().collect::<Vec<_>>()));
    flat777.extend(eg.covariance.iter().flat_map(|m| m.iter().cloned().collect::<Vec<_>>()));
    flat777.extend(eg.weight.iter().cloned());
    let mut worst = (0usize, 0.0f64);
    for c in 0..cols {
        let mavg: f64 = store.iter().map(|r| r[c]).sum::<f64>() / reps as f64;
        let dev = (flat777[c] - mavg).abs();
        if dev > worst.1 { worst = (c, dev); }
    }
    println!("seed-777 worst |dev from seed-mean| = {:.3e} at index {}", worst.1, worst.0);
}
