// Scratch harness for preset tuning; not part of the test suite.
use gerve_core::metrics::{gen_mixture_sample, hungarian_sum, mode_recovery, triangle_spec};
use gerve_core::mixture::ParameterBounds;
use gerve_core::modes::resolve_modes;
use gerve_core::optimizer::{fit, presets};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("modes");
    match which {
        "modes" => triangle_modes_run(args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16384)),
        "cluster" => cluster_sweep(),
        _ => eprintln!("unknown scratch mode"),
    }
}

fn cluster_sweep() {
    let spec = triangle_spec(0.25);
    for (s2min, s2max) in [(0.05, 4.0)] {
        let t0 = Instant::now();
        let counts: Vec<usize> = (0..20u64)
            .into_par_iter()
            .map(|rep| {
                let preset = presets::triangle_cluster(0);
                let data = gen_mixture_sample(&spec, 6000, 500 + rep).unwrap();
                let mut cfg = preset.fit.clone();
                cfg.bounds = ParameterBounds::new(6.0, s2min, s2max, 8.0).unwrap();
                cfg.seed = 700 + rep;
                let res = fit(&data, preset.k, &preset.init, &cfg).unwrap();
                let modes =
                    resolve_modes(&res.final_state, &preset.prune_merge, preset.sigma2_init, &cfg.bounds);
                modes.len()
            })
            .collect();
        let three = counts.iter().filter(|&&c| c == 3).count();
        println!(
            "s2min={s2min} s2max={s2max}: counts={counts:?} three={three}/20 ({:.1?})",
            t0.elapsed()
        );
    }
}

fn triangle_modes_run(n: usize) {
    use gerve_core::optimizer::{Schedule, StepSizeSchedule, TemperatureSchedule, MixtureInit};
    let spec = triangle_spec(0.1);
    let truth = spec.means.clone();
    let mut preset = presets::triangle_modes(0);
    let (s2i, w1, beta, r1, gam, s2min): (f64, f64, f64, f64, f64, f64) = (
        std::env::var("S2I").map(|v| v.parse().unwrap()).unwrap_or(2.0),
        std::env::var("W1").map(|v| v.parse().unwrap()).unwrap_or(50.0),
        std::env::var("BETA").map(|v| v.parse().unwrap()).unwrap_or(1.1),
        std::env::var("R1").map(|v| v.parse().unwrap()).unwrap_or(1e-4),
        std::env::var("GAM").map(|v| v.parse().unwrap()).unwrap_or(0.7),
        std::env::var("S2MIN").map(|v| v.parse().unwrap()).unwrap_or(0.05),
    );
    preset.fit.schedule = Schedule {
        temperature: TemperatureSchedule::Power { omega1: w1, beta },
        stepsize: StepSizeSchedule::TemperatureCoupled { rho1: r1, omega1: w1, gamma: gam },
    };
    preset.fit.bounds = gerve_core::mixture::ParameterBounds::new(4.0, s2min, 4.0, 8.0).unwrap();
    preset.init = if std::env::var("KPP").is_ok() {
        MixtureInit::KmeansPlusPlus { sigma2: s2i }
    } else {
        MixtureInit::RandomInDataBox { sigma2: s2i }
    };
    preset.sigma2_init = s2i;
    let mut hms = Vec::new();
    let mut mrs = Vec::new();
    let t0 = Instant::now();
    let reps: u64 = std::env::var("REPS").map(|v| v.parse().unwrap()).unwrap_or(6);
    let results: Vec<(usize, f64, usize)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let data = gen_mixture_sample(&spec, n, 1000 + rep).unwrap();
            let mut cfg = preset.fit.clone();
            cfg.seed = 2000 + rep;
            let res = fit(&data, preset.k, &preset.init, &cfg).unwrap();
            let modes =
                resolve_modes(&res.final_state, &preset.prune_merge, preset.sigma2_init, &cfg.bounds);
            let centres: Vec<_> = modes.iter().map(|m| m.center.clone()).collect();
            (modes.len(), hungarian_sum(&centres, &truth), mode_recovery(&centres, &truth, 0.05))
        })
        .collect();
    for (i, (k, hm, mr)) in results.iter().enumerate() {
        println!("rep {i}: modes={k} hm={hm:.4} mr={mr}");
        hms.push(*hm);
        mrs.push(*mr as f64);
    }
    hms.sort_by(f64::total_cmp);
    println!(
        "N={n}: median hm = {:.4}, mean mr = {:.2}, elapsed {:.1?}",
        hms[hms.len() / 2],
        mrs.iter().sum::<f64>() / mrs.len() as f64,
        t0.elapsed()
    );
}
