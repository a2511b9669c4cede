//! Shared fixtures for the criterion benches.

use gerve_core::metrics::{gen_mixture_sample, triangle_spec};
use gerve_core::mixture::{Domain, MixtureState, ParameterBounds};
use gerve_core::optimizer::MixtureInit;
use gerve_core::points::Points;

/// Triangle sample with the clustering variance.
pub fn bench_points(n: usize) -> Points {
    gen_mixture_sample(&triangle_spec(0.25), n, 42).expect("valid spec")
}

/// A spread initial state over the sample.
pub fn bench_state(points: &Points, k: usize) -> MixtureState {
    MixtureInit::KmeansPlusPlus { sigma2: 0.5 }
        .build(points, k, 7)
        .expect("non-empty sample")
}

pub fn bench_domain() -> Domain {
    Domain::symmetric_box(2, 4.0).expect("valid box")
}

pub fn bench_bounds() -> ParameterBounds {
    ParameterBounds::new(4.0, 0.05, 4.0, 8.0).expect("valid bounds")
}
