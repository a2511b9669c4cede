//! Likelihood-free mode estimation and modal clustering with
//! entropy-regularised Gaussian mixtures (GERVE).
//!
//! The crate fits a Gaussian mixture to i.i.d. samples by stochastic
//! natural-gradient ascent on the empirical objective
//! `(1/N) Σ_i q_Λ(X_i) + ω · H_S(q_Λ)`, where `H_S` is the differential
//! entropy restricted to a bounded box `S` and `ω` is an annealing
//! temperature. Surviving component centres after pruning and merging are
//! the mode estimates; responsibilities give cluster assignments; a
//! matched-mode bootstrap provides per-mode confidence ellipses and
//! stability scores.
//!
//! Module map:
//! - [`mixture`]: mixture state, densities, responsibilities, projection
//!   onto the compact parameter set, canonical labelling.
//! - [`objective`]: empirical objective, Monte-Carlo entropy, and the
//!   stochastic gradient estimators.
//! - [`optimizer`]: natural-gradient loops, the fixed-covariance variant,
//!   mean-shift, schedules, early stopping, presets.
//! - [`modes`]: pruning, merging, mode resolution, elbow scan, clustering.
//! - [`bootstrap`]: rectangular Hungarian assignment, adaptive gates,
//!   bootstrap refits, stability scores, confidence ellipses.
//! - [`metrics`]: mode-recovery metrics, synthetic generators, and the
//!   replicate benchmark runner.

pub mod bootstrap;
pub mod error;
pub mod metrics;
pub mod mixture;
pub mod modes;
pub mod objective;
pub mod optimizer;
pub mod points;
pub mod seed;

pub use error::{CoreError, Result};
pub use mixture::{Domain, GaussianComponent, MixtureState, ParameterBounds};
pub use points::Points;
