//! Empirical objective value, entropy on the working box, and the
//! stochastic gradient estimators feeding the natural-gradient updates.
//!
//! The empirical objective is `(1/N) Σ_i q_Λ(X_i) + ω · H_S(q_Λ)` with
//! `H_S(q) = −∫_S q log q`. The entropy and its derivatives have no closed
//! form for mixtures, so both are estimated by stratified Monte Carlo:
//! `B_e` draws per component, with the same draws reused across the three
//! entropy-gradient blocks. All estimators are deterministic given the
//! seed in [`EntropyConfig`]; per-component streams are derived from that
//! seed and the component index, so per-component evaluation order (or
//! parallelism) cannot change results.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::mixture::{Domain, MixtureCache, MixtureState};
use crate::points::Points;
use crate::seed;

/// Log-density floor for points whose density underflows in linear space.
fn floor_log() -> f64 {
    f64::MIN_POSITIVE.ln()
}

/// Monte-Carlo entropy settings: `B_e` draws per component plus the stream
/// seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyConfig {
    pub n_entropy_samples: usize,
    pub seed: u64,
}

impl EntropyConfig {
    pub fn new(n_entropy_samples: usize, seed: u64) -> Result<Self> {
        if n_entropy_samples == 0 {
            return Err(CoreError::InvalidInput("n_entropy_samples must be ≥ 1".into()));
        }
        Ok(Self { n_entropy_samples, seed })
    }

    /// Same sample count, different stream.
    pub fn reseeded(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Data-term gradient blocks: `ĝ_k` (mean direction), `Ĥ_k` (direction of
/// `S_k⁻¹`, i.e. the covariance), and `f̂` (the `K − 1` weight directions).
#[derive(Debug, Clone)]
pub struct DataGradients {
    pub mean: Vec<DVector<f64>>,
    pub covariance: Vec<DMatrix<f64>>,
    pub weight: Vec<f64>,
}

/// Entropy gradient blocks `γ̂_k`, `η̂_k`, `φ̂` aligned with [`DataGradients`].
#[derive(Debug, Clone)]
pub struct EntropyGradients {
    pub mean: Vec<DVector<f64>>,
    pub covariance: Vec<DMatrix<f64>>,
    pub weight: Vec<f64>,
}

/// Assembled gradient of the full objective: data block plus `ω` times the
/// entropy block.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub mean: Vec<DVector<f64>>,
    pub covariance: Vec<DMatrix<f64>>,
    pub weight: Vec<f64>,
}

impl GradientBundle {
    pub fn assemble(data: &DataGradients, entropy: &EntropyGradients, omega: f64) -> Self {
        let mean = data
            .mean
            .iter()
            .zip(&entropy.mean)
            .map(|(g, gamma)| g + gamma * omega)
            .collect();
        let covariance = data
            .covariance
            .iter()
            .zip(&entropy.covariance)
            .map(|(h, eta)| h + eta * omega)
            .collect();
        let weight = data
            .weight
            .iter()
            .zip(&entropy.weight)
            .map(|(f, phi)| f + omega * phi)
            .collect();
        Self { mean, covariance, weight }
    }

    pub fn all_finite(&self) -> bool {
        self.mean.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.covariance.iter().all(|m| m.iter().all(|x| x.is_finite()))
            && self.weight.iter().all(|x| x.is_finite())
    }
}

/// `(1/N) Σ_i q_Λ(X_i) + ω · H_S(q_Λ)` with the entropy estimated by
/// Monte Carlo. Errors on an empty sample set or negative `ω`.
pub fn empirical_objective(
    state: &MixtureState,
    samples: &Points,
    omega: f64,
    domain: &Domain,
    ecfg: &EntropyConfig,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(CoreError::EmptySamples);
    }
    if !(omega >= 0.0) {
        return Err(CoreError::InvalidInput(format!("omega must be ≥ 0, got {omega}")));
    }
    let cache = MixtureCache::build(state)?;
    cache.check_dim(samples.row(0))?;
    let mut total = 0.0;
    for x in samples.rows() {
        total += cache.density(x);
    }
    let data_term = total / samples.len() as f64;
    if omega == 0.0 {
        return Ok(data_term);
    }
    Ok(data_term + omega * entropy_mc_cached(&cache, domain, ecfg)?)
}

/// Monte-Carlo estimate of `H_S(q_Λ) = −Σ_k π_k E_{q_k}[log q_Λ(X) 1_S(X)]`
/// using `B_e` stratified draws per component. Deterministic given the seed.
pub fn entropy_mc(state: &MixtureState, domain: &Domain, ecfg: &EntropyConfig) -> Result<f64> {
    let cache = MixtureCache::build(state)?;
    entropy_mc_cached(&cache, domain, ecfg)
}

pub(crate) fn entropy_mc_cached(
    cache: &MixtureCache,
    domain: &Domain,
    ecfg: &EntropyConfig,
) -> Result<f64> {
    if domain.dim() != cache.dim() {
        return Err(CoreError::DimensionMismatch { expected: cache.dim(), got: domain.dim() });
    }
    let d = cache.dim();
    let b = ecfg.n_entropy_samples as f64;
    let flog = floor_log();
    let mut entropy = 0.0;
    let mut eps = vec![0.0; d];
    let mut z = vec![0.0; d];
    for (k, comp) in cache.comps.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(ecfg.seed, k as u64));
        let mut acc = 0.0;
        for _ in 0..ecfg.n_entropy_samples {
            comp.sample_into(&mut rng, &mut eps, &mut z);
            if domain.contains(&z) {
                acc += cache.log_density(&z).max(flog);
            }
        }
        entropy -= cache.weights[k] * acc / b;
    }
    Ok(entropy)
}

/// Mini-batch estimators of the data-term gradient blocks:
/// `ĝ_k = (π_k/B) S_k Σ_i (X_i − μ_k) q_k(X_i)`,
/// `Ĥ_k = (π_k/2B) S_k Σ_i ((X_i − μ_k)(X_i − μ_k)ᵀ S_k − I) q_k(X_i)`,
/// `f̂_k = (1/B) Σ_i (q_k(X_i) − q_K(X_i))`.
pub fn data_gradients(state: &MixtureState, batch: &Points) -> Result<DataGradients> {
    let cache = MixtureCache::build(state)?;
    data_gradients_cached(&cache, batch)
}

pub(crate) fn data_gradients_cached(cache: &MixtureCache, batch: &Points) -> Result<DataGradients> {
    if batch.is_empty() {
        return Err(CoreError::EmptySamples);
    }
    if batch.dim() != cache.dim() {
        return Err(CoreError::DimensionMismatch { expected: cache.dim(), got: batch.dim() });
    }
    let d = cache.dim();
    let k_total = cache.comps.len();
    let b = batch.len() as f64;

    let mut mean = Vec::with_capacity(k_total);
    let mut covariance = Vec::with_capacity(k_total);
    let mut density_means = Vec::with_capacity(k_total);

    let mut r = vec![0.0; d];
    let mut y = vec![0.0; d];
    for (k, comp) in cache.comps.iter().enumerate() {
        let pi = cache.weights[k];
        let mut sum_q = 0.0;
        let mut sum_yq = vec![0.0; d];
        let mut sum_yyq = vec![0.0; d * d];
        for x in batch.rows() {
            let q = comp.log_density_with_parts(x, &mut r, &mut y).exp();
            sum_q += q;
            for i in 0..d {
                let yi_q = y[i] * q;
                sum_yq[i] += yi_q;
                for j in 0..=i {
                    sum_yyq[i * d + j] += yi_q * y[j];
                }
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                sum_yyq[i * d + j] = sum_yyq[j * d + i];
            }
        }
        let g = DVector::from_iterator(d, sum_yq.iter().map(|v| pi / b * v));
        // (π/2B)(Σ y yᵀ q − S Σ q), symmetrised.
        let mut h = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] = pi / (2.0 * b) * (sum_yyq[i * d + j] - comp.prec[i * d + j] * sum_q);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        mean.push(g);
        covariance.push(h);
        density_means.push(sum_q / b);
    }

    let last = density_means[k_total - 1];
    let weight = density_means[..k_total - 1].iter().map(|m| m - last).collect();
    Ok(DataGradients { mean, covariance, weight })
}

/// Monte-Carlo estimators of the entropy gradient blocks, with the same
/// per-component draws reused across all three blocks:
/// `η̂_k` estimates `∇_{S_k⁻¹} H_S`, `γ̂_k` estimates `∇_{μ_k} H_S`, and
/// `φ̂_k` estimates `∇_{π_k} H_S` relative to component `K`.
pub fn entropy_gradients(
    state: &MixtureState,
    domain: &Domain,
    ecfg: &EntropyConfig,
) -> Result<EntropyGradients> {
    let cache = MixtureCache::build(state)?;
    entropy_gradients_cached(&cache, domain, ecfg)
}

pub(crate) fn entropy_gradients_cached(
    cache: &MixtureCache,
    domain: &Domain,
    ecfg: &EntropyConfig,
) -> Result<EntropyGradients> {
    if domain.dim() != cache.dim() {
        return Err(CoreError::DimensionMismatch { expected: cache.dim(), got: domain.dim() });
    }
    let d = cache.dim();
    let k_total = cache.comps.len();
    let b = ecfg.n_entropy_samples as f64;

    let mut mean = Vec::with_capacity(k_total);
    let mut covariance = Vec::with_capacity(k_total);
    let mut log_means = Vec::with_capacity(k_total);

    let mut eps = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut r = vec![0.0; d];
    let mut y = vec![0.0; d];
    for (k, comp) in cache.comps.iter().enumerate() {
        let pi = cache.weights[k];
        let log_pi = cache.log_weights[k];
        let mut rng = seed::rng(seed::derive(ecfg.seed, k as u64));
        // Split log q_Λ = (log π_k + log q_k) + resid. The own part has a
        // closed form against the zero-mean factors — E[(rrᵀS − I) log q_k]
        // = −I and E[r log q_k] = 0 — so only the nonnegative
        // cross-component residual is left to Monte Carlo.
        let mut sum_w = 0.0;
        let mut sum_y = vec![0.0; d];
        let mut sum_yy = vec![0.0; d * d];
        let mut sum_yw = vec![0.0; d];
        let mut sum_yyw = vec![0.0; d * d];
        for _ in 0..ecfg.n_entropy_samples {
            comp.sample_into(&mut rng, &mut eps, &mut z);
            let logq_own = comp.log_density_with_parts(&z, &mut r, &mut y);
            for i in 0..d {
                sum_y[i] += y[i];
                for j in 0..=i {
                    sum_yy[i * d + j] += y[i] * y[j];
                }
            }
            if !domain.contains(&z) {
                continue;
            }
            let lse = cache.log_density(&z);
            let w = (lse - log_pi - logq_own).max(0.0);
            sum_w += w;
            for i in 0..d {
                let yi_w = y[i] * w;
                sum_yw[i] += yi_w;
                for j in 0..=i {
                    sum_yyw[i * d + j] += yi_w * y[j];
                }
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                sum_yyw[i * d + j] = sum_yyw[j * d + i];
                sum_yy[i * d + j] = sum_yy[j * d + i];
            }
        }
        // The factors r and (rrᵀS − I) are mean-zero under q_k, so the
        // residual's sample mean can be subtracted as a control variate.
        let w_bar = sum_w / b;
        // ∇_{μ_k} H_S = −π_k S_k E[(X − μ_k) log q_Λ 1_S]; the own part drops.
        let gamma = DVector::from_iterator(
            d,
            (0..d).map(|i| -pi * (sum_yw[i] - w_bar * sum_y[i]) / b),
        );
        // ∇_{S_k⁻¹} H_S = −(π_k/2) E[(S r rᵀ S − S) log q_Λ 1_S]
        //              = −(π_k/2) (E[(S r rᵀ S − S) resid 1_S] − S_k).
        let mut eta = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let s_ij = comp.prec[i * d + j];
                let centred = (sum_yyw[i * d + j] - w_bar * sum_yy[i * d + j]) / b;
                eta[(i, j)] = -pi / 2.0 * (centred - s_ij);
            }
        }
        let eta = (&eta + eta.transpose()) * 0.5;
        mean.push(gamma);
        covariance.push(eta);
        // E_{q_k}[log q_Λ 1_S] split the same way: residual by Monte Carlo,
        // own part log π_k + E[log q_k] analytic.
        log_means.push(sum_w / b + log_pi + comp.log_norm - 0.5 * d as f64);
    }

    // ∇_{π_k} H_S = −(E_{q_k}[log q_Λ 1_S] − E_{q_K}[log q_Λ 1_S]).
    let last = log_means[k_total - 1];
    let weight = log_means[..k_total - 1].iter().map(|m| -(m - last)).collect();
    Ok(EntropyGradients { mean, covariance, weight })
}
