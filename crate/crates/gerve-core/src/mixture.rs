//! Gaussian-mixture state: densities, responsibilities, parameter maps,
//! projection onto the compact parameter set, and canonical labelling.
//!
//! The canonical stored form is the precision matrix `S = Σ⁻¹`; the
//! natural-gradient updates are written on `S`, so covariances are derived
//! on demand. Mixture weights are parameterised by `K − 1` free logits
//! `v_k = log(π_k / π_K)` with `v_K ≡ 0`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::seed;

/// Relative tolerance for the symmetry check on precision matrices.
const SYMMETRY_RTOL: f64 = 1e-12;

/// Relative slack used when deciding whether a spectrum already satisfies
/// the covariance bounds. Makes projection exactly idempotent: a matrix
/// reassembled from clamped eigenvalues re-passes the check despite
/// eigensolver round-off.
const SPECTRUM_RTOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Domain and bounds
// ---------------------------------------------------------------------------

/// Axis-aligned box `S` on which the entropy is defined and data live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(CoreError::InvalidInput("domain bounds must be non-empty and equal length".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(CoreError::InvalidInput(format!(
                    "domain requires finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Cube `[-half, half]^d`.
    pub fn symmetric_box(dim: usize, half: f64) -> Result<Self> {
        Self::new(vec![-half; dim], vec![half; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Closed-box membership test (the indicator `1_S`).
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }
}

/// The compact parameter set: mean box, covariance spectrum bounds, and the
/// logit box for the `K − 1` free logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub mu_max: f64,
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    pub v_max: f64,
}

impl ParameterBounds {
    pub fn new(mu_max: f64, sigma2_min: f64, sigma2_max: f64, v_max: f64) -> Result<Self> {
        if !(mu_max > 0.0 && mu_max.is_finite()) {
            return Err(CoreError::InvalidInput(format!("mu_max must be positive, got {mu_max}")));
        }
        if !(sigma2_min > 0.0 && sigma2_min < sigma2_max && sigma2_max.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "need 0 < sigma2_min < sigma2_max, got [{sigma2_min}, {sigma2_max}]"
            )));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(CoreError::InvalidInput(format!("v_max must be positive, got {v_max}")));
        }
        Ok(Self { mu_max, sigma2_min, sigma2_max, v_max })
    }

    /// Smallest `v_max` that lets any designated subset of components reach
    /// weight `eps` simultaneously in a `K`-component mixture.
    pub fn min_v_max_for_floor(k: usize, eps: f64) -> f64 {
        0.5 * (1.0 / eps - (k as f64 - 1.0)).ln()
    }

    /// True when this logit box can express weights as small as `eps`.
    pub fn admits_weight_floor(&self, k: usize, eps: f64) -> bool {
        self.v_max >= Self::min_v_max_for_floor(k, eps)
    }
}

// ---------------------------------------------------------------------------
// Component and state
// ---------------------------------------------------------------------------

/// One Gaussian component stored as `(mean, precision)` with the precision
/// symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

impl GaussianComponent {
    /// Validates symmetry (1e-12 relative) and positive definiteness.
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(CoreError::DimensionMismatch { expected: d, got: precision.nrows() });
        }
        if mean.iter().any(|v| !v.is_finite()) || precision.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput("component parameters must be finite".into()));
        }
        let scale = precision.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (precision[(i, j)] - precision[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(CoreError::InvalidInput("precision matrix is not symmetric".into()));
                }
            }
        }
        if Cholesky::new(precision.clone()).is_none() {
            return Err(CoreError::InvalidInput("precision matrix is not positive definite".into()));
        }
        Ok(Self { mean, precision })
    }

    /// Isotropic component with covariance `sigma2 · I`.
    pub fn isotropic(mean: DVector<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(CoreError::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
        }
        let d = mean.len();
        let precision = DMatrix::from_diagonal_element(d, d, 1.0 / sigma2);
        Self::new(mean, precision)
    }

    pub(crate) fn new_unchecked(mean: DVector<f64>, precision: DMatrix<f64>) -> Self {
        Self { mean, precision }
    }

    /// Replaces the mean, keeping the precision.
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        Self::new(mean, self.precision.clone())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Covariance `Σ = S⁻¹`, derived on demand.
    pub fn covariance(&self) -> DMatrix<f64> {
        Cholesky::new(self.precision.clone())
            .expect("validated precision is positive definite")
            .inverse()
    }

    /// Largest covariance eigenvalue.
    pub fn eig_max_covariance(&self) -> f64 {
        let eig = SymmetricEigen::new(self.precision.clone());
        let min_prec = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        1.0 / min_prec
    }

    /// Density at `x`: `(2π)^{-d/2} det(S)^{1/2} exp(-½ (x-μ)ᵀ S (x-μ))`.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(CoreError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let cache = CompCache::new(self)?;
        Ok(cache.log_density(x))
    }
}

/// Full variational parameter: `K − 1` free logits plus per-component
/// `(mean, precision)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureStateRaw", into = "MixtureStateRaw")]
pub struct MixtureState {
    logits: Vec<f64>,
    components: Vec<GaussianComponent>,
}

impl MixtureState {
    pub fn new(logits: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(CoreError::InvalidInput("mixture needs at least one component".into()));
        }
        if logits.len() + 1 != components.len() {
            return Err(CoreError::InvalidInput(format!(
                "expected {} logits for {} components, got {}",
                components.len() - 1,
                components.len(),
                logits.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput("logits must be finite".into()));
        }
        let d = components[0].dim();
        for c in &components {
            if c.dim() != d {
                return Err(CoreError::DimensionMismatch { expected: d, got: c.dim() });
            }
        }
        Ok(Self { logits, components })
    }

    /// Equal-weight mixture.
    pub fn equal_weights(components: Vec<GaussianComponent>) -> Result<Self> {
        let k = components.len();
        Self::new(vec![0.0; k.saturating_sub(1)], components)
    }

    pub(crate) fn from_parts_unchecked(
        logits: Vec<f64>,
        components: Vec<GaussianComponent>,
    ) -> Self {
        Self { logits, components }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &GaussianComponent {
        &self.components[k]
    }

    /// Weights derived from the logits; always on the open simplex.
    pub fn weights(&self) -> Vec<f64> {
        weights_from_logits(&self.logits).expect("stored logits are finite")
    }

    /// Mixture density `Σ_k π_k q_k(x)`.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        let cache = MixtureCache::build(self)?;
        cache.check_dim(x)?;
        Ok(cache.density(x))
    }

    /// Log mixture density via log-sum-exp; `-∞` only if every component
    /// underflows in log space (impossible for finite parameters).
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let cache = MixtureCache::build(self)?;
        cache.check_dim(x)?;
        Ok(cache.log_density(x))
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cache = MixtureCache::build(self)?;
        cache.check_dim(x)?;
        cache.responsibilities(x)
    }

    /// All parameters finite?
    pub fn all_finite(&self) -> bool {
        self.logits.iter().all(|v| v.is_finite())
            && self.components.iter().all(|c| {
                c.mean.iter().all(|v| v.is_finite()) && c.precision.iter().all(|v| v.is_finite())
            })
    }

    /// Projects onto the compact set: means clipped componentwise to
    /// `[-mu_max, mu_max]`, covariance spectra clamped to
    /// `[sigma2_min, sigma2_max]` by symmetric eigendecomposition, and the
    /// free logits clipped to `[-v_max, v_max]`. Idempotent.
    pub fn project_to_bounds(&self, bounds: &ParameterBounds) -> MixtureState {
        self.project_to_bounds_counting(bounds).0
    }

    /// As [`project_to_bounds`](Self::project_to_bounds); also reports
    /// whether any covariance spectrum needed clamping.
    pub fn project_to_bounds_counting(&self, bounds: &ParameterBounds) -> (MixtureState, bool) {
        let mut spectrum_clamped = false;
        let components = self
            .components
            .iter()
            .map(|c| {
                let mean = DVector::from_iterator(
                    c.mean.len(),
                    c.mean.iter().map(|v| v.clamp(-bounds.mu_max, bounds.mu_max)),
                );
                let (precision, clamped) = clamp_precision_spectrum(&c.precision, bounds);
                spectrum_clamped |= clamped;
                GaussianComponent::new_unchecked(mean, precision)
            })
            .collect();
        let logits = self.logits.iter().map(|v| v.clamp(-bounds.v_max, bounds.v_max)).collect();
        (MixtureState { logits, components }, spectrum_clamped)
    }

    /// True when the state already lies in the compact set (spectrum check
    /// uses the same small relative slack as projection).
    pub fn satisfies_bounds(&self, bounds: &ParameterBounds) -> bool {
        self.logits.iter().all(|v| v.abs() <= bounds.v_max)
            && self.components.iter().all(|c| {
                c.mean.iter().all(|m| m.abs() <= bounds.mu_max)
                    && spectrum_within(&c.precision, bounds)
            })
    }

    /// Relabels components into lexicographic order on the flattened
    /// `(mean, precision)` coordinates; weights are permuted consistently
    /// and logits recomputed against the new last component. The mixture
    /// density is pointwise unchanged. Ties keep their original order.
    pub fn canonical_order(&self) -> MixtureState {
        let weights = self.weights();
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| lex_cmp(&self.components[a], &self.components[b]));
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return self.clone();
        }
        let components: Vec<GaussianComponent> =
            order.iter().map(|&j| self.components[j].clone()).collect();
        let permuted: Vec<f64> = order.iter().map(|&j| weights[j]).collect();
        MixtureState { logits: logits_from_weights(&permuted), components }
    }
}

fn lex_cmp(a: &GaussianComponent, b: &GaussianComponent) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for (x, y) in a.mean.iter().zip(b.mean.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    let d = a.dim();
    for i in 0..d {
        for j in 0..d {
            match a.precision[(i, j)].total_cmp(&b.precision[(i, j)]) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
    }
    Ordering::Equal
}

fn spectrum_within(precision: &DMatrix<f64>, bounds: &ParameterBounds) -> bool {
    let eig = SymmetricEigen::new(precision.clone());
    let lo = (1.0 / bounds.sigma2_max) * (1.0 - SPECTRUM_RTOL);
    let hi = (1.0 / bounds.sigma2_min) * (1.0 + SPECTRUM_RTOL);
    eig.eigenvalues.iter().all(|&l| l >= lo && l <= hi)
}

/// Clamps the covariance spectrum to `[sigma2_min, sigma2_max]`. Returns the
/// input unchanged (bit for bit) when it already satisfies the bounds, which
/// makes projection idempotent.
fn clamp_precision_spectrum(
    precision: &DMatrix<f64>,
    bounds: &ParameterBounds,
) -> (DMatrix<f64>, bool) {
    if spectrum_within(precision, bounds) {
        return (precision.clone(), false);
    }
    let d = precision.nrows();
    let sym = (precision + precision.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clamped = DVector::from_iterator(
        d,
        eig.eigenvalues.iter().map(|&l| {
            // Work on covariance eigenvalues; non-positive precision
            // eigenvalues map to the smallest allowed variance's precision.
            let sigma2 = if l > 0.0 { 1.0 / l } else { f64::INFINITY };
            1.0 / sigma2.clamp(bounds.sigma2_min, bounds.sigma2_max)
        }),
    );
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    ((&rebuilt + rebuilt.transpose()) * 0.5, true)
}

/// Spectrum clamp exposed to the optimiser for repairing a
/// non-positive-definite precision before the mean step.
pub(crate) fn clamp_spectrum_for_step(
    precision: &DMatrix<f64>,
    bounds: &ParameterBounds,
) -> (DMatrix<f64>, bool) {
    clamp_precision_spectrum(precision, bounds)
}

/// Softmax with the last logit pinned to zero:
/// `π_k = exp(v_k) / (1 + Σ_{j<K} exp(v_j))`, `π_K = 1 / (1 + Σ exp(v_j))`.
pub fn weights_from_logits(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidInput("logits must be finite".into()));
    }
    let m = logits.iter().cloned().fold(0.0f64, f64::max);
    let mut exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    exps.push((-m).exp());
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Inverse of [`weights_from_logits`]: `v_k = log(π_k / π_K)`.
pub fn logits_from_weights(weights: &[f64]) -> Vec<f64> {
    let last = weights[weights.len() - 1];
    weights[..weights.len() - 1].iter().map(|w| (w / last).ln()).collect()
}

// ---------------------------------------------------------------------------
// Outside mass
// ---------------------------------------------------------------------------

/// Estimates `ε(λ) = 1 − P(X ∈ S)` for `X` drawn from the component: exact
/// product of univariate normal CDF differences when the precision is
/// diagonal, Monte-Carlo fraction outside otherwise. Deterministic given the
/// seed.
pub fn outside_mass(
    comp: &GaussianComponent,
    domain: &Domain,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    let d = comp.dim();
    if domain.dim() != d {
        return Err(CoreError::DimensionMismatch { expected: d, got: domain.dim() });
    }
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || comp.precision[(i, j)] == 0.0));
    if diagonal {
        let mut inside = 1.0;
        for i in 0..d {
            let sigma = comp.precision[(i, i)].sqrt().recip();
            let zl = (domain.lower[i] - comp.mean[i]) / sigma;
            let zu = (domain.upper[i] - comp.mean[i]) / sigma;
            inside *= normal_cdf(zu) - normal_cdf(zl);
        }
        return Ok((1.0 - inside).clamp(0.0, 1.0));
    }
    if n_mc == 0 {
        return Err(CoreError::InvalidInput("n_mc must be ≥ 1 for the Monte-Carlo path".into()));
    }
    let cache = CompCache::new(comp)?;
    let mut rng = seed::rng(seed::derive(seed, seed::tags::OUTSIDE_MASS));
    let mut eps = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut outside = 0usize;
    for _ in 0..n_mc {
        cache.sample_into(&mut rng, &mut eps, &mut z);
        if !domain.contains(&z) {
            outside += 1;
        }
    }
    Ok(outside as f64 / n_mc as f64)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Evaluation caches (hot paths)
// ---------------------------------------------------------------------------

/// Per-component quantities precomputed for dense evaluation loops.
pub(crate) struct CompCache {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Precision, row-major.
    pub prec: Vec<f64>,
    /// `-(d/2) log 2π + ½ log det S`.
    pub log_norm: f64,
    /// Lower-triangular Cholesky factor of `Σ`, row-major; draws map
    /// standard normals through `z = μ + L e`.
    samp_l: Vec<f64>,
}

impl CompCache {
    pub fn new(comp: &GaussianComponent) -> Result<Self> {
        let d = comp.dim();
        let chol_s = Cholesky::new(comp.precision.clone())
            .ok_or_else(|| CoreError::NonFinite("precision lost positive definiteness".into()))?;
        let log_det_s: f64 = chol_s.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let cov = chol_s.inverse();
        let chol_cov = Cholesky::new(cov)
            .ok_or_else(|| CoreError::NonFinite("covariance lost positive definiteness".into()))?;
        let l = chol_cov.l();
        let mut samp_l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                samp_l[i * d + j] = l[(i, j)];
            }
        }
        let mut prec = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                prec[i * d + j] = comp.precision[(i, j)];
            }
        }
        Ok(Self {
            dim: d,
            mean: comp.mean.iter().cloned().collect(),
            prec,
            log_norm: -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_det_s,
            samp_l,
        })
    }

    /// `log q(x)`.
    #[inline]
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut quad = 0.0;
        for i in 0..d {
            let ri = x[i] - self.mean[i];
            let mut yi = 0.0;
            for j in 0..d {
                yi += self.prec[i * d + j] * (x[j] - self.mean[j]);
            }
            quad += ri * yi;
        }
        self.log_norm - 0.5 * quad
    }

    /// `log q(x)` while storing the residual `r = x − μ` and `y = S r`.
    #[inline]
    pub fn log_density_with_parts(&self, x: &[f64], r: &mut [f64], y: &mut [f64]) -> f64 {
        let d = self.dim;
        for i in 0..d {
            r[i] = x[i] - self.mean[i];
        }
        let mut quad = 0.0;
        for i in 0..d {
            let mut yi = 0.0;
            for j in 0..d {
                yi += self.prec[i * d + j] * r[j];
            }
            y[i] = yi;
            quad += r[i] * yi;
        }
        self.log_norm - 0.5 * quad
    }

    /// Draws one sample: fills `eps` with standard normals and `z` with
    /// `μ + L·eps`.
    #[inline]
    pub fn sample_into<R: Rng>(&self, rng: &mut R, eps: &mut [f64], z: &mut [f64]) {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        self.transform_into(eps, z);
    }

    #[inline]
    fn transform_into(&self, eps: &[f64], z: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let mut v = self.mean[i];
            for j in 0..=i {
                v += self.samp_l[i * d + j] * eps[j];
            }
            z[i] = v;
        }
    }
}

/// Whole-mixture evaluation cache.
pub(crate) struct MixtureCache {
    pub comps: Vec<CompCache>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl MixtureCache {
    pub fn build(state: &MixtureState) -> Result<Self> {
        let comps = state.components.iter().map(CompCache::new).collect::<Result<Vec<_>>>()?;
        let weights = state.weights();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { comps, weights, log_weights })
    }

    pub fn dim(&self) -> usize {
        self.comps[0].dim
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(CoreError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// `Σ_k π_k q_k(x)`; may return subnormal values.
    #[inline]
    pub fn density(&self, x: &[f64]) -> f64 {
        self.comps
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.log_density(x).exp())
            .sum()
    }

    /// Log mixture density via log-sum-exp.
    #[inline]
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut terms = [0.0f64; 8];
        let k = self.comps.len();
        let mut heap;
        let buf: &mut [f64] = if k <= 8 {
            &mut terms[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        let mut max = f64::NEG_INFINITY;
        for (i, (c, lw)) in self.comps.iter().zip(&self.log_weights).enumerate() {
            let t = lw + c.log_density(x);
            buf[i] = t;
            if t > max {
                max = t;
            }
        }
        if !max.is_finite() {
            return max;
        }
        let sum: f64 = buf.iter().map(|t| (t - max).exp()).sum();
        max + sum.ln()
    }

    /// Responsibilities in log space to dodge underflow.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let k = self.comps.len();
        let mut logs = Vec::with_capacity(k);
        let mut max = f64::NEG_INFINITY;
        for (c, lw) in self.comps.iter().zip(&self.log_weights) {
            let t = lw + c.log_density(x);
            logs.push(t);
            if t > max {
                max = t;
            }
        }
        if !max.is_finite() {
            return Err(CoreError::DegeneratePoint);
        }
        let mut out: Vec<f64> = logs.iter().map(|t| (t - max).exp()).collect();
        let total: f64 = out.iter().sum();
        if total == 0.0 || !total.is_finite() {
            return Err(CoreError::DegeneratePoint);
        }
        for r in &mut out {
            *r /= total;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Serialisation: {"logits": [...], "components": [{"mean": [...], "precision": [[...]]}]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ComponentRaw {
    mean: Vec<f64>,
    precision: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MixtureStateRaw {
    logits: Vec<f64>,
    components: Vec<ComponentRaw>,
}

impl From<MixtureState> for MixtureStateRaw {
    fn from(state: MixtureState) -> Self {
        let components = state
            .components
            .iter()
            .map(|c| ComponentRaw {
                mean: c.mean.iter().cloned().collect(),
                precision: (0..c.dim())
                    .map(|i| (0..c.dim()).map(|j| c.precision[(i, j)]).collect())
                    .collect(),
            })
            .collect();
        MixtureStateRaw { logits: state.logits, components }
    }
}

impl TryFrom<MixtureStateRaw> for MixtureState {
    type Error = CoreError;

    fn try_from(raw: MixtureStateRaw) -> Result<Self> {
        let components = raw
            .components
            .into_iter()
            .map(|c| {
                let d = c.mean.len();
                if c.precision.len() != d || c.precision.iter().any(|row| row.len() != d) {
                    return Err(CoreError::InvalidInput("precision must be a d×d array".into()));
                }
                let flat: Vec<f64> = c.precision.into_iter().flatten().collect();
                GaussianComponent::new(DVector::from_vec(c.mean), DMatrix::from_row_slice(d, d, &flat))
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureState::new(raw.logits, components)
    }
}
