//! JSON configuration: presets plus optional per-section overrides.
//!
//! Seed resolution order: config file `seed`, then the `GERVE_SEED`
//! environment variable, then the `--seed` flag, then 0.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use gerve_core::metrics::BenchMethod;
use gerve_core::mixture::ParameterBounds;
use gerve_core::modes::PruneMergeConfig;
use gerve_core::objective::EntropyConfig;
use gerve_core::optimizer::presets::{self, FitPreset};
use gerve_core::optimizer::{
    CovarianceStructure, EarlyStop, FitConfig, MixtureInit, Schedule, StepSizeSchedule,
    TemperatureSchedule,
};

pub const CONFIG_SCHEMA: &str = "gerve/config/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub x_col: String,
    pub y_col: String,
    pub filters: Vec<crate::ingest::FilterSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { x_col: "x".into(), y_col: "y".into(), filters: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NormaliseConfig {
    pub enabled: bool,
    /// `[xmin, xmax]`; data bounding box when absent.
    pub window_x: Option<[f64; 2]>,
    pub window_y: Option<[f64; 2]>,
    /// Target rectangle `[width, height]`; exact-aspect unit area when absent.
    pub target: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PadConfig {
    pub enabled: bool,
    pub outer: [[f64; 2]; 2],
    pub density_ratio: f64,
}

impl Default for PadConfig {
    fn default() -> Self {
        Self { enabled: false, outer: [[-2.0, -2.0], [2.0, 2.0]], density_ratio: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapParams {
    pub replicates: usize,
    pub omega0: Option<f64>,
    pub eta: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub alpha: f64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self { replicates: 200, omega0: None, eta: 0.35, tau_min: 0.08, tau_max: 0.22, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElbowParams {
    pub omegas: Vec<f64>,
}

impl Default for ElbowParams {
    fn default() -> Self {
        Self { omegas: vec![10.0, 3.0, 1.0, 0.3, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchParams {
    pub sigma2: f64,
    pub n_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub n_rep: usize,
    pub eps: f64,
    pub methods: Option<Vec<BenchMethod>>,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self { sigma2: 0.1, n_grid: vec![1024, 4096], k_grid: vec![3], n_rep: 5, eps: 0.05, methods: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ProjectionConfig {
    /// Equirectangular metres-per-degree at the window centroid, divided by
    /// the normalisation scale.
    pub auto_equirectangular: bool,
    /// Explicit affine table: metres per working unit per axis.
    pub metres_per_unit: Option<[f64; 2]>,
}

/// Whole config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct GerveConfig {
    pub schema: String,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub k: Option<usize>,
    pub data: DataConfig,
    pub normalise: Option<NormaliseConfig>,
    pub pad: Option<PadConfig>,
    pub fit: Option<FitConfig>,
    pub init: Option<MixtureInit>,
    pub sigma2_init: Option<f64>,
    pub prune_merge: Option<PruneMergeConfig>,
    pub bootstrap: BootstrapParams,
    pub elbow: ElbowParams,
    pub bench: BenchParams,
    pub projection: ProjectionConfig,
}

impl GerveConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: GerveConfig =
            serde_json::from_str(&text).with_context(|| format!("bad config {}", path.display()))?;
        if !cfg.schema.is_empty() && cfg.schema != CONFIG_SCHEMA {
            bail!("unsupported config schema '{}', expected '{CONFIG_SCHEMA}'", cfg.schema);
        }
        Ok(cfg)
    }
}

/// Preset bundle for the two-blob smoke data: overcomplete fit at a fixed
/// temperature, matching the bootstrap examples.
pub fn two_blob_preset(seed: u64) -> FitPreset {
    let sigma2_init = 0.5;
    FitPreset {
        name: "two-blob".into(),
        k: 3,
        fit: FitConfig {
            max_iters: 600,
            batch_size: 256,
            bounds: ParameterBounds::new(6.0, 0.05, 6.0, 8.0).unwrap(),
            schedule: Schedule {
                temperature: TemperatureSchedule::Constant { omega: 0.05 },
                stepsize: StepSizeSchedule::RobbinsMonro { rho1: 0.2, alpha: 0.1 },
            },
            ecfg: EntropyConfig { n_entropy_samples: 64, seed: 0 },
            domain: gerve_core::mixture::Domain::symmetric_box(2, 8.0).unwrap(),
            structure: CovarianceStructure::Full,
            early_stop: Some(EarlyStop {
                check_every: 10,
                mean_tol: 1e-3,
                prec_rel_tol: 1e-2,
                consecutive: 3,
            }),
            seed,
            record_trajectory: false,
            snapshot_every: 0,
        },
        init: MixtureInit::KmeansPlusPlus { sigma2: sigma2_init },
        sigma2_init,
        prune_merge: PruneMergeConfig { weight_floor: 1e-3, spread_beta: 1.0, merge_radius: 0.5 },
    }
}

/// Looks up a fit preset by name, including the CLI-level `two-blob`.
pub fn preset_by_name(name: &str, seed: u64) -> Result<FitPreset> {
    if name == "two-blob" {
        return Ok(two_blob_preset(seed));
    }
    presets::by_name(name, seed).map_err(Into::into)
}

/// A fully resolved run setup for the estimation subcommands.
#[derive(Debug, Clone)]
pub struct ResolvedSetup {
    pub preset: FitPreset,
    pub config: GerveConfig,
    pub seed: u64,
}

/// Applies the resolution order: preset, then config-file overrides.
pub fn resolve(
    config_path: Option<&Path>,
    preset_flag: Option<&str>,
    seed_flag: Option<u64>,
) -> Result<ResolvedSetup> {
    let config = match config_path {
        Some(p) => GerveConfig::load(p)?,
        None => GerveConfig::default(),
    };
    let seed = config
        .seed
        .or_else(|| std::env::var("GERVE_SEED").ok().and_then(|v| v.parse().ok()))
        .or(seed_flag)
        .unwrap_or(0);
    let name = config
        .preset
        .clone()
        .or_else(|| preset_flag.map(str::to_string))
        .unwrap_or_else(|| "triangle-modes".into());
    let mut preset = preset_by_name(&name, seed)?;
    if let Some(fit) = &config.fit {
        preset.fit = fit.clone();
    }
    preset.fit.seed = seed;
    if let Some(k) = config.k {
        preset.k = k;
    }
    if let Some(init) = &config.init {
        preset.init = init.clone();
    }
    if let Some(s) = config.sigma2_init {
        preset.sigma2_init = s;
    }
    if let Some(pm) = &config.prune_merge {
        preset.prune_merge = *pm;
    }
    preset.fit.validate()?;
    Ok(ResolvedSetup { preset, config, seed })
}

/// Default normalise/pad sections implied by the hotspot preset when the
/// config file does not spell them out.
pub fn effective_normalise(setup: &ResolvedSetup) -> Option<NormaliseConfig> {
    match &setup.config.normalise {
        Some(n) => n.enabled.then(|| n.clone()),
        None if setup.preset.name == "hotspot" => {
            Some(NormaliseConfig { enabled: true, window_x: None, window_y: None, target: Some([1.4, 0.7]) })
        }
        None => None,
    }
}

pub fn effective_pad(setup: &ResolvedSetup) -> Option<PadConfig> {
    match &setup.config.pad {
        Some(p) => p.enabled.then(|| p.clone()),
        None if setup.preset.name == "hotspot" => Some(PadConfig {
            enabled: true,
            outer: [[-2.0, -2.0], [2.0, 2.0]],
            density_ratio: 1e-3,
        }),
        None => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = GerveConfig { schema: CONFIG_SCHEMA.into(), ..Default::default() };
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: GerveConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_config_parses_with_defaults() {
        let cfg: GerveConfig =
            serde_json::from_str(r#"{"preset": "hotspot", "k": 12, "bootstrap": {"replicates": 50}}"#)
                .unwrap();
        assert_eq!(cfg.preset.as_deref(), Some("hotspot"));
        assert_eq!(cfg.k, Some(12));
        assert_eq!(cfg.bootstrap.replicates, 50);
        assert_eq!(cfg.bootstrap.eta, 0.35);
    }

    #[test]
    fn resolution_applies_overrides() {
        let setup = resolve(None, Some("hotspot"), Some(9)).unwrap();
        assert_eq!(setup.preset.name, "hotspot");
        assert_eq!(setup.preset.k, 20);
        assert_eq!(setup.seed, 9);
        assert_eq!(setup.preset.fit.seed, 9);
        assert!(effective_normalise(&setup).is_some());
        assert!(effective_pad(&setup).is_some());

        let plain = resolve(None, Some("triangle-cluster"), None).unwrap();
        assert!(effective_normalise(&plain).is_none());
    }
}
