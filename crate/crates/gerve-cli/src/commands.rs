//! Subcommand implementations and output emission.
//!
//! Every output file is schema-versioned and byte-deterministic: rerunning
//! a subcommand with identical inputs and seed reproduces it exactly.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use gerve_core::bootstrap::{bootstrap_uq, confidence_ellipse, BootstrapConfig, Ellipse};
use gerve_core::metrics::{
    gen_mixture_sample, run_benchmark, triangle_spec, two_blob_spec, BenchConfig, BenchMethod,
    GerveHyper,
};
use gerve_core::mixture::{Domain, MixtureState, ParameterBounds};
use gerve_core::modes::{assign_clusters, elbow_scan, resolve_modes, PruneMergeConfig, ResolvedMode};
use gerve_core::optimizer::{fit, FitResult, MixtureInit, StepSizeSchedule, TemperatureSchedule};
use gerve_core::points::Points;
use gerve_core::seed;

use crate::config::{
    self, effective_normalise, effective_pad, GerveConfig, ResolvedSetup,
};
use crate::geo::{self, NormalisationTransform};
use crate::ingest::{ingest_csv, FilterSpec, PointDataset};

#[derive(Parser, Debug)]
#[command(
    name = "gerve",
    about = "Likelihood-free mode estimation and modal clustering with entropy-regularised Gaussian mixtures",
    version
)]
pub struct Cli {
    /// JSON configuration file (overrides preset fields).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed (config file and GERVE_SEED take precedence).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker-pool size for replicate-parallel stages (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Column holding the first coordinate (config default: "x").
    #[arg(long)]
    pub x_col: Option<String>,
    /// Column holding the second coordinate (config default: "y").
    #[arg(long)]
    pub y_col: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Writes a synthetic dataset as points.csv.
    Gen {
        /// One of: triangle-cluster, triangle-modes, two-blob, urban.
        #[arg(long, default_value = "triangle-modes")]
        preset: String,
        #[arg(long, default_value_t = 6000)]
        n: usize,
        /// Overrides the preset's component variance (triangle presets).
        #[arg(long)]
        sigma2: Option<f64>,
    },
    /// Fits a mixture; writes fit.json and trajectory.csv.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        preset: Option<String>,
        /// Component count override.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Resolves modes from a fit; writes modes.json and modes.csv.
    Modes {
        /// fit.json produced by the fit subcommand.
        #[arg(long)]
        state: PathBuf,
    },
    /// Assigns points to components by responsibility; writes labels.csv.
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        state: PathBuf,
    },
    /// Constant-temperature scan; writes elbow.json and elbow.csv.
    Elbow {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        preset: Option<String>,
        /// Descending comma-separated temperature grid.
        #[arg(long)]
        omegas: Option<String>,
    },
    /// Matched-mode bootstrap; writes bootstrap.json and bootstrap.csv.
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        preset: Option<String>,
        /// Replicate count override.
        #[arg(long)]
        l: Option<usize>,
    },
    /// Replicated metric benchmark; writes bench_long.csv,
    /// bench_summary.json, and bench_plot.csv.
    Bench,
}

pub fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    if cli.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .context("cannot build worker pool")?;
        pool.install(|| dispatch(&cli))
    } else {
        dispatch(&cli)
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen { preset, n, sigma2 } => cmd_gen(cli, preset, *n, *sigma2),
        Command::Fit { data, preset, k } => cmd_fit(cli, data, preset.as_deref(), *k),
        Command::Modes { state } => cmd_modes(cli, state),
        Command::Cluster { data, state } => cmd_cluster(cli, data, state),
        Command::Elbow { data, preset, omegas } => cmd_elbow(cli, data, preset.as_deref(), omegas.as_deref()),
        Command::Bootstrap { data, preset, l } => cmd_bootstrap(cli, data, preset.as_deref(), *l),
        Command::Bench => cmd_bench(cli),
    }
}

fn resolve_seed(cli: &Cli, cfg: &GerveConfig) -> u64 {
    cfg.seed
        .or_else(|| std::env::var("GERVE_SEED").ok().and_then(|v| v.parse().ok()))
        .or(cli.seed)
        .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

/// Synthetic urban point fixture: anisotropic clusters inside a
/// London-like longitude/latitude window plus uniform background, a few
/// out-of-window strays, and a severity column for filter exercises.
pub fn urban_rows(n: usize, seed_value: u64) -> Vec<(f64, f64, &'static str)> {
    const CENTRES: [(f64, f64, f64, f64); 10] = [
        (-0.079, 51.524, 0.004, 0.003),
        (-0.100, 51.495, 0.003, 0.004),
        (-0.132, 51.510, 0.005, 0.003),
        (-0.142, 51.515, 0.006, 0.002),
        (-0.089, 51.506, 0.004, 0.004),
        (-0.320, 51.580, 0.007, 0.005),
        (0.110, 51.420, 0.006, 0.006),
        (-0.400, 51.370, 0.005, 0.004),
        (0.210, 51.610, 0.008, 0.005),
        (-0.250, 51.460, 0.004, 0.006),
    ];
    const WEIGHTS: [f64; 10] = [0.16, 0.14, 0.12, 0.10, 0.10, 0.09, 0.08, 0.08, 0.07, 0.06];
    let mut rng = seed::rng(seed::derive(seed_value, seed::tags::GENERATE));
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let (lon, lat) = if u < 0.80 {
            let mut pick: f64 = rng.gen();
            let mut idx = CENTRES.len() - 1;
            for (i, w) in WEIGHTS.iter().enumerate() {
                if pick < *w {
                    idx = i;
                    break;
                }
                pick -= w;
            }
            let (cx, cy, sx, sy) = CENTRES[idx];
            let gx: f64 = rng.sample(rand_distr_standard());
            let gy: f64 = rng.sample(rand_distr_standard());
            (cx + sx * gx, cy + sy * gy)
        } else if u < 0.96 {
            (rng.gen_range(-0.54..0.33), rng.gen_range(51.28..51.70))
        } else {
            // Strays outside the analysis window.
            (rng.gen_range(0.40..0.80), rng.gen_range(51.74..51.95))
        };
        let severity = match rng.gen_range(0..10) {
            0..=3 => "serious",
            4..=5 => "fatal",
            _ => "slight",
        };
        rows.push((lon, lat, severity));
    }
    rows
}

fn rand_distr_standard() -> rand_distr::StandardNormal {
    rand_distr::StandardNormal
}

fn cmd_gen(cli: &Cli, preset: &str, n: usize, sigma2: Option<f64>) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => GerveConfig::load(p)?,
        None => GerveConfig::default(),
    };
    let seed_value = resolve_seed(cli, &cfg);
    let path = cli.out.join("points.csv");
    let mut w = csv::Writer::from_path(&path)?;
    match preset {
        "urban" => {
            w.write_record(["longitude", "latitude", "severity"])?;
            for (lon, lat, sev) in urban_rows(n, seed_value) {
                w.write_record(&[format!("{lon}"), format!("{lat}"), sev.to_string()])?;
            }
        }
        name => {
            let spec = match name {
                "triangle-cluster" => triangle_spec(sigma2.unwrap_or(0.25)),
                "triangle-modes" => triangle_spec(sigma2.unwrap_or(0.1)),
                "two-blob" => two_blob_spec(4.0, sigma2.unwrap_or(0.25)),
                other => bail!("unknown data preset '{other}'"),
            };
            let points = gen_mixture_sample(&spec, n, seed_value)?;
            w.write_record(["x", "y"])?;
            for row in points.rows() {
                w.write_record(&[format!("{}", row[0]), format!("{}", row[1])])?;
            }
        }
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// shared pipeline
// ---------------------------------------------------------------------------

struct PipelineOutput {
    points: Points,
    dataset: PointDataset,
    transform: Option<NormalisationTransform>,
    domain_override: Option<Domain>,
}

/// Ingest, then the optional normalise and background-padding stages.
fn load_pipeline(setup: &ResolvedSetup, data: &DataArgs) -> Result<PipelineOutput> {
    let x_col = data.x_col.clone().unwrap_or_else(|| setup.config.data.x_col.clone());
    let y_col = data.y_col.clone().unwrap_or_else(|| setup.config.data.y_col.clone());
    let filters: &[FilterSpec] = &setup.config.data.filters;
    let mut dataset = ingest_csv(&data.data, &x_col, &y_col, filters)?;

    let mut points = dataset.points.clone();
    let mut transform = None;
    let mut domain_override = None;
    if let Some(ncfg) = effective_normalise(setup) {
        let window = match (ncfg.window_x, ncfg.window_y) {
            (Some(x), Some(y)) => Some(([x[0], y[0]], [x[1], y[1]])),
            _ => None,
        };
        let (mapped, t) = geo::normalise(&points, window, ncfg.target)?;
        points = mapped;
        if let Some(pcfg) = effective_pad(setup) {
            let inner = t.rectangle();
            let outer = Domain::new(
                vec![pcfg.outer[0][0], pcfg.outer[0][1]],
                vec![pcfg.outer[1][0], pcfg.outer[1][1]],
            )?;
            let (padded, m) = geo::pad_background(&points, &inner, &outer, pcfg.density_ratio, setup.seed)?;
            points = padded;
            dataset.n_padded = m;
            domain_override = Some(outer_margin(&outer));
        }
        transform = Some(t);
    }
    Ok(PipelineOutput { points, dataset, transform, domain_override })
}

/// Slightly enlarges the padding box so padded points sit strictly inside
/// the entropy domain.
fn outer_margin(outer: &Domain) -> Domain {
    let grow = 0.05;
    Domain::new(
        outer.lower().iter().map(|v| v - grow).collect(),
        outer.upper().iter().map(|v| v + grow).collect(),
    )
    .expect("valid outer domain")
}

// ---------------------------------------------------------------------------
// fit / modes / cluster
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct IngestSummary {
    rows_used: usize,
    rows_skipped: usize,
    rows_filtered: usize,
    rows_padded: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitDocument {
    schema: String,
    preset: String,
    seed: u64,
    k: usize,
    sigma2_init: f64,
    bounds: ParameterBounds,
    prune_merge: PruneMergeConfig,
    ingest: IngestSummary,
    transform: Option<NormalisationTransform>,
    iterations_run: usize,
    stop_reason: gerve_core::optimizer::StopReason,
    clamp_events: usize,
    state: MixtureState,
}

fn cmd_fit(cli: &Cli, data: &DataArgs, preset: Option<&str>, k: Option<usize>) -> Result<()> {
    let mut setup = config::resolve(cli.config.as_deref(), preset, cli.seed)?;
    if let Some(k) = k {
        setup.preset.k = k;
    }
    let pipeline = load_pipeline(&setup, data)?;
    let mut fit_cfg = setup.preset.fit.clone();
    if let Some(domain) = pipeline.domain_override.clone() {
        fit_cfg.domain = domain;
    }
    fit_cfg.record_trajectory = true;
    let result = fit(&pipeline.points, setup.preset.k, &setup.preset.init, &fit_cfg)?;

    write_trajectory(&cli.out.join("trajectory.csv"), &result)?;
    let doc = FitDocument {
        schema: "gerve/fit/v1".into(),
        preset: setup.preset.name.clone(),
        seed: setup.seed,
        k: setup.preset.k,
        sigma2_init: setup.preset.sigma2_init,
        bounds: fit_cfg.bounds,
        prune_merge: setup.preset.prune_merge,
        ingest: IngestSummary {
            rows_used: pipeline.dataset.points.len(),
            rows_skipped: pipeline.dataset.n_skipped,
            rows_filtered: pipeline.dataset.n_filtered,
            rows_padded: pipeline.dataset.n_padded,
        },
        transform: pipeline.transform,
        iterations_run: result.iterations_run,
        stop_reason: result.stop_reason,
        clamp_events: result.clamp_events,
        state: result.final_state.clone(),
    };
    write_json(&cli.out.join("fit.json"), &doc)?;
    println!(
        "fit: {} iterations ({:?}), wrote fit.json and trajectory.csv",
        result.iterations_run, result.stop_reason
    );
    Ok(())
}

fn write_trajectory(path: &Path, result: &FitResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = result.final_state.dim();
    let mut header = vec!["iter".to_string(), "k".to_string()];
    for i in 0..d {
        header.push(format!("mean_{i}"));
    }
    header.extend(["eigmax_sigma".into(), "omega".into(), "rho".into()]);
    w.write_record(&header)?;
    if let Some(traj) = &result.trajectory {
        for snap in traj {
            for (k, comp) in snap.components.iter().enumerate() {
                let mut rec = vec![format!("{}", snap.iter), format!("{k}")];
                rec.extend(comp.mean.iter().map(|v| format!("{v}")));
                rec.push(format!("{}", comp.eig_max_sigma));
                rec.push(format!("{}", snap.omega));
                rec.push(format!("{}", snap.rho));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ModeRecord {
    id: usize,
    weight: f64,
    center: Vec<f64>,
    center_original: Option<Vec<f64>>,
    covariance_upper: Vec<f64>,
    source_components: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModesDocument {
    schema: String,
    modes: Vec<ModeRecord>,
}

fn mode_records(modes: &[ResolvedMode], transform: Option<&NormalisationTransform>) -> Vec<ModeRecord> {
    modes
        .iter()
        .enumerate()
        .map(|(id, m)| {
            let d = m.center.len();
            let mut upper = Vec::new();
            for i in 0..d {
                for j in i..d {
                    upper.push(m.covariance[(i, j)]);
                }
            }
            ModeRecord {
                id,
                weight: m.weight,
                center: m.center.iter().cloned().collect(),
                center_original: transform.map(|t| t.invert(m.center.as_slice()).to_vec()),
                covariance_upper: upper,
                source_components: m.source_components.clone(),
            }
        })
        .collect()
}

fn write_modes_csv(path: &Path, records: &[ModeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = records.first().map(|r| r.center.len()).unwrap_or(2);
    let mut header = vec!["id".to_string(), "weight".to_string()];
    for i in 0..d {
        header.push(format!("center_{i}"));
    }
    for i in 0..d {
        for j in i..d {
            header.push(format!("cov_{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![format!("{}", r.id), format!("{}", r.weight)];
        rec.extend(r.center.iter().map(|v| format!("{v}")));
        rec.extend(r.covariance_upper.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_modes(cli: &Cli, state_path: &Path) -> Result<()> {
    let doc: FitDocument = read_json(state_path)?;
    let modes = resolve_modes(&doc.state, &doc.prune_merge, doc.sigma2_init, &doc.bounds);
    let records = mode_records(&modes, doc.transform.as_ref());
    write_json(
        &cli.out.join("modes.json"),
        &ModesDocument { schema: "gerve/modes/v1".into(), modes: records },
    )?;
    let doc2: ModesDocument = read_json(&cli.out.join("modes.json"))?;
    write_modes_csv(&cli.out.join("modes.csv"), &doc2.modes)?;
    println!("resolved {} modes", doc2.modes.len());
    Ok(())
}

fn cmd_cluster(cli: &Cli, data: &DataArgs, state_path: &Path) -> Result<()> {
    let doc: FitDocument = read_json(state_path)?;
    let setup = config::resolve(cli.config.as_deref(), Some(&doc.preset), cli.seed)?;
    let pipeline = load_pipeline(&setup, data)?;
    let labels = assign_clusters(&doc.state, &pipeline.points)?;
    let path = cli.out.join("labels.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["index", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record(&[format!("{i}"), format!("{l}")])?;
    }
    w.flush()?;
    println!("wrote {} labels", labels.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// elbow
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ElbowDocument {
    schema: String,
    omega_dagger: f64,
    rows: Vec<gerve_core::modes::ElbowRow>,
}

fn cmd_elbow(cli: &Cli, data: &DataArgs, preset: Option<&str>, omegas: Option<&str>) -> Result<()> {
    let setup = config::resolve(cli.config.as_deref(), preset, cli.seed)?;
    let pipeline = load_pipeline(&setup, data)?;
    let grid: Vec<f64> = match omegas {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<f64>().context("bad omega value"))
            .collect::<Result<Vec<_>>>()?,
        None => setup.config.elbow.omegas.clone(),
    };
    let mut fit_cfg = setup.preset.fit.clone();
    if let Some(domain) = pipeline.domain_override.clone() {
        fit_cfg.domain = domain;
    }
    let scan = elbow_scan(
        &pipeline.points,
        &grid,
        setup.preset.k,
        &setup.preset.init,
        &fit_cfg,
        &setup.preset.prune_merge,
        setup.preset.sigma2_init,
    )?;
    write_json(
        &cli.out.join("elbow.json"),
        &ElbowDocument { schema: "gerve/elbow/v1".into(), omega_dagger: scan.omega_dagger, rows: scan.rows.clone() },
    )?;
    let mut w = csv::Writer::from_path(cli.out.join("elbow.csv"))?;
    w.write_record(["omega", "count_after_prune", "count_after_merge"])?;
    for row in &scan.rows {
        w.write_record(&[
            format!("{}", row.omega),
            format!("{}", row.count_after_prune),
            format!("{}", row.count_after_merge),
        ])?;
    }
    w.flush()?;
    println!("omega_dagger = {}", scan.omega_dagger);
    Ok(())
}

// ---------------------------------------------------------------------------
// bootstrap
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BootstrapModeRecord {
    mode_id: usize,
    stability: f64,
    center: Vec<f64>,
    center_original: Option<Vec<f64>>,
    matches: usize,
    ellipse: Option<Ellipse>,
    /// Ellipse recomputed from the matched cloud scaled to metres, when a
    /// metric projection is configured.
    ellipse_metric: Option<Ellipse>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BootstrapDocument {
    schema: String,
    omega0: f64,
    replicates: usize,
    failed_replicates: usize,
    baseline_empty: bool,
    replicate_mode_counts: Vec<usize>,
    modes: Vec<BootstrapModeRecord>,
}

fn cmd_bootstrap(cli: &Cli, data: &DataArgs, preset: Option<&str>, l: Option<usize>) -> Result<()> {
    let setup = config::resolve(cli.config.as_deref(), preset, cli.seed)?;
    let pipeline = load_pipeline(&setup, data)?;
    let mut fit_cfg = setup.preset.fit.clone();
    if let Some(domain) = pipeline.domain_override.clone() {
        fit_cfg.domain = domain;
    }
    let omega0 = setup.config.bootstrap.omega0.unwrap_or_else(|| {
        match fit_cfg.schedule.temperature {
            TemperatureSchedule::Constant { omega } => omega,
            _ => 1.0,
        }
    });
    let bcfg = BootstrapConfig {
        replicates: l.unwrap_or(setup.config.bootstrap.replicates),
        omega0,
        eta: setup.config.bootstrap.eta,
        tau_min: setup.config.bootstrap.tau_min,
        tau_max: setup.config.bootstrap.tau_max,
        alpha: setup.config.bootstrap.alpha,
        seed: setup.seed,
    };
    bcfg.validate()?;
    let report = bootstrap_uq(
        &pipeline.points,
        setup.preset.k,
        &setup.preset.init,
        &fit_cfg,
        setup.preset.sigma2_init,
        &setup.preset.prune_merge,
        &bcfg,
    )?;

    let metres_per_unit = if let Some(mpu) = setup.config.projection.metres_per_unit {
        Some(mpu)
    } else if setup.config.projection.auto_equirectangular
        || (setup.preset.name == "hotspot" && pipeline.transform.is_some())
    {
        pipeline.transform.as_ref().map(geo::equirectangular_metres_per_unit)
    } else {
        None
    };

    let mut modes = Vec::new();
    for (i, mode) in report.baseline.iter().enumerate() {
        let ellipse_metric = metres_per_unit.and_then(|mpu| {
            let scaled: Vec<nalgebra::DVector<f64>> = report.matches[i]
                .iter()
                .map(|c| nalgebra::DVector::from_vec(vec![c[0] * mpu[0], c[1] * mpu[1]]))
                .collect();
            confidence_ellipse(&scaled, bcfg.alpha).ok()
        });
        modes.push(BootstrapModeRecord {
            mode_id: i,
            stability: report.stability[i],
            center: mode.center.iter().cloned().collect(),
            center_original: pipeline
                .transform
                .as_ref()
                .map(|t| t.invert(mode.center.as_slice()).to_vec()),
            matches: report.matches[i].len(),
            ellipse: report.ellipses[i].clone(),
            ellipse_metric,
        });
    }
    let doc = BootstrapDocument {
        schema: "gerve/bootstrap/v1".into(),
        omega0,
        replicates: bcfg.replicates,
        failed_replicates: report.failed_replicates,
        baseline_empty: report.baseline_empty,
        replicate_mode_counts: report.replicate_mode_counts.clone(),
        modes,
    };
    write_json(&cli.out.join("bootstrap.json"), &doc)?;

    let mut w = csv::Writer::from_path(cli.out.join("bootstrap.csv"))?;
    w.write_record(["mode_id", "s", "center_0", "center_1", "a_m", "b_m", "angle_deg"])?;
    for m in &doc.modes {
        let e = m.ellipse_metric.as_ref().or(m.ellipse.as_ref());
        let (a, b, angle) = e.map(|e| (e.a, e.b, e.angle_deg)).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        w.write_record(&[
            format!("{}", m.mode_id),
            format!("{}", m.stability),
            format!("{}", m.center[0]),
            format!("{}", m.center[1]),
            format!("{a}"),
            format!("{b}"),
            format!("{angle}"),
        ])?;
    }
    w.flush()?;
    println!(
        "bootstrap: {} baseline modes, stability range [{:.2}, {:.2}]",
        doc.modes.len(),
        doc.modes.iter().map(|m| m.stability).fold(f64::INFINITY, f64::min),
        doc.modes.iter().map(|m| m.stability).fold(0.0, f64::max),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn cmd_bench(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => GerveConfig::load(p)?,
        None => GerveConfig::default(),
    };
    let seed_value = resolve_seed(cli, &cfg);
    let params = &cfg.bench;
    let methods = params.methods.clone().unwrap_or_else(|| default_bench_methods(seed_value));
    let bench_cfg = BenchConfig {
        spec: triangle_spec(params.sigma2),
        n_grid: params.n_grid.clone(),
        k_grid: params.k_grid.clone(),
        n_rep: params.n_rep,
        methods,
        eps: params.eps,
        seed: seed_value,
    };
    let result = run_benchmark(&bench_cfg)?;

    let mut w = csv::Writer::from_path(cli.out.join("bench_long.csv"))?;
    w.write_record(["method", "n", "k", "hyper", "metric", "rep", "value"])?;
    for row in &result.rows {
        for (metric, value) in [("mr", row.mr), ("hm", row.hm), ("nn", row.nn)] {
            w.write_record(&[
                row.method.clone(),
                format!("{}", row.n),
                format!("{}", row.k),
                format!("{}", row.hyper),
                metric.to_string(),
                format!("{}", row.rep),
                format!("{value}"),
            ])?;
        }
    }
    w.flush()?;

    #[derive(Serialize)]
    struct BenchDocument<'a> {
        schema: &'a str,
        summaries: &'a [gerve_core::metrics::BenchSummary],
    }
    write_json(
        &cli.out.join("bench_summary.json"),
        &BenchDocument { schema: "gerve/bench/v1", summaries: &result.summaries },
    )?;

    // Plot-data CSV: one row per (metric, method, k, n) panel point.
    let mut w = csv::Writer::from_path(cli.out.join("bench_plot.csv"))?;
    w.write_record(["metric", "method", "k", "n", "aggregate", "ci_lo", "ci_hi"])?;
    for s in &result.summaries {
        w.write_record(&[
            s.metric.clone(),
            s.method.clone(),
            format!("{}", s.k),
            format!("{}", s.n),
            format!("{}", s.aggregate),
            format!("{}", s.ci_lo),
            format!("{}", s.ci_hi),
        ])?;
    }
    w.flush()?;
    println!("bench: {} rows, {} summaries", result.rows.len(), result.summaries.len());
    Ok(())
}

fn default_bench_methods(seed_value: u64) -> Vec<BenchMethod> {
    let preset = gerve_core::optimizer::presets::triangle_modes(seed_value);
    let (omega1, gamma, rho1) = match preset.fit.schedule.stepsize {
        StepSizeSchedule::TemperatureCoupled { rho1, omega1, gamma } => (omega1, gamma, rho1),
        StepSizeSchedule::RobbinsMonro { rho1, .. } => (50.0, 0.7, rho1),
    };
    let beta = match preset.fit.schedule.temperature {
        TemperatureSchedule::Power { beta, .. } => beta,
        TemperatureSchedule::PowerWithFloor { beta, .. } => beta,
        TemperatureSchedule::Constant { .. } => 1.1,
    };
    vec![
        BenchMethod::Gerve {
            name: "gerve".into(),
            hypers: vec![GerveHyper { sigma2_init: preset.sigma2_init, omega1, beta, rho1, gamma }],
            max_iters: preset.fit.max_iters,
            batch_size: preset.fit.batch_size,
            entropy_samples: preset.fit.ecfg.n_entropy_samples,
            bounds: preset.fit.bounds,
            prune_merge: preset.prune_merge,
        },
        BenchMethod::MeanShift {
            name: "mean-shift".into(),
            bandwidths: vec![0.05, 0.1, 0.2],
            max_iters: 300,
            batch_size: usize::MAX,
            collapse_radius: 0.05,
        },
    ]
}

// ---------------------------------------------------------------------------
// IO helpers
// ---------------------------------------------------------------------------

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = std::fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("bad JSON in {}", path.display()))
}

/// Base init used when callers want a quick fixed-covariance baseline; kept
/// for parity with the library examples.
#[allow(dead_code)]
fn default_init() -> MixtureInit {
    MixtureInit::KmeansPlusPlus { sigma2: 0.5 }
}
