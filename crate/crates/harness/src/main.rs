use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use phaseless_ibs::born::{i_of_k, mu0_analytic, series_bounds, BoundsSetup};
use phaseless_ibs::dataset::DataKind;
use phaseless_ibs::ibs::k1_norm_estimate;
use phaseless_ibs::io::save_dataset;
use phaseless_ibs::polarization::QuadDataset;
use pibs_harness::export::save_quads;
use pibs_harness::pipeline::linearized_inverse;
use pibs_harness::{compare_methods, export_report, run_experiment, ExperimentConfig, Method, SimulationCache};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "pibs", version, about = "Phaseless inverse Born series experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and save the dataset.
    Forward(Run),
    /// Reconstruct with the configured method and write the report.
    Reconstruct(Run),
    /// Phase recovery by superposed waves followed by the inverse Born series.
    Polarize(Run),
    /// Run several configurations on one object and merge their error tables.
    Compare(Compare),
    /// Convergence-radius and error-bound diagnostics.
    Bounds(Run),
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Phase,
    Phaseless,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    ibs_order: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Phase or phaseless data for the configured method.
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long)]
    filter_threshold: Option<f64>,
    #[arg(long)]
    forward_grid_factor: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the configured simulation cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Run {
    /// TOML configuration; every key defaults to the published settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Compare {
    /// One TOML configuration per compared run.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn load(path: Option<&Path>, o: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = o.ibs_order {
        cfg.ibs_order = v;
    }
    if let Some(v) = o.lambda {
        cfg.lambda = Some(v);
    }
    if let Some(v) = o.variant {
        cfg.data_kind = match (v, cfg.method) {
            (Variant::Phase, _) => DataKind::Phase,
            (Variant::Phaseless, Method::Polarization) => DataKind::PhaselessScattered,
            (Variant::Phaseless, _) => DataKind::PhaselessTotal,
        };
    }
    if let Some(v) = o.filter_threshold {
        cfg.filter_threshold = v;
    }
    if let Some(v) = o.forward_grid_factor {
        cfg.forward_grid_factor = v;
    }
    if let Some(v) = o.threads {
        cfg.threads = v;
    }
    if let Some(v) = &o.output {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &o.cache_dir {
        cfg.cache_dir = Some(v.clone());
    }
    Ok(cfg)
}

fn cache_for(cfg: &ExperimentConfig) -> SimulationCache {
    match &cfg.cache_dir {
        Some(dir) => SimulationCache::on_disk(dir),
        None => SimulationCache::in_memory(),
    }
}

/// Exit status: 0 when every requested order completed, 2 when the series
/// stopped early (the report is still written).
fn status(completed: bool) -> ExitCode {
    if completed {
        ExitCode::SUCCESS
    } else {
        eprintln!("the inverse Born series stopped before the requested order");
        ExitCode::from(2)
    }
}

fn forward(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    cfg.validate()?;
    let cached = cache_for(cfg).get_or_simulate(&cfg.forward_config())?;
    let sim = cached.simulation.as_ref();
    let dir = &cfg.output_dir;
    let (table, manifest) = save_dataset(&sim.dataset(cfg.data_kind)?, dir, cfg.data_kind.label())?;
    println!("dataset {} ({}), forward hash {}", manifest.display(), table.display(), cached.hash);
    if cfg.method == Method::Polarization {
        std::fs::create_dir_all(dir)?;
        let quads = save_quads(&QuadDataset::from_simulation(sim)?, dir, "quads")?;
        println!("quads {}", dir.join(quads).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn reconstruct(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let report = run_experiment(cfg, &mut cache_for(cfg))?;
    export_report(&report, &cfg.output_dir)?;
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |e| format!("{e:.4}"));
    println!("{}: projection {}", report.label, cell(report.projection_error));
    if let Some(p) = &report.polarization {
        println!("polarization baseline {} (V̂(0) = {:.4})", cell(p.baseline_error), p.v0);
    }
    if let Some(f) = &report.fourier {
        println!("discarded {} of {} pairs ({:.2}%)", f.pairs_discarded, f.pair_candidates, 100.0 * f.discard_fraction);
    }
    for row in &report.rows {
        println!("  IBS{}  {}", row.order, cell(row.error));
    }
    println!("report written to {}", cfg.output_dir.display());
    Ok(status(report.all_orders_completed()))
}

fn bounds(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    cfg.validate()?;
    let fwd = cfg.forward_config();
    let lin = linearized_inverse(cfg, &cfg.inverse_grid()?, fwd.incidents()?, &fwd.detector_set()?)?;
    let inverse = lin.inverse.as_ref();
    let ops = inverse.ops();
    let k1_norm = k1_norm_estimate(inverse, cfg.bounds_iterations, cfg.seed)?;
    let radius = cfg.half_width * std::f64::consts::SQRT_2;
    let setup = BoundsSetup {
        k: cfg.k,
        radius,
        u0_sup: 1.0,
        k1_norm,
        potential_factor: cfg.potential_convention.factor(cfg.k),
        phaseless: cfg.data_kind == DataKind::PhaselessTotal,
    };
    let b = series_bounds(setup, ops.kernel(), &ops.detector_set().points(), None);
    println!("I(k) = {:.6}", i_of_k(cfg.k));
    println!("μ₀ numeric {:.6}, analytic bound {:?}", b.mu0_numeric, mu0_analytic(cfg.k, radius));
    println!("‖𝒦₁‖ ≈ {k1_norm:.6e}");
    println!("phaseless r = {:.6e}, r₀ = {:.6e}", b.phaseless.r, b.phaseless.r0);
    println!("phase     r = {:.6e}, r₀ = {:.6e}", b.phase.r, b.phase.r0);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("bounds.json");
    std::fs::write(&path, serde_json::to_string_pretty(&b)?)?;
    println!("bounds written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Forward(r) => forward(&load(r.config.as_deref(), &r.overrides)?),
        Command::Reconstruct(r) => {
            let cfg = load(r.config.as_deref(), &r.overrides)?;
            if cfg.method == Method::Polarization {
                bail!("use `pibs polarize` for the polarization method");
            }
            reconstruct(&cfg)
        }
        Command::Polarize(r) => {
            let mut cfg = load(r.config.as_deref(), &r.overrides)?;
            cfg.method = Method::Polarization;
            cfg.data_kind = DataKind::PhaselessScattered;
            reconstruct(&cfg)
        }
        Command::Bounds(r) => bounds(&load(r.config.as_deref(), &r.overrides)?),
        Command::Compare(c) => {
            let configs =
                c.configs.iter().map(|p| load(Some(p), &c.overrides)).collect::<anyhow::Result<Vec<_>>>()?;
            let mut cache = cache_for(&configs[0]);
            let cmp = compare_methods(&configs, &mut cache)?;
            let dir = c.overrides.output.clone().unwrap_or_else(|| configs[0].output_dir.clone());
            cmp.export(&dir)?;
            print!("{}", cmp.table());
            println!("comparison written to {}", dir.display());
            Ok(status(cmp.all_orders_completed()))
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
