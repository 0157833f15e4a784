//! Dataset generation, method dispatch and per-order error tables.

use std::time::Instant;

use num_complex::Complex64;
use phaseless_ibs::born::{series_bounds, BoundsSetup, SeriesBounds};
use phaseless_ibs::dataset::DataKind;
use phaseless_ibs::detector::{DetectorMode, Simulation};
use phaseless_ibs::direct::DirectInverse;
use phaseless_ibs::fourier::{FourierInverse, SampleMap};
use phaseless_ibs::geometry::{DetectorSet, IncidentSpec};
use phaseless_ibs::grid::{relative_error_values, Grid2D};
use phaseless_ibs::ibs::{ibs_reconstruct, k1_norm_estimate, projection_baseline, IbsOptions, LinearizedInverse};
use phaseless_ibs::operators::{DataModel, ForwardOps};
use phaseless_ibs::polarization::{phase_reassign, polarization_reconstruct, QuadDataset};
use serde::{Deserialize, Serialize};

use crate::cache::SimulationCache;
use crate::config::{potential_on, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};

/// One row of the error table. `error` is blank for orders the series did
/// not reach or at which it diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub order: usize,
    pub error: Option<f64>,
    pub partial_sum_norm: Option<f64>,
    pub diverged: bool,
}

/// Convergence diagnostics logged with every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsDiagnostics {
    pub series: SeriesBounds,
    /// Whether the phaseless (`μ = 2μ₀`) or phase bounds apply to this data.
    pub phaseless: bool,
    /// Radius of convergence for the applicable variant.
    pub radius: f64,
    /// `‖𝒦₁φ‖∞`, the quantity compared with the radius.
    pub first_term_sup: Option<f64>,
    pub first_term_l2: Option<f64>,
    pub within_radius: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSummary {
    pub threshold: f64,
    pub pair_candidates: usize,
    pub pairs_discarded: usize,
    pub discard_fraction: f64,
    pub accepted_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSummary {
    /// Estimated `V̂(0)`.
    pub v0: f64,
    /// Relative error of the polarization-only reconstruction.
    pub baseline_error: Option<f64>,
    pub quads: usize,
    /// Forward experiments the data stand for: four per direction pair plus
    /// the single-wave pass.
    pub experiment_count: usize,
    pub masked_phases: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub forward_s: f64,
    pub inverse_setup_s: f64,
    pub projection_s: f64,
    pub ibs_s: f64,
    pub bounds_s: f64,
    pub total_s: f64,
}

/// Reconstructed fields on the inversion grid, in the configured potential units.
#[derive(Debug, Clone)]
pub struct ReconstructionFields {
    pub grid: Grid2D,
    pub truth: Vec<f64>,
    pub projection: Vec<f64>,
    pub partial_sums: Vec<Vec<f64>>,
    pub polarization: Option<Vec<f64>>,
    pub fourier_samples: Option<FourierSampleExport>,
    pub quads: Option<QuadDataset>,
}

#[derive(Debug, Clone)]
pub struct FourierSampleExport {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<Complex64>,
    pub discarded: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub method: Method,
    pub data_kind: DataKind,
    pub lambda: f64,
    pub requested_order: usize,
    pub completed_order: usize,
    pub diverged_at: Option<usize>,
    pub rows: Vec<ErrorRow>,
    pub projection_error: Option<f64>,
    pub polarization: Option<PolarizationSummary>,
    pub fourier: Option<FourierSummary>,
    pub bounds: BoundsDiagnostics,
    pub timing: Timing,
    pub threads: usize,
    pub dataset_hash: String,
    pub cache_hit: bool,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub fields: Option<ReconstructionFields>,
}

impl ExperimentReport {
    pub fn all_orders_completed(&self) -> bool {
        self.completed_order == self.requested_order
    }

    /// Error at `order`, blank when diverged or not reached.
    pub fn error_at(&self, order: usize) -> Option<f64> {
        self.rows.get(order.checked_sub(1)?).and_then(|r| r.error)
    }

    pub fn errors(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.error).collect()
    }
}

/// The inverse and the data vector it acts on.
struct Prepared {
    inverse: Box<dyn LinearizedInverse>,
    data: Vec<Complex64>,
    samples: Option<SampleMap>,
    polarization: Option<(PolarizationSummary, Vec<f64>, QuadDataset)>,
}

/// Runs one configured experiment end to end.
pub fn run_experiment(cfg: &ExperimentConfig, cache: &mut SimulationCache) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
        pool.install(|| run_inner(cfg, cache))
    } else {
        run_inner(cfg, cache)
    }
}

fn run_inner(cfg: &ExperimentConfig, cache: &mut SimulationCache) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut timing = Timing::default();
    let fwd = cfg.forward_config();
    let cached = cache.get_or_simulate(&fwd)?;
    timing.forward_s = cached.seconds;
    let sim = cached.simulation.as_ref();

    let grid = cfg.inverse_grid()?;
    let truth = potential_on(cfg.potential, cfg.amplitude, grid)?;
    // the inverse recovers the potential as it enters the source term
    let factor = cfg.potential_convention.factor(cfg.k);
    let truth_eff: Vec<f64> = truth.values().iter().map(|v| v * factor).collect();

    let t = Instant::now();
    let prepared = prepare(cfg, sim, &grid, &truth_eff)?;
    timing.inverse_setup_s = t.elapsed().as_secs_f64();
    let inverse = prepared.inverse.as_ref();

    let t = Instant::now();
    let projection = projection_baseline(&truth_eff, inverse)?;
    let projection_error = relative_error_values(&projection, &truth_eff).ok();
    timing.projection_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let opts = IbsOptions { order: cfg.ibs_order, divergence_threshold: cfg.divergence_threshold };
    let rec = ibs_reconstruct(&prepared.data, inverse, opts, Some(&truth_eff))?;
    timing.ibs_s = t.elapsed().as_secs_f64();
    let norms = rec.partial_norms();
    let rows = (1..=cfg.ibs_order)
        .map(|m| {
            let reached = m <= rec.completed_order();
            ErrorRow {
                order: m,
                error: if reached { rec.error_at(m) } else { None },
                partial_sum_norm: if reached { Some(norms[m - 1] / factor) } else { None },
                diverged: rec.diverged_at.is_some_and(|d| m >= d),
            }
        })
        .collect();

    let t = Instant::now();
    let bounds = diagnostics(cfg, inverse, &rec.first_term_norms(grid.cell_area()), factor)?;
    timing.bounds_s = t.elapsed().as_secs_f64();
    tracing::info!(
        label = %cfg.label(),
        radius = bounds.radius,
        first_term_sup = ?bounds.first_term_sup,
        within_radius = ?bounds.within_radius,
        "convergence gate"
    );

    let fourier_summary = match (cfg.method, &prepared.samples) {
        (Method::Fourier, Some(m)) => {
            let stats = m.pair_stats();
            Some(FourierSummary {
                threshold: cfg.filter_threshold,
                pair_candidates: stats.candidates,
                pairs_discarded: stats.discarded,
                discard_fraction: stats.discard_fraction(),
                accepted_samples: m.len(),
            })
        }
        _ => None,
    };
    let fourier_samples = match &prepared.samples {
        Some(m) => Some(FourierSampleExport {
            points: m.points().to_vec(),
            values: m.apply(&prepared.data)?,
            discarded: m.discarded_points().to_vec(),
        }),
        None => None,
    };

    let unscale = |v: &[f64]| v.iter().map(|x| x / factor).collect::<Vec<_>>();
    let (polarization, pol_field, quads) = match prepared.polarization {
        Some((s, f, q)) => (Some(s), Some(unscale(&f)), Some(q)),
        None => (None, None, None),
    };
    let fields = ReconstructionFields {
        grid,
        truth: truth.values().to_vec(),
        projection: unscale(&projection),
        partial_sums: rec.partial_sums.iter().map(|v| unscale(v)).collect(),
        polarization: pol_field,
        fourier_samples,
        quads,
    };
    timing.total_s = start.elapsed().as_secs_f64();
    Ok(ExperimentReport {
        label: cfg.label(),
        method: cfg.method,
        data_kind: cfg.data_kind,
        lambda: cfg.lambda(),
        requested_order: cfg.ibs_order,
        completed_order: rec.completed_order(),
        diverged_at: rec.diverged_at,
        rows,
        projection_error,
        polarization,
        fourier: fourier_summary,
        bounds,
        timing,
        threads: rayon::current_num_threads(),
        dataset_hash: cached.hash,
        cache_hit: cached.hit,
        config: cfg.clone(),
        fields: Some(fields),
    })
}

/// A first-order inverse for the configured method and data, plus its
/// Fourier sample map when it has one.
pub struct Linearized {
    pub inverse: Box<dyn LinearizedInverse>,
    pub samples: Option<SampleMap>,
}

/// Builds `𝒦₁` on `grid` for the given waves and detectors. The polarization
/// method inverts reassigned complex fields, so it gets the field-data
/// Fourier inverse.
pub fn linearized_inverse(
    cfg: &ExperimentConfig,
    grid: &Grid2D,
    incidents: Vec<IncidentSpec>,
    detectors: &DetectorSet,
) -> Result<Linearized> {
    let far = detectors.is_far_field();
    let intensity_scale = if far { cfg.far_field_radius.sqrt() } else { 1.0 };
    let ops_for = |mode, model, scale| ForwardOps::new(grid, cfg.k, incidents, detectors, mode, model, scale);
    let (lambda, cg) = (cfg.lambda(), cfg.cg());
    let fourier = |ops| -> Result<Linearized> {
        let inverse = FourierInverse::new(ops, lambda, cfg.filter_threshold, cg)?;
        let samples = Some(inverse.sample_map().clone());
        Ok(Linearized { inverse: Box::new(inverse), samples })
    };
    let direct = |ops| -> Result<Linearized> {
        Ok(Linearized { inverse: Box::new(DirectInverse::new(ops, lambda, cg)?), samples: None })
    };
    match (cfg.method, cfg.data_kind) {
        (Method::Direct, DataKind::Phase) => {
            let mode = if far { DetectorMode::Amplitude } else { DetectorMode::Field };
            direct(ops_for(mode, DataModel::Phase, 1.0)?)
        }
        (Method::Direct, DataKind::PhaselessTotal) => {
            direct(ops_for(DetectorMode::Field, DataModel::Intensity, intensity_scale)?)
        }
        (Method::Fourier, DataKind::Phase) => fourier(ops_for(DetectorMode::Amplitude, DataModel::Phase, 1.0)?),
        (Method::Fourier, DataKind::PhaselessTotal) => {
            fourier(ops_for(DetectorMode::Field, DataModel::Intensity, intensity_scale)?)
        }
        (Method::Polarization, DataKind::PhaselessScattered) => {
            fourier(ops_for(DetectorMode::Field, DataModel::Phase, 1.0)?)
        }
        (method, kind) => Err(HarnessError::Incompatible(format!(
            "{} data with the {} method",
            kind.label(),
            method.label()
        ))),
    }
}

fn prepare(cfg: &ExperimentConfig, sim: &Simulation, grid: &Grid2D, truth_eff: &[f64]) -> Result<Prepared> {
    let mut polarization = None;
    let measured = match cfg.method {
        Method::Polarization => {
            let quads = QuadDataset::from_simulation(sim)?;
            let first = polarization_reconstruct(&quads, grid, cfg.lambda(), cfg.cg())?;
            let baseline_error = relative_error_values(first.potential.values(), truth_eff).ok();
            let reassigned =
                phase_reassign(&first.potential, &sim.dataset(DataKind::PhaselessScattered)?, cfg.gmres())?;
            let summary = PolarizationSummary {
                v0: first.samples.v0,
                baseline_error,
                quads: quads.quads.len(),
                experiment_count: quads.experiment_count() + sim.incidents.len(),
                masked_phases: reassigned.masked.iter().filter(|m| **m).count(),
            };
            tracing::info!(v0 = summary.v0, baseline = ?baseline_error, "polarization estimate");
            polarization = Some((summary, first.potential.into_values(), quads));
            Some(reassigned.reassigned)
        }
        _ => None,
    };
    let lin = linearized_inverse(cfg, grid, sim.incidents.clone(), &sim.detectors)?;
    let data = match measured {
        Some(d) => d,
        None => lin.inverse.ops().data_from(&sim.dataset(cfg.data_kind)?)?,
    };
    Ok(Prepared { inverse: lin.inverse, data, samples: lin.samples, polarization })
}

fn diagnostics(
    cfg: &ExperimentConfig,
    inverse: &dyn LinearizedInverse,
    first_term: &Option<(f64, f64)>,
    factor: f64,
) -> Result<BoundsDiagnostics> {
    let ops = inverse.ops();
    let k1_norm = k1_norm_estimate(inverse, cfg.bounds_iterations, cfg.seed)?;
    let phaseless = cfg.data_kind == DataKind::PhaselessTotal;
    let setup = BoundsSetup {
        k: cfg.k,
        radius: cfg.half_width * std::f64::consts::SQRT_2,
        u0_sup: ops.incidents().iter().map(|i| i.sup_norm()).fold(0.0, f64::max),
        k1_norm,
        potential_factor: factor,
        phaseless,
    };
    let series = series_bounds(setup, ops.kernel(), &ops.detector_set().points(), None);
    let radius = if phaseless { series.phaseless.r } else { series.phase.r };
    // the reconstruction is the effective potential; the gate is on V itself
    let first_term_sup = first_term.map(|(_, sup)| sup / factor);
    Ok(BoundsDiagnostics {
        series,
        phaseless,
        radius,
        first_term_sup,
        first_term_l2: first_term.map(|(l2, _)| l2 / factor),
        within_radius: first_term_sup.map(|s| s < radius),
    })
}
