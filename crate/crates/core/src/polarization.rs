//! Phase recovery for scattered-field intensities by superposed incident
//! waves and the polarization identity.
//!
//! With `u₀ = e^{ikŷ·x} + a e^{ik x̂·x}` observed in direction `x̂`, the Born
//! amplitude is `V̂(k(x̂ − ŷ)) + a V̂(0)`. The moduli for `a ∈ {1, −1, i, −i}`
//! determine `A(x̂; ŷ)·V̂(0)`, hence `A` itself once `V̂(0)` is known from the
//! forward-direction experiments. The resulting samples give a first
//! potential `V^a`, whose modelled scattered field lends its phase to the
//! measured moduli.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataKind, ScatterDataset};
use crate::detector::{simulate, Simulation};
use crate::error::{ensure_len, Error, Result};
use crate::forward::{ForwardModel, PotentialConvention};
use crate::fourier::SampleMap;
use crate::geometry::{DetectorSet, IncidentSpec};
use crate::grid::{Grid2D, Potential};
use crate::krylov::{CgOptions, GmresOptions};
use crate::nufft::nufft_lsq_reconstruct;
use crate::special::far_field_constant;

/// Superposition coefficients in the order the moduli are stored.
pub const COEFFICIENTS: [Complex64; 4] = [
    Complex64 { re: 1.0, im: 0.0 },
    Complex64 { re: -1.0, im: 0.0 },
    Complex64 { re: 0.0, im: 1.0 },
    Complex64 { re: 0.0, im: -1.0 },
];

/// Guard below which a modelled field has no usable phase.
pub const PHASE_EPS: f64 = 1e-12;

/// `z₁ z₂*` from `|z₁ + a z₂|²` for `a = 1, −1, i, −i`.
pub fn polarization_combine(m: [f64; 4]) -> Complex64 {
    Complex64::new(m[0] - m[1], m[2] - m[3]) * 0.25
}

/// The four squared moduli `|z₁ + a z₂|²`.
pub fn synthesize(z1: Complex64, z2: Complex64) -> [f64; 4] {
    COEFFICIENTS.map(|a| (z1 + a * z2).norm_sqr())
}

/// Four superposition measurements for one direction pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationQuad {
    /// Observation direction `x̂`, also the direction of the second wave.
    pub observation: [f64; 2],
    pub incident: [f64; 2],
    /// `|u_s(R x̂)|` for each coefficient in [`COEFFICIENTS`].
    pub moduli: [f64; 4],
}

impl PolarizationQuad {
    pub fn is_diagonal(&self) -> bool {
        (self.observation[0] - self.incident[0]).hypot(self.observation[1] - self.incident[1]) < 1e-12
    }

    /// `|A|²` for each coefficient, from the far-field relation
    /// `|u_s(R x̂)|² ≈ |C|² |A|² / R`.
    pub fn squared_amplitudes(&self, radius: f64, c_norm_sqr: f64) -> [f64; 4] {
        self.moduli.map(|m| m * m * radius / c_norm_sqr)
    }

    /// The incident fields of the four experiments.
    pub fn incidents(&self, k: f64) -> Result<[IncidentSpec; 4]> {
        let mk = |a| IncidentSpec::superposition(k, self.incident, self.observation, a);
        Ok([mk(COEFFICIENTS[0])?, mk(COEFFICIENTS[1])?, mk(COEFFICIENTS[2])?, mk(COEFFICIENTS[3])?])
    }
}

/// All quads of an experiment: every ordered (observation, incident) pair of
/// a direction set, diagonal pairs included.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadDataset {
    pub k: f64,
    pub radius: f64,
    pub quads: Vec<PolarizationQuad>,
}

impl QuadDataset {
    /// Number of forward experiments the quads stand for.
    pub fn experiment_count(&self) -> usize {
        4 * self.quads.len()
    }

    /// Quads from a single-wave simulation whose far-field detector
    /// directions coincide with the incident directions.
    ///
    /// Scattering is linear in the incident field, so the field for
    /// `e^{ikŷ·x} + a e^{ik x̂·x}` is `u_s(·; ŷ) + a u_s(·; x̂)` exactly; no
    /// additional solves are needed.
    pub fn from_simulation(sim: &Simulation) -> Result<Self> {
        let (radius, dirs) = sim
            .detectors
            .far_field_parts()
            .ok_or_else(|| Error::Inapplicable("polarization data need far-field detectors".into()))?;
        let n = dirs.len();
        if sim.incidents.len() != n
            || sim.incidents.iter().zip(dirs).any(|(inc, d)| {
                !inc.is_single() || (inc.direction()[0] - d[0]).hypot(inc.direction()[1] - d[1]) > 1e-12
            })
        {
            return Err(Error::Inapplicable(
                "polarization data need single waves along the detector directions".into(),
            ));
        }
        let k = sim.incidents[0].k();
        let us = &sim.scattered;
        let mut quads = Vec::with_capacity(n * n);
        for i in 0..n {
            // second wave along x̂_i, observed at x̂_i
            let forward = us[i * n + i];
            for j in 0..n {
                let z = us[j * n + i];
                quads.push(PolarizationQuad {
                    observation: dirs[i],
                    incident: dirs[j],
                    moduli: COEFFICIENTS.map(|a| (z + a * forward).norm()),
                });
            }
        }
        Ok(Self { k, radius, quads })
    }

    /// Runs the single-wave experiments and builds the quads.
    pub fn simulate(model: &ForwardModel, directions: &[[f64; 2]], radius: f64) -> Result<Self> {
        let k = model.kernel().k();
        let incidents: Vec<IncidentSpec> =
            directions.iter().map(|d| IncidentSpec::single(k, *d)).collect::<Result<_>>()?;
        let detectors = DetectorSet::far_field(radius, directions.to_vec())?;
        Self::from_simulation(&simulate(model, &incidents, &detectors)?)
    }

    fn c_norm_sqr(&self) -> Result<f64> {
        Ok(far_field_constant(2, self.k)?.value.norm_sqr())
    }
}

/// `V̂(0)` from the forward-direction quads, where both superposed
/// amplitudes equal `V̂(0)` and the identity returns `V̂(0)²`.
pub fn estimate_v0(ds: &QuadDataset) -> Result<f64> {
    let c2 = ds.c_norm_sqr()?;
    let combined: Vec<f64> = ds
        .quads
        .iter()
        .filter(|q| q.is_diagonal())
        .map(|q| polarization_combine(q.squared_amplitudes(ds.radius, c2)).re)
        .collect();
    if combined.is_empty() {
        return Err(Error::InvalidArgument("no forward-direction quads to estimate V̂(0)".into()));
    }
    if combined.iter().all(|c| *c < 0.0) {
        return Err(Error::Consistency("every forward-direction combination is negative".into()));
    }
    Ok(combined.iter().map(|c| c.max(0.0).sqrt()).sum::<f64>() / combined.len() as f64)
}

/// Samples `A(x̂; ŷ) ≈ V̂(k(x̂ − ŷ))` recovered from the quads.
#[derive(Debug, Clone)]
pub struct PolarizationSamples {
    pub v0: f64,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<Complex64>,
}

pub fn polarization_samples(ds: &QuadDataset) -> Result<PolarizationSamples> {
    let v0 = estimate_v0(ds)?;
    if v0 < PHASE_EPS {
        return Err(Error::Inapplicable(format!("V̂(0) = {v0:e} leaves the products undetermined")));
    }
    let c2 = ds.c_norm_sqr()?;
    let k = ds.k;
    let (points, values) = ds
        .quads
        .iter()
        .map(|q| {
            let p = [k * (q.observation[0] - q.incident[0]), k * (q.observation[1] - q.incident[1])];
            (p, polarization_combine(q.squared_amplitudes(ds.radius, c2)) / v0)
        })
        .unzip();
    Ok(PolarizationSamples { v0, points, values })
}

/// The first potential `V^a` and the samples it was fitted to.
#[derive(Debug, Clone)]
pub struct PolarizationResult {
    pub potential: Potential,
    pub samples: PolarizationSamples,
}

/// Fits `V^a` to the polarization samples by regularized NUFFT least squares.
pub fn polarization_reconstruct(ds: &QuadDataset, grid: &Grid2D, lambda: f64, cg: CgOptions) -> Result<PolarizationResult> {
    let samples = polarization_samples(ds)?;
    let map = SampleMap::from_raw_points(ds.k, &samples.points);
    let merged = map.apply(&samples.values)?;
    let values = nufft_lsq_reconstruct(grid, map.points(), &merged, lambda, cg)?;
    Ok(PolarizationResult { potential: Potential::new(*grid, values)?, samples })
}

/// Measured moduli with the phase of a modelled field attached.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReassignedData {
    pub measured: Vec<f64>,
    pub model: Vec<Complex64>,
    pub reassigned: Vec<Complex64>,
    /// Entries where the model field is below [`PHASE_EPS`] and phase 1 is used.
    pub masked: Vec<bool>,
}

/// `u^rec = (u^a/|u^a|)·|u_s|`, with phase 1 where `|u^a| < PHASE_EPS`.
pub fn reassign_phase(measured: &[f64], model: &[Complex64]) -> Result<PhaseReassignedData> {
    ensure_len(measured.len(), model.len())?;
    let (reassigned, masked) = measured
        .iter()
        .zip(model)
        .map(|(m, u)| {
            let r = u.norm();
            if r < PHASE_EPS {
                (Complex64::new(*m, 0.0), true)
            } else {
                (u / r * *m, false)
            }
        })
        .unzip();
    Ok(PhaseReassignedData { measured: measured.to_vec(), model: model.to_vec(), reassigned, masked })
}

/// Solves the forward problem for `V^a` with the incident waves and
/// detectors of `measured` and attaches the modelled phases.
pub fn phase_reassign(v_a: &Potential, measured: &ScatterDataset, opts: GmresOptions) -> Result<PhaseReassignedData> {
    if measured.kind() != DataKind::PhaselessScattered {
        return Err(Error::InvalidArgument(format!(
            "phase reassignment needs scattered-field moduli, got {}",
            measured.kind().label()
        )));
    }
    let moduli = measured.values().as_real().ok_or_else(|| Error::Format("moduli must be real".into()))?;
    let k = measured.k().ok_or_else(|| Error::InvalidArgument("dataset has no incident waves".into()))?;
    let model = ForwardModel::new(v_a, k, PotentialConvention::Schrodinger, opts)?;
    let sim = simulate(&model, measured.incidents(), measured.detectors())?;
    reassign_phase(moduli, &sim.scattered)
}
