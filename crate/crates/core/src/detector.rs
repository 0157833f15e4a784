//! Dense grid-to-detector maps and batched forward simulations.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use num_complex::Complex64;

use crate::dataset::{DataKind, DataValues, Provenance, ScatterDataset};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::geometry::{DetectorSet, IncidentSpec};
use crate::grid::Grid2D;
use crate::special::{far_field_constant, green2d_raw};

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// What a detector row measures from a grid source `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    /// `h² Σ G(x_d − y) σ(y)` at the physical points.
    Field,
    /// `h² Σ e^{−ik x̂·y} σ(y)` for far-field directions.
    Amplitude,
    /// The field at `R x̂` from its far-field form `C e^{ikR}/√R` times the
    /// amplitude, dropping the Fresnel terms of the exact kernel.
    AsymptoticField,
}

/// A dense `n_det × n²` matrix mapping grid sources to detector values.
pub struct DetectorOperator {
    matrix: Mat<Complex64>,
    mode: DetectorMode,
}

impl std::fmt::Debug for DetectorOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DetectorOperator")
            .field("rows", &self.matrix.nrows())
            .field("cols", &self.matrix.ncols())
            .field("mode", &self.mode)
            .finish()
    }
}

impl DetectorOperator {
    pub fn new(grid: &Grid2D, k: f64, detectors: &DetectorSet, mode: DetectorMode) -> Result<Self> {
        let rows = match (mode, detectors) {
            (DetectorMode::Field, _) => detector_matrix(grid, k, &detectors.points(), mode),
            (DetectorMode::Amplitude, DetectorSet::FarField { directions, .. }) => {
                detector_matrix(grid, k, directions, mode)
            }
            (DetectorMode::AsymptoticField, DetectorSet::FarField { radius, directions }) => {
                let c = far_field_constant(2, k)?.value;
                let factor = c * Complex64::from_polar(1.0 / radius.sqrt(), k * radius);
                let mut m = detector_matrix(grid, k, directions, DetectorMode::Amplitude);
                m.col_iter_mut().for_each(|col| col.iter_mut().for_each(|z| *z *= factor));
                m
            }
            (DetectorMode::Amplitude | DetectorMode::AsymptoticField, DetectorSet::Boundary { .. }) => {
                return Err(Error::InvalidArgument(
                    "scattering amplitudes need far-field detectors".into(),
                ))
            }
        };
        Ok(Self { matrix: rows, mode })
    }

    pub fn mode(&self) -> DetectorMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> MatRef<'_, Complex64> {
        self.matrix.as_ref()
    }

    /// `D·S` for sources stored as columns of `s`.
    pub fn apply(&self, s: MatRef<'_, Complex64>) -> Mat<Complex64> {
        let mut out = Mat::zeros(self.rows(), s.ncols());
        matmul(out.as_mut(), Accum::Replace, self.matrix.as_ref(), s, ONE, Par::rayon(0));
        out
    }

    /// `Dᴴ·Y`.
    pub fn apply_adjoint(&self, y: MatRef<'_, Complex64>) -> Mat<Complex64> {
        let mut out = Mat::zeros(self.cols(), y.ncols());
        matmul(out.as_mut(), Accum::Replace, self.matrix.as_ref().adjoint(), y, ONE, Par::rayon(0));
        out
    }

    pub fn apply_vec(&self, s: &[Complex64]) -> Vec<Complex64> {
        let m = self.apply(MatRef::from_column_major_slice(s, s.len(), 1));
        (0..m.nrows()).map(|i| m[(i, 0)]).collect()
    }
}

fn detector_matrix(grid: &Grid2D, k: f64, targets: &[[f64; 2]], mode: DetectorMode) -> Mat<Complex64> {
    let w = grid.cell_area();
    let points = grid.points();
    Mat::from_fn(targets.len(), grid.len(), |d, j| {
        let t = targets[d];
        let y = points[j];
        match mode {
            DetectorMode::Field => green2d_raw((t[0] - y[0]).hypot(t[1] - y[1]), k) * w,
            DetectorMode::Amplitude | DetectorMode::AsymptoticField => {
                Complex64::from_polar(w, -k * (t[0] * y[0] + t[1] * y[1]))
            }
        }
    })
}

/// Forward data for a set of single or superposed incident waves.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub incidents: Vec<IncidentSpec>,
    pub detectors: DetectorSet,
    /// `u_s` at the physical detector points, `(wave, detector)` row-major.
    pub scattered: Vec<Complex64>,
    /// `u₀` at the physical detector points.
    pub incident_values: Vec<Complex64>,
    /// Scattering amplitudes `A(x̂)` for far-field detectors.
    pub amplitude: Option<Vec<Complex64>>,
    pub provenance: Provenance,
}

/// Waves are solved in batches so that at most this many sources are held at once.
const SOURCE_BATCH: usize = 100;

pub fn simulate(model: &ForwardModel, incidents: &[IncidentSpec], detectors: &DetectorSet) -> Result<Simulation> {
    let grid = *model.grid();
    let k = model.kernel().k();
    let nd = detectors.count();
    let nw = incidents.len();
    let field_op = DetectorOperator::new(&grid, k, detectors, DetectorMode::Field)?;
    let amp_op = if detectors.is_far_field() {
        Some(DetectorOperator::new(&grid, k, detectors, DetectorMode::Amplitude)?)
    } else {
        None
    };
    let mut scattered = vec![Complex64::new(0.0, 0.0); nw * nd];
    let mut amplitude = amp_op.as_ref().map(|_| vec![Complex64::new(0.0, 0.0); nw * nd]);
    for start in (0..nw).step_by(SOURCE_BATCH) {
        let end = (start + SOURCE_BATCH).min(nw);
        let sigmas = model.solve_all(&incidents[start..end]).map_err(|e| match e {
            Error::IncidentSolve { index, source } => Error::IncidentSolve { index: index + start, source },
            other => other,
        })?;
        let s = Mat::from_fn(grid.len(), end - start, |i, j| sigmas[j][i]);
        let us = field_op.apply(s.as_ref());
        for w in start..end {
            for d in 0..nd {
                scattered[w * nd + d] = us[(d, w - start)];
            }
        }
        if let (Some(op), Some(amp)) = (&amp_op, amplitude.as_mut()) {
            let a = op.apply(s.as_ref());
            for w in start..end {
                for d in 0..nd {
                    amp[w * nd + d] = a[(d, w - start)];
                }
            }
        }
    }
    let points = detectors.points();
    let incident_values = incidents
        .iter()
        .flat_map(|inc| points.iter().map(move |p| inc.eval(*p)))
        .collect();
    Ok(Simulation {
        incidents: incidents.to_vec(),
        detectors: detectors.clone(),
        scattered,
        incident_values,
        amplitude,
        provenance: Provenance {
            forward_n: grid.n(),
            half_width: grid.half_width(),
            solver_tolerance: model.options().tol,
        },
    })
}

impl Simulation {
    /// Extracts one kind of measurement table.
    pub fn dataset(&self, kind: DataKind) -> Result<ScatterDataset> {
        let values = match kind {
            DataKind::Phase => DataValues::Complex(match &self.amplitude {
                Some(a) => a.clone(),
                None => self.scattered.clone(),
            }),
            DataKind::PhaselessTotal => DataValues::Real(
                self.scattered
                    .iter()
                    .zip(&self.incident_values)
                    .map(|(s, u0)| (s + u0).norm())
                    .collect(),
            ),
            DataKind::PhaselessScattered => {
                DataValues::Real(self.scattered.iter().map(|s| s.norm()).collect())
            }
        };
        ScatterDataset::new(
            self.incidents.clone(),
            self.detectors.clone(),
            kind,
            values,
            self.provenance.clone(),
        )
    }
}

/// Solves on the model grid and returns the requested measurement table.
pub fn generate_dataset(
    model: &ForwardModel,
    incidents: &[IncidentSpec],
    detectors: &DetectorSet,
    kind: DataKind,
) -> Result<ScatterDataset> {
    simulate(model, incidents, detectors)?.dataset(kind)
}

/// Converts `u_s(R x̂)` to the amplitude scale `A ≈ u_s √R e^{−ikR} / C₂`.
pub fn field_to_amplitude(values: &[Complex64], radius: f64, k: f64) -> Result<Vec<Complex64>> {
    let c = far_field_constant(2, k)?.value;
    let factor = Complex64::from_polar(radius.sqrt(), -k * radius) / c;
    Ok(values.iter().map(|v| v * factor).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{evaluate_scattered_at, far_field_amplitude, PotentialConvention};
    use crate::geometry::{direction, uniform_directions};
    use crate::grid::{disk_potential, make_grid, DiskParams};
    use crate::krylov::GmresOptions;

    #[test]
    fn operators_match_direct_evaluation() {
        let g = make_grid(6.4, 16).unwrap();
        let v = disk_potential(&DiskParams::standard(1.0), g).unwrap();
        let model = ForwardModel::new(&v, 5.0, PotentialConvention::Schrodinger, GmresOptions::default()).unwrap();
        let inc = IncidentSpec::single(5.0, direction(0.3)).unwrap();
        let sol = model.solve(&inc).unwrap();
        let det = DetectorSet::far_field(300.0, uniform_directions(7)).unwrap();
        let field = DetectorOperator::new(&g, 5.0, &det, DetectorMode::Field).unwrap();
        let amp = DetectorOperator::new(&g, 5.0, &det, DetectorMode::Amplitude).unwrap();
        let f1 = field.apply_vec(&sol.sigma);
        let f2 = evaluate_scattered_at(&sol, &det.points());
        let a1 = amp.apply_vec(&sol.sigma);
        for d in 0..7 {
            assert!((f1[d] - f2[d]).norm() < 1e-14);
            let a2 = far_field_amplitude(&sol, direction(2.0 * std::f64::consts::PI * d as f64 / 7.0));
            assert!((a1[d] - a2).norm() < 1e-12);
        }
        let bnd = DetectorSet::boundary(6.4, 4).unwrap();
        assert!(DetectorOperator::new(&g, 5.0, &bnd, DetectorMode::Amplitude).is_err());
    }

    #[test]
    fn asymptotic_rows_approach_the_exact_field() {
        let g = make_grid(1.0, 8).unwrap();
        let sigma: Vec<Complex64> =
            (0..64).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let dirs = uniform_directions(5);
        // the Fresnel defect shrinks like k|y|²/(2R)
        for (radius, tol) in [(1e4, 5e-4), (1e6, 5e-6)] {
            let det = DetectorSet::far_field(radius, dirs.clone()).unwrap();
            let exact = DetectorOperator::new(&g, 5.0, &det, DetectorMode::Field).unwrap().apply_vec(&sigma);
            let asym = DetectorOperator::new(&g, 5.0, &det, DetectorMode::AsymptoticField).unwrap().apply_vec(&sigma);
            let rel = crate::grid::norm(&exact.iter().zip(&asym).map(|(a, b)| a - b).collect::<Vec<_>>())
                / crate::grid::norm(&exact);
            assert!(rel < tol, "R = {radius}: {rel}");
        }
        let bnd = DetectorSet::boundary(1.0, 4).unwrap();
        assert!(DetectorOperator::new(&g, 5.0, &bnd, DetectorMode::AsymptoticField).is_err());
    }

    #[test]
    fn zero_potential_data() {
        let g = make_grid(6.4, 16).unwrap();
        let v = crate::grid::Potential::zeros(g);
        let model = ForwardModel::new(&v, 5.0, PotentialConvention::Schrodinger, GmresOptions::default()).unwrap();
        let incs: Vec<_> = uniform_directions(3).into_iter().map(|d| IncidentSpec::single(5.0, d).unwrap()).collect();
        let det = DetectorSet::boundary(6.4, 4).unwrap();
        let sim = simulate(&model, &incs, &det).unwrap();
        let phase = sim.dataset(DataKind::Phase).unwrap();
        assert!(phase.values().as_complex().unwrap().iter().all(|z| z.norm() == 0.0));
        let total = sim.dataset(DataKind::PhaselessTotal).unwrap();
        assert!(total.values().as_real().unwrap().iter().all(|x| (x - 1.0).abs() < 1e-15));
        assert_eq!(phase.n_incident(), 3);
        assert_eq!(phase.n_detector(), 16);
    }
}
