//! Linearized measurement maps for a fixed set of incident waves and
//! detectors, shared by every inversion method.
//!
//! Data vectors are stored wave-major (`wave · n_det + detector`) as complex
//! numbers; intensity data keep a zero imaginary part.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dataset::{DataKind, DataValues, ScatterDataset};
use crate::detector::{DetectorMode, DetectorOperator};
use crate::error::{ensure_len, Error, Result};
use crate::forward::ConvKernel;
use crate::geometry::{plane_wave, DetectorSet, IncidentSpec};
use crate::grid::Grid2D;

/// Which measured quantity the data vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataModel {
    /// Complex scattered field or scattering amplitude.
    Phase,
    /// `|u|² − |u₀|²`.
    Intensity,
}

/// Waves processed per GEMM batch.
pub(crate) const WAVE_BATCH: usize = 100;

/// The inversion-grid kernel, incident fields and detector map.
pub struct ForwardOps {
    kernel: ConvKernel,
    incidents: Vec<IncidentSpec>,
    detectors: DetectorOperator,
    detector_set: DetectorSet,
    u0_det: Vec<Complex64>,
    model: DataModel,
    scale: f64,
}

impl std::fmt::Debug for ForwardOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardOps")
            .field("grid", self.kernel.grid())
            .field("waves", &self.incidents.len())
            .field("detectors", &self.detectors)
            .field("model", &self.model)
            .field("scale", &self.scale)
            .finish()
    }
}

impl ForwardOps {
    /// `scale` multiplies every data value, e.g. `√R` for far-field intensities.
    pub fn new(
        grid: &Grid2D,
        k: f64,
        incidents: Vec<IncidentSpec>,
        detectors: &DetectorSet,
        mode: DetectorMode,
        model: DataModel,
        scale: f64,
    ) -> Result<Self> {
        if incidents.is_empty() {
            return Err(Error::InvalidArgument("at least one incident wave is required".into()));
        }
        if incidents.iter().any(|inc| (inc.k() - k).abs() > 1e-12 * k) {
            return Err(Error::InvalidArgument("incident wavenumbers differ from the kernel's".into()));
        }
        if model == DataModel::Intensity && mode == DetectorMode::Amplitude {
            return Err(Error::InvalidArgument("intensity data are measured at physical points".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!("data scale must be positive, got {scale}")));
        }
        let kernel = ConvKernel::new(grid, k)?;
        let det_op = DetectorOperator::new(grid, k, detectors, mode)?;
        let points = detectors.points();
        let u0_det = incidents.iter().flat_map(|inc| plane_wave(inc, &points)).collect();
        Ok(Self { kernel, incidents, detectors: det_op, detector_set: detectors.clone(), u0_det, model, scale })
    }

    pub fn kernel(&self) -> &ConvKernel {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid2D {
        self.kernel.grid()
    }

    pub fn incidents(&self) -> &[IncidentSpec] {
        &self.incidents
    }

    pub fn detectors(&self) -> &DetectorOperator {
        &self.detectors
    }

    pub fn detector_set(&self) -> &DetectorSet {
        &self.detector_set
    }

    pub fn model(&self) -> DataModel {
        self.model
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n_waves(&self) -> usize {
        self.incidents.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors.rows()
    }

    pub fn data_len(&self) -> usize {
        self.n_waves() * self.n_detectors()
    }

    /// `u₀` of wave `w` on the grid.
    pub fn incident_on_grid(&self, w: usize) -> Vec<Complex64> {
        plane_wave(&self.incidents[w], &self.grid().points())
    }

    /// `u₀` of wave `w` at the physical detector points.
    pub fn incident_at_detectors(&self, w: usize) -> &[Complex64] {
        let nd = self.n_detectors();
        &self.u0_det[w * nd..(w + 1) * nd]
    }

    /// Applies the detector map to one source per wave, `sources[w]`, and
    /// writes the raw (unscaled) detector values wave-major.
    pub(crate) fn detect(&self, sources: &[Vec<Complex64>]) -> Vec<Complex64> {
        let nd = self.n_detectors();
        let len = self.grid().len();
        let mut out = vec![Complex64::new(0.0, 0.0); sources.len() * nd];
        for (b, chunk) in sources.chunks(WAVE_BATCH).enumerate() {
            let s = Mat::from_fn(len, chunk.len(), |i, j| chunk[j][i]);
            let y = self.detectors.apply(s.as_ref());
            for j in 0..chunk.len() {
                let w = b * WAVE_BATCH + j;
                for d in 0..nd {
                    out[w * nd + d] = y[(d, j)];
                }
            }
        }
        out
    }

    /// Applies `Dᴴ` to per-wave detector vectors, returning one grid field per wave.
    pub(crate) fn detect_adjoint(&self, data: &[Complex64]) -> Vec<Vec<Complex64>> {
        let nd = self.n_detectors();
        let nw = data.len() / nd;
        let mut out = Vec::with_capacity(nw);
        for start in (0..nw).step_by(WAVE_BATCH) {
            let end = (start + WAVE_BATCH).min(nw);
            let y = Mat::from_fn(nd, end - start, |d, j| data[(start + j) * nd + d]);
            let g = self.detectors.apply_adjoint(y.as_ref());
            for j in 0..end - start {
                out.push((0..g.nrows()).map(|i| g[(i, j)]).collect());
            }
        }
        out
    }

    /// Turns raw detector values of first-order type (`D s`) into data: the
    /// scaled value itself, or `2Re(u₀* D s)` for intensities.
    pub(crate) fn linear_part(&self, raw: &mut [Complex64]) {
        let scale = self.scale;
        match self.model {
            DataModel::Phase => raw.iter_mut().for_each(|z| *z *= scale),
            DataModel::Intensity => raw.iter_mut().zip(&self.u0_det).for_each(|(z, u0)| {
                *z = Complex64::new(2.0 * scale * (u0.conj() * *z).re, 0.0);
            }),
        }
    }

    /// `K₁ v`.
    pub fn linear(&self, v: &[f64]) -> Result<Vec<Complex64>> {
        ensure_len(self.grid().len(), v.len())?;
        let sources: Vec<Vec<Complex64>> = (0..self.n_waves())
            .into_par_iter()
            .map(|w| self.incident_on_grid(w).iter().zip(v).map(|(u, x)| u * *x).collect())
            .collect();
        let mut out = self.detect(&sources);
        self.linear_part(&mut out);
        Ok(out)
    }

    /// Transpose of `K₁` for the real inner products `Σ v w` and `Re Σ d e*`.
    pub fn linear_adjoint(&self, data: &[Complex64]) -> Result<Vec<f64>> {
        ensure_len(self.data_len(), data.len())?;
        let weighted: Vec<Complex64> = match self.model {
            DataModel::Phase => data.iter().map(|z| z * self.scale).collect(),
            DataModel::Intensity => {
                data.iter().zip(&self.u0_det).map(|(z, u0)| u0 * (2.0 * self.scale * z.re)).collect()
            }
        };
        let fields = self.detect_adjoint(&weighted);
        let len = self.grid().len();
        let partial: Vec<Vec<f64>> = fields
            .into_par_iter()
            .enumerate()
            .map(|(w, g)| {
                let u0 = self.incident_on_grid(w);
                (0..len).map(|l| (u0[l].conj() * g[l]).re).collect()
            })
            .collect();
        let mut out = vec![0.0; len];
        for p in partial {
            out.iter_mut().zip(&p).for_each(|(o, x)| *o += x);
        }
        Ok(out)
    }

    /// Dense matrix of `K₁` as a real map; complex data contribute a real and
    /// an imaginary row each. Only meant for small grids.
    pub fn dense_linear(&self) -> Result<Vec<Vec<f64>>> {
        let len = self.grid().len();
        let mut cols = Vec::with_capacity(len);
        for l in 0..len {
            let mut e = vec![0.0; len];
            e[l] = 1.0;
            let d = self.linear(&e)?;
            cols.push(d.iter().flat_map(|z| [z.re, z.im]).collect());
        }
        Ok(cols)
    }
}

impl ForwardOps {
    /// Converts a measurement table into the data vector these operators
    /// model: scaled complex values, or scaled `|u|² − |u₀|²`.
    pub fn data_from(&self, ds: &ScatterDataset) -> Result<Vec<Complex64>> {
        ensure_len(self.data_len(), ds.values().len())?;
        if ds.n_detector() != self.n_detectors() {
            return Err(Error::ShapeMismatch { expected: self.n_detectors(), found: ds.n_detector() });
        }
        let s = self.scale;
        match (self.model, ds.kind(), ds.values()) {
            (DataModel::Phase, DataKind::Phase, DataValues::Complex(v)) => Ok(v.iter().map(|z| z * s).collect()),
            (DataModel::Intensity, DataKind::PhaselessTotal, DataValues::Real(v)) => Ok(v
                .iter()
                .zip(&self.u0_det)
                .map(|(m, u0)| Complex64::new(s * (m * m - u0.norm_sqr()), 0.0))
                .collect()),
            (model, kind, _) => Err(Error::InvalidArgument(format!(
                "{} data cannot drive the {model:?} operators",
                kind.label()
            ))),
        }
    }
}

/// `Re Σ a b*` over complex data.
pub fn data_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum()
}

pub fn data_norm(a: &[Complex64]) -> f64 {
    data_dot(a, a).sqrt()
}
