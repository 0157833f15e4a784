//! Flat experiment configuration. Every key has a default, and the defaults
//! are the published experiment settings; unknown keys are rejected.

use std::path::{Path, PathBuf};

use phaseless_ibs::dataset::DataKind;
use phaseless_ibs::forward::PotentialConvention;
use phaseless_ibs::fourier::DEFAULT_FILTER_THRESHOLD;
use phaseless_ibs::geometry::{uniform_directions, DetectorSet, IncidentSpec};
use phaseless_ibs::grid::{
    disk_potential, gaussian_mixture_potential, make_grid, DiskParams, GaussianMixtureParams, Grid2D, Potential,
};
use phaseless_ibs::krylov::{CgOptions, GmresOptions};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Fourier,
    Polarization,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Fourier => "fourier",
            Method::Polarization => "polarization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Points on the boundary of the computational square.
    Boundary,
    /// Points at distance `far_field_radius` along the incident directions.
    FarField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Disk,
    GaussianMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run name used in reports; defaults to `<method>_<data_kind>`.
    pub label: Option<String>,
    pub half_width: f64,
    /// Inversion grid points per side.
    pub n: usize,
    /// Refinement of the forward grid against the inversion grid.
    pub forward_grid_factor: usize,
    pub k: f64,
    pub incident_count: usize,
    /// Defaults to boundary detectors for the direct method and far-field
    /// detectors otherwise.
    pub detectors: Option<DetectorKind>,
    pub boundary_per_side: usize,
    pub far_field_radius: f64,
    pub potential: PotentialKind,
    pub amplitude: f64,
    pub potential_convention: PotentialConvention,
    pub method: Method,
    pub data_kind: DataKind,
    /// Defaults depend on the method and data; see [`ExperimentConfig::lambda`].
    pub lambda: Option<f64>,
    pub ibs_order: usize,
    pub divergence_threshold: f64,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub filter_threshold: f64,
    /// Power iterations for the `‖𝒦₁‖` estimate.
    pub bounds_iterations: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub output_dir: PathBuf,
    /// Directory for cached forward simulations; none keeps them in memory only.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            label: None,
            half_width: 6.4,
            n: 128,
            forward_grid_factor: 2,
            k: 5.0,
            incident_count: 400,
            detectors: None,
            boundary_per_side: 128,
            far_field_radius: 300.0,
            potential: PotentialKind::Disk,
            amplitude: 1.0,
            potential_convention: PotentialConvention::Schrodinger,
            method: Method::Direct,
            data_kind: DataKind::Phase,
            lambda: None,
            ibs_order: 5,
            divergence_threshold: 10.0,
            gmres_tol: 1e-8,
            gmres_restart: 50,
            gmres_max_iter: 500,
            cg_tol: 1e-8,
            cg_max_iter: 5000,
            filter_threshold: DEFAULT_FILTER_THRESHOLD,
            bounds_iterations: 20,
            seed: 0,
            threads: 0,
            output_dir: PathBuf::from("pibs-out"),
            cache_dir: None,
        }
    }
}

/// Everything that determines a forward simulation; its hash keys the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub half_width: f64,
    pub forward_n: usize,
    pub k: f64,
    pub incident_count: usize,
    pub detectors: DetectorKind,
    pub boundary_per_side: usize,
    pub far_field_radius: f64,
    pub potential: PotentialKind,
    pub amplitude: f64,
    pub potential_convention: PotentialConvention,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| format!("{}_{}", self.method.label(), self.data_kind.label()))
    }

    pub fn detector_kind(&self) -> DetectorKind {
        self.detectors.unwrap_or(match self.method {
            Method::Direct => DetectorKind::Boundary,
            Method::Fourier | Method::Polarization => DetectorKind::FarField,
        })
    }

    /// The configured `λ`, or the published default for this method and data.
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(match (self.method, self.data_kind) {
            (Method::Direct, DataKind::Phase) => 0.2,
            (Method::Direct, _) => 0.04,
            (Method::Fourier, DataKind::PhaselessTotal) => match self.potential {
                PotentialKind::Disk => 20.0,
                PotentialKind::GaussianMixture => 30.0,
            },
            (Method::Fourier | Method::Polarization, _) => 10.0,
        })
    }

    /// Rejects incompatible settings before any solve.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return bad(format!("half_width must be positive, got {}", self.half_width));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.forward_grid_factor == 0 {
            return bad("forward_grid_factor must be at least 1".into());
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if self.incident_count == 0 || self.ibs_order == 0 || self.boundary_per_side == 0 {
            return bad("incident_count, ibs_order and boundary_per_side must be positive".into());
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude must be positive, got {}", self.amplitude));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be finite and non-negative, got {l}"));
            }
        }
        if !(self.filter_threshold > 0.0) || !(self.divergence_threshold > 0.0) {
            return bad("filter_threshold and divergence_threshold must be positive".into());
        }
        if !(self.gmres_tol > 0.0 && self.cg_tol > 0.0) {
            return bad("solver tolerances must be positive".into());
        }
        let far = self.detector_kind() == DetectorKind::FarField;
        if far && !(self.far_field_radius > self.half_width * std::f64::consts::SQRT_2) {
            return bad(format!("far_field_radius {} lies inside the domain", self.far_field_radius));
        }
        let incompatible = |msg: &str| Err(HarnessError::Incompatible(msg.into()));
        match (self.method, self.data_kind) {
            (Method::Direct, DataKind::PhaselessScattered) => {
                incompatible("scattered-field moduli need the polarization method")
            }
            (Method::Fourier, DataKind::PhaselessScattered) => {
                incompatible("scattered-field moduli need the polarization method")
            }
            (Method::Fourier, _) if !far => incompatible("the Fourier method needs far-field detectors"),
            (Method::Polarization, DataKind::PhaselessScattered) if !far => {
                incompatible("the polarization method needs far-field detectors")
            }
            (Method::Polarization, DataKind::PhaselessScattered) => Ok(()),
            (Method::Polarization, _) => incompatible("the polarization method works on scattered-field moduli"),
            _ => Ok(()),
        }
    }

    pub fn forward_config(&self) -> ForwardConfig {
        ForwardConfig {
            half_width: self.half_width,
            forward_n: self.n * self.forward_grid_factor,
            k: self.k,
            incident_count: self.incident_count,
            detectors: self.detector_kind(),
            boundary_per_side: self.boundary_per_side,
            far_field_radius: self.far_field_radius,
            potential: self.potential,
            amplitude: self.amplitude,
            potential_convention: self.potential_convention,
            gmres_tol: self.gmres_tol,
            gmres_restart: self.gmres_restart,
            gmres_max_iter: self.gmres_max_iter,
        }
    }

    pub fn inverse_grid(&self) -> Result<Grid2D> {
        Ok(make_grid(self.half_width, self.n)?)
    }

    pub fn gmres(&self) -> GmresOptions {
        GmresOptions { tol: self.gmres_tol, restart: self.gmres_restart, max_iter: self.gmres_max_iter }
    }

    pub fn cg(&self) -> CgOptions {
        CgOptions { tol: self.cg_tol, max_iter: self.cg_max_iter }
    }

    /// Whether two configurations describe the same object and geometry.
    pub fn same_geometry(&self, other: &Self) -> bool {
        self.half_width == other.half_width
            && self.n == other.n
            && self.forward_grid_factor == other.forward_grid_factor
            && self.k == other.k
            && self.incident_count == other.incident_count
            && self.potential == other.potential
            && self.amplitude == other.amplitude
            && self.potential_convention == other.potential_convention
    }
}

impl ForwardConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Ok(make_grid(self.half_width, self.forward_n)?)
    }

    pub fn directions(&self) -> Vec<[f64; 2]> {
        uniform_directions(self.incident_count)
    }

    pub fn incidents(&self) -> Result<Vec<IncidentSpec>> {
        Ok(self.directions().into_iter().map(|d| IncidentSpec::single(self.k, d)).collect::<Result<_, _>>()?)
    }

    pub fn detector_set(&self) -> Result<DetectorSet> {
        Ok(match self.detectors {
            DetectorKind::Boundary => DetectorSet::boundary(self.half_width, self.boundary_per_side)?,
            DetectorKind::FarField => DetectorSet::far_field(self.far_field_radius, self.directions())?,
        })
    }

    pub fn gmres(&self) -> GmresOptions {
        GmresOptions { tol: self.gmres_tol, restart: self.gmres_restart, max_iter: self.gmres_max_iter }
    }
}

/// The configured potential sampled on `grid`.
pub fn potential_on(kind: PotentialKind, amplitude: f64, grid: Grid2D) -> Result<Potential> {
    Ok(match kind {
        PotentialKind::Disk => disk_potential(&DiskParams::standard(amplitude), grid)?,
        PotentialKind::GaussianMixture => {
            gaussian_mixture_potential(&GaussianMixtureParams::standard(amplitude), grid)?
        }
    })
}
