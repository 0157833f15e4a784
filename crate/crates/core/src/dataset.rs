//! Measurement tables indexed by (incident wave, detector).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DetectorSet, IncidentSpec};

/// What was measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Complex scattered field. At far-field detectors this is the scattering
    /// amplitude `A(x̂)`; at boundary detectors it is `u_s` itself.
    Phase,
    /// `|u|` at the physical detector points.
    PhaselessTotal,
    /// `|u_s|` at the physical detector points.
    PhaselessScattered,
}

impl DataKind {
    pub fn is_phaseless(self) -> bool {
        !matches!(self, DataKind::Phase)
    }

    pub fn label(self) -> &'static str {
        match self {
            DataKind::Phase => "phase",
            DataKind::PhaselessTotal => "phaseless_total",
            DataKind::PhaselessScattered => "phaseless_scattered",
        }
    }
}

impl std::str::FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(DataKind::Phase),
            "phaseless_total" => Ok(DataKind::PhaselessTotal),
            "phaseless_scattered" => Ok(DataKind::PhaselessScattered),
            other => Err(Error::InvalidArgument(format!("unknown data kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataValues {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

impl DataValues {
    pub fn len(&self) -> usize {
        match self {
            DataValues::Complex(v) => v.len(),
            DataValues::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_complex(&self) -> Option<&[Complex64]> {
        match self {
            DataValues::Complex(v) => Some(v),
            DataValues::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            DataValues::Real(v) => Some(v),
            DataValues::Complex(_) => None,
        }
    }
}

/// How a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub forward_n: usize,
    pub half_width: f64,
    pub solver_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterDataset {
    incidents: Vec<IncidentSpec>,
    detectors: DetectorSet,
    kind: DataKind,
    values: DataValues,
    provenance: Provenance,
}

impl ScatterDataset {
    pub fn new(
        incidents: Vec<IncidentSpec>,
        detectors: DetectorSet,
        kind: DataKind,
        values: DataValues,
        provenance: Provenance,
    ) -> Result<Self> {
        let expected = incidents.len() * detectors.count();
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, found: values.len() });
        }
        match (&values, kind) {
            (DataValues::Complex(_), DataKind::Phase) => {}
            (DataValues::Real(v), k) if k.is_phaseless() => {
                if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "phaseless value {i} is negative or not finite"
                    )));
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "value type does not match data kind {}",
                    kind.label()
                )))
            }
        }
        if let Some(first) = incidents.first() {
            if incidents.iter().any(|s| s.k() != first.k()) {
                return Err(Error::InvalidArgument("incident waves must share one wavenumber".into()));
            }
        }
        Ok(Self { incidents, detectors, kind, values, provenance })
    }

    pub fn incidents(&self) -> &[IncidentSpec] {
        &self.incidents
    }

    pub fn detectors(&self) -> &DetectorSet {
        &self.detectors
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn values(&self) -> &DataValues {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn n_incident(&self) -> usize {
        self.incidents.len()
    }

    pub fn n_detector(&self) -> usize {
        self.detectors.count()
    }

    pub fn k(&self) -> Option<f64> {
        self.incidents.first().map(|s| s.k())
    }

    /// Row `i` of a complex table.
    pub fn complex_row(&self, i: usize) -> Option<&[Complex64]> {
        let m = self.n_detector();
        self.values.as_complex().map(|v| &v[i * m..(i + 1) * m])
    }

    /// Row `i` of a real table.
    pub fn real_row(&self, i: usize) -> Option<&[f64]> {
        let m = self.n_detector();
        self.values.as_real().map(|v| &v[i * m..(i + 1) * m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{direction, uniform_directions};

    fn prov() -> Provenance {
        Provenance { forward_n: 16, half_width: 1.0, solver_tolerance: 1e-8 }
    }

    #[test]
    fn shape_and_sign_checks() {
        let inc = vec![IncidentSpec::single(5.0, direction(0.0)).unwrap(); 2];
        let det = DetectorSet::far_field(300.0, uniform_directions(3)).unwrap();
        assert!(ScatterDataset::new(inc.clone(), det.clone(), DataKind::PhaselessTotal, DataValues::Real(vec![1.0; 6]), prov()).is_ok());
        assert!(ScatterDataset::new(inc.clone(), det.clone(), DataKind::PhaselessTotal, DataValues::Real(vec![1.0; 5]), prov()).is_err());
        let mut neg = vec![1.0; 6];
        neg[3] = -1e-3;
        assert!(ScatterDataset::new(inc.clone(), det.clone(), DataKind::PhaselessScattered, DataValues::Real(neg), prov()).is_err());
        assert!(ScatterDataset::new(inc, det, DataKind::Phase, DataValues::Real(vec![1.0; 6]), prov()).is_err());
    }

    #[test]
    fn kind_labels_round_trip() {
        for k in [DataKind::Phase, DataKind::PhaselessTotal, DataKind::PhaselessScattered] {
            assert_eq!(k.label().parse::<DataKind>().unwrap(), k);
        }
        assert!("amplitude".parse::<DataKind>().is_err());
    }
}
