//! Incident plane waves and detector geometries.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, FieldDomain, Grid2D};

const UNIT_TOL: f64 = 1e-12;

fn check_unit(dir: [f64; 2]) -> Result<()> {
    let norm = dir[0].hypot(dir[1]);
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!(
            "direction ({}, {}) is not a unit vector (norm {norm})",
            dir[0], dir[1]
        )));
    }
    Ok(())
}

/// Unit vector at angle `theta`.
pub fn direction(theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c, s]
}

/// `count` directions at angles `2πi/count`.
pub fn uniform_directions(count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|i| direction(2.0 * PI * i as f64 / count as f64))
        .collect()
}

/// A plane wave `e^{ik d₁·x}`, or the superposition
/// `e^{ik d₁·x} + a·e^{ik d₂·x}` with `|a| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentSpec {
    k: f64,
    direction: [f64; 2],
    second: Option<([f64; 2], Complex64)>,
}

impl IncidentSpec {
    pub fn single(k: f64, direction: [f64; 2]) -> Result<Self> {
        check_wavenumber(k)?;
        check_unit(direction)?;
        Ok(Self { k, direction, second: None })
    }

    pub fn superposition(k: f64, first: [f64; 2], second: [f64; 2], a: Complex64) -> Result<Self> {
        check_wavenumber(k)?;
        check_unit(first)?;
        check_unit(second)?;
        if (a.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "superposition coefficient must be unimodular, got |a| = {}",
                a.norm()
            )));
        }
        Ok(Self { k, direction: first, second: Some((second, a)) })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn direction(&self) -> [f64; 2] {
        self.direction
    }

    pub fn second(&self) -> Option<([f64; 2], Complex64)> {
        self.second
    }

    pub fn is_single(&self) -> bool {
        self.second.is_none()
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> Complex64 {
        let phase = |d: [f64; 2]| Complex64::from_polar(1.0, self.k * (d[0] * x[0] + d[1] * x[1]));
        let mut u = phase(self.direction);
        if let Some((d2, a)) = self.second {
            u += a * phase(d2);
        }
        u
    }

    /// Supremum of `|u₀|` over the plane.
    pub fn sup_norm(&self) -> f64 {
        if self.second.is_some() {
            2.0
        } else {
            1.0
        }
    }
}

fn check_wavenumber(k: f64) -> Result<()> {
    if k.is_finite() && k > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("wavenumber must be positive, got {k}")))
    }
}

/// Samples the incident field at arbitrary points.
pub fn plane_wave(spec: &IncidentSpec, points: &[[f64; 2]]) -> Vec<Complex64> {
    points.iter().map(|&x| spec.eval(x)).collect()
}

/// Samples the incident field at every grid node.
pub fn plane_wave_on(spec: &IncidentSpec, grid: &Grid2D) -> ComplexField {
    let values = (0..grid.len()).map(|idx| spec.eval(grid.point(idx))).collect();
    ComplexField::new(FieldDomain::Grid(*grid), values).expect("unimodular samples are finite")
}

/// Measurement locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSet {
    /// Points on the boundary of the computational square.
    Boundary { positions: Vec<[f64; 2]> },
    /// Points `R·x̂` on a large circle, indexed by their directions.
    FarField { radius: f64, directions: Vec<[f64; 2]> },
}

impl DetectorSet {
    /// `per_side` cell-centered points on each side of `[-L, L]²`, listed
    /// counterclockwise starting from the bottom-left corner.
    pub fn boundary(half_width: f64, per_side: usize) -> Result<Self> {
        if !(half_width > 0.0) || per_side == 0 {
            return Err(Error::InvalidArgument(
                "boundary detectors need a positive half-width and at least one point per side".into(),
            ));
        }
        let h = 2.0 * half_width / per_side as f64;
        let s = |j: usize| -half_width + (j as f64 + 0.5) * h;
        let l = half_width;
        let mut positions = Vec::with_capacity(4 * per_side);
        positions.extend((0..per_side).map(|j| [s(j), -l]));
        positions.extend((0..per_side).map(|j| [l, s(j)]));
        positions.extend((0..per_side).rev().map(|j| [s(j), l]));
        positions.extend((0..per_side).rev().map(|j| [-l, s(j)]));
        Ok(DetectorSet::Boundary { positions })
    }

    pub fn far_field(radius: f64, directions: Vec<[f64; 2]>) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "far-field radius must be positive, got {radius}"
            )));
        }
        for d in &directions {
            check_unit(*d)?;
        }
        Ok(DetectorSet::FarField { radius, directions })
    }

    pub fn count(&self) -> usize {
        match self {
            DetectorSet::Boundary { positions } => positions.len(),
            DetectorSet::FarField { directions, .. } => directions.len(),
        }
    }

    pub fn is_far_field(&self) -> bool {
        matches!(self, DetectorSet::FarField { .. })
    }

    /// Physical measurement points.
    pub fn points(&self) -> Vec<[f64; 2]> {
        match self {
            DetectorSet::Boundary { positions } => positions.clone(),
            DetectorSet::FarField { radius, directions } => directions
                .iter()
                .map(|d| [radius * d[0], radius * d[1]])
                .collect(),
        }
    }

    pub fn far_field_parts(&self) -> Option<(f64, &[[f64; 2]])> {
        match self {
            DetectorSet::FarField { radius, directions } => Some((*radius, directions)),
            DetectorSet::Boundary { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_wave_is_unimodular() {
        let spec = IncidentSpec::single(5.0, direction(0.3)).unwrap();
        let g = crate::grid::make_grid(6.4, 16).unwrap();
        let u = plane_wave(&spec, &g.points());
        assert!(u.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert_eq!(spec.sup_norm(), 1.0);
    }

    #[test]
    fn superpositions_cancel_and_double() {
        let d = direction(1.1);
        let pts = [[0.3, -2.0], [4.0, 1.0], [0.0, 0.0]];
        let cancel = IncidentSpec::superposition(5.0, d, d, Complex64::new(-1.0, 0.0)).unwrap();
        assert!(plane_wave(&cancel, &pts).iter().all(|z| z.norm() < 1e-15));
        let double = IncidentSpec::superposition(5.0, d, d, Complex64::new(1.0, 0.0)).unwrap();
        let single = IncidentSpec::single(5.0, d).unwrap();
        for (a, b) in plane_wave(&double, &pts).iter().zip(plane_wave(&single, &pts)) {
            assert!((a - b * 2.0).norm() < 1e-15);
        }
    }

    #[test]
    fn incident_validation() {
        assert!(IncidentSpec::single(5.0, [1.0, 1.0]).is_err());
        assert!(IncidentSpec::single(0.0, [1.0, 0.0]).is_err());
        let d = [1.0, 0.0];
        assert!(IncidentSpec::superposition(5.0, d, d, Complex64::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn boundary_detectors_on_the_square() {
        let set = DetectorSet::boundary(6.4, 128).unwrap();
        assert_eq!(set.count(), 512);
        for p in set.points() {
            let on_edge = (p[0].abs() - 6.4).abs() < 1e-14 || (p[1].abs() - 6.4).abs() < 1e-14;
            assert!(on_edge);
            assert!(p[0].abs() <= 6.4 + 1e-14 && p[1].abs() <= 6.4 + 1e-14);
        }
        // counterclockwise: signed area of the polygon is positive
        let pts = set.points();
        let area: f64 = (0..pts.len())
            .map(|i| {
                let a = pts[i];
                let b = pts[(i + 1) % pts.len()];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        assert!(area > 0.0);
    }

    #[test]
    fn far_field_detectors() {
        let dirs = uniform_directions(400);
        assert_eq!(dirs.len(), 400);
        assert!(dirs.iter().all(|d| (d[0].hypot(d[1]) - 1.0).abs() < 1e-15));
        let set = DetectorSet::far_field(300.0, dirs).unwrap();
        assert!(set.points().iter().all(|p| (p[0].hypot(p[1]) - 300.0).abs() < 1e-12));
        assert!(DetectorSet::far_field(300.0, vec![[2.0, 0.0]]).is_err());
    }
}
