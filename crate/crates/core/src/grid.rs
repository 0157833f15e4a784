//! Cell-centered grids on the square `[-L, L]²` and the real potentials and
//! complex fields that live on them.
//!
//! Grid values are stored row-major with the first index running along `x`:
//! node `(i, j)` sits at `(x_i, y_j)` and has flat index `i * n + j`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Uniform cell-centered discretization of `[-L, L]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    half_width: f64,
    n: usize,
    h: f64,
}

impl Grid2D {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid half-width must be positive, got {half_width}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points per axis, got {n}"
            )));
        }
        Ok(Self {
            half_width,
            n,
            h: 2.0 * half_width / n as f64,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Area of one cell, the quadrature weight of every node.
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// Total number of nodes, `n²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `j` along either axis.
    #[inline]
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.h
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.coord(j)).collect()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        [self.coord(idx / self.n), self.coord(idx % self.n)]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|idx| self.point(idx)).collect()
    }

    /// The grid with half as many points per axis over the same square.
    pub fn coarsened(&self) -> Result<Self> {
        if self.n % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen a grid with odd size {}",
                self.n
            )));
        }
        Self::new(self.half_width, self.n / 2)
    }

    /// The grid with `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("refinement factor must be ≥ 1".into()));
        }
        Self::new(self.half_width, self.n * factor)
    }

    /// Flat indices of the anti-diagonal `(x_i, y_{n-1-i})`, running from
    /// `(-L, L)` to `(L, -L)`.
    pub fn anti_diagonal(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.index(i, self.n - 1 - i)).collect()
    }
}

/// `make_grid(L, n)`.
pub fn make_grid(half_width: f64, n: usize) -> Result<Grid2D> {
    Grid2D::new(half_width, n)
}

/// A real scattering potential sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Potential {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        ensure_len(grid.len(), values.len())?;
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "potential value at node {bad} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|idx| {
                let [x, y] = grid.point(idx);
                f(x, y)
            })
            .collect();
        Self::new(grid, values)
    }

    /// Rejects complex input unless every imaginary part vanishes.
    pub fn from_complex(grid: Grid2D, values: &[Complex64], tol: f64) -> Result<Self> {
        ensure_len(grid.len(), values.len())?;
        if let Some(idx) = values.iter().position(|v| v.im.abs() > tol) {
            return Err(Error::InvalidArgument(format!(
                "potential must be real; node {idx} has imaginary part {:.3e}",
                values[idx].im
            )));
        }
        Self::new(grid, values.iter().map(|v| v.re).collect())
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `∫ V dx` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// 2×2 cell averaging onto the grid with half the resolution.
    pub fn restrict(&self) -> Result<Self> {
        let coarse = self.grid.coarsened()?;
        let n = coarse.n();
        let mut values = vec![0.0; coarse.len()];
        for i in 0..n {
            for j in 0..n {
                values[coarse.index(i, j)] = 0.25
                    * (self.value_at(2 * i, 2 * j)
                        + self.value_at(2 * i + 1, 2 * j)
                        + self.value_at(2 * i, 2 * j + 1)
                        + self.value_at(2 * i + 1, 2 * j + 1));
            }
        }
        Self::new(coarse, values)
    }

    pub fn anti_diagonal(&self) -> Vec<f64> {
        self.grid
            .anti_diagonal()
            .into_iter()
            .map(|idx| self.values[idx])
            .collect()
    }
}

/// Where a complex field is sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldDomain {
    Grid(Grid2D),
    Detectors(usize),
}

impl FieldDomain {
    pub fn len(&self) -> usize {
        match self {
            FieldDomain::Grid(g) => g.len(),
            FieldDomain::Detectors(count) => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Complex samples on a grid or at a detector set.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    domain: FieldDomain,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(domain: FieldDomain, values: Vec<Complex64>) -> Result<Self> {
        ensure_len(domain.len(), values.len())?;
        if let Some(bad) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "field value at sample {bad} is not finite"
            )));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: FieldDomain) -> Self {
        Self {
            domain,
            values: vec![Complex64::new(0.0, 0.0); domain.len()],
        }
    }

    pub fn domain(&self) -> &FieldDomain {
        &self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn l2_norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Disk potential with a tanh-smoothed rim:
/// `V = (A/2)·(1 − tanh((|x − c| − R)/δ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskParams {
    pub center: [f64; 2],
    pub radius: f64,
    pub delta: f64,
    pub amplitude: f64,
}

impl DiskParams {
    /// Centered disk with radius 2.55 and rim width 0.255.
    pub fn standard(amplitude: f64) -> Self {
        Self {
            center: [0.0, 0.0],
            radius: 2.55,
            delta: 0.255,
            amplitude,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r = (x - self.center[0]).hypot(y - self.center[1]);
        0.5 * self.amplitude * (1.0 - ((r - self.radius) / self.delta).tanh())
    }
}

pub fn disk_potential(params: &DiskParams, grid: Grid2D) -> Result<Potential> {
    if !(params.radius > 0.0 && params.delta > 0.0 && params.amplitude > 0.0) {
        return Err(Error::InvalidArgument(
            "disk radius, rim width and amplitude must be positive".into(),
        ));
    }
    Potential::from_fn(grid, |x, y| params.eval(x, y))
}

/// Sum of isotropic Gaussians scaled by a common amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureParams {
    pub centers: Vec<[f64; 2]>,
    pub sigmas: Vec<f64>,
    pub amplitude: f64,
}

impl GaussianMixtureParams {
    /// The two-bump mixture centered on the anti-diagonal.
    pub fn standard(amplitude: f64) -> Self {
        Self {
            centers: vec![[-1.905, 1.905], [2.54, -2.54]],
            sigmas: vec![1.524, 1.143],
            amplitude,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.amplitude
            * self
                .centers
                .iter()
                .zip(&self.sigmas)
                .map(|(c, s)| {
                    let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                    (-d2 / (2.0 * s * s)).exp()
                })
                .sum::<f64>()
    }
}

pub fn gaussian_mixture_potential(params: &GaussianMixtureParams, grid: Grid2D) -> Result<Potential> {
    if params.centers.len() != params.sigmas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} centers but {} widths",
            params.centers.len(),
            params.sigmas.len()
        )));
    }
    if params.sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("Gaussian widths must be positive".into()));
    }
    Potential::from_fn(grid, |x, y| params.eval(x, y))
}

/// `‖V − V_true‖₂ / ‖V_true‖₂` over the grid.
pub fn relative_error(v: &Potential, v_true: &Potential) -> Result<f64> {
    if v.grid() != v_true.grid() {
        return Err(Error::InvalidArgument(
            "relative error needs both potentials on the same grid".into(),
        ));
    }
    relative_error_values(v.values(), v_true.values())
}

pub fn relative_error_values(v: &[f64], v_true: &[f64]) -> Result<f64> {
    ensure_len(v_true.len(), v.len())?;
    let denom = v_true.iter().map(|t| t * t).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "relative error is undefined for a zero reference potential".into(),
        ));
    }
    let num = v
        .iter()
        .zip(v_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

pub(crate) fn norm(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grid_spacings() {
        assert!((make_grid(6.4, 128).unwrap().spacing() - 0.1).abs() < 1e-15);
        assert!((make_grid(6.4, 256).unwrap().spacing() - 0.05).abs() < 1e-15);
        let g = make_grid(1.0, 2).unwrap();
        assert_eq!(g.coords(), vec![-0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_grid(0.0, 8).is_err());
        assert!(make_grid(-1.0, 8).is_err());
        assert!(make_grid(1.0, 1).is_err());
    }

    #[test]
    fn nodes_strictly_inside_and_evenly_spaced() {
        let g = make_grid(6.4, 128).unwrap();
        let c = g.coords();
        assert!(c.iter().all(|x| x.abs() < 6.4));
        for w in c.windows(2) {
            assert!((w[1] - w[0] - g.spacing()).abs() < 1e-14);
        }
        assert_eq!(g.points().len(), 128 * 128);
    }

    #[test]
    fn disk_center_and_rim() {
        let p = DiskParams::standard(1.0);
        assert!((p.eval(0.0, 0.0) - 1.0).abs() < 5e-9);
        assert_eq!(p.eval(2.55, 0.0), 0.5);
        let direct = 0.5 * (1.0 - ((6.0f64 - 2.55) / 0.255).tanh());
        assert_eq!(p.eval(6.0, 0.0), direct);
    }

    #[test]
    fn disk_is_invariant_under_quarter_turns() {
        let g = make_grid(6.4, 32).unwrap();
        let v = disk_potential(&DiskParams::standard(1.0), g).unwrap();
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                let a = v.value_at(i, j);
                let b = v.value_at(n - 1 - j, i);
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_mixture_values() {
        let p = GaussianMixtureParams::standard(1.0);
        let d2 = 2.0 * 4.445f64.powi(2);
        let expected = 1.0 + (-d2 / (2.0 * 1.143f64.powi(2))).exp();
        let got = p.eval(-1.905, 1.905);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 1.0 - 2.7e-7).abs() < 1e-8);

        let zero = GaussianMixtureParams::standard(0.0);
        let g = make_grid(6.4, 16).unwrap();
        let v = gaussian_mixture_potential(&zero, g).unwrap();
        assert!(v.values().iter().all(|x| *x == 0.0));

        let single = GaussianMixtureParams {
            centers: vec![[0.0, 0.0]],
            sigmas: vec![1.0],
            amplitude: 2.0,
        };
        assert_eq!(single.eval(0.0, 0.0), 2.0);
    }

    #[test]
    fn gaussian_mixture_rejects_mismatch() {
        let p = GaussianMixtureParams {
            centers: vec![[0.0, 0.0]],
            sigmas: vec![1.0, 2.0],
            amplitude: 1.0,
        };
        assert!(gaussian_mixture_potential(&p, make_grid(1.0, 4).unwrap()).is_err());
    }

    #[test]
    fn relative_error_cases() {
        let g = make_grid(6.4, 16).unwrap();
        let v = disk_potential(&DiskParams::standard(1.0), g).unwrap();
        assert_eq!(relative_error(&v, &v).unwrap(), 0.0);
        assert!((relative_error(&v.scaled(2.0), &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_error(&Potential::zeros(g), &v).unwrap() - 1.0).abs() < 1e-15);
        for alpha in [-1.5, 0.3, 0.99, 4.0] {
            let e = relative_error(&v.scaled(alpha), &v).unwrap();
            assert!((e - (alpha - 1.0f64).abs()).abs() < 1e-14);
        }
        assert!(relative_error(&v, &Potential::zeros(g)).is_err());
    }

    #[test]
    fn complex_potentials_rejected() {
        let g = make_grid(1.0, 2).unwrap();
        let vals = vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.5), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(Potential::from_complex(g, &vals, 1e-12).is_err());
    }

    #[test]
    fn restriction_averages_blocks() {
        let fine = make_grid(1.0, 4).unwrap();
        let v = Potential::from_fn(fine, |x, y| x + 2.0 * y).unwrap();
        let c = v.restrict().unwrap();
        assert_eq!(c.grid().n(), 2);
        // linear functions are reproduced exactly by cell averaging
        for idx in 0..4 {
            let [x, y] = c.grid().point(idx);
            assert!((c.values()[idx] - (x + 2.0 * y)).abs() < 1e-14);
        }
    }
}
