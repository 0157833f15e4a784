//! Nonuniform Fourier sums between a uniform grid and scattered frequencies,
//! by Gaussian gridding with oversampling 2, plus the Toeplitz form of the
//! normal operator `F*F` and the Tikhonov least-squares solve built on it.
//!
//! Grid nodes are `x_m = shift + m·h` for `m ∈ [−n/2, n/2)` in each axis;
//! `F v(p) = Σ v_m e^{−i x_m·p}` and `F* φ(x_m) = Σ φ_j e^{i x_m·p_j}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::Grid2D;
use crate::krylov::{pcg, CgOptions};

const OVERSAMPLING: usize = 2;
/// Spreading half-width in oversampled cells.
pub const SPREAD_HALF_WIDTH: usize = 12;

#[derive(Debug, Clone)]
pub struct Nufft2 {
    n: usize,
    h: f64,
    shift: f64,
    m: usize,
    tau: f64,
    fft: Fft2,
    /// Per-mode deconvolution factor, indexed by `m + n/2`.
    deconv: Vec<f64>,
}

/// Gaussian weights for one coordinate: first oversampled index and the
/// `2W + 1` weights.
struct Stencil {
    start: isize,
    weights: [f64; 2 * SPREAD_HALF_WIDTH + 1],
}

impl Nufft2 {
    /// `n` modes per axis (even), spacing `h`, node offset `shift`.
    pub fn new(n: usize, h: f64, shift: f64) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("NUFFT needs an even mode count, got {n}")));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("NUFFT spacing must be positive".into()));
        }
        let m = OVERSAMPLING * n;
        let r = OVERSAMPLING as f64;
        let tau = PI * SPREAD_HALF_WIDTH as f64 / ((n * n) as f64 * r * (r - 0.5));
        let norm = (4.0 * PI * tau).sqrt();
        let half = (n / 2) as isize;
        let deconv = (-half..half).map(|l| 2.0 * PI / (norm * (-(l * l) as f64 * tau).exp())).collect();
        Ok(Self { n, h, shift, m, tau, fft: Fft2::new(m), deconv })
    }

    /// Transform matching the nodes of `grid`.
    pub fn for_grid(grid: &Grid2D) -> Result<Self> {
        Self::new(grid.n(), grid.spacing(), grid.spacing() / 2.0)
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    fn check_points(&self, points: &[[f64; 2]]) -> Result<()> {
        for p in points {
            if !(p[0].is_finite() && p[1].is_finite()) || (self.h * p[0]).abs() > PI || (self.h * p[1]).abs() > PI {
                return Err(Error::InvalidArgument(format!(
                    "frequency ({}, {}) lies outside the grid's band |p| ≤ π/h",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }

    fn stencil(&self, omega: f64) -> Stencil {
        let cell = 2.0 * PI / self.m as f64;
        let centre = (omega / cell).round() as isize;
        let start = centre - SPREAD_HALF_WIDTH as isize;
        let mut weights = [0.0; 2 * SPREAD_HALF_WIDTH + 1];
        for (t, w) in weights.iter_mut().enumerate() {
            let d = omega - (start + t as isize) as f64 * cell;
            *w = (-d * d / (4.0 * self.tau)).exp();
        }
        Stencil { start, weights }
    }

    fn wrap(&self, q: isize) -> usize {
        q.rem_euclid(self.m as isize) as usize
    }

    fn phase(&self, p: [f64; 2]) -> Complex64 {
        Complex64::from_polar(1.0, -self.shift * (p[0] + p[1]))
    }

    /// `F v` at `points`; `v` is row-major `n × n` with the first index along x.
    pub fn forward(&self, v: &[Complex64], points: &[[f64; 2]]) -> Result<Vec<Complex64>> {
        crate::error::ensure_len(self.n * self.n, v.len())?;
        self.check_points(points)?;
        let (n, m) = (self.n, self.m);
        let half = (n / 2) as isize;
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..n {
            let qi = self.wrap(i as isize - half);
            for j in 0..n {
                let qj = self.wrap(j as isize - half);
                buf[qi * m + qj] = v[i * n + j] * (self.deconv[i] * self.deconv[j]);
            }
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); m * m];
        self.fft.forward(&mut buf, &mut scratch);
        let norm = 1.0 / (m * m) as f64;
        Ok(points
            .iter()
            .map(|p| {
                let sx = self.stencil(self.h * p[0]);
                let sy = self.stencil(self.h * p[1]);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, wx) in sx.weights.iter().enumerate() {
                    let row = &buf[self.wrap(sx.start + a as isize) * m..][..m];
                    let mut inner = Complex64::new(0.0, 0.0);
                    for (b, wy) in sy.weights.iter().enumerate() {
                        inner += row[self.wrap(sy.start + b as isize)] * *wy;
                    }
                    acc += inner * *wx;
                }
                acc * norm * self.phase(*p)
            })
            .collect())
    }

    /// `F* φ` on the grid: the exact transpose of [`Nufft2::forward`].
    pub fn adjoint(&self, phi: &[Complex64], points: &[[f64; 2]]) -> Result<Vec<Complex64>> {
        crate::error::ensure_len(points.len(), phi.len())?;
        self.check_points(points)?;
        let (n, m) = (self.n, self.m);
        let half = (n / 2) as isize;
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        let norm = 1.0 / (m * m) as f64;
        for (p, f) in points.iter().zip(phi) {
            let a = f * self.phase(*p).conj() * norm;
            let sx = self.stencil(self.h * p[0]);
            let sy = self.stencil(self.h * p[1]);
            for (ia, wx) in sx.weights.iter().enumerate() {
                let row = self.wrap(sx.start + ia as isize) * m;
                let ax = a * *wx;
                for (ib, wy) in sy.weights.iter().enumerate() {
                    buf[row + self.wrap(sy.start + ib as isize)] += ax * *wy;
                }
            }
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); m * m];
        self.fft.inverse(&mut buf, &mut scratch);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let qi = self.wrap(i as isize - half);
            for j in 0..n {
                let qj = self.wrap(j as isize - half);
                out[i * n + j] = buf[qi * m + qj] * (self.deconv[i] * self.deconv[j]);
            }
        }
        Ok(out)
    }
}

/// Direct evaluation of `F v`, for checks.
pub fn direct_forward(v: &[Complex64], n: usize, h: f64, shift: f64, points: &[[f64; 2]]) -> Vec<Complex64> {
    let half = (n / 2) as f64;
    points
        .iter()
        .map(|p| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let xi = shift + (i as f64 - half) * h;
                for j in 0..n {
                    let yj = shift + (j as f64 - half) * h;
                    acc += v[i * n + j] * Complex64::from_polar(1.0, -(xi * p[0] + yj * p[1]));
                }
            }
            acc
        })
        .collect()
}

/// `F*F` as a convolution with `T(Δ) = Σ_j e^{iΔ·p_j}` on a zero-padded grid.
#[derive(Debug, Clone)]
pub struct ToeplitzNormal {
    n: usize,
    fft: Fft2,
    spectrum: Vec<Complex64>,
}

impl ToeplitzNormal {
    pub fn new(n: usize, h: f64, points: &[[f64; 2]]) -> Result<Self> {
        let big = 2 * n;
        // offsets m·h for m ∈ [−n, n): a transform with 2n modes and no shift
        let offsets = Nufft2::new(big, h, 0.0)?;
        let ones = vec![Complex64::new(1.0, 0.0); points.len()];
        let table = offsets.adjoint(&ones, points)?;
        let mut circ = vec![Complex64::new(0.0, 0.0); big * big];
        for a in 0..big {
            let ma = a as isize - n as isize;
            let qa = ma.rem_euclid(big as isize) as usize;
            for b in 0..big {
                let mb = b as isize - n as isize;
                let qb = mb.rem_euclid(big as isize) as usize;
                circ[qa * big + qb] = table[a * big + b];
            }
        }
        let fft = Fft2::new(big);
        let mut scratch = vec![Complex64::new(0.0, 0.0); big * big];
        fft.forward(&mut circ, &mut scratch);
        Ok(Self { n, fft, spectrum: circ })
    }

    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let (n, big) = (self.n, 2 * self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); big * big];
        for i in 0..n {
            buf[i * big..i * big + n].copy_from_slice(&v[i * n..(i + 1) * n]);
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); big * big];
        self.fft.forward(&mut buf, &mut scratch);
        buf.iter_mut().zip(&self.spectrum).for_each(|(a, s)| *a *= s);
        self.fft.inverse(&mut buf, &mut scratch);
        let norm = 1.0 / (big * big) as f64;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = buf[i * big + j] * norm;
            }
        }
    }
}

/// Tikhonov least squares for transform samples `φ_j ≈ V̂(p_j)`:
/// `min ‖h² F v − φ‖² + λ² ‖v‖²_{L²}` with `‖v‖²_{L²} = h² Σ |v|²`, i.e.
/// `(F*F + λ²/h²) v = F*φ / h²`. Measuring the penalty in `L²` keeps λ
/// meaningful across grid spacings.
#[derive(Debug, Clone)]
pub struct NufftLsq {
    points: Vec<[f64; 2]>,
    nufft: Nufft2,
    normal: ToeplitzNormal,
    lambda: f64,
    shift: f64,
    cell_area: f64,
    opts: CgOptions,
}

impl NufftLsq {
    pub fn new(grid: &Grid2D, points: Vec<[f64; 2]>, lambda: f64, opts: CgOptions) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("no Fourier samples to invert".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("λ must be finite and ≥ 0, got {lambda}")));
        }
        let nufft = Nufft2::for_grid(grid)?;
        let normal = ToeplitzNormal::new(grid.n(), grid.spacing(), &points)?;
        let cell_area = grid.cell_area();
        let shift = lambda * lambda / cell_area;
        Ok(Self { points, nufft, normal, lambda, shift, cell_area, opts })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn nufft(&self) -> &Nufft2 {
        &self.nufft
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The diagonal shift `λ²/h²` of the normal operator.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    /// `(F*F + λ²/h²) v`.
    pub fn normal_apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        self.normal.apply(v, out);
        out.iter_mut().zip(v).for_each(|(o, x)| *o += x * self.shift);
    }

    /// `(F*F + λ²/h²)⁻¹ b` by CG on the realified Hermitian system.
    pub fn solve_normal(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = b.len();
        let mut zx = vec![Complex64::new(0.0, 0.0); n];
        let mut zy = vec![Complex64::new(0.0, 0.0); n];
        let apply = |x: &[f64], out: &mut [f64]| {
            zx.iter_mut().enumerate().for_each(|(i, z)| *z = Complex64::new(x[2 * i], x[2 * i + 1]));
            self.normal_apply(&zx, &mut zy);
            for (i, z) in zy.iter().enumerate() {
                out[2 * i] = z.re;
                out[2 * i + 1] = z.im;
            }
        };
        let flat: Vec<f64> = b.iter().flat_map(|z| [z.re, z.im]).collect();
        let sol = pcg(apply, |r, z| z.copy_from_slice(r), &flat, self.opts)?;
        tracing::debug!(iterations = sol.iterations, residual = sol.residual, "NUFFT normal equations");
        Ok(sol.x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
    }

    /// Minimizer for transform samples `phi`.
    pub fn solve(&self, phi: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut rhs = self.nufft.adjoint(phi, &self.points)?;
        rhs.iter_mut().for_each(|z| *z /= self.cell_area);
        self.solve_normal(&rhs)
    }
}

/// Reconstructs a real potential from samples `φ_j ≈ V̂(p_j)`, dropping the
/// imaginary part of the least-squares solution.
pub fn nufft_lsq_reconstruct(
    grid: &Grid2D,
    points: &[[f64; 2]],
    values: &[Complex64],
    lambda: f64,
    opts: CgOptions,
) -> Result<Vec<f64>> {
    crate::error::ensure_len(points.len(), values.len())?;
    let lsq = NufftLsq::new(grid, points.to_vec(), lambda, opts)?;
    let v = lsq.solve(values)?;
    let imag = v.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let real = v.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
    tracing::debug!(imag, real, "discarded imaginary part of the NUFFT reconstruction");
    Ok(v.into_iter().map(|z| z.re).collect())
}
