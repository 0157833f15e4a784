//! Lippmann–Schwinger solver in the source formulation `σ = V·u`:
//! `σ − V·(G∗σ) = V·u₀`, with `G∗` applied through a circulant embedding
//! of the block-Toeplitz kernel matrix.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::fft::Fft2;
use crate::geometry::IncidentSpec;
use crate::grid::{Grid2D, Potential};
use crate::krylov::{gmres, GmresOptions};
use crate::special::{green2d_raw, self_cell_value};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// How a configured potential enters the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialConvention {
    /// `(Δ + k² − V)`-type scaling: the source is `V·u`.
    #[default]
    Schrodinger,
    /// Refractive-index contrast: the source is `k²V·u`.
    Medium,
}

impl PotentialConvention {
    pub fn factor(self, k: f64) -> f64 {
        match self {
            PotentialConvention::Schrodinger => 1.0,
            PotentialConvention::Medium => k * k,
        }
    }
}

/// Discrete volume potential `σ ↦ Σ_l h² G(x_j − x_l) σ_l` on a grid, with
/// the singular self term replaced by the integral over an equal-area disk.
pub struct ConvKernel {
    grid: Grid2D,
    k: f64,
    self_cell: Complex64,
    fft: Fft2,
    /// 2-D spectrum of the `(2n)²` circulant table, stored transposed.
    spectrum_t: Vec<Complex64>,
    convolutions: AtomicUsize,
}

impl std::fmt::Debug for ConvKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvKernel")
            .field("grid", &self.grid)
            .field("k", &self.k)
            .field("self_cell", &self.self_cell)
            .finish()
    }
}

pub fn assemble_kernel(grid: &Grid2D, k: f64) -> Result<ConvKernel> {
    ConvKernel::new(grid, k)
}

impl ConvKernel {
    pub fn new(grid: &Grid2D, k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidArgument(format!("wavenumber must be positive, got {k}")));
        }
        let n = grid.n();
        let m = 2 * n;
        let h = grid.spacing();
        let w = grid.cell_area();
        let self_cell = self_cell_value(h, k)?;

        // values by absolute lattice offset, then folded into the circulant table
        let offsets: Vec<Complex64> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (a, b) = (idx / n, idx % n);
                if a == 0 && b == 0 {
                    self_cell
                } else {
                    green2d_raw(h * ((a * a + b * b) as f64).sqrt(), k) * w
                }
            })
            .collect();
        let fold = |p: usize| -> Option<usize> {
            match p.cmp(&n) {
                std::cmp::Ordering::Less => Some(p),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(m - p),
            }
        };
        let mut table = vec![ZERO; m * m];
        for p in 0..m {
            let Some(a) = fold(p) else { continue };
            for q in 0..m {
                let Some(b) = fold(q) else { continue };
                table[p * m + q] = offsets[a * n + b];
            }
        }
        let fft = Fft2::new(m);
        let mut scratch = vec![ZERO; m * m];
        fft.forward(&mut table, &mut scratch);
        crate::fft::transpose(&table, &mut scratch, m);
        Ok(Self {
            grid: *grid,
            k,
            self_cell,
            fft,
            spectrum_t: scratch,
            convolutions: AtomicUsize::new(0),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Integral of `G` over the disk of area `h²`.
    pub fn self_cell(&self) -> Complex64 {
        self.self_cell
    }

    /// Number of grid convolutions performed since construction or the last reset.
    pub fn convolution_count(&self) -> usize {
        self.convolutions.load(Ordering::Relaxed)
    }

    pub fn reset_convolution_count(&self) {
        self.convolutions.store(0, Ordering::Relaxed);
    }

    /// Matrix entry coupling nodes `i` and `l`.
    pub fn entry(&self, i: usize, l: usize) -> Complex64 {
        if i == l {
            return self.self_cell;
        }
        let a = self.grid.point(i);
        let b = self.grid.point(l);
        green2d_raw((a[0] - b[0]).hypot(a[1] - b[1]), self.k) * self.grid.cell_area()
    }

    /// `out = G∗f`.
    pub fn convolve_into(&self, f: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.n();
        let m = 2 * n;
        assert_eq!(f.len(), n * n, "field length must match the kernel grid");
        assert_eq!(out.len(), n * n, "output length must match the kernel grid");
        self.convolutions.fetch_add(1, Ordering::Relaxed);

        let mut buf = vec![ZERO; n * m];
        for i in 0..n {
            buf[i * m..i * m + n].copy_from_slice(&f[i * n..(i + 1) * n]);
        }
        self.fft.rows_forward(&mut buf, n);
        // columns become rows, zero-padded to length m
        let mut cols = vec![ZERO; m * m];
        for i in 0..n {
            let row = &buf[i * m..(i + 1) * m];
            for (q, v) in row.iter().enumerate() {
                cols[q * m + i] = *v;
            }
        }
        self.fft.rows_forward(&mut cols, m);
        for (c, s) in cols.iter_mut().zip(&self.spectrum_t) {
            *c *= s;
        }
        self.fft.rows_inverse(&mut cols, m);
        for i in 0..n {
            let row = &mut buf[i * m..(i + 1) * m];
            for (q, v) in row.iter_mut().enumerate() {
                *v = cols[q * m + i];
            }
        }
        self.fft.rows_inverse(&mut buf, n);
        let scale = 1.0 / (m * m) as f64;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = buf[i * m + j] * scale;
            }
        }
    }

    pub fn convolve(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; f.len()];
        self.convolve_into(f, &mut out);
        out
    }

    /// The full `n² × n²` matrix, row-major. Intended for small grids.
    pub fn dense_matrix(&self) -> Vec<Complex64> {
        let len = self.grid.len();
        let mut a = vec![ZERO; len * len];
        for i in 0..len {
            for l in 0..len {
                a[i * len + l] = self.entry(i, l);
            }
        }
        a
    }
}

/// `σ − V·(G∗σ)`.
pub fn apply_ls_operator(sigma: &[Complex64], v: &[f64], kernel: &ConvKernel) -> Result<Vec<Complex64>> {
    let len = kernel.grid().len();
    ensure_len(len, sigma.len())?;
    ensure_len(len, v.len())?;
    let conv = kernel.convolve(sigma);
    Ok(sigma.iter().zip(&conv).zip(v).map(|((s, c), vi)| s - c * vi).collect())
}

#[derive(Debug, Clone)]
pub struct TotalFieldSolution {
    pub incident: IncidentSpec,
    pub grid: Grid2D,
    /// `σ = V·u` on the grid.
    pub sigma: Vec<Complex64>,
    /// Total field `u = u₀ + G∗σ` on the grid.
    pub u: Vec<Complex64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Solves the Lippmann–Schwinger equation for one incident field. `v` is
/// the effective potential already scaled by its convention factor.
pub fn solve_total_field(
    v: &[f64],
    incident: &IncidentSpec,
    kernel: &ConvKernel,
    opts: GmresOptions,
) -> Result<TotalFieldSolution> {
    let grid = *kernel.grid();
    ensure_len(grid.len(), v.len())?;
    if (incident.k() - kernel.k()).abs() > 1e-12 * kernel.k() {
        return Err(Error::InvalidArgument(format!(
            "incident wavenumber {} differs from kernel wavenumber {}",
            incident.k(),
            kernel.k()
        )));
    }
    let u0: Vec<Complex64> = (0..grid.len()).map(|i| incident.eval(grid.point(i))).collect();
    let rhs: Vec<Complex64> = u0.iter().zip(v).map(|(u, vi)| u * vi).collect();
    let sol = gmres(
        |s, out| {
            kernel.convolve_into(s, out);
            for ((o, si), vi) in out.iter_mut().zip(s).zip(v) {
                *o = si - *o * vi;
            }
        },
        &rhs,
        opts,
    )?;
    let sigma = sol.x;
    let conv = kernel.convolve(&sigma);
    let u = u0.iter().zip(&conv).map(|(a, b)| a + b).collect();
    Ok(TotalFieldSolution {
        incident: *incident,
        grid,
        sigma,
        u,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// `A(x̂) = h² Σ_j e^{−ik x̂·x_j} σ_j`.
pub fn far_field_amplitude(solution: &TotalFieldSolution, direction: [f64; 2]) -> Complex64 {
    let k = solution.incident.k();
    let g = &solution.grid;
    let acc: Complex64 = solution
        .sigma
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let x = g.point(j);
            s * Complex64::from_polar(1.0, -k * (direction[0] * x[0] + direction[1] * x[1]))
        })
        .sum();
    acc * g.cell_area()
}

/// `u_s(x) = h² Σ_j G(x − x_j) σ_j` by direct summation.
pub fn evaluate_scattered_at(solution: &TotalFieldSolution, points: &[[f64; 2]]) -> Vec<Complex64> {
    scattered_from_sources(&solution.grid, solution.incident.k(), &solution.sigma, points)
}

pub(crate) fn scattered_from_sources(
    grid: &Grid2D,
    k: f64,
    sigma: &[Complex64],
    points: &[[f64; 2]],
) -> Vec<Complex64> {
    let w = grid.cell_area();
    let h = grid.spacing();
    let self_cell = self_cell_value(h, k).expect("grid spacing and k are positive");
    points
        .par_iter()
        .map(|x| {
            sigma
                .iter()
                .enumerate()
                .filter(|(_, s)| **s != ZERO)
                .map(|(j, s)| {
                    let y = grid.point(j);
                    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
                    if r < 1e-12 * h {
                        s * self_cell
                    } else {
                        s * green2d_raw(r, k) * w
                    }
                })
                .sum()
        })
        .collect()
}

/// A potential together with the machinery to solve scattering problems on it.
pub struct ForwardModel {
    kernel: ConvKernel,
    effective: Vec<f64>,
    opts: GmresOptions,
}

impl ForwardModel {
    pub fn new(v: &Potential, k: f64, convention: PotentialConvention, opts: GmresOptions) -> Result<Self> {
        let kernel = ConvKernel::new(v.grid(), k)?;
        let factor = convention.factor(k);
        let effective = v.values().iter().map(|x| x * factor).collect();
        Ok(Self { kernel, effective, opts })
    }

    pub fn kernel(&self) -> &ConvKernel {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid2D {
        self.kernel.grid()
    }

    pub fn effective_potential(&self) -> &[f64] {
        &self.effective
    }

    pub fn options(&self) -> GmresOptions {
        self.opts
    }

    pub fn solve(&self, incident: &IncidentSpec) -> Result<TotalFieldSolution> {
        solve_total_field(&self.effective, incident, &self.kernel, self.opts)
    }

    /// Solves every incident field, returning the sources `σ` as columns.
    pub fn solve_all(&self, incidents: &[IncidentSpec]) -> Result<Vec<Vec<Complex64>>> {
        incidents
            .par_iter()
            .enumerate()
            .map(|(index, inc)| {
                self.solve(inc)
                    .map(|s| s.sigma)
                    .map_err(|e| Error::IncidentSolve { index, source: Box::new(e) })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::direction;
    use crate::grid::{disk_potential, make_grid, DiskParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn convolution_matches_dense_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = make_grid(1.0, 8).unwrap();
        let kern = assemble_kernel(&g, 5.0).unwrap();
        let dense = kern.dense_matrix();
        let sigma = random_field(&mut rng, 64);
        let fast = kern.convolve(&sigma);
        for i in 0..64 {
            let slow: Complex64 = (0..64).map(|l| dense[i * 64 + l] * sigma[l]).sum();
            assert!((slow - fast[i]).norm() < 1e-12);
        }
        assert!(kern.convolve(&vec![ZERO; 64]).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn kernel_columns_match_green_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = make_grid(6.4, 32).unwrap();
        let kern = assemble_kernel(&g, 5.0).unwrap();
        let h2 = g.cell_area();
        for _ in 0..20 {
            let j = rng.gen_range(0..g.len());
            let mut l = rng.gen_range(0..g.len());
            while l == j {
                l = rng.gen_range(0..g.len());
            }
            let mut e = vec![ZERO; g.len()];
            e[j] = Complex64::new(1.0, 0.0);
            let col = kern.convolve(&e);
            let a = g.point(l);
            let b = g.point(j);
            let expected = crate::special::green2d((a[0] - b[0]).hypot(a[1] - b[1]), 5.0).unwrap() * h2;
            assert!((col[l] - expected).norm() < 1e-12);
            assert!((col[j] - kern.self_cell()).norm() < 1e-12);
        }
    }

    #[test]
    fn ls_operator_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = make_grid(1.0, 8).unwrap();
        let kern = assemble_kernel(&g, 5.0).unwrap();
        let sigma = random_field(&mut rng, 64);
        let zero_v = vec![0.0; 64];
        let id = apply_ls_operator(&sigma, &zero_v, &kern).unwrap();
        assert!(id.iter().zip(&sigma).all(|(a, b)| (a - b).norm() < 1e-15));

        let v: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..3.0)).collect();
        let alpha = Complex64::new(0.7, -1.3);
        let scaled: Vec<Complex64> = sigma.iter().map(|s| s * alpha).collect();
        let a1 = apply_ls_operator(&scaled, &v, &kern).unwrap();
        let a2 = apply_ls_operator(&sigma, &v, &kern).unwrap();
        assert!(a1.iter().zip(&a2).all(|(x, y)| (x - y * alpha).norm() < 1e-13));

        let dense = kern.dense_matrix();
        for i in 0..64 {
            let slow: Complex64 = sigma[i] - v[i] * (0..64).map(|l| dense[i * 64 + l] * sigma[l]).sum::<Complex64>();
            assert!((slow - a2[i]).norm() < 1e-12);
        }
        assert!(apply_ls_operator(&sigma[..10], &v, &kern).is_err());
    }

    #[test]
    fn zero_potential_gives_incident_field() {
        let g = make_grid(6.4, 16).unwrap();
        let kern = assemble_kernel(&g, 5.0).unwrap();
        let inc = IncidentSpec::single(5.0, direction(0.4)).unwrap();
        let sol = solve_total_field(&vec![0.0; g.len()], &inc, &kern, GmresOptions::default()).unwrap();
        assert!(sol.sigma.iter().all(|s| s.norm() == 0.0));
        for (i, u) in sol.u.iter().enumerate() {
            assert!((u - inc.eval(g.point(i))).norm() < 1e-15);
        }
        assert_eq!(far_field_amplitude(&sol, direction(1.0)), ZERO);
        assert!(evaluate_scattered_at(&sol, &[[300.0, 0.0]])[0].norm() == 0.0);
    }

    #[test]
    fn solution_satisfies_source_relation() {
        let g = make_grid(6.4, 32).unwrap();
        let v = disk_potential(&DiskParams::standard(1.0), g).unwrap();
        let kern = assemble_kernel(&g, 5.0).unwrap();
        let inc = IncidentSpec::single(5.0, direction(0.0)).unwrap();
        let sol = solve_total_field(v.values(), &inc, &kern, GmresOptions::default()).unwrap();
        assert!(sol.residual <= 1e-8);
        let defect: f64 = sol
            .sigma
            .iter()
            .zip(&sol.u)
            .zip(v.values())
            .map(|((s, u), vi)| (s - u * vi).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale: f64 = sol.sigma.iter().map(|s| s.norm_sqr()).sum::<f64>().sqrt();
        assert!(defect / scale < 1e-7);
    }

    #[test]
    fn delta_source_evaluates_green_function() {
        let g = make_grid(1.0, 4).unwrap();
        let inc = IncidentSpec::single(5.0, direction(0.0)).unwrap();
        let mut sigma = vec![ZERO; 16];
        sigma[5] = Complex64::new(1.0, 0.0);
        let sol = TotalFieldSolution { incident: inc, grid: g, sigma, u: vec![ZERO; 16], residual: 0.0, iterations: 0 };
        let x = [3.0, -2.0];
        let y = g.point(5);
        let got = evaluate_scattered_at(&sol, &[x])[0];
        let expected = crate::special::green2d((x[0] - y[0]).hypot(x[1] - y[1]), 5.0).unwrap() * g.cell_area();
        assert!((got - expected).norm() < 1e-15);
        let at_node = evaluate_scattered_at(&sol, &[y])[0];
        assert!((at_node - self_cell_value(g.spacing(), 5.0).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn convolution_counter() {
        let g = make_grid(1.0, 4).unwrap();
        let kern = assemble_kernel(&g, 5.0).unwrap();
        let f = vec![Complex64::new(1.0, 0.0); 16];
        kern.convolve(&f);
        kern.convolve(&f);
        assert_eq!(kern.convolution_count(), 2);
        kern.reset_convolution_count();
        assert_eq!(kern.convolution_count(), 0);
    }
}
