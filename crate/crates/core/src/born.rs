//! Multilinear Born terms, the phase and intensity forward operators, and
//! the convergence diagnostics of the inverse series.
//!
//! Argument order: `born_term(&[V₁, …, V_m])` is the nested integral with
//! `V₁` outermost (next to the observation point) and `V_m` innermost
//! (acting on `u₀`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detector::DetectorOperator;
use crate::error::{ensure_len, Error, Result};
use crate::forward::ConvKernel;
use crate::grid::norm;
use crate::special::{green2d_raw, EULER_GAMMA};

fn multiply(v: &[f64], f: &[Complex64]) -> Vec<Complex64> {
    v.iter().zip(f).map(|(a, b)| b * *a).collect()
}

fn check_args(v_list: &[&[f64]], u0: &[Complex64], kernel: &ConvKernel) -> Result<()> {
    let len = kernel.grid().len();
    ensure_len(len, u0.len())?;
    for v in v_list {
        ensure_len(len, v.len())?;
    }
    Ok(())
}

/// `u_m(V₁, …, V_m)` on the grid; the empty list gives `u₀`.
pub fn born_term(v_list: &[&[f64]], u0: &[Complex64], kernel: &ConvKernel) -> Result<Vec<Complex64>> {
    check_args(v_list, u0, kernel)?;
    let mut field = u0.to_vec();
    for v in v_list.iter().rev() {
        field = kernel.convolve(&multiply(v, &field));
    }
    Ok(field)
}

/// Prefix fields `P_k = u_k(V_k, …, V₁)` and suffix fields
/// `T_k = u_{n−k}(V_{k+1}, …, V_n)` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct BornTermStack {
    pub prefix: Vec<Vec<Complex64>>,
    pub suffix: Vec<Vec<Complex64>>,
    pub convolutions: usize,
}

pub fn prefix_suffix_stack(v_list: &[&[f64]], u0: &[Complex64], kernel: &ConvKernel) -> Result<BornTermStack> {
    let n = v_list.len();
    if n == 0 {
        return Err(Error::InvalidArgument("prefix/suffix stacks need at least one potential".into()));
    }
    check_args(v_list, u0, kernel)?;
    let before = kernel.convolution_count();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(u0.to_vec());
    for v in v_list {
        let next = kernel.convolve(&multiply(v, prefix.last().expect("nonempty")));
        prefix.push(next);
    }
    let mut suffix = vec![Vec::new(); n + 1];
    suffix[n] = u0.to_vec();
    for k in (0..n).rev() {
        suffix[k] = kernel.convolve(&multiply(v_list[k], &suffix[k + 1]));
    }
    let convolutions = kernel.convolution_count() - before;
    Ok(BornTermStack { prefix, suffix, convolutions })
}

impl BornTermStack {
    pub fn order(&self) -> usize {
        self.prefix.len() - 1
    }

    /// `Σ_j P_j T_j*` on the grid.
    pub fn intensity_on_grid(&self) -> Vec<Complex64> {
        let len = self.prefix[0].len();
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        for (p, t) in self.prefix.iter().zip(&self.suffix) {
            for ((o, a), b) in out.iter_mut().zip(p).zip(t) {
                *o += a * b.conj();
            }
        }
        out
    }
}

/// `K^p_m(V₁, …, V_m)` at the detectors.
pub fn forward_k_phase(
    v_list: &[&[f64]],
    u0: &[Complex64],
    kernel: &ConvKernel,
    detectors: &DetectorOperator,
) -> Result<Vec<Complex64>> {
    let Some((outer, inner)) = v_list.split_first() else {
        return Err(Error::InvalidArgument("phase operators start at order 1".into()));
    };
    let field = born_term(inner, u0, kernel)?;
    Ok(detectors.apply_vec(&multiply(outer, &field)))
}

/// `K_n(V₁, …, V_n) = Σ_j P_j T_j*` at the detectors, with `u₀` sampled at
/// the detectors supplied separately.
pub fn forward_k_phaseless_general(
    v_list: &[&[f64]],
    u0: &[Complex64],
    u0_detectors: &[Complex64],
    kernel: &ConvKernel,
    detectors: &DetectorOperator,
) -> Result<Vec<Complex64>> {
    let n = v_list.len();
    let stack = prefix_suffix_stack(v_list, u0, kernel)?;
    ensure_len(detectors.rows(), u0_detectors.len())?;
    // P_j = G(V_j P_{j−1}) and T_j = G(V_{j+1} T_{j+1}) are read at the
    // detectors through their last source
    let prefix_at = |j: usize| match j {
        0 => u0_detectors.to_vec(),
        _ => detectors.apply_vec(&multiply(v_list[j - 1], &stack.prefix[j - 1])),
    };
    let suffix_at = |j: usize| match j == n {
        true => u0_detectors.to_vec(),
        false => detectors.apply_vec(&multiply(v_list[j], &stack.suffix[j + 1])),
    };
    let mut out = vec![Complex64::new(0.0, 0.0); detectors.rows()];
    for j in 0..=n {
        for ((o, a), b) in out.iter_mut().zip(&prefix_at(j)).zip(&suffix_at(j)) {
            *o += a * b.conj();
        }
    }
    Ok(out)
}

/// Identical-argument form of the intensity operator: checks that the result
/// is real and returns it.
pub fn forward_k_phaseless(
    v: &[f64],
    order: usize,
    u0: &[Complex64],
    u0_detectors: &[Complex64],
    kernel: &ConvKernel,
    detectors: &DetectorOperator,
) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(Error::InvalidArgument("intensity operators start at order 1".into()));
    }
    let list = vec![v; order];
    let out = forward_k_phaseless_general(&list, u0, u0_detectors, kernel, detectors)?;
    let imag = out.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let total = norm(&out);
    if imag > 1e-10 * total.max(f64::MIN_POSITIVE) {
        return Err(Error::Consistency(format!(
            "identical-argument intensity term has imaginary part {imag:.3e} of norm {total:.3e}"
        )));
    }
    Ok(out.iter().map(|z| z.re).collect())
}

/// `I(k)` from the bound on `∫|G|` over a unit disk.
pub fn i_of_k(k: f64) -> f64 {
    let switch = 2.0 * (-EULER_GAMMA).exp();
    if k >= switch {
        i_of_k_upper(k)
    } else {
        i_of_k_lower(k)
    }
}

pub(crate) fn i_of_k_upper(k: f64) -> f64 {
    std::f64::consts::PI
        + 2.0 * (EULER_GAMMA + (k / 2.0).ln() - 0.5)
        + 8.0 / (k * k) * (-2.0 * EULER_GAMMA).exp()
}

pub(crate) fn i_of_k_lower(k: f64) -> f64 {
    std::f64::consts::PI + 1.0 - 2.0 * EULER_GAMMA - 2.0 * (k / 2.0).ln()
}

/// Analytic upper bound on `μ₀` for a domain inside a disk of radius `R > 1`.
pub fn mu0_analytic(k: f64, radius: f64) -> Option<f64> {
    if radius <= 1.0 {
        return None;
    }
    let tail = 4.0 / 3.0 * (2.0 * std::f64::consts::PI / k).sqrt() * (radius.powf(1.5) - 1.0);
    Some(k * k / 4.0 * (i_of_k(k) + tail))
}

/// `μ₀ = max_x h² Σ_y |G(x, y)|` over grid nodes and extra points.
pub fn mu0_numeric(kernel: &ConvKernel, extra_points: &[[f64; 2]]) -> f64 {
    let grid = *kernel.grid();
    let n = grid.n();
    let h = grid.spacing();
    let w = grid.cell_area();
    let k = kernel.k();
    // |G| depends only on the lattice offset; accumulate over offsets
    let abs_table: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (a, b) = (idx / n, idx % n);
            if a == 0 && b == 0 {
                kernel.self_cell().norm()
            } else {
                green2d_raw(h * ((a * a + b * b) as f64).sqrt(), k).norm() * w
            }
        })
        .collect();
    let node_sum = |i: usize, j: usize| -> f64 {
        (0..n)
            .map(|p| {
                let row = &abs_table[i.abs_diff(p) * n..(i.abs_diff(p) + 1) * n];
                (0..n).map(|q| row[j.abs_diff(q)]).sum::<f64>()
            })
            .sum()
    };
    // On a square grid the sum peaks at the central node; small grids are
    // searched exhaustively and the test compares both on the same sizes.
    let mut best = if n <= 32 {
        (0..n * n).map(|idx| node_sum(idx / n, idx % n)).fold(0.0, f64::max)
    } else {
        node_sum(n / 2, n / 2)
    };
    let points = grid.points();
    for x in extra_points {
        let s: f64 = points
            .iter()
            .map(|y| green2d_raw((x[0] - y[0]).hypot(x[1] - y[1]), k).norm() * w)
            .sum();
        best = best.max(s);
    }
    best
}

/// Radius of convergence `r = (√(16C²+1) − 4C)/(2μ)`.
pub fn convergence_radius(mu: f64, c: f64) -> f64 {
    ((16.0 * c * c + 1.0).sqrt() - 4.0 * c) / (2.0 * mu)
}

/// Image radius `r₀ = 2μ/√(16C²+1)`.
pub fn image_radius(mu: f64, c: f64) -> f64 {
    2.0 * mu / (16.0 * c * c + 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantBounds {
    pub mu: f64,
    pub nu: f64,
    pub c: f64,
    pub r: f64,
    pub r0: f64,
}

impl VariantBounds {
    fn new(mu: f64, nu: f64, k1_norm: f64) -> Self {
        let c = f64::max(2.0, k1_norm * nu);
        Self { mu, nu, c, r: convergence_radius(mu, c), r0: image_radius(mu, c) }
    }
}

/// Quantities needed for the a-priori error estimate, known only in synthetic runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimateInputs {
    /// `max{‖n‖, ‖ñ‖}` for the true and reconstructed potentials.
    pub m_cal: f64,
    /// `‖𝒦₁ψ‖`.
    pub n1_norm: f64,
    /// `‖(I − 𝒦₁K₁)n‖`.
    pub projection_defect: f64,
    /// Prefactor of the geometric tail.
    pub tail_constant: f64,
    pub order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ErrorEstimate {
    Unavailable,
    Inapplicable { threshold: f64 },
    Bound { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesBounds {
    pub k: f64,
    pub i_of_k: f64,
    pub mu0_numeric: f64,
    pub mu0_analytic: Option<f64>,
    pub k1_norm: f64,
    /// `μ = 2μ₀`, `ν = ‖u₀‖∞²`.
    pub phaseless: VariantBounds,
    /// `μ = μ₀`, `ν = ‖u₀‖∞`.
    pub phase: VariantBounds,
    pub error_estimate: ErrorEstimate,
}

/// Inputs that fix the geometry and operator norms for [`series_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsSetup {
    pub k: f64,
    /// Radius of a disk centered at the origin containing the domain.
    pub radius: f64,
    /// `‖u₀‖∞`.
    pub u0_sup: f64,
    /// Estimated `‖𝒦₁‖`.
    pub k1_norm: f64,
    /// Multiplier applied to `V` before it acts as a source.
    pub potential_factor: f64,
    pub phaseless: bool,
}

/// Evaluates every bound with the numeric `μ₀`.
pub fn series_bounds(
    setup: BoundsSetup,
    kernel: &ConvKernel,
    extra_points: &[[f64; 2]],
    estimate: Option<ErrorEstimateInputs>,
) -> SeriesBounds {
    let mu0 = setup.potential_factor * mu0_numeric(kernel, extra_points);
    let phaseless_b = VariantBounds::new(2.0 * mu0, setup.u0_sup * setup.u0_sup, setup.k1_norm);
    let phase_b = VariantBounds::new(mu0, setup.u0_sup, setup.k1_norm);
    let used = if setup.phaseless { phaseless_b } else { phase_b };
    let error_estimate = match estimate {
        None => ErrorEstimate::Unavailable,
        Some(inp) => error_estimate(&used, setup.k1_norm, inp),
    };
    SeriesBounds {
        k: setup.k,
        i_of_k: i_of_k(setup.k),
        mu0_numeric: mu0,
        mu0_analytic: mu0_analytic(setup.k, setup.radius),
        k1_norm: setup.k1_norm,
        phaseless: phaseless_b,
        phase: phase_b,
        error_estimate,
    }
}

/// The a-priori bound on `‖η − Σ_{m≤N} 𝒦_m ψ‖` when its hypothesis holds.
pub fn error_estimate(b: &VariantBounds, k1_norm: f64, inp: ErrorEstimateInputs) -> ErrorEstimate {
    let nk = b.nu * k1_norm;
    let threshold = (1.0 - (nk / (1.0 + nk)).sqrt()) / b.mu;
    if !(inp.m_cal < threshold) {
        return ErrorEstimate::Inapplicable { threshold };
    }
    let q = inp.n1_norm / b.r;
    if !(q < 1.0) {
        return ErrorEstimate::Inapplicable { threshold };
    }
    let tail = inp.tail_constant * q.powi(inp.order as i32 + 1) / (1.0 - q);
    let denom = 1.0 - nk / (1.0 - b.mu * inp.m_cal).powi(2) + nk;
    ErrorEstimate::Bound { value: tail + inp.projection_defect / denom }
}
