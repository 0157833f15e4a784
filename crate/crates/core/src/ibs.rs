//! The inverse Born series built on a regularized first-order inverse.
//!
//! With `V_i = 𝒦_i φ` and the aggregated fields
//! `U_j = Σ_{compositions of j} u(V_{i₁}, …, V_{i_n})` (so `U₀ = u₀` and
//! `U_j = Σ_i G(V_i U_{j−i})`), the order-`m` source of the recursion is
//! `s_m = Σ_{i<m} V_i U_{m−i}`. The phase term is `D s_m`; the intensity term
//! is `Σ_{0<a<m} U_a U_{m−a}* + 2Re(u₀* D s_m)`. Each order therefore costs one
//! convolution per wave instead of one pass over every composition.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::born::{forward_k_phase, forward_k_phaseless_general};
use crate::error::{ensure_len, Error, Result};
use crate::grid::relative_error_values;
use crate::operators::{DataModel, ForwardOps};

/// Which data the first-order inverse was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseVariant {
    Phase,
    Phaseless,
    FourierBacked,
}

/// A regularized inverse `𝒦₁` of the first-order map `K₁`.
pub trait LinearizedInverse: Send + Sync {
    fn ops(&self) -> &ForwardOps;

    fn variant(&self) -> InverseVariant;

    fn lambda(&self) -> f64;

    /// `𝒦₁ d`, always real.
    fn apply(&self, data: &[Complex64]) -> Result<Vec<f64>>;

    /// Transpose of `𝒦₁` for the real inner products on data and potentials.
    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<Complex64>>;

    /// `K₁ v`.
    fn forward(&self, v: &[f64]) -> Result<Vec<Complex64>> {
        self.ops().linear(v)
    }

    /// Transpose of `K₁`.
    fn adjoint(&self, data: &[Complex64]) -> Result<Vec<f64>> {
        self.ops().linear_adjoint(data)
    }
}

/// Ordered compositions of `m` with at least `min_parts` parts.
pub fn compositions(m: usize, min_parts: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, min_parts: usize) {
        if rest == 0 {
            if cur.len() >= min_parts {
                out.push(cur.clone());
            }
            return;
        }
        for first in 1..=rest {
            cur.push(first);
            rec(rest - first, cur, out, min_parts);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(m, &mut Vec::new(), &mut out, min_parts);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbsOptions {
    pub order: usize,
    /// Relative error above which the series is declared divergent.
    pub divergence_threshold: f64,
}

impl IbsOptions {
    pub fn with_order(order: usize) -> Self {
        Self { order, divergence_threshold: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IbsReconstruction {
    /// `𝒦_m φ` for `m = 1..=completed`.
    pub terms: Vec<Vec<f64>>,
    /// `Σ_{i≤m} 𝒦_i φ`.
    pub partial_sums: Vec<Vec<f64>>,
    /// Relative error of each partial sum when the truth is known.
    pub errors: Option<Vec<f64>>,
    /// First order whose term or error left the finite/bounded regime.
    pub diverged_at: Option<usize>,
    pub requested_order: usize,
}

impl IbsReconstruction {
    pub fn completed_order(&self) -> usize {
        self.partial_sums.len()
    }

    pub fn final_estimate(&self) -> Option<&[f64]> {
        self.partial_sums.last().map(|v| v.as_slice())
    }

    /// Error at `order`, or `None` when that order diverged or was not reached.
    pub fn error_at(&self, order: usize) -> Option<f64> {
        self.errors.as_ref()?.get(order.checked_sub(1)?).copied()
    }

    pub fn partial_norms(&self) -> Vec<f64> {
        self.partial_sums.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
    }

    /// `‖V₁‖` in the discrete L² and sup norms, for the convergence gate.
    pub fn first_term_norms(&self, cell_area: f64) -> Option<(f64, f64)> {
        let v = self.terms.first()?;
        let l2 = (cell_area * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let sup = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        Some((l2, sup))
    }
}

/// Bookkeeping shared by the fast and reference recursions.
struct Accumulator<'a> {
    truth: Option<&'a [f64]>,
    opts: IbsOptions,
    rec: IbsReconstruction,
}

impl<'a> Accumulator<'a> {
    fn new(truth: Option<&'a [f64]>, opts: IbsOptions) -> Self {
        Self {
            truth,
            opts,
            rec: IbsReconstruction {
                terms: Vec::new(),
                partial_sums: Vec::new(),
                errors: truth.map(|_| Vec::new()),
                diverged_at: None,
                requested_order: opts.order,
            },
        }
    }

    /// Records a term; returns false when the series must stop.
    fn push(&mut self, term: Vec<f64>) -> Result<bool> {
        let m = self.rec.terms.len() + 1;
        if term.iter().any(|x| !x.is_finite()) {
            tracing::warn!(order = m, "non-finite inverse Born term");
            self.rec.diverged_at = Some(m);
            return Ok(false);
        }
        let sum: Vec<f64> = match self.rec.partial_sums.last() {
            Some(prev) => prev.iter().zip(&term).map(|(a, b)| a + b).collect(),
            None => term.clone(),
        };
        if let Some(t) = self.truth {
            let e = relative_error_values(&sum, t)?;
            if !(e.is_finite() && e <= self.opts.divergence_threshold) {
                tracing::warn!(order = m, error = e, "inverse Born series diverged");
                self.rec.diverged_at = Some(m);
                return Ok(false);
            }
            self.rec.errors.as_mut().expect("truth given").push(e);
        }
        self.rec.terms.push(term);
        self.rec.partial_sums.push(sum);
        Ok(true)
    }
}

fn check_order(opts: &IbsOptions) -> Result<()> {
    if opts.order == 0 {
        return Err(Error::InvalidArgument("the inverse Born series needs order ≥ 1".into()));
    }
    Ok(())
}

fn negate(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| -x).collect()
}

/// Runs the inverse Born series through `opts.order` using the aggregated
/// recursion. Pass the true potential to record per-order errors.
pub fn ibs_reconstruct(
    phi: &[Complex64],
    inverse: &dyn LinearizedInverse,
    opts: IbsOptions,
    truth: Option<&[f64]>,
) -> Result<IbsReconstruction> {
    check_order(&opts)?;
    let ops = inverse.ops();
    ensure_len(ops.data_len(), phi.len())?;
    let nw = ops.n_waves();
    let nd = ops.n_detectors();
    let kernel = ops.kernel();
    let intensity = ops.model() == DataModel::Intensity;
    let mut acc = Accumulator::new(truth, opts);

    let v1 = inverse.apply(phi)?;
    if !acc.push(v1)? || opts.order == 1 {
        return Ok(acc.rec);
    }
    // u_grid[w][a-1] = U_a for wave w; u_det likewise at the detectors
    let mut u_grid: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); nw];
    let mut u_det: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); nw];
    let sources: Vec<Vec<Complex64>> = (0..nw)
        .into_par_iter()
        .map(|w| {
            let u0 = ops.incident_on_grid(w);
            u0.iter().zip(&acc.rec.terms[0]).map(|(u, v)| u * *v).collect()
        })
        .collect();
    extend_fields(ops, &sources, intensity, &mut u_grid, &mut u_det);
    drop(sources);

    for m in 2..=opts.order {
        let terms = &acc.rec.terms;
        let sources: Vec<Vec<Complex64>> = (0..nw)
            .into_par_iter()
            .map(|w| {
                let mut s = vec![Complex64::new(0.0, 0.0); kernel.grid().len()];
                for i in 1..m {
                    let field = &u_grid[w][m - i - 1];
                    for ((o, f), v) in s.iter_mut().zip(field).zip(&terms[i - 1]) {
                        *o += f * *v;
                    }
                }
                s
            })
            .collect();
        let mut data = ops.detect(&sources);
        ops.linear_part(&mut data);
        if intensity {
            let scale = ops.scale();
            for w in 0..nw {
                for d in 0..nd {
                    let quad: Complex64 = (1..m).map(|a| u_det[w][a - 1][d] * u_det[w][m - a - 1][d].conj()).sum();
                    data[w * nd + d] += quad.re * scale;
                }
            }
        }
        let vm = negate(inverse.apply(&data)?);
        if !acc.push(vm)? || m == opts.order {
            break;
        }
        let vm = acc.rec.terms.last().expect("just pushed");
        let full: Vec<Vec<Complex64>> = sources
            .into_par_iter()
            .enumerate()
            .map(|(w, mut s)| {
                let u0 = ops.incident_on_grid(w);
                s.iter_mut().zip(&u0).zip(vm).for_each(|((o, u), v)| *o += u * *v);
                s
            })
            .collect();
        extend_fields(ops, &full, intensity, &mut u_grid, &mut u_det);
    }
    Ok(acc.rec)
}

/// Appends `U = G s` (and `D s` for intensities) for each wave.
fn extend_fields(
    ops: &ForwardOps,
    sources: &[Vec<Complex64>],
    intensity: bool,
    u_grid: &mut [Vec<Vec<Complex64>>],
    u_det: &mut [Vec<Vec<Complex64>>],
) {
    let nd = ops.n_detectors();
    let fields: Vec<Vec<Complex64>> = sources.par_iter().map(|s| ops.kernel().convolve(s)).collect();
    for (w, f) in fields.into_iter().enumerate() {
        u_grid[w].push(f);
    }
    if intensity {
        let det = ops.detect(sources);
        for (w, slot) in u_det.iter_mut().enumerate() {
            slot.push(det[w * nd..(w + 1) * nd].to_vec());
        }
    }
}

/// The same series evaluated term by term over every composition, with the
/// multilinear operators `K_n` built from prefix/suffix stacks.
pub fn ibs_reconstruct_reference(
    phi: &[Complex64],
    inverse: &dyn LinearizedInverse,
    opts: IbsOptions,
    truth: Option<&[f64]>,
) -> Result<IbsReconstruction> {
    check_order(&opts)?;
    let ops = inverse.ops();
    ensure_len(ops.data_len(), phi.len())?;
    let nd = ops.n_detectors();
    let mut acc = Accumulator::new(truth, opts);
    if !acc.push(inverse.apply(phi)?)? {
        return Ok(acc.rec);
    }
    for m in 2..=opts.order {
        let comps = compositions(m, 2);
        let terms = &acc.rec.terms;
        let per_wave: Vec<Vec<Complex64>> = (0..ops.n_waves())
            .into_par_iter()
            .map(|w| -> Result<Vec<Complex64>> {
                let u0 = ops.incident_on_grid(w);
                let u0d = ops.incident_at_detectors(w);
                let mut total = vec![Complex64::new(0.0, 0.0); nd];
                for c in &comps {
                    let args: Vec<&[f64]> = c.iter().map(|&i| terms[i - 1].as_slice()).collect();
                    let part = match ops.model() {
                        DataModel::Phase => forward_k_phase(&args, &u0, ops.kernel(), ops.detectors())?,
                        DataModel::Intensity => {
                            forward_k_phaseless_general(&args, &u0, u0d, ops.kernel(), ops.detectors())?
                        }
                    };
                    total.iter_mut().zip(&part).for_each(|(t, p)| *t += p);
                }
                Ok(total)
            })
            .collect::<Result<_>>()?;
        let mut data: Vec<Complex64> = per_wave.into_iter().flatten().collect();
        let scale = ops.scale();
        data.iter_mut().for_each(|z| *z *= scale);
        if ops.model() == DataModel::Intensity {
            // the composition sum is real up to rounding once all orderings are in
            data.iter_mut().for_each(|z| z.im = 0.0);
        }
        if !acc.push(negate(inverse.apply(&data)?))? {
            break;
        }
    }
    Ok(acc.rec)
}

/// `𝒦₁ K₁ V`: the best reconstruction available to a linear method.
pub fn projection_baseline(truth: &[f64], inverse: &dyn LinearizedInverse) -> Result<Vec<f64>> {
    inverse.apply(&inverse.forward(truth)?)
}

/// Largest singular value of `𝒦₁` by power iteration on `𝒦₁𝒦₁ᵀ`.
pub fn k1_norm_estimate(inverse: &dyn LinearizedInverse, iterations: usize, seed: u64) -> Result<f64> {
    let len = inverse.ops().grid().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nx == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|a| *a /= nx);
        let y = inverse.apply(&inverse.apply_transpose(&x)?)?;
        estimate = y.iter().map(|a| a * a).sum::<f64>().sqrt().sqrt();
        x = y;
    }
    Ok(estimate)
}
