//! Tikhonov inverses of the first-order map for general detector geometries.
//!
//! For plane waves the Gram matrix of the phase map factors as
//! `Re(H ∘ W)` with `H = DᴴD` and `W(x, x') = Σ_w e^{ik ŷ_w·(x' − x)}`, so it is
//! assembled from one detector GEMM instead of one per wave and factored once.
//! The intensity map's Gram matrix has an extra term that does not factor;
//! its normal equations are solved by CG preconditioned with the phase factor.
//!
//! The unknown is real, so every datum is paired with its conjugate (the
//! stacked system `[K₁; K̄₁] v = [d; d̄]`), exactly as Fourier samples are
//! augmented with their mirrored conjugates. The data term is counted twice
//! and the normal equations read `(K₁ᵀK₁ + (λ²/2) I) v = K₁ᵀ d`.

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, Mat, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ibs::{InverseVariant, LinearizedInverse};
use crate::krylov::{pcg, CgOptions};
use crate::operators::{DataModel, ForwardOps};

const COLUMN_BLOCK: usize = 256;

/// Diagonal shift of the normal equations for regularization `λ`.
pub fn penalty(lambda: f64) -> f64 {
    lambda * lambda / 2.0
}

/// Cholesky factor of `Re(H ∘ W) + shift·I`.
struct GramFactor {
    lower: Mat<f64>,
}

impl GramFactor {
    fn new(ops: &ForwardOps, shift: f64) -> Result<Self> {
        let grid = *ops.grid();
        let n = grid.n();
        let len = grid.len();
        let h = grid.spacing();
        let k = ops.kernel().k();
        let dirs: Vec<[f64; 2]> = ops
            .incidents()
            .iter()
            .map(|inc| {
                if inc.is_single() {
                    Ok(inc.direction())
                } else {
                    Err(Error::Inapplicable("the factored Gram matrix needs single plane waves".into()))
                }
            })
            .collect::<Result<_>>()?;
        // W over lattice offsets (a, b) ∈ (−n, n)², stored at (a + n − 1, b + n − 1)
        let span = 2 * n - 1;
        let mut w_table = vec![Complex64::new(0.0, 0.0); span * span];
        for a in 0..span {
            for b in 0..span {
                let da = (a as f64 - (n - 1) as f64) * h;
                let db = (b as f64 - (n - 1) as f64) * h;
                w_table[a * span + b] = dirs.iter().map(|d| Complex64::from_polar(1.0, k * (d[0] * da + d[1] * db))).sum();
            }
        }
        let d = ops.detectors().matrix();
        let mut gram = Mat::<f64>::zeros(len, len);
        let mut block = Mat::<Complex64>::zeros(len, COLUMN_BLOCK);
        let one = Complex64::new(1.0, 0.0);
        for c0 in (0..len).step_by(COLUMN_BLOCK) {
            let bw = COLUMN_BLOCK.min(len - c0);
            let rows = len - c0;
            let mut dst = block.as_mut().submatrix_mut(0, 0, rows, bw);
            matmul(
                dst.as_mut(),
                Accum::Replace,
                d.subcols(c0, rows).adjoint(),
                d.subcols(c0, bw),
                one,
                Par::rayon(0),
            );
            for jc in 0..bw {
                let c = c0 + jc;
                let (ci, cj) = (c / n, c % n);
                for r in c..len {
                    let (ri, rj) = (r / n, r % n);
                    let wa = ci + n - 1 - ri;
                    let wb = cj + n - 1 - rj;
                    gram[(r, c)] = (dst[(r - c0, jc)] * w_table[wa * span + wb]).re;
                }
            }
        }
        let scale2 = ops.scale() * ops.scale();
        for c in 0..len {
            for r in c..len {
                gram[(r, c)] *= scale2;
            }
            gram[(c, c)] += shift;
        }
        let par = Par::rayon(0);
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(len, par, Default::default()));
        cholesky_in_place(gram.as_mut(), Default::default(), par, MemStack::new(&mut mem), Default::default())
            .map_err(|e| Error::Consistency(format!("Gram matrix is not positive definite: {e:?}")))?;
        Ok(Self { lower: gram })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        solve_lower_triangular_in_place(self.lower.as_ref(), x.as_mut(), Par::rayon(0));
        solve_upper_triangular_in_place(self.lower.as_ref().transpose(), x.as_mut(), Par::rayon(0));
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// `𝒦₁ = (K₁ᵀK₁ + (λ²/2) I)⁻¹K₁ᵀ` for boundary or far-field field data.
pub struct DirectInverse {
    ops: ForwardOps,
    lambda: f64,
    factor: GramFactor,
    cg: CgOptions,
}

impl std::fmt::Debug for DirectInverse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectInverse").field("ops", &self.ops).field("lambda", &self.lambda).finish()
    }
}

impl DirectInverse {
    /// Factors the Gram matrix; for intensity data the factor serves as the
    /// CG preconditioner (the phase Gram matrix is half of the intensity
    /// one's dominant part).
    pub fn new(ops: ForwardOps, lambda: f64, cg: CgOptions) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("λ must be finite and ≥ 0, got {lambda}")));
        }
        let shift = match ops.model() {
            DataModel::Phase => penalty(lambda),
            DataModel::Intensity => penalty(lambda) / 2.0,
        };
        // a tiny floor keeps λ = 0 factorizable on rank-deficient toys
        let floor = 1e-14 * ops.scale() * ops.scale();
        let factor = GramFactor::new(&ops, shift.max(floor))?;
        Ok(Self { ops, lambda, factor, cg })
    }

    fn normal_apply(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let kv = self.ops.linear(v)?;
        let ktkv = self.ops.linear_adjoint(&kv)?;
        let l2 = penalty(self.lambda);
        for ((o, a), x) in out.iter_mut().zip(&ktkv).zip(v) {
            *o = a + l2 * x;
        }
        Ok(())
    }

    /// `(K₁ᵀK₁ + (λ²/2) I)⁻¹ b`.
    pub fn solve_normal(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self.ops.model() {
            DataModel::Phase => Ok(self.factor.solve(b)),
            DataModel::Intensity => {
                let mut failure = None;
                let sol = pcg(
                    |x, out| {
                        if let Err(e) = self.normal_apply(x, out) {
                            failure.get_or_insert(e);
                        }
                    },
                    |r, z| {
                        let y = self.factor.solve(r);
                        z.iter_mut().zip(&y).for_each(|(a, b)| *a = b / 2.0);
                    },
                    b,
                    self.cg,
                );
                if let Some(e) = failure {
                    return Err(e);
                }
                let sol = sol?;
                tracing::debug!(iterations = sol.iterations, residual = sol.residual, "intensity normal equations");
                Ok(sol.x)
            }
        }
    }
}

impl LinearizedInverse for DirectInverse {
    fn ops(&self) -> &ForwardOps {
        &self.ops
    }

    fn variant(&self) -> InverseVariant {
        match self.ops.model() {
            DataModel::Phase => InverseVariant::Phase,
            DataModel::Intensity => InverseVariant::Phaseless,
        }
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn apply(&self, data: &[Complex64]) -> Result<Vec<f64>> {
        let b = self.ops.linear_adjoint(data)?;
        self.solve_normal(&b)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<Complex64>> {
        let x = self.solve_normal(v)?;
        self.ops.linear(&x)
    }
}

/// Dense real Gram matrix `K₁ᵀK₁` by columns, for small grids only.
pub fn dense_gram(ops: &ForwardOps) -> Result<Vec<Vec<f64>>> {
    let len = ops.grid().len();
    let mut cols = Vec::with_capacity(len);
    for l in 0..len {
        let mut e = vec![0.0; len];
        e[l] = 1.0;
        cols.push(ops.linear_adjoint(&ops.linear(&e)?)?);
    }
    Ok(cols)
}

