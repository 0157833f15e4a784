//! Restarted GMRES for complex systems and preconditioned conjugate
//! gradients for real symmetric positive-definite systems.

use num_complex::Complex64;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { tol: 1e-8, restart: 50, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovSolution<T> {
    pub x: Vec<T>,
    /// Relative residual `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
    pub iterations: usize,
}

/// Failure carrying the best iterate found.
#[derive(Debug)]
pub struct KrylovFailure<T> {
    pub best: KrylovSolution<T>,
    pub error: Error,
}

impl<T> From<KrylovFailure<T>> for Error {
    fn from(f: KrylovFailure<T>) -> Self {
        f.error
    }
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solves `A x = b` with `A` supplied as `apply(x, out)`, starting from zero.
pub fn gmres<F>(
    mut apply: F,
    b: &[Complex64],
    opts: GmresOptions,
) -> std::result::Result<KrylovSolution<Complex64>, KrylovFailure<Complex64>>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let bnorm = cnorm(b);
    let mut x = vec![zero; n];
    if bnorm == 0.0 {
        return Ok(KrylovSolution { x, residual: 0.0, iterations: 0 });
    }
    let restart = opts.restart.max(1);
    let mut total = 0usize;
    let mut r = b.to_vec();
    let mut ax = vec![zero; n];
    let mut w = vec![zero; n];

    loop {
        let beta = cnorm(&r);
        let rel = beta / bnorm;
        if rel <= opts.tol {
            return Ok(KrylovSolution { x, residual: rel, iterations: total });
        }
        if total >= opts.max_iter {
            break;
        }
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|z| z / beta).collect());
        // Hessenberg columns, rotated in place
        let mut hess: Vec<Vec<Complex64>> = Vec::with_capacity(restart);
        let mut cs: Vec<f64> = Vec::with_capacity(restart);
        let mut sn: Vec<Complex64> = Vec::with_capacity(restart);
        let mut g = vec![zero; restart + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut steps = 0;

        for j in 0..restart {
            if total >= opts.max_iter {
                break;
            }
            apply(&basis[j], &mut w);
            total += 1;
            let mut h = vec![zero; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = cdot(v, &w);
                h[i] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let hnext = cnorm(&w);
            h[j + 1] = Complex64::new(hnext, 0.0);
            for i in 0..j {
                let t = h[i] * cs[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i].conj() * h[i] + h[i + 1] * cs[i];
                h[i] = t;
            }
            let (c, s, rr) = givens(h[j], h[j + 1]);
            h[j] = rr;
            h[j + 1] = zero;
            cs.push(c);
            sn.push(s);
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            hess.push(h);
            steps = j + 1;
            if g[j + 1].norm() / bnorm <= opts.tol || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|z| z / hnext).collect());
        }

        // back substitution on the triangular factor
        let mut y = vec![zero; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= hess[l][i] * yl;
            }
            y[i] = acc / hess[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&basis[i]) {
                *xk += yi * vk;
            }
        }
        apply(&x, &mut ax);
        for ((rk, bk), ak) in r.iter_mut().zip(b).zip(&ax) {
            *rk = bk - ak;
        }
        if steps == 0 {
            break;
        }
    }
    let residual = cnorm(&r) / bnorm;
    if residual <= opts.tol {
        return Ok(KrylovSolution { x, residual, iterations: total });
    }
    Err(KrylovFailure {
        error: Error::NotConverged { solver: "GMRES", iterations: total, residual },
        best: KrylovSolution { x, residual, iterations: total },
    })
}

/// Rotation with real cosine zeroing `b` against `a`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0), a);
    }
    if an == 0.0 {
        return (0.0, b.conj() / bn, Complex64::new(bn, 0.0));
    }
    let r = an.hypot(bn);
    let phase = a / an;
    let c = an / r;
    let s = phase * b.conj() / r;
    (c, s, phase * r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500 }
    }
}

/// Preconditioned CG for a symmetric positive-definite real operator.
/// `precond(r, z)` applies an approximate inverse; pass a copy for none.
pub fn pcg<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    opts: CgOptions,
) -> std::result::Result<KrylovSolution<f64>, KrylovFailure<f64>>
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(KrylovSolution { x, residual: 0.0, iterations: 0 });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < opts.max_iter {
        apply(&p, &mut ap);
        iterations += 1;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(KrylovFailure {
                error: Error::Consistency(format!("CG met non-positive curvature {pap:.3e}")),
                best: KrylovSolution { x, residual: rel, iterations },
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= opts.tol {
            return Ok(KrylovSolution { x, residual: rel, iterations });
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(KrylovFailure {
        error: Error::NotConverged { solver: "CG", iterations, residual: rel },
        best: KrylovSolution { x, residual: rel, iterations },
    })
}
