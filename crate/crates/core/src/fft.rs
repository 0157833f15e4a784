//! Square 2-D FFTs over row-major buffers.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse transforms of an `m × m` array.
#[derive(Clone)]
pub struct Fft2 {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("m", &self.m).finish()
    }
}

impl Fft2 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { m, forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Transforms the first `rows` rows along the second index.
    pub fn rows_forward(&self, buf: &mut [Complex64], rows: usize) {
        self.forward.process(&mut buf[..rows * self.m]);
    }

    pub fn rows_inverse(&self, buf: &mut [Complex64], rows: usize) {
        self.inverse.process(&mut buf[..rows * self.m]);
    }

    /// Unnormalized forward 2-D transform.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.rows_forward(buf, self.m);
        transpose(buf, scratch, self.m);
        self.rows_forward(scratch, self.m);
        transpose(scratch, buf, self.m);
    }

    /// Unnormalized inverse 2-D transform.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.rows_inverse(buf, self.m);
        transpose(buf, scratch, self.m);
        self.rows_inverse(scratch, self.m);
        transpose(scratch, buf, self.m);
    }
}

/// Blocked transpose of an `m × m` array.
pub fn transpose(src: &[Complex64], dst: &mut [Complex64], m: usize) {
    const B: usize = 32;
    for ib in (0..m).step_by(B) {
        for jb in (0..m).step_by(B) {
            for i in ib..(ib + B).min(m) {
                for j in jb..(jb + B).min(m) {
                    dst[j * m + i] = src[i * m + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_dft() {
        let m = 6;
        let f = Fft2::new(m);
        let orig: Vec<Complex64> = (0..m * m).map(|i| Complex64::new(i as f64, (i * i % 7) as f64)).collect();
        let mut buf = orig.clone();
        let mut scratch = vec![Complex64::new(0.0, 0.0); m * m];
        f.forward(&mut buf, &mut scratch);
        // direct DFT oracle
        for p in 0..m {
            for q in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    for j in 0..m {
                        let ang = -2.0 * std::f64::consts::PI * ((p * i + q * j) as f64) / m as f64;
                        acc += orig[i * m + j] * Complex64::from_polar(1.0, ang);
                    }
                }
                assert!((acc - buf[p * m + q]).norm() < 1e-10);
            }
        }
        f.inverse(&mut buf, &mut scratch);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / (m * m) as f64 - b).norm() < 1e-12);
        }
    }
}
