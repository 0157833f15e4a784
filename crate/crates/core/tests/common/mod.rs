#![allow(dead_code)]

use num_complex::Complex64;
use phaseless_ibs::detector::{simulate, DetectorMode};
use phaseless_ibs::forward::{ForwardModel, PotentialConvention};
use phaseless_ibs::geometry::{uniform_directions, DetectorSet, IncidentSpec};
use phaseless_ibs::grid::{disk_potential, make_grid, DiskParams, Potential};
use phaseless_ibs::krylov::GmresOptions;
use phaseless_ibs::operators::{DataModel, ForwardOps};

/// Solves a dense real system given by columns, by Gaussian elimination
/// with partial pivoting.
pub fn dense_solve(cols: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut a: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        x.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for cc in c..n {
                a[r][cc] -= f * a[c][cc];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|cc| a[c][cc] * x[cc]).sum();
        x[c] = (x[c] - s) / a[c][c];
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// A small boundary-detector experiment on an `n × n` grid of half-width 1.6.
pub struct Toy {
    pub truth: Potential,
    pub incidents: Vec<IncidentSpec>,
    pub detectors: DetectorSet,
}

impl Toy {
    pub fn disk(n: usize, waves: usize, per_side: usize, amplitude: f64) -> Self {
        let g = make_grid(1.6, n).unwrap();
        let mut params = DiskParams::standard(amplitude);
        params.radius = 0.8;
        params.delta = 0.1;
        let truth = disk_potential(&params, g).unwrap();
        let incidents = uniform_directions(waves).into_iter().map(|d| IncidentSpec::single(5.0, d).unwrap()).collect();
        let detectors = DetectorSet::boundary(1.6, per_side).unwrap();
        Self { truth, incidents, detectors }
    }

    pub fn ops(&self, model: DataModel) -> ForwardOps {
        ForwardOps::new(
            self.truth.grid(),
            5.0,
            self.incidents.clone(),
            &self.detectors,
            DetectorMode::Field,
            model,
            1.0,
        )
        .unwrap()
    }

    /// Nonlinear data on the inversion grid itself.
    pub fn data(&self, ops: &ForwardOps) -> Vec<Complex64> {
        let opts = GmresOptions { tol: 1e-13, ..Default::default() };
        let model = ForwardModel::new(&self.truth, 5.0, PotentialConvention::Schrodinger, opts).unwrap();
        let sim = simulate(&model, &self.incidents, &self.detectors).unwrap();
        match ops.model() {
            DataModel::Phase => sim.scattered.clone(),
            DataModel::Intensity => sim
                .scattered
                .iter()
                .zip(&sim.incident_values)
                .map(|(s, u0)| Complex64::new((s + u0).norm_sqr() - u0.norm_sqr(), 0.0))
                .collect(),
        }
    }
}
