//! Fourier-sample inversion: far-field data are turned into samples of
//! `V̂(p) = ∫ V(y) e^{−ip·y} dy` on the disk `|p| ≤ 2k` and inverted by
//! regularized nonuniform least squares.
//!
//! Phase data give one sample per (detector, incident) pair directly.
//! Intensity data determine `V̂(±k(x̂ − ŷ))` only jointly, from the two
//! measurements with detector and source directions swapped; the 2×2 system
//! is dropped when it is nearly singular.
//!
//! Every sample is a fixed real-linear function of the data vector, so the
//! whole chain is a linear map that the inverse Born series can use as 𝒦₁.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detector::DetectorMode;
use crate::error::{ensure_len, Error, Result};
use crate::ibs::{InverseVariant, LinearizedInverse};
use crate::krylov::CgOptions;
use crate::nufft::NufftLsq;
use crate::operators::{DataModel, ForwardOps};
use crate::special::far_field_constant;

/// Default cut on the smallest singular value of the pair system.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 1e-2;

/// Relative rounding used to identify coincident frequencies.
const MERGE_QUANTUM: f64 = 1e-9;

type Mat2 = [[Complex64; 2]; 2];

/// The pair system for far-field constant `c` and phases
/// `θ = kR(x̂·ŷ − 1)` at the two detector radii. Unknowns are
/// `(V̂(k(ŷ − x̂)), V̂(k(x̂ − ŷ)))`.
pub fn pair_matrix(c: Complex64, theta_x: f64, theta_y: f64) -> Mat2 {
    let ex = Complex64::from_polar(1.0, theta_x);
    let ey = Complex64::from_polar(1.0, theta_y);
    [[c.conj() * ex, c * ex.conj()], [c * ey.conj(), c.conj() * ey]]
}

pub fn det2(m: &Mat2) -> Complex64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Smallest singular value of a complex 2×2 matrix.
pub fn smallest_singular_value(m: &Mat2) -> f64 {
    let fro2: f64 = m.iter().flatten().map(|z| z.norm_sqr()).sum();
    let det = det2(m).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    // σ_min² = (fro² − disc)/2 = 2|det|²/(fro² + disc), the stable form
    if fro2 == 0.0 {
        0.0
    } else {
        (2.0 * det * det / (fro2 + disc)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSolution {
    /// `(V̂(k(ŷ − x̂)), V̂(k(x̂ − ŷ)))`.
    Solved { minus: Complex64, plus: Complex64 },
    Discarded { sigma_min: f64 },
}

/// Solves the pair system for the scaled data `√R ψ` of both orderings.
pub fn pair_solve(c: Complex64, theta_x: f64, theta_y: f64, d_x: f64, d_y: f64, threshold: f64) -> PairSolution {
    let m = pair_matrix(c, theta_x, theta_y);
    let sigma_min = smallest_singular_value(&m);
    if sigma_min < threshold {
        return PairSolution::Discarded { sigma_min };
    }
    let det = det2(&m);
    PairSolution::Solved {
        minus: (m[1][1] * d_x - m[0][1] * d_y) / det,
        plus: (m[0][0] * d_y - m[1][0] * d_x) / det,
    }
}

/// One data term `a·x + b·x̄` of a sample.
#[derive(Debug, Clone, Copy)]
struct Term {
    data: usize,
    a: Complex64,
    b: Complex64,
}

impl Term {
    fn conj(self) -> Self {
        Self { data: self.data, a: self.b.conj(), b: self.a.conj() }
    }
}

/// Pair bookkeeping for intensity sampling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub candidates: usize,
    pub discarded: usize,
}

impl PairStats {
    pub fn discard_fraction(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.discarded as f64 / self.candidates as f64
        }
    }
}

/// Fourier samples as fixed real-linear functions of a data vector.
#[derive(Debug, Clone)]
pub struct SampleMap {
    points: Vec<[f64; 2]>,
    rows: Vec<Vec<Term>>,
    data_len: usize,
    pairs: PairStats,
    discarded: Vec<[f64; 2]>,
}

struct Builder {
    k: f64,
    keys: HashMap<(i64, i64), usize>,
    points: Vec<[f64; 2]>,
    rows: Vec<Vec<Term>>,
    counts: Vec<usize>,
}

impl Builder {
    fn new(k: f64) -> Self {
        Self { k, keys: HashMap::new(), points: Vec::new(), rows: Vec::new(), counts: Vec::new() }
    }

    fn key(&self, p: [f64; 2]) -> (i64, i64) {
        let q = MERGE_QUANTUM * self.k;
        ((p[0] / q).round() as i64, (p[1] / q).round() as i64)
    }

    fn push_one(&mut self, p: [f64; 2], terms: &[Term]) {
        let key = self.key(p);
        let idx = *self.keys.entry(key).or_insert_with(|| {
            self.points.push(p);
            self.rows.push(Vec::new());
            self.counts.push(0);
            self.points.len() - 1
        });
        self.rows[idx].extend_from_slice(terms);
        self.counts[idx] += 1;
    }

    /// Adds a sample and its Hermitian mirror `V̂(−p) = conj V̂(p)`.
    fn push(&mut self, p: [f64; 2], terms: &[Term]) {
        self.push_one(p, terms);
        let mirrored: Vec<Term> = terms.iter().map(|t| t.conj()).collect();
        self.push_one([-p[0], -p[1]], &mirrored);
    }

    fn finish(mut self, data_len: usize, pairs: PairStats) -> SampleMap {
        for (row, &count) in self.rows.iter_mut().zip(&self.counts) {
            let w = 1.0 / count as f64;
            for t in row.iter_mut() {
                t.a *= w;
                t.b *= w;
            }
        }
        SampleMap { points: self.points, rows: self.rows, data_len, pairs, discarded: Vec::new() }
    }
}

fn far_field_geometry(ops: &ForwardOps) -> Result<(f64, Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let (radius, dirs) = ops
        .detector_set()
        .far_field_parts()
        .ok_or_else(|| Error::Inapplicable("Fourier sampling needs far-field detectors".into()))?;
    let mut incident = Vec::with_capacity(ops.n_waves());
    for inc in ops.incidents() {
        if !inc.is_single() {
            return Err(Error::Inapplicable("Fourier sampling needs single plane waves".into()));
        }
        incident.push(inc.direction());
    }
    Ok((radius, dirs.to_vec(), incident))
}

impl SampleMap {
    /// Samples for the data vectors of `ops`, with pair systems below
    /// `threshold` discarded for intensity data.
    pub fn for_ops(ops: &ForwardOps, threshold: f64) -> Result<Self> {
        let (radius, det_dirs, inc_dirs) = far_field_geometry(ops)?;
        let k = ops.kernel().k();
        let c = far_field_constant(2, k)?.value;
        let nd = det_dirs.len();
        let mut b = Builder::new(k);
        let zero = Complex64::new(0.0, 0.0);
        match ops.model() {
            DataModel::Phase => {
                // amplitude-scaled value per unit of data
                let factor = match ops.detectors().mode() {
                    DetectorMode::Amplitude => Complex64::new(1.0 / ops.scale(), 0.0),
                    DetectorMode::Field | DetectorMode::AsymptoticField => {
                        Complex64::from_polar(radius.sqrt(), -k * radius) / (c * ops.scale())
                    }
                };
                for (w, y) in inc_dirs.iter().enumerate() {
                    for (d, x) in det_dirs.iter().enumerate() {
                        let p = [k * (x[0] - y[0]), k * (x[1] - y[1])];
                        b.push(p, &[Term { data: w * nd + d, a: factor, b: zero }]);
                    }
                }
                Ok(b.finish(inc_dirs.len() * nd, PairStats::default()))
            }
            DataModel::Intensity => {
                if det_dirs.len() != inc_dirs.len()
                    || det_dirs.iter().zip(&inc_dirs).any(|(x, y)| (x[0] - y[0]).hypot(x[1] - y[1]) > 1e-12)
                {
                    return Err(Error::Inapplicable(
                        "intensity pairing needs detector directions equal to the incident directions".into(),
                    ));
                }
                let to_rhs = radius.sqrt() / ops.scale();
                let n = nd;
                let mut pairs = PairStats::default();
                let mut discarded = Vec::new();
                for i in 0..n {
                    for j in i..n {
                        // x̂ = dir i (detector), ŷ = dir j (incident) and the swap
                        let (x, y) = (det_dirs[i], det_dirs[j]);
                        pairs.candidates += 1;
                        let theta = k * radius * (x[0] * y[0] + x[1] * y[1] - 1.0);
                        let m = pair_matrix(c, theta, theta);
                        if smallest_singular_value(&m) < threshold {
                            pairs.discarded += 1;
                            discarded.push([k * (y[0] - x[0]), k * (y[1] - x[1])]);
                            discarded.push([k * (x[0] - y[0]), k * (x[1] - y[1])]);
                            continue;
                        }
                        let det = det2(&m);
                        let (ix, iy) = (j * n + i, i * n + j);
                        let s = Complex64::new(to_rhs, 0.0);
                        let minus = [
                            Term { data: ix, a: s * m[1][1] / det, b: zero },
                            Term { data: iy, a: -s * m[0][1] / det, b: zero },
                        ];
                        let plus = [
                            Term { data: ix, a: -s * m[1][0] / det, b: zero },
                            Term { data: iy, a: s * m[0][0] / det, b: zero },
                        ];
                        b.push([k * (y[0] - x[0]), k * (y[1] - x[1])], &minus);
                        b.push([k * (x[0] - y[0]), k * (x[1] - y[1])], &plus);
                    }
                }
                let mut map = b.finish(n * n, pairs);
                map.discarded = discarded;
                Ok(map)
            }
        }
    }

    /// Map for values already given as transform samples, one per raw
    /// frequency; adds mirrors and merges coincident frequencies.
    pub fn from_raw_points(k: f64, raw: &[[f64; 2]]) -> Self {
        let mut b = Builder::new(k);
        let zero = Complex64::new(0.0, 0.0);
        for (j, p) in raw.iter().enumerate() {
            b.push(*p, &[Term { data: j, a: Complex64::new(1.0, 0.0), b: zero }]);
        }
        b.finish(raw.len(), PairStats::default())
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn data_len(&self) -> usize {
        self.data_len
    }

    pub fn pair_stats(&self) -> PairStats {
        self.pairs
    }

    /// Both frequencies `±k(x̂ − ŷ)` of every discarded pair, unmerged.
    pub fn discarded_points(&self) -> &[[f64; 2]] {
        &self.discarded
    }

    /// Sample values `V̂(p_j)` for a data vector.
    pub fn apply(&self, data: &[Complex64]) -> Result<Vec<Complex64>> {
        ensure_len(self.data_len, data.len())?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|t| t.a * data[t.data] + t.b * data[t.data].conj()).sum())
            .collect())
    }

    /// Transpose for the real inner products `Re Σ x ȳ` on both sides.
    pub fn apply_transpose(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        ensure_len(self.points.len(), values.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.data_len];
        for (row, y) in self.rows.iter().zip(values) {
            for t in row {
                out[t.data] += t.a.conj() * y + t.b * y.conj();
            }
        }
        Ok(out)
    }
}

/// Exported Fourier samples, e.g. for plotting sample coverage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierSampleSet {
    pub k: f64,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<Complex64>,
    pub pairs: PairStats,
}

/// 𝒦₁ of the Fourier method:
/// `Re (F*F + λ²/h²)⁻¹ F* h⁻² S` with `S` the sample map.
pub struct FourierInverse {
    ops: ForwardOps,
    map: SampleMap,
    lsq: NufftLsq,
    lambda: f64,
}

impl std::fmt::Debug for FourierInverse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierInverse")
            .field("ops", &self.ops)
            .field("samples", &self.map.len())
            .field("pairs", &self.map.pairs)
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl FourierInverse {
    pub fn new(ops: ForwardOps, lambda: f64, threshold: f64, cg: CgOptions) -> Result<Self> {
        let map = SampleMap::for_ops(&ops, threshold)?;
        if map.is_empty() {
            return Err(Error::Inapplicable("every pair system was discarded".into()));
        }
        let lsq = NufftLsq::new(ops.grid(), map.points().to_vec(), lambda, cg)?;
        tracing::info!(
            samples = map.len(),
            discarded = map.pairs.discarded,
            candidates = map.pairs.candidates,
            "Fourier sample set"
        );
        Ok(Self { ops, map, lsq, lambda })
    }

    pub fn sample_map(&self) -> &SampleMap {
        &self.map
    }

    pub fn samples(&self, data: &[Complex64]) -> Result<FourierSampleSet> {
        Ok(FourierSampleSet {
            k: self.ops.kernel().k(),
            points: self.map.points().to_vec(),
            values: self.map.apply(data)?,
            pairs: self.map.pairs,
        })
    }
}

impl LinearizedInverse for FourierInverse {
    fn ops(&self) -> &ForwardOps {
        &self.ops
    }

    fn variant(&self) -> InverseVariant {
        InverseVariant::FourierBacked
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn apply(&self, data: &[Complex64]) -> Result<Vec<f64>> {
        Ok(self.lsq.solve(&self.map.apply(data)?)?.into_iter().map(|z| z.re).collect())
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<Complex64>> {
        ensure_len(self.ops.grid().len(), v.len())?;
        let vc: Vec<Complex64> = v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        let y = self.lsq.solve_normal(&vc)?;
        let inv_area = 1.0 / self.ops.grid().cell_area();
        let z: Vec<Complex64> =
            self.lsq.nufft().forward(&y, self.lsq.points())?.into_iter().map(|z| z * inv_area).collect();
        let mut out = self.map.apply_transpose(&z)?;
        if self.ops.model() == DataModel::Intensity {
            out.iter_mut().for_each(|z| z.im = 0.0);
        }
        Ok(out)
    }
}
