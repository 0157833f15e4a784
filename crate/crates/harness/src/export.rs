//! Report files consumed by the figure renderer: error tables, PIBS fields,
//! anti-diagonal cross sections and a JSON manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use phaseless_ibs::io::PibsFile;
use phaseless_ibs::polarization::{QuadDataset, COEFFICIENTS};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::pipeline::{ExperimentReport, ReconstructionFields};

pub const ERRORS_HEADER: &str = "method,data_kind,order,error,partial_sum_norm,diverged";

/// Paths written for one report, relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedFiles {
    pub errors_csv: PathBuf,
    pub cross_section_csv: PathBuf,
    pub truth: PathBuf,
    pub projection: PathBuf,
    /// One field per completed order, in order.
    pub orders: Vec<PathBuf>,
    pub polarization: Option<PathBuf>,
    pub fourier_samples: Option<PathBuf>,
    pub fourier_discarded: Option<PathBuf>,
    pub fourier_summary: Option<PathBuf>,
    pub quads: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    report: &'a ExperimentReport,
    files: &'a ExportedFiles,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Error-table rows for the given reports, header first.
pub fn errors_csv<'a>(reports: impl IntoIterator<Item = &'a ExperimentReport>) -> String {
    let mut out = String::from(ERRORS_HEADER);
    out.push('\n');
    for r in reports {
        for row in &r.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method.label(),
                r.data_kind.label(),
                row.order,
                fmt_opt(row.error),
                fmt_opt(row.partial_sum_norm),
                row.diverged
            );
        }
    }
    out
}

/// Values along the anti-diagonal `(x_i, −x_i)` with the signed arc
/// coordinate `s = √2 x_i`.
pub fn cross_section_csv(fields: &ReconstructionFields) -> String {
    let grid = fields.grid;
    let idx = grid.anti_diagonal();
    let mut out = String::from("s,truth,projection");
    for m in 1..=fields.partial_sums.len() {
        let _ = write!(out, ",ibs_{m}");
    }
    if fields.polarization.is_some() {
        out.push_str(",polarization");
    }
    out.push('\n');
    for (i, &p) in idx.iter().enumerate() {
        let s = std::f64::consts::SQRT_2 * grid.coord(i);
        let _ = write!(out, "{s},{},{}", fields.truth[p], fields.projection[p]);
        for v in &fields.partial_sums {
            let _ = write!(out, ",{}", v[p]);
        }
        if let Some(v) = &fields.polarization {
            let _ = write!(out, ",{}", v[p]);
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct FourierSampleSummary {
    lambda: f64,
    threshold: f64,
    accepted: usize,
    discarded: usize,
    pair_candidates: usize,
    pairs_discarded: usize,
    discard_fraction: f64,
    accepted_table: String,
    discarded_table: String,
}

#[derive(Serialize)]
struct QuadRecord {
    observation: [f64; 2],
    incident: [f64; 2],
}

#[derive(Serialize)]
struct QuadManifest<'a> {
    k: f64,
    radius: f64,
    /// Superposition coefficient of each table column, as `[re, im]`.
    coefficients: Vec<[f64; 2]>,
    records: Vec<QuadRecord>,
    table: &'a str,
}

/// Quad moduli as a `quads × 4` table plus a manifest naming the
/// directions of each record and the coefficient of each column.
pub fn save_quads(quads: &QuadDataset, dir: &Path, stem: &str) -> Result<PathBuf> {
    let values: Vec<Complex64> =
        quads.quads.iter().flat_map(|q| q.moduli.map(|m| Complex64::new(m, 0.0))).collect();
    let table = format!("{stem}.pibs");
    PibsFile::complex_table(quads.quads.len(), 4, values)?.save(dir.join(&table))?;
    let manifest = QuadManifest {
        k: quads.k,
        radius: quads.radius,
        coefficients: COEFFICIENTS.iter().map(|a| [a.re, a.im]).collect(),
        records: quads.quads.iter().map(|q| QuadRecord { observation: q.observation, incident: q.incident }).collect(),
        table: &table,
    };
    let path = dir.join(format!("{stem}.json"));
    write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(PathBuf::from(format!("{stem}.json")))
}

/// Writes the report into `dir` and returns the written paths.
pub fn export_report(report: &ExperimentReport, dir: &Path) -> Result<ExportedFiles> {
    let fields = report
        .fields
        .as_ref()
        .ok_or_else(|| HarnessError::Config("report carries no reconstructed fields".into()))?;
    let fields_dir = dir.join("fields");
    std::fs::create_dir_all(&fields_dir).map_err(|e| HarnessError::io(&fields_dir, e))?;
    let n = fields.grid.n();
    let save_field = |name: String, values: &[f64]| -> Result<PathBuf> {
        let rel = PathBuf::from("fields").join(format!("{name}.pibs"));
        PibsFile::real_grid(n, values.to_vec())?.save(dir.join(&rel))?;
        Ok(rel)
    };

    let truth = save_field("truth".into(), &fields.truth)?;
    let projection = save_field("projection".into(), &fields.projection)?;
    let orders = fields
        .partial_sums
        .iter()
        .enumerate()
        .map(|(i, v)| save_field(format!("ibs_{}", i + 1), v))
        .collect::<Result<Vec<_>>>()?;
    let polarization = fields.polarization.as_ref().map(|v| save_field("polarization".into(), v)).transpose()?;

    let (mut fourier_samples, mut fourier_discarded, mut fourier_summary) = (None, None, None);
    if let Some(s) = &fields.fourier_samples {
        let as_z = |p: &[f64; 2]| Complex64::new(p[0], p[1]);
        let accepted: Vec<Complex64> = s.points.iter().zip(&s.values).flat_map(|(p, v)| [as_z(p), *v]).collect();
        let discarded: Vec<Complex64> = s.discarded.iter().map(as_z).collect();
        PibsFile::complex_table(s.points.len(), 2, accepted)?.save(dir.join("fourier_samples.pibs"))?;
        PibsFile::complex_table(s.discarded.len(), 1, discarded)?.save(dir.join("fourier_discarded.pibs"))?;
        let stats = report.fourier.as_ref();
        let summary = FourierSampleSummary {
            lambda: report.lambda,
            threshold: report.config.filter_threshold,
            accepted: s.points.len(),
            discarded: s.discarded.len(),
            pair_candidates: stats.map_or(0, |f| f.pair_candidates),
            pairs_discarded: stats.map_or(0, |f| f.pairs_discarded),
            discard_fraction: stats.map_or(0.0, |f| f.discard_fraction),
            accepted_table: "fourier_samples.pibs".into(),
            discarded_table: "fourier_discarded.pibs".into(),
        };
        write(&dir.join("fourier_samples.json"), serde_json::to_string_pretty(&summary)?)?;
        fourier_samples = Some(PathBuf::from("fourier_samples.pibs"));
        fourier_discarded = Some(PathBuf::from("fourier_discarded.pibs"));
        fourier_summary = Some(PathBuf::from("fourier_samples.json"));
    }
    let quads = fields.quads.as_ref().map(|q| save_quads(q, dir, "quads")).transpose()?;

    write(&dir.join("errors.csv"), errors_csv([report]))?;
    write(&dir.join("cross_section.csv"), cross_section_csv(fields))?;
    let files = ExportedFiles {
        errors_csv: "errors.csv".into(),
        cross_section_csv: "cross_section.csv".into(),
        truth,
        projection,
        orders,
        polarization,
        fourier_samples,
        fourier_discarded,
        fourier_summary,
        quads,
    };
    write(&dir.join("manifest.json"), serde_json::to_string_pretty(&Manifest { report, files: &files })?)?;
    Ok(files)
}
