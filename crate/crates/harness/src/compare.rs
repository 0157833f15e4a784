//! Several methods on one object and geometry, merged into one table.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::cache::SimulationCache;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::export::{errors_csv, export_report, ExportedFiles};
use crate::pipeline::{run_experiment, ExperimentReport};

#[derive(Debug)]
pub struct Comparison {
    pub reports: Vec<ExperimentReport>,
}

/// Runs every configuration against a shared simulation cache.
pub fn compare_methods(configs: &[ExperimentConfig], cache: &mut SimulationCache) -> Result<Comparison> {
    let Some(first) = configs.first() else {
        return Err(HarnessError::Config("nothing to compare".into()));
    };
    for c in &configs[1..] {
        if !first.same_geometry(c) {
            return Err(HarnessError::GeometryMismatch(format!("`{}` vs `{}`", first.label(), c.label())));
        }
    }
    let reports = configs.iter().map(|c| run_experiment(c, cache)).collect::<Result<_>>()?;
    Ok(Comparison { reports })
}

#[derive(Serialize)]
struct ComparisonManifest<'a> {
    runs: Vec<RunEntry<'a>>,
}

#[derive(Serialize)]
struct RunEntry<'a> {
    label: &'a str,
    directory: &'a str,
    projection_error: Option<f64>,
    errors: Vec<Option<f64>>,
    files: ExportedFiles,
}

impl Comparison {
    pub fn all_orders_completed(&self) -> bool {
        self.reports.iter().all(|r| r.all_orders_completed())
    }

    pub fn find(&self, label: &str) -> Option<&ExperimentReport> {
        self.reports.iter().find(|r| r.label == label)
    }

    /// One line per run: label, projection error, then the per-order errors.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            let cell = |v: Option<f64>| v.map_or_else(|| "      ".to_string(), |e| format!("{e:.4}"));
            let _ = write!(out, "{:<32} {}  |", r.label, cell(r.projection_error));
            for e in r.errors() {
                let _ = write!(out, " {}", cell(e));
            }
            out.push('\n');
        }
        out
    }

    /// Each run goes to its own subdirectory; the merged table and an index
    /// sit at the top.
    pub fn export(&self, dir: &Path) -> Result<()> {
        let mut runs = Vec::new();
        for r in &self.reports {
            let sub = dir.join(&r.label);
            let files = export_report(r, &sub)?;
            runs.push(RunEntry {
                label: &r.label,
                directory: &r.label,
                projection_error: r.projection_error,
                errors: r.errors(),
                files,
            });
        }
        let path = dir.join("errors.csv");
        std::fs::write(&path, errors_csv(&self.reports)).map_err(|e| HarnessError::io(&path, e))?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&ComparisonManifest { runs })?)
            .map_err(|e| HarnessError::io(&path, e))?;
        Ok(())
    }
}
