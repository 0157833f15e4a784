use std::process::Command;

use phaseless_ibs::dataset::DataKind;
use phaseless_ibs::io::{PibsFile, PibsPayload};
use pibs_harness::cache::forward_hash;
use pibs_harness::config::DetectorKind;
use pibs_harness::export::{errors_csv, ERRORS_HEADER};
use pibs_harness::{
    compare_methods, export_report, run_experiment, ExperimentConfig, HarnessError, Method, PotentialKind,
    SimulationCache,
};

/// A coarse version of the experiment geometry that runs in well under a second.
fn toy(method: Method, kind: DataKind) -> ExperimentConfig {
    ExperimentConfig {
        n: 24,
        k: 2.0,
        incident_count: 16,
        boundary_per_side: 12,
        method,
        data_kind: kind,
        ibs_order: 3,
        bounds_iterations: 3,
        ..Default::default()
    }
}

#[test]
fn defaults_are_the_published_settings() {
    let c = ExperimentConfig::default();
    assert_eq!((c.half_width, c.n, c.forward_grid_factor, c.k), (6.4, 128, 2, 5.0));
    assert_eq!(c.forward_config().forward_n, 256);
    assert_eq!(c.incident_count, 400);
    assert_eq!(4 * c.boundary_per_side, 512);
    assert_eq!(c.far_field_radius, 300.0);
    assert_eq!(c.filter_threshold, 1e-2);
    assert_eq!(c.detector_kind(), DetectorKind::Boundary);
    assert_eq!(c.lambda(), 0.2);
    let with = |method, kind, potential| ExperimentConfig { method, data_kind: kind, potential, ..c.clone() };
    assert_eq!(with(Method::Direct, DataKind::PhaselessTotal, PotentialKind::Disk).lambda(), 0.04);
    assert_eq!(with(Method::Fourier, DataKind::Phase, PotentialKind::Disk).lambda(), 10.0);
    assert_eq!(with(Method::Fourier, DataKind::PhaselessTotal, PotentialKind::Disk).lambda(), 20.0);
    assert_eq!(with(Method::Fourier, DataKind::PhaselessTotal, PotentialKind::GaussianMixture).lambda(), 30.0);
    assert_eq!(with(Method::Polarization, DataKind::PhaselessScattered, PotentialKind::Disk).lambda(), 10.0);
    assert_eq!(with(Method::Fourier, DataKind::Phase, PotentialKind::Disk).detector_kind(), DetectorKind::FarField);
}

#[test]
fn toml_parsing_is_strict() {
    let cfg = ExperimentConfig::from_toml_str(
        "method = \"fourier\"\ndata_kind = \"phaseless_total\"\namplitude = 2.5\nibs_order = 9\npotential = \"gaussian_mixture\"",
    )
    .unwrap();
    assert_eq!(cfg.method, Method::Fourier);
    assert_eq!(cfg.ibs_order, 9);
    assert_eq!(cfg.lambda(), 30.0);
    assert!(matches!(ExperimentConfig::from_toml_str("lamda = 3.0"), Err(HarnessError::Toml(_))));
    assert!(matches!(ExperimentConfig::from_toml_str("n = 1"), Err(HarnessError::Config(_))));
    assert!(matches!(ExperimentConfig::from_toml_str("amplitude = 0.0"), Err(HarnessError::Config(_))));
}

#[test]
fn incompatible_settings_fail_before_any_solve() {
    let bad = [
        ExperimentConfig { detectors: Some(DetectorKind::Boundary), ..toy(Method::Fourier, DataKind::Phase) },
        toy(Method::Fourier, DataKind::PhaselessScattered),
        toy(Method::Direct, DataKind::PhaselessScattered),
        toy(Method::Polarization, DataKind::Phase),
        ExperimentConfig { detectors: Some(DetectorKind::Boundary), ..toy(Method::Polarization, DataKind::PhaselessScattered) },
    ];
    let mut cache = SimulationCache::in_memory();
    for cfg in bad {
        let start = std::time::Instant::now();
        assert!(matches!(run_experiment(&cfg, &mut cache), Err(HarnessError::Incompatible(_))));
        assert!(start.elapsed().as_millis() < 100);
    }
}

#[test]
fn forward_hash_tracks_the_forward_settings_only() {
    let a = toy(Method::Fourier, DataKind::Phase);
    let b = ExperimentConfig { lambda: Some(3.0), ibs_order: 7, ..a.clone() };
    let c = ExperimentConfig { amplitude: 2.5, ..a.clone() };
    let d = ExperimentConfig { forward_grid_factor: 3, ..a.clone() };
    let h = |cfg: &ExperimentConfig| forward_hash(&cfg.forward_config()).unwrap();
    assert_eq!(h(&a), h(&b));
    assert_ne!(h(&a), h(&c));
    assert_ne!(h(&a), h(&d));
    assert_eq!(h(&a).len(), 64);
}

#[test]
fn every_method_produces_a_complete_report() {
    let mut cache = SimulationCache::in_memory();
    for (method, kind) in [
        (Method::Direct, DataKind::Phase),
        (Method::Direct, DataKind::PhaselessTotal),
        (Method::Fourier, DataKind::Phase),
        (Method::Fourier, DataKind::PhaselessTotal),
        (Method::Polarization, DataKind::PhaselessScattered),
    ] {
        let cfg = toy(method, kind);
        let r = run_experiment(&cfg, &mut cache).unwrap();
        assert_eq!(r.rows.len(), 3, "{}", r.label);
        assert!(r.projection_error.is_some_and(|e| e.is_finite()));
        assert!(r.bounds.series.mu0_numeric > 0.0 && r.bounds.radius > 0.0);
        assert!(r.bounds.within_radius.is_some());
        let fields = r.fields.as_ref().unwrap();
        assert_eq!(fields.partial_sums.len(), r.completed_order);
        for row in &r.rows {
            assert_eq!(row.error.is_some(), row.order <= r.completed_order);
        }
        assert_eq!(r.fourier.is_some(), method == Method::Fourier);
        assert_eq!(r.polarization.is_some(), method == Method::Polarization);
        if let Some(p) = &r.polarization {
            // four superposed experiments per ordered pair plus the single-wave pass
            assert_eq!(p.experiment_count, 4 * 16 * 16 + 16);
            assert!(p.v0 > 0.0 && p.baseline_error.is_some());
        }
        if let Some(f) = &r.fourier {
            assert_eq!(f.pair_candidates, if kind == DataKind::Phase { 0 } else { 16 * 17 / 2 });
        }
    }
}

#[test]
fn cached_simulations_reproduce_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { cache_dir: Some(dir.path().join("cache")), ..toy(Method::Fourier, DataKind::PhaselessTotal) };
    let first = run_experiment(&cfg, &mut SimulationCache::on_disk(dir.path().join("cache"))).unwrap();
    assert!(!first.cache_hit);
    let second = run_experiment(&cfg, &mut SimulationCache::on_disk(dir.path().join("cache"))).unwrap();
    assert!(second.cache_hit);
    assert_eq!(first.dataset_hash, second.dataset_hash);
    assert_eq!(first.rows, second.rows);
    assert_eq!(first.projection_error, second.projection_error);
    assert!(dir.path().join("cache").join(&first.dataset_hash).join("forward.json").exists());
}

#[test]
fn export_writes_the_renderer_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(Method::Polarization, DataKind::PhaselessScattered);
    let report = run_experiment(&cfg, &mut SimulationCache::in_memory()).unwrap();
    let files = export_report(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ERRORS_HEADER);
    assert_eq!(lines.len(), 1 + cfg.ibs_order);
    assert!(lines[1].starts_with("polarization,phaseless_scattered,1,"));
    // re-export gives identical bytes
    export_report(&report, dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("errors.csv")).unwrap(), csv);

    assert_eq!(files.orders.len(), report.completed_order);
    for path in files.orders.iter().chain([&files.truth, &files.projection]).chain(files.polarization.as_ref()) {
        let f = PibsFile::load(dir.path().join(path)).unwrap();
        assert_eq!((f.rows, f.cols), (24, 24));
    }
    let truth = PibsFile::load(dir.path().join(&files.truth)).unwrap();
    let PibsPayload::Real(v) = truth.payload else { panic!("truth must be real") };
    assert_eq!(v, report.fields.as_ref().unwrap().truth);

    let cross = std::fs::read_to_string(dir.path().join("cross_section.csv")).unwrap();
    let header: Vec<&str> = cross.lines().next().unwrap().split(',').collect();
    assert_eq!(header[..3], ["s", "truth", "projection"]);
    assert_eq!(header.last(), Some(&"polarization"));
    let truth_col: Vec<f64> = cross.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(truth_col.len(), 24);
    let peak = truth_col.iter().cloned().fold(0.0, f64::max);
    assert!((truth_col[11] - peak).abs() < 1e-12 && peak > 0.99 * cfg.amplitude);

    let quads: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(files.quads.unwrap())).unwrap()).unwrap();
    assert_eq!(quads["records"].as_array().unwrap().len(), 256);
    assert_eq!(quads["coefficients"][2], serde_json::json!([0.0, 1.0]));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["method"], "polarization");
    assert!(manifest["polarization"]["baseline_error"].is_number());
    assert!(manifest["bounds"]["series"]["mu0_numeric"].is_number());
    assert_eq!(manifest["files"]["orders"].as_array().unwrap().len(), report.completed_order);
}

#[test]
fn fourier_sample_tables_are_exported() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&toy(Method::Fourier, DataKind::PhaselessTotal), &mut SimulationCache::in_memory()).unwrap();
    let files = export_report(&report, dir.path()).unwrap();
    let f = report.fourier.as_ref().unwrap();
    let accepted = PibsFile::load(dir.path().join(files.fourier_samples.unwrap())).unwrap();
    assert_eq!((accepted.rows as usize, accepted.cols), (f.accepted_samples, 2));
    let discarded = PibsFile::load(dir.path().join(files.fourier_discarded.unwrap())).unwrap();
    assert_eq!(discarded.rows as usize, 2 * f.pairs_discarded);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(files.fourier_summary.unwrap())).unwrap()).unwrap();
    assert_eq!(summary["lambda"], 20.0);
    assert_eq!(summary["discard_fraction"], f.discard_fraction);
}

#[test]
fn comparisons_share_geometry_and_are_deterministic() {
    let mut cache = SimulationCache::in_memory();
    let phase = toy(Method::Fourier, DataKind::Phase);
    let cmp = compare_methods(&[phase.clone(), phase.clone()], &mut cache).unwrap();
    assert_eq!(cmp.reports[0].rows, cmp.reports[1].rows);
    assert!(cmp.reports[1].cache_hit);
    let csv = errors_csv(&cmp.reports);
    assert_eq!(csv.lines().count(), 1 + 2 * phase.ibs_order);

    let other = ExperimentConfig { amplitude: 2.0, ..toy(Method::Fourier, DataKind::PhaselessTotal) };
    assert!(matches!(compare_methods(&[phase, other], &mut cache), Err(HarnessError::GeometryMismatch(_))));

    let dir = tempfile::tempdir().unwrap();
    cmp.export(dir.path()).unwrap();
    assert!(dir.path().join("errors.csv").exists());
    assert!(dir.path().join("fourier_phase").join("manifest.json").exists());
}

#[test]
fn divergent_orders_are_blank() {
    // with this threshold any error above 1e-3 counts as divergence
    let cfg = ExperimentConfig { divergence_threshold: 1e-3, ..toy(Method::Fourier, DataKind::Phase) };
    let r = run_experiment(&cfg, &mut SimulationCache::in_memory()).unwrap();
    assert_eq!(r.diverged_at, Some(1));
    assert_eq!(r.completed_order, 0);
    assert!(r.rows.iter().all(|row| row.error.is_none() && row.diverged));
    assert!(!r.all_orders_completed());
    let csv = errors_csv([&r]);
    assert!(csv.lines().nth(1).unwrap().ends_with("1,,,true"));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("toy.toml");
    std::fs::write(
        &config,
        "n = 24\nk = 2.0\nincident_count = 16\nmethod = \"fourier\"\nibs_order = 2\nbounds_iterations = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_pibs")).args(args).output().unwrap();
    let ok = run(&["reconstruct", "--config", config.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("errors.csv").exists() && out.join("manifest.json").exists());

    // an impossible divergence threshold stops the series at order 1
    std::fs::write(
        &config,
        "n = 24\nk = 2.0\nincident_count = 16\nmethod = \"fourier\"\nibs_order = 2\nbounds_iterations = 2\ndivergence_threshold = 1e-3\n",
    )
    .unwrap();
    let stopped = run(&["reconstruct", "--config", config.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(stopped.status.code(), Some(2));
    assert!(std::fs::read_to_string(out.join("errors.csv")).unwrap().lines().skip(1).all(|l| l.ends_with(",true")));

    std::fs::write(&config, "n = 24\nbogus_key = 1\n").unwrap();
    let bad = run(&["reconstruct", "--config", config.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bogus_key"));
}

#[test]
fn shipped_configs_load_and_share_geometry() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut loaded = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            loaded.push((path.clone(), ExperimentConfig::load(&path).unwrap()));
        }
    }
    assert!(loaded.len() >= 7);
    let far: Vec<_> = loaded.iter().filter(|(_, c)| c.method != Method::Direct).collect();
    for (path, c) in &far {
        assert_eq!(c.detector_kind(), DetectorKind::FarField, "{}", path.display());
        // runs on the same object can go through `pibs compare` together
        for (_, other) in far.iter().filter(|(_, o)| o.amplitude == c.amplitude) {
            assert!(c.same_geometry(other));
        }
    }
}
