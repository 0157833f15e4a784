//! Forward simulations keyed by a content hash of their configuration, so
//! that method comparisons reuse the expensive solves.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use phaseless_ibs::dataset::Provenance;
use phaseless_ibs::detector::{simulate, Simulation};
use phaseless_ibs::forward::ForwardModel;
use phaseless_ibs::io::{PibsFile, PibsKind, PibsPayload};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{potential_on, ForwardConfig};
use crate::error::{HarnessError, Result};

/// Hex SHA-256 of the canonical JSON form of a forward configuration.
pub fn forward_hash(cfg: &ForwardConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    forward: ForwardConfig,
    provenance: Provenance,
    has_amplitude: bool,
}

/// A simulation together with how it was obtained.
#[derive(Debug, Clone)]
pub struct CachedSimulation {
    pub simulation: Arc<Simulation>,
    pub hash: String,
    pub hit: bool,
    pub seconds: f64,
}

#[derive(Debug, Default)]
pub struct SimulationCache {
    dir: Option<PathBuf>,
    memory: HashMap<String, Arc<Simulation>>,
}

impl SimulationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), memory: HashMap::new() }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get_or_simulate(&mut self, cfg: &ForwardConfig) -> Result<CachedSimulation> {
        let hash = forward_hash(cfg)?;
        let start = std::time::Instant::now();
        if let Some(sim) = self.memory.get(&hash) {
            return Ok(CachedSimulation { simulation: sim.clone(), hash, hit: true, seconds: 0.0 });
        }
        if let Some(sim) = self.load(cfg, &hash)? {
            let sim = Arc::new(sim);
            self.memory.insert(hash.clone(), sim.clone());
            let seconds = start.elapsed().as_secs_f64();
            return Ok(CachedSimulation { simulation: sim, hash, hit: true, seconds });
        }
        tracing::info!(hash = %hash, forward_n = cfg.forward_n, waves = cfg.incident_count, "running forward simulation");
        let potential = potential_on(cfg.potential, cfg.amplitude, cfg.grid()?)?;
        let model = ForwardModel::new(&potential, cfg.k, cfg.potential_convention, cfg.gmres())?;
        let sim = simulate(&model, &cfg.incidents()?, &cfg.detector_set()?)?;
        self.store(cfg, &hash, &sim)?;
        let sim = Arc::new(sim);
        self.memory.insert(hash.clone(), sim.clone());
        Ok(CachedSimulation { simulation: sim, hash, hit: false, seconds: start.elapsed().as_secs_f64() })
    }

    fn entry_dir(&self, hash: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(hash))
    }

    fn store(&self, cfg: &ForwardConfig, hash: &str, sim: &Simulation) -> Result<()> {
        let Some(dir) = self.entry_dir(hash) else { return Ok(()) };
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let (rows, cols) = (sim.incidents.len(), sim.detectors.count());
        PibsFile::complex_table(rows, cols, sim.scattered.clone())?.save(dir.join("scattered.pibs"))?;
        if let Some(a) = &sim.amplitude {
            PibsFile::complex_table(rows, cols, a.clone())?.save(dir.join("amplitude.pibs"))?;
        }
        let entry = CacheEntry {
            forward: cfg.clone(),
            provenance: sim.provenance.clone(),
            has_amplitude: sim.amplitude.is_some(),
        };
        let path = dir.join("forward.json");
        std::fs::write(&path, serde_json::to_string_pretty(&entry)?).map_err(|e| HarnessError::io(&path, e))?;
        Ok(())
    }

    fn load(&self, cfg: &ForwardConfig, hash: &str) -> Result<Option<Simulation>> {
        let Some(dir) = self.entry_dir(hash) else { return Ok(None) };
        let path = dir.join("forward.json");
        let Ok(text) = std::fs::read_to_string(&path) else { return Ok(None) };
        let entry: CacheEntry = serde_json::from_str(&text)?;
        if entry.forward != *cfg {
            return Err(HarnessError::Config(format!("cache entry {hash} belongs to a different configuration")));
        }
        let incidents = cfg.incidents()?;
        let detectors = cfg.detector_set()?;
        let shape = (incidents.len(), detectors.count());
        let scattered = read_table(&dir.join("scattered.pibs"), shape)?;
        let amplitude = match entry.has_amplitude {
            true => Some(read_table(&dir.join("amplitude.pibs"), shape)?),
            false => None,
        };
        let points = detectors.points();
        let incident_values = incidents.iter().flat_map(|inc| points.iter().map(move |p| inc.eval(*p))).collect();
        tracing::info!(hash = %hash, "loaded cached forward simulation");
        Ok(Some(Simulation {
            incidents,
            detectors,
            scattered,
            incident_values,
            amplitude,
            provenance: entry.provenance,
        }))
    }
}

fn read_table(path: &Path, (rows, cols): (usize, usize)) -> Result<Vec<Complex64>> {
    let file = PibsFile::load(path)?;
    match file.payload {
        PibsPayload::Complex(v) if file.kind == PibsKind::ComplexTable && file.rows as usize == rows && file.cols as usize == cols => {
            Ok(v)
        }
        _ => Err(HarnessError::Config(format!("{} does not hold a {rows}×{cols} complex table", path.display()))),
    }
}
