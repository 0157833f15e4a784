//! The PIBS binary field format and dataset manifests.
//!
//! Layout: magic `PIBS`, `u32` version, `u32` kind, `u64` rows, `u64` cols,
//! then `f64` values, all little-endian, row-major, complex values
//! interleaved as `(re, im)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataKind, DataValues, Provenance, ScatterDataset};
use crate::error::{Error, Result};
use crate::geometry::{DetectorSet, IncidentSpec};
use crate::grid::{Grid2D, Potential};

pub const MAGIC: [u8; 4] = *b"PIBS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum PibsKind {
    RealGrid = 0,
    ComplexGrid = 1,
    ComplexTable = 2,
}

impl PibsKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            0 => Ok(PibsKind::RealGrid),
            1 => Ok(PibsKind::ComplexGrid),
            2 => Ok(PibsKind::ComplexTable),
            other => Err(Error::Format(format!("unknown kind tag {other}"))),
        }
    }

    fn is_complex(self) -> bool {
        !matches!(self, PibsKind::RealGrid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PibsPayload {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PibsFile {
    pub kind: PibsKind,
    pub rows: u64,
    pub cols: u64,
    pub payload: PibsPayload,
}

impl PibsFile {
    pub fn real_grid(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::checked(PibsKind::RealGrid, n as u64, n as u64, PibsPayload::Real(values))
    }

    pub fn complex_grid(n: usize, values: Vec<Complex64>) -> Result<Self> {
        Self::checked(PibsKind::ComplexGrid, n as u64, n as u64, PibsPayload::Complex(values))
    }

    pub fn complex_table(rows: usize, cols: usize, values: Vec<Complex64>) -> Result<Self> {
        Self::checked(PibsKind::ComplexTable, rows as u64, cols as u64, PibsPayload::Complex(values))
    }

    fn checked(kind: PibsKind, rows: u64, cols: u64, payload: PibsPayload) -> Result<Self> {
        let len = match &payload {
            PibsPayload::Real(v) => {
                if kind.is_complex() {
                    return Err(Error::Format("complex kind with real payload".into()));
                }
                v.len()
            }
            PibsPayload::Complex(v) => {
                if !kind.is_complex() {
                    return Err(Error::Format("real kind with complex payload".into()));
                }
                v.len()
            }
        };
        if len as u64 != rows * cols {
            return Err(Error::ShapeMismatch { expected: (rows * cols) as usize, found: len });
        }
        Ok(Self { kind, rows, cols, payload })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.kind as u32).to_le_bytes())?;
        w.write_all(&self.rows.to_le_bytes())?;
        w.write_all(&self.cols.to_le_bytes())?;
        match &self.payload {
            PibsPayload::Real(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            PibsPayload::Complex(v) => {
                for z in v {
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic bytes {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = PibsKind::from_u32(read_u32(&mut r)?)?;
        let rows = read_u64(&mut r)?;
        let cols = read_u64(&mut r)?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("dimensions overflow".into()))? as usize;
        let payload = if kind.is_complex() {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                v.push(Complex64::new(re, im));
            }
            PibsPayload::Complex(v)
        } else {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                v.push(read_f64(&mut r)?);
            }
            PibsPayload::Real(v)
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Ok(Self { kind, rows, cols, payload })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn save_potential(v: &Potential, path: impl AsRef<Path>) -> Result<()> {
    PibsFile::real_grid(v.grid().n(), v.values().to_vec())?.save(path)
}

/// Reads a real grid field; the half-width is not stored in the file.
pub fn load_potential(path: impl AsRef<Path>, half_width: f64) -> Result<Potential> {
    let f = PibsFile::load(path)?;
    match (f.kind, f.payload) {
        (PibsKind::RealGrid, PibsPayload::Real(values)) if f.rows == f.cols => {
            Potential::new(Grid2D::new(half_width, f.rows as usize)?, values)
        }
        _ => Err(Error::Format("expected a square real grid field".into())),
    }
}

/// JSON sidecar describing a dataset table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub k: f64,
    pub data_kind: DataKind,
    pub n_incident: usize,
    pub n_detector: usize,
    pub incidents: Vec<IncidentSpec>,
    pub detectors: DetectorSet,
    pub provenance: Provenance,
    pub table: String,
}

/// Writes `<stem>.pibs` and `<stem>.json`; returns both paths.
pub fn save_dataset(ds: &ScatterDataset, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let table_path = dir.join(format!("{stem}.pibs"));
    let manifest_path = dir.join(format!("{stem}.json"));
    let values = match ds.values() {
        DataValues::Complex(v) => v.clone(),
        DataValues::Real(v) => v.iter().map(|x| Complex64::new(*x, 0.0)).collect(),
    };
    PibsFile::complex_table(ds.n_incident(), ds.n_detector(), values)?.save(&table_path)?;
    let manifest = DatasetManifest {
        k: ds.k().unwrap_or(0.0),
        data_kind: ds.kind(),
        n_incident: ds.n_incident(),
        n_detector: ds.n_detector(),
        incidents: ds.incidents().to_vec(),
        detectors: ds.detectors().clone(),
        provenance: ds.provenance().clone(),
        table: format!("{stem}.pibs"),
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok((table_path, manifest_path))
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<ScatterDataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    let table_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.table);
    let table = PibsFile::load(table_path)?;
    if table.kind != PibsKind::ComplexTable
        || table.rows as usize != manifest.n_incident
        || table.cols as usize != manifest.n_detector
    {
        return Err(Error::Format("table shape disagrees with its manifest".into()));
    }
    let PibsPayload::Complex(values) = table.payload else {
        return Err(Error::Format("dataset table must be complex".into()));
    };
    let values = if manifest.data_kind.is_phaseless() {
        DataValues::Real(values.iter().map(|z| z.re).collect())
    } else {
        DataValues::Complex(values)
    };
    ScatterDataset::new(
        manifest.incidents,
        manifest.detectors,
        manifest.data_kind,
        values,
        manifest.provenance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{direction, uniform_directions};

    #[test]
    fn header_layout() {
        let f = PibsFile::complex_table(1, 2, vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)]).unwrap();
        let mut bytes = Vec::new();
        f.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[0..4], &[0x50, 0x49, 0x42, 0x53]);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(bytes[36..44].try_into().unwrap()), -2.0);
        assert_eq!(bytes.len(), 28 + 4 * 8);
        assert_eq!(PibsFile::read_from(bytes.as_slice()).unwrap(), f);
    }

    #[test]
    fn rejects_corrupt_input() {
        let f = PibsFile::real_grid(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = Vec::new();
        f.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(PibsFile::read_from(bad.as_slice()).is_err());
        assert!(PibsFile::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(PibsFile::read_from(long.as_slice()).is_err());
        assert!(PibsFile::real_grid(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inc = vec![
            IncidentSpec::single(5.0, direction(0.0)).unwrap(),
            IncidentSpec::single(5.0, direction(1.0)).unwrap(),
        ];
        let det = DetectorSet::far_field(300.0, uniform_directions(3)).unwrap();
        let prov = Provenance { forward_n: 32, half_width: 6.4, solver_tolerance: 1e-8 };
        let ds = ScatterDataset::new(inc, det, DataKind::PhaselessTotal, DataValues::Real(vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]), prov).unwrap();
        let (_, manifest) = save_dataset(&ds, dir.path(), "data").unwrap();
        assert_eq!(load_dataset(manifest).unwrap(), ds);
    }

    #[test]
    fn potential_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(6.4, 4).unwrap();
        let v = Potential::from_fn(g, |x, y| x * y).unwrap();
        let path = dir.path().join("v.pibs");
        save_potential(&v, &path).unwrap();
        assert_eq!(load_potential(&path, 6.4).unwrap(), v);
    }
}
