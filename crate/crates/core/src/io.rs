//! Persistence: the `tfsr-matrix v1` binary format, operator and dictionary
//! sidecars, and problem-instance manifests.
//!
//! A matrix file is one ASCII header line `tfsr-matrix v1 <rows> <cols>\n`
//! followed by `rows·cols` little-endian `f64` values in row-major order.
//! Vectors are stored as single-column matrices.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{Distribution, Provenance, SensingOperator, TightDictionary};
use crate::matrixlab::Matrix;
use crate::signalgen::ProblemInstance;

pub const MATRIX_MAGIC: &str = "tfsr-matrix v1";

pub fn matrix_to_bytes(m: &Matrix) -> Vec<u8> {
    let header = format!("{MATRIX_MAGIC} {} {}\n", m.rows(), m.cols());
    let mut out = Vec::with_capacity(header.len() + 8 * m.as_slice().len());
    out.extend_from_slice(header.as_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<Matrix> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let rest = header
        .strip_prefix(MATRIX_MAGIC)
        .ok_or_else(|| Error::Format(format!("bad magic in header '{header}'")))?;
    let dims: Vec<usize> = rest
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad dimensions in header '{header}'")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Format(format!("expected two dimensions in header '{header}'")));
    };
    let body = &bytes[nl + 1..];
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    if body.len() != 8 * count {
        return Err(Error::Format(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            8 * count,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Matrix::from_vec(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
}

/// Wraps an I/O error with the offending path.
pub fn path_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| path_error(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| path_error(path, e))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, matrix_to_bytes(m)).map_err(|e| path_error(path, e))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    matrix_from_bytes(&read_bytes(path)?)
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    write_matrix(path, &Matrix::from_vec(v.len(), 1, v.to_vec())?)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.cols() != 1 && m.rows() != 1 {
        return Err(Error::Format(format!(
            "expected a vector, found a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.into_vec())
}

/// `A.mat` → `A.mat.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSidecar {
    pub m: usize,
    pub n: usize,
    pub distribution: Option<Distribution>,
    pub seed: Option<u64>,
    pub spec_norm_sq: f64,
    #[serde(default)]
    pub regenerated_columns: u32,
}

impl OperatorSidecar {
    pub fn of(op: &SensingOperator) -> Self {
        let p = op.provenance();
        Self {
            m: op.m(),
            n: op.n(),
            distribution: p.distribution,
            seed: p.seed,
            spec_norm_sq: op.spec_norm_sq(),
            regenerated_columns: p.regenerated_columns,
        }
    }
}

/// Writes `A` to `path` and its sidecar to `path.json`.
pub fn save_operator(path: &Path, op: &SensingOperator) -> Result<()> {
    write_matrix(path, op.a())?;
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&OperatorSidecar::of(op))?,
    )?;
    Ok(())
}

/// Loads `A` and rebuilds the cached operators. The sidecar is optional; when
/// present its dimensions must match.
pub fn load_operator(path: &Path) -> Result<SensingOperator> {
    let a = read_matrix(path)?;
    let side = sidecar_path(path);
    let provenance = if side.exists() {
        let s: OperatorSidecar = serde_json::from_str(&read_text(&side)?)?;
        if (s.m, s.n) != a.shape() {
            return Err(Error::Format(format!(
                "sidecar says {}x{} but matrix is {}x{}",
                s.m,
                s.n,
                a.rows(),
                a.cols()
            )));
        }
        Provenance {
            distribution: s.distribution,
            seed: s.seed,
            regenerated_columns: s.regenerated_columns,
        }
    } else {
        Provenance::default()
    };
    SensingOperator::from_matrix(a, provenance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DictionaryFile {
    Dct {
        n: usize,
        d: usize,
        seed: Option<u64>,
        row_selection: Vec<usize>,
    },
    Identity {
        n: usize,
    },
}

impl DictionaryFile {
    pub fn of(dict: &TightDictionary) -> Result<Self> {
        if dict.is_identity() {
            return Ok(DictionaryFile::Identity { n: dict.n() });
        }
        match dict.row_selection() {
            Some(rows) => Ok(DictionaryFile::Dct {
                n: dict.n(),
                d: dict.d(),
                seed: dict.seed(),
                row_selection: rows.to_vec(),
            }),
            None => Err(Error::InvalidParameter(
                "only DCT and identity dictionaries have a JSON form".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<TightDictionary> {
        match self {
            DictionaryFile::Identity { n } => Ok(TightDictionary::identity(*n)),
            DictionaryFile::Dct {
                n,
                d,
                seed,
                row_selection,
            } => {
                if row_selection.len() != *n {
                    return Err(Error::Format(format!(
                        "row_selection has {} entries, expected n = {n}",
                        row_selection.len()
                    )));
                }
                TightDictionary::from_dct_rows(*d, row_selection.clone(), *seed)
            }
        }
    }
}

pub fn save_dictionary(path: &Path, dict: &TightDictionary) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&DictionaryFile::of(dict)?)?)?;
    Ok(())
}

pub fn load_dictionary(path: &Path) -> Result<TightDictionary> {
    let f: DictionaryFile = serde_json::from_str(&read_text(path)?)?;
    f.build()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceManifest {
    pub seed: u64,
    pub sparsity_pct: f64,
    /// `null` for a noiseless instance.
    pub snr_db: Option<f64>,
    pub epsilon_l2: f64,
    pub epsilon_b: f64,
    pub support: Vec<usize>,
    pub files: InstanceFiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFiles {
    pub alpha_star: String,
    pub x_star: String,
    pub y: String,
    pub noise: String,
}

/// Writes one blob per vector into `dir` plus `manifest.json`.
pub fn save_instance(dir: &Path, inst: &ProblemInstance) -> Result<()> {
    fs::create_dir_all(dir)?;
    let files = InstanceFiles {
        alpha_star: "alpha_star.mat".into(),
        x_star: "x_star.mat".into(),
        y: "y.mat".into(),
        noise: "noise.mat".into(),
    };
    write_vector(&dir.join(&files.alpha_star), &inst.alpha_star)?;
    write_vector(&dir.join(&files.x_star), &inst.x_star)?;
    write_vector(&dir.join(&files.y), &inst.y)?;
    write_vector(&dir.join(&files.noise), &inst.noise)?;
    let manifest = InstanceManifest {
        seed: inst.seed,
        sparsity_pct: inst.sparsity_pct,
        snr_db: inst.snr_db.is_finite().then_some(inst.snr_db),
        epsilon_l2: inst.epsilon_l2,
        epsilon_b: inst.epsilon_b,
        support: inst.support.clone(),
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_instance(dir: &Path) -> Result<ProblemInstance> {
    let m: InstanceManifest = serde_json::from_str(&read_text(&dir.join("manifest.json"))?)?;
    Ok(ProblemInstance {
        alpha_star: read_vector(&dir.join(&m.files.alpha_star))?,
        x_star: read_vector(&dir.join(&m.files.x_star))?,
        y: read_vector(&dir.join(&m.files.y))?,
        noise: read_vector(&dir.join(&m.files.noise))?,
        support: m.support,
        snr_db: m.snr_db.unwrap_or(f64::INFINITY),
        sparsity_pct: m.sparsity_pct,
        epsilon_l2: m.epsilon_l2,
        epsilon_b: m.epsilon_b,
        seed: m.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{generate_sensing, overcomplete_dct};
    use crate::signalgen::instance;

    #[test]
    fn matrix_bytes_round_trip() {
        let m = Matrix::from_rows(&[&[1.0, -2.5, 3.25], &[0.0, 1e-300, -0.0]]).unwrap();
        let bytes = matrix_to_bytes(&m);
        assert!(bytes.starts_with(b"tfsr-matrix v1 2 3\n"));
        assert_eq!(bytes.len(), 19 + 48);
        let back = matrix_from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(matrix_from_bytes(b"tfsr-matrix v2 1 1\n12345678").is_err());
        assert!(matrix_from_bytes(b"tfsr-matrix v1 1 2\n12345678").is_err());
        assert!(matrix_from_bytes(b"tfsr-matrix v1 1\n12345678").is_err());
        assert!(matrix_from_bytes(b"no newline").is_err());
        let nan = [b"tfsr-matrix v1 1 1\n".as_slice(), &f64::NAN.to_le_bytes()].concat();
        assert!(matches!(matrix_from_bytes(&nan), Err(Error::Format(_))));
    }

    #[test]
    fn operator_dictionary_and_instance_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let op = generate_sensing(6, 12, Distribution::Bernoulli, 3).unwrap();
        let path = dir.path().join("A.mat");
        save_operator(&path, &op).unwrap();
        let back = load_operator(&path).unwrap();
        assert_eq!(back.a(), op.a());
        assert_eq!(back.provenance(), op.provenance());

        let dict = overcomplete_dct(12, 24, 5).unwrap();
        let dpath = dir.path().join("D.json");
        save_dictionary(&dpath, &dict).unwrap();
        let dback = load_dictionary(&dpath).unwrap();
        assert_eq!(dback.row_selection(), dict.row_selection());
        assert_eq!(dback.matrix(), dict.matrix());

        let inst = instance(&op, &dict, 20.0, 25.0, 8).unwrap();
        let idir = dir.path().join("inst");
        save_instance(&idir, &inst).unwrap();
        assert_eq!(load_instance(&idir).unwrap(), inst);
    }
}
