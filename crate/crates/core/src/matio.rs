//! Binary matrix interchange files and TOML variant manifests.
//!
//! # Matrix file layout
//!
//! All integers are little-endian. The header is exactly 26 bytes:
//!
//! | offset | size | field   | value                                  |
//! |--------|------|---------|----------------------------------------|
//! | 0      | 4    | magic   | ASCII `PRSM`                           |
//! | 4      | 2    | version | `u16`, currently 1                     |
//! | 6      | 4    | dtype   | `u32` element width: 4 = f32, 8 = f64  |
//! | 10     | 8    | rows    | `u64`                                  |
//! | 18     | 8    | cols    | `u64`                                  |
//!
//! The payload follows immediately: `rows * cols` elements in row-major
//! order, each little-endian IEEE-754. Zero-sized matrices carry no payload.
//! The reader accepts NaN/Inf payloads; the geometry newtypes reject them.
//!
//! Label vectors are stored as `n x 1` matrix files whose entries are
//! non-negative integers.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PrismError, Result};

pub const MAGIC: [u8; 4] = *b"PRSM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn code(self) -> u32 {
        self.width() as u32
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            4 => Ok(Dtype::F32),
            8 => Ok(Dtype::F64),
            other => Err(PrismError::UnknownDtype(other)),
        }
    }
}

/// What the reader found in a file header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatrixMeta {
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
    /// Payload was stored as f32 and widened to f64 on read.
    pub widened_from_f32: bool,
}

pub fn encode_matrix(m: &DMatrix<f64>, dtype: Dtype) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * dtype.width());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            let v = m[(r, c)];
            match dtype {
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(DMatrix<f64>, MatrixMeta)> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(&bytes[..4]);
            return Err(PrismError::BadMagic { found });
        }
        return Err(PrismError::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[0..4]);
    if magic != MAGIC {
        return Err(PrismError::BadMagic { found: magic });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(PrismError::UnsupportedVersion(version));
    }
    let dtype = Dtype::from_code(u32::from_le_bytes(bytes[6..10].try_into().unwrap()))?;
    let rows = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[18..26].try_into().unwrap());

    let overflow = PrismError::ShapeOverflow { rows, cols };
    let expected = rows
        .checked_mul(cols)
        .and_then(|e| e.checked_mul(dtype.width() as u64))
        .ok_or(overflow)?;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found < expected {
        return Err(PrismError::Truncated { expected, found });
    }
    if found > expected {
        return Err(PrismError::TrailingData { expected, found });
    }
    let (rows_us, cols_us) = match (usize::try_from(rows), usize::try_from(cols)) {
        (Ok(r), Ok(c)) => (r, c),
        _ => return Err(PrismError::ShapeOverflow { rows, cols }),
    };

    let payload = &bytes[HEADER_LEN..];
    let values: Vec<f64> = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    let m = DMatrix::from_row_slice(rows_us, cols_us, &values);
    let meta = MatrixMeta {
        dtype,
        rows: rows_us,
        cols: cols_us,
        widened_from_f32: dtype == Dtype::F32,
    };
    Ok((m, meta))
}

pub fn write_matrix(m: &DMatrix<f64>, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_matrix(m, dtype)).map_err(|e| PrismError::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix_with_meta(path).map(|(m, _)| m)
}

pub fn read_matrix_with_meta(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, MatrixMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PrismError::io(path, e))?;
    decode_matrix(&bytes)
}

pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let m = DMatrix::from_iterator(labels.len(), 1, labels.iter().map(|&l| l as f64));
    write_matrix(&m, path, Dtype::F64)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 && m.nrows() != 0 {
        return Err(PrismError::invalid(
            "labels",
            format!("expected an n x 1 file, found {}x{}", m.nrows(), m.ncols()),
        ));
    }
    m.iter()
        .enumerate()
        .map(|(row, &v)| {
            if v >= 0.0 && v.fract() == 0.0 && v < (1u64 << 53) as f64 {
                Ok(v as usize)
            } else {
                Err(PrismError::invalid(
                    "labels",
                    format!("entry {row} is not a token index: {v}"),
                ))
            }
        })
        .collect()
}

/// One proxy variant of the target model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub variant_id: String,
    pub family: String,
    pub method: String,
    pub feature_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_gap: Option<f64>,
}

/// A target model together with the proxy variants to score against it.
///
/// Relative paths are resolved against the manifest's directory by
/// [`read_manifest`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantManifest {
    pub target_id: String,
    pub benchmark_id: String,
    pub target_feature_path: PathBuf,
    pub target_head_path: PathBuf,
    #[serde(default)]
    pub variants: Vec<VariantRecord>,
}

#[derive(Deserialize)]
struct RawVariant {
    variant_id: String,
    #[serde(default)]
    family: String,
    #[serde(default)]
    method: String,
    feature_path: Option<PathBuf>,
    head_path: Option<PathBuf>,
    empirical_gap: Option<f64>,
}

#[derive(Deserialize)]
struct RawManifest {
    target_id: String,
    benchmark_id: String,
    target_feature_path: PathBuf,
    target_head_path: PathBuf,
    #[serde(default)]
    variants: Vec<RawVariant>,
}

/// Parse manifest text; relative paths are joined onto `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<VariantManifest> {
    let raw: RawManifest =
        toml::from_str(text).map_err(|e| PrismError::ManifestParse(e.to_string()))?;
    let resolve = |p: PathBuf| {
        if p.is_absolute() {
            p
        } else {
            base_dir.join(p)
        }
    };

    let mut seen = HashSet::new();
    let mut variants = Vec::with_capacity(raw.variants.len());
    for v in raw.variants {
        if !seen.insert(v.variant_id.clone()) {
            return Err(PrismError::DuplicateVariant(v.variant_id));
        }
        if let Some(gap) = v.empirical_gap {
            if gap.is_nan() || gap < 0.0 {
                return Err(PrismError::NegativeGap {
                    id: v.variant_id,
                    value: gap,
                });
            }
        }
        let feature_path = match v.feature_path {
            Some(p) if !p.as_os_str().is_empty() => resolve(p),
            _ => return Err(PrismError::MissingFeaturePath(v.variant_id)),
        };
        variants.push(VariantRecord {
            variant_id: v.variant_id,
            family: v.family,
            method: v.method,
            feature_path,
            head_path: v.head_path.map(resolve),
            empirical_gap: v.empirical_gap,
        });
    }

    Ok(VariantManifest {
        target_id: raw.target_id,
        benchmark_id: raw.benchmark_id,
        target_feature_path: resolve(raw.target_feature_path),
        target_head_path: resolve(raw.target_head_path),
        variants,
    })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<VariantManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PrismError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

impl VariantManifest {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest fields are always representable in TOML")
    }
}
