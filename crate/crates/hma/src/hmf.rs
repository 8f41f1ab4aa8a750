//! HMF1 field files.
//!
//! Layout, all integers `u32` little-endian:
//!
//! ```text
//! 0   12  magic  "HMF1-FIELD\r\n"
//! 12   4  version (1)
//! 16   4  n, the complex dimension (2..=4)
//! 20  4·2n  per-coordinate node counts
//! ..   4  active mask, bit c set iff coordinate c has more than one node
//! ..   4  components per node: 1 (scalar) or n·n (Hermitian matrix)
//! ..      payload: nodes row-major with coordinate 0 slowest; per node the
//!         components (matrix entries row-major), each as two f64 (re, im)
//! ```
//!
//! Files are read in full and validated before any value is used.

use std::fs;
use std::path::Path;

use hma_core::{HermField, HermMatrix, MetricField, ScalarField, TorusGrid, C64};

pub const MAGIC: &[u8; 12] = b"HMF1-FIELD\r\n";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HmfError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: &Path, reason: impl Into<String>) -> HmfError {
    HmfError::Invalid {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Decoded file contents before they are given a field type.
#[derive(Clone, Debug, PartialEq)]
pub struct RawField {
    pub grid: TorusGrid,
    pub components: usize,
    pub values: Vec<C64>,
}

pub fn encode(grid: &TorusGrid, components: usize, values: impl Iterator<Item = C64>) -> Vec<u8> {
    let n = grid.dim();
    let mut out = Vec::with_capacity(32 + 16 * components * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for &m in grid.sizes() {
        out.extend_from_slice(&(m as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.active_mask().to_le_bytes());
    out.extend_from_slice(&(components as u32).to_le_bytes());
    for z in values {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + k)?;
        self.pos += k;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<RawField, HmfError> {
    let mut r = Reader { bytes, pos: 0 };
    let short = || invalid(path, "truncated header");
    if r.take(12).ok_or_else(short)? != MAGIC {
        return Err(invalid(path, "not an HMF1 file (bad magic)"));
    }
    let version = r.u32().ok_or_else(short)?;
    if version != VERSION {
        return Err(invalid(path, format!("unsupported version {version}")));
    }
    let n = r.u32().ok_or_else(short)? as usize;
    if !(2..=4).contains(&n) {
        return Err(invalid(path, format!("complex dimension {n} outside 2..=4")));
    }
    let mut sizes = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        sizes.push(r.u32().ok_or_else(short)? as usize);
    }
    let grid = TorusGrid::new(n, &sizes).map_err(|e| invalid(path, e.to_string()))?;
    let mask = r.u32().ok_or_else(short)?;
    if mask != grid.active_mask() {
        return Err(invalid(
            path,
            format!("active mask {mask:#x} disagrees with sizes {sizes:?}"),
        ));
    }
    let components = r.u32().ok_or_else(short)? as usize;
    if components != 1 && components != n * n {
        return Err(invalid(path, format!("{components} components per node")));
    }
    let expected = 16 * components * grid.len();
    let payload = &bytes[r.pos..];
    if payload.len() != expected {
        return Err(invalid(
            path,
            format!("payload has {} bytes, expected {expected}", payload.len()),
        ));
    }
    let values: Vec<C64> = payload
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    if let Some(k) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(invalid(path, format!("non-finite value at entry {k}")));
    }
    Ok(RawField {
        grid,
        components,
        values,
    })
}

pub fn read_raw(path: &Path) -> Result<RawField, HmfError> {
    let bytes = fs::read(path).map_err(|source| HmfError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes, path)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), HmfError> {
    fs::write(path, bytes).map_err(|source| HmfError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<(), HmfError> {
    write_bytes(path, &encode(f.grid(), 1, f.values().iter().copied()))
}

pub fn write_herm(path: &Path, f: &HermField) -> Result<(), HmfError> {
    let n = f.dim();
    let vals = f
        .values()
        .iter()
        .flat_map(|m| (0..n * n).map(move |k| m[(k / n, k % n)]));
    write_bytes(path, &encode(f.grid(), n * n, vals))
}

pub fn read_scalar(path: &Path) -> Result<ScalarField, HmfError> {
    let raw = read_raw(path)?;
    if raw.components != 1 {
        return Err(invalid(path, "expected a scalar field"));
    }
    ScalarField::from_values(&raw.grid, raw.values).map_err(|e| invalid(path, e.to_string()))
}

/// A real scalar field; imaginary parts above `1e-12` are rejected.
pub fn read_real(path: &Path) -> Result<ScalarField, HmfError> {
    let f = read_scalar(path)?;
    if f.max_imag() > 1e-12 {
        return Err(invalid(path, format!("field is not real (max imaginary part {:.3e})", f.max_imag())));
    }
    Ok(f)
}

pub fn read_herm(path: &Path) -> Result<HermField, HmfError> {
    let raw = read_raw(path)?;
    let n = raw.grid.dim();
    if raw.components != n * n {
        return Err(invalid(path, "expected a Hermitian matrix field"));
    }
    let mats: Vec<HermMatrix> = raw
        .values
        .chunks_exact(n * n)
        .map(|c| HermMatrix::from_fn(n, |i, j| c[i * n + j]))
        .collect();
    for (k, m) in mats.iter().enumerate() {
        if m.hermitian_defect() > 1e-12 * m.max_abs().max(1.0) {
            return Err(invalid(path, format!("matrix at node {k} is not Hermitian")));
        }
    }
    HermField::from_values(&raw.grid, mats).map_err(|e| invalid(path, e.to_string()))
}

pub fn read_metric(path: &Path) -> Result<MetricField, HmfError> {
    MetricField::new(read_herm(path)?).map_err(|e| invalid(path, e.to_string()))
}
