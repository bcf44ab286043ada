//! Flat binary matrix container and plain-text vectors.
//!
//! Layout (little-endian): magic `RWPL`, version `u32`, kind `u32`, flags
//! `u32` (bit 0: seed present), `M: u64`, `N: u64`, `seed: u64`, then `M·N`
//! row-major `f64` entries.

use std::io::{BufRead, Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EnsembleKind;
use crate::error::{Error, Result};
use crate::solvers::{OperatorMetadata, SensingOperator};

pub const CONTAINER_MAGIC: [u8; 4] = *b"RWPL";
pub const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: usize = 40;
const FLAG_HAS_SEED: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerHeader {
    /// `None` for explicit (hand-made or converted) matrices.
    pub kind: Option<EnsembleKind>,
    pub m: u64,
    pub n: u64,
    pub seed: Option<u64>,
}

fn kind_code(kind: Option<EnsembleKind>) -> u32 {
    match kind {
        None => 0,
        Some(EnsembleKind::GaussianIid) => 1,
        Some(EnsembleKind::Orthonormalized) => 2,
        Some(EnsembleKind::CorrelatedRows) => 3,
        Some(EnsembleKind::Spiked) => 4,
        Some(EnsembleKind::SubsampledTrig) => 5,
    }
}

fn kind_from_code(code: u32) -> Result<Option<EnsembleKind>> {
    Ok(match code {
        0 => None,
        1 => Some(EnsembleKind::GaussianIid),
        2 => Some(EnsembleKind::Orthonormalized),
        3 => Some(EnsembleKind::CorrelatedRows),
        4 => Some(EnsembleKind::Spiked),
        5 => Some(EnsembleKind::SubsampledTrig),
        other => return Err(Error::input(format!("unknown container kind code {other}"))),
    })
}

fn kind_from_name(name: &str) -> Option<EnsembleKind> {
    [
        EnsembleKind::GaussianIid,
        EnsembleKind::Orthonormalized,
        EnsembleKind::CorrelatedRows,
        EnsembleKind::Spiked,
        EnsembleKind::SubsampledTrig,
    ]
    .into_iter()
    .find(|k| k.name() == name)
}

impl ContainerHeader {
    pub fn of(op: &SensingOperator) -> Self {
        ContainerHeader {
            kind: kind_from_name(&op.metadata().ensemble),
            m: op.rows() as u64,
            n: op.cols() as u64,
            seed: op.metadata().seed,
        }
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&CONTAINER_MAGIC);
        out[4..8].copy_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&kind_code(self.kind).to_le_bytes());
        let flags = if self.seed.is_some() { FLAG_HAS_SEED } else { 0 };
        out[12..16].copy_from_slice(&flags.to_le_bytes());
        out[16..24].copy_from_slice(&self.m.to_le_bytes());
        out[24..32].copy_from_slice(&self.n.to_le_bytes());
        out[32..40].copy_from_slice(&self.seed.unwrap_or(0).to_le_bytes());
        out
    }

    fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if b[0..4] != CONTAINER_MAGIC {
            return Err(Error::input("not an operator container (bad magic)"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != CONTAINER_VERSION {
            return Err(Error::input(format!("unsupported container version {version}")));
        }
        let flags = u32_at(12);
        Ok(ContainerHeader {
            kind: kind_from_code(u32_at(8))?,
            m: u64_at(16),
            n: u64_at(24),
            seed: (flags & FLAG_HAS_SEED != 0).then(|| u64_at(32)),
        })
    }
}

pub fn write_container<W: Write>(mut w: W, op: &SensingOperator) -> Result<()> {
    w.write_all(&ContainerHeader::of(op).to_bytes())?;
    let mat = op.matrix();
    let mut buf = Vec::with_capacity(mat.len() * 8);
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            buf.extend_from_slice(&mat[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a container back into a dense operator. The ensemble tag and seed
/// come from the header; trig row indices live only in the sidecar.
pub fn read_container<R: Read>(mut r: R) -> Result<(ContainerHeader, SensingOperator)> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head).map_err(|e| Error::input(format!("truncated container header: {e}")))?;
    let header = ContainerHeader::from_bytes(&head)?;
    let (m, n) = (header.m as usize, header.n as usize);
    let len = m
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::input(format!("container shape {m} × {n} is too large")))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != len {
        return Err(Error::input(format!("container body has {} bytes, expected {len}", body.len())));
    }
    let data: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let meta = OperatorMetadata {
        ensemble: header.kind.map_or("explicit", |k| k.name()).into(),
        seed: header.seed,
        normalization: "as stored".into(),
    };
    let op = SensingOperator::dense_with_metadata(DMatrix::from_row_slice(m, n, &data), meta)?;
    Ok((header, op))
}

/// JSON sidecar describing a container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub format: String,
    pub version: u32,
    pub ensemble: String,
    pub m: usize,
    pub n: usize,
    pub seed: Option<u64>,
    pub normalization: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_indices: Option<Vec<usize>>,
}

impl OperatorDescriptor {
    pub fn of(op: &SensingOperator) -> Self {
        let meta = op.metadata();
        OperatorDescriptor {
            format: "rwpl".into(),
            version: CONTAINER_VERSION,
            ensemble: meta.ensemble.clone(),
            m: op.rows(),
            n: op.cols(),
            seed: meta.seed,
            normalization: meta.normalization.clone(),
            layout: "row-major little-endian f64".into(),
            row_indices: op.row_indices().map(<[usize]>::to_vec),
        }
    }
}

pub fn write_sidecar<W: Write>(mut w: W, op: &SensingOperator) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, &OperatorDescriptor::of(op))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// One float per line; blank lines and `#` comments are skipped.
pub fn read_text_vector<R: BufRead>(r: R) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::input(format!("line {}: cannot parse {t:?} as a number", lineno + 1)))?;
        if !v.is_finite() {
            return Err(Error::input(format!("line {}: non-finite value", lineno + 1)));
        }
        out.push(v);
    }
    Ok(DVector::from_vec(out))
}

/// Shortest round-tripping decimal form, one entry per line.
pub fn write_text_vector<W: Write>(mut w: W, x: &DVector<f64>) -> Result<()> {
    for v in x.iter() {
        writeln!(w, "{v:?}")?;
    }
    w.flush()?;
    Ok(())
}
