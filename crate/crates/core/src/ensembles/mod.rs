//! Random sensing operators and their on-disk container.

mod container;

pub use container::{
    read_container, read_text_vector, write_container, write_sidecar, write_text_vector, ContainerHeader,
    OperatorDescriptor, CONTAINER_MAGIC, CONTAINER_VERSION,
};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_diagonal, spd_sqrt, sym_apply, sym_eigen};
use crate::rng::{gaussian, substream};
use crate::solvers::{OperatorMetadata, SensingOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    GaussianIid,
    Orthonormalized,
    CorrelatedRows,
    Spiked,
    SubsampledTrig,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::GaussianIid => "gaussian_iid",
            EnsembleKind::Orthonormalized => "orthonormalized",
            EnsembleKind::CorrelatedRows => "correlated_rows",
            EnsembleKind::Spiked => "spiked",
            EnsembleKind::SubsampledTrig => "subsampled_trig",
        }
    }
}

/// Everything needed to regenerate an operator bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub m: usize,
    pub n: usize,
    /// Row covariance, required for `correlated_rows` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, m: usize, n: usize, seed: u64) -> Self {
        EnsembleSpec { kind, m, n, covariance: None, seed }
    }

    pub fn generate(&self) -> Result<SensingOperator> {
        if self.covariance.is_some() != (self.kind == EnsembleKind::CorrelatedRows) {
            return Err(Error::input("a covariance is required for correlated_rows and only there"));
        }
        match self.kind {
            EnsembleKind::GaussianIid => gaussian_iid(self.m, self.n, self.seed),
            EnsembleKind::Orthonormalized => {
                let g = gaussian_matrix(self.m, self.n, self.seed)?;
                let op = orthonormalize_rows(&g)?;
                retag(op, self.kind, Some(self.seed), "rows orthonormalized")
            }
            EnsembleKind::CorrelatedRows => {
                let rows = self.covariance.as_ref().expect("checked above");
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(Error::input(format!("covariance must be {0} × {0}", self.n)));
                }
                let cov = DMatrix::from_fn(self.n, self.n, |i, j| rows[i][j]);
                correlated_rows(&cov, self.m, self.seed)
            }
            EnsembleKind::Spiked => spiked(self.n, self.m, self.seed),
            EnsembleKind::SubsampledTrig => subsampled_trig(self.n, self.m, self.seed),
        }
    }
}

fn retag(op: SensingOperator, kind: EnsembleKind, seed: Option<u64>, normalization: &str) -> Result<SensingOperator> {
    let meta = OperatorMetadata { ensemble: kind.name().into(), seed, normalization: normalization.into() };
    SensingOperator::dense_with_metadata(op.matrix().clone(), meta)
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::input(format!("operator shape {m} × {n} must be positive")));
    }
    Ok(())
}

/// `M × N` iid standard normal entries, drawn row by row from substream 0.
fn gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_shape(m, n)?;
    let mut rng = substream(seed, 0);
    let data: Vec<f64> = (0..m * n).map(|_| gaussian(&mut rng)).collect();
    Ok(DMatrix::from_row_slice(m, n, &data))
}

pub fn gaussian_iid(m: usize, n: usize, seed: u64) -> Result<SensingOperator> {
    let g = gaussian_matrix(m, n, seed)?;
    let meta = OperatorMetadata { ensemble: "gaussian_iid".into(), seed: Some(seed), normalization: "none".into() };
    SensingOperator::dense_with_metadata(g, meta)
}

/// `(GGᵀ)^{-1/2}G`, so that `ΦΦᵀ = I`.
pub fn orthonormalize_rows(g: &DMatrix<f64>) -> Result<SensingOperator> {
    check_shape(g.nrows(), g.ncols())?;
    let gram = g * g.transpose();
    let (vals, _) = sym_eigen(&gram);
    let lmax = vals[vals.len() - 1];
    if !(vals[0] > 1e-12 * lmax) {
        return Err(Error::precondition(format!(
            "GGᵀ is numerically singular: eigenvalue {:e} against largest {:e}",
            vals[0], lmax
        )));
    }
    let inv_sqrt = sym_apply(&gram, |l| 1.0 / l.sqrt());
    let meta = OperatorMetadata { ensemble: "explicit".into(), seed: None, normalization: "rows orthonormalized".into() };
    SensingOperator::dense_with_metadata(inv_sqrt * g, meta)
}

/// Rows `Σ^{1/2}g` with `g` standard normal. A diagonal Σ scales columns
/// directly, so `Σ = I` reproduces [`gaussian_iid`] exactly.
pub fn correlated_rows(covariance: &DMatrix<f64>, m: usize, seed: u64) -> Result<SensingOperator> {
    let n = covariance.nrows();
    let root = spd_sqrt(covariance)?;
    let mut g = gaussian_matrix(m, n, seed)?;
    if is_diagonal(&root) {
        for j in 0..n {
            let s = root[(j, j)];
            if s != 1.0 {
                g.column_mut(j).scale_mut(s);
            }
        }
    } else {
        g = g * root;
    }
    let meta = OperatorMetadata { ensemble: "correlated_rows".into(), seed: Some(seed), normalization: "none".into() };
    SensingOperator::dense_with_metadata(g, meta)
}

/// Closed-form spectral quantities of the spiked covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikedStats {
    pub sigma_max_sq: f64,
    pub sigma_min_sq: f64,
    /// Largest diagonal entry.
    pub v: f64,
}

/// `Σ = (I + 𝟙𝟙ᵀ)/M` with `σ_max² = (N+1)/M`, `σ_min² = 1/M`, `v = 2/M`
/// (all `2/M` when `N = 1`).
pub fn spiked_covariance(n: usize, m: usize) -> Result<(DMatrix<f64>, SpikedStats)> {
    check_shape(m, n)?;
    let mf = m as f64;
    let cov = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 / mf } else { 1.0 / mf });
    let stats = if n == 1 {
        SpikedStats { sigma_max_sq: 2.0 / mf, sigma_min_sq: 2.0 / mf, v: 2.0 / mf }
    } else {
        SpikedStats { sigma_max_sq: (n as f64 + 1.0) / mf, sigma_min_sq: 1.0 / mf, v: 2.0 / mf }
    };
    Ok((cov, stats))
}

/// `M` rows with the spiked covariance `(I + 𝟙𝟙ᵀ)/M`.
pub fn spiked(n: usize, m: usize, seed: u64) -> Result<SensingOperator> {
    let (cov, _) = spiked_covariance(n, m)?;
    let op = correlated_rows(&cov, m, seed)?;
    retag(op, EnsembleKind::Spiked, Some(seed), "covariance (I + 11ᵀ)/M")
}

/// Orthonormal DCT-II matrix, `C[k][j] = c_k cos(π(j + ½)k/N)`.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |k, j| {
        let c = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        c * (std::f64::consts::PI * (j as f64 + 0.5) * k as f64 / nf).cos()
    })
}

/// `M` distinct rows of the orthonormal cosine basis, sampled without
/// replacement, sorted, and scaled by `√(N/M)`.
pub fn subsampled_trig(n: usize, m: usize, seed: u64) -> Result<SensingOperator> {
    check_shape(m, n)?;
    if m > n {
        return Err(Error::input(format!("cannot take M = {m} distinct rows from N = {n}")));
    }
    let mut rows = sample(&mut substream(seed, 0), n, m).into_vec();
    rows.sort_unstable();
    let basis = dct_matrix(n);
    let scale = (n as f64 / m as f64).sqrt();
    let mat = DMatrix::from_fn(m, n, |i, j| scale * basis[(rows[i], j)]);
    let meta = OperatorMetadata {
        ensemble: "subsampled_trig".into(),
        seed: Some(seed),
        normalization: "rows scaled by sqrt(N/M); sampled without replacement".into(),
    };
    SensingOperator::subsampled(mat, rows, meta)
}

/// Eigenvalue ratio `λ_max/λ_min` of `Φ_SᵀΦ_S`.
pub fn support_condition_number(phi: &DMatrix<f64>, support: &[usize]) -> f64 {
    let sub = phi.select_columns(support);
    let (vals, _) = sym_eigen(&sub.tr_mul(&sub));
    vals[vals.len() - 1] / vals[0]
}
