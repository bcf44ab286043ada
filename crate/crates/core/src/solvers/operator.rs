use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Dense,
    SubsampledTrig,
}

/// Provenance recorded alongside an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMetadata {
    pub ensemble: String,
    pub seed: Option<u64>,
    pub normalization: String,
}

impl Default for OperatorMetadata {
    fn default() -> Self {
        OperatorMetadata { ensemble: "explicit".into(), seed: None, normalization: "none".into() }
    }
}

/// A linear map `Φ: ℝ^N → ℝ^M`.
///
/// Subsampled trigonometric operators keep their row-index set; the rows are
/// materialized once at construction so both kinds share the dense apply.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    kind: OperatorKind,
    matrix: DMatrix<f64>,
    row_indices: Option<Vec<usize>>,
    norm: f64,
    metadata: OperatorMetadata,
}

const POWER_ITERATION_TOL: f64 = 1e-9;
const POWER_ITERATION_MAX: usize = 20_000;

impl SensingOperator {
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        Self::dense_with_metadata(matrix, OperatorMetadata::default())
    }

    pub fn dense_with_metadata(matrix: DMatrix<f64>, metadata: OperatorMetadata) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::input("operator must have at least one row and one column"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("operator has non-finite entries"));
        }
        let norm = power_iteration_norm(&matrix);
        Ok(SensingOperator { kind: OperatorKind::Dense, matrix, row_indices: None, norm, metadata })
    }

    /// Rows of a transform given by their indices, already materialized.
    pub(crate) fn subsampled(
        matrix: DMatrix<f64>,
        row_indices: Vec<usize>,
        metadata: OperatorMetadata,
    ) -> Result<Self> {
        let mut op = Self::dense_with_metadata(matrix, metadata)?;
        op.kind = OperatorKind::SubsampledTrig;
        op.row_indices = Some(row_indices);
        Ok(op)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::dense(DMatrix::identity(n, n))
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_indices(&self) -> Option<&[usize]> {
        self.row_indices.as_deref()
    }

    pub fn metadata(&self) -> &OperatorMetadata {
        &self.metadata
    }

    /// Cached estimate of `‖Φ‖₂`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.cols(), x.len())?;
        Ok(self.apply(x))
    }

    pub fn adjoint(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.rows(), u.len())?;
        Ok(self.apply_adjoint(u))
    }

    pub(crate) fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    pub(crate) fn apply_adjoint(&self, u: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(u)
    }
}

/// `‖A‖₂` by power iteration on `AᵀA` from a fixed start vector.
fn power_iteration_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    // deterministic start with no special alignment to coordinate axes
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919 % 97) as f64) / 97.0);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATION_MAX {
        let w = a.tr_mul(&(a * &v));
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn.sqrt();
        v = w / wn;
        if (next - estimate).abs() <= POWER_ITERATION_TOL * next {
            return next;
        }
        estimate = next;
    }
    estimate
}
