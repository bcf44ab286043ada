//! Dense linear-algebra kernels shared by the crate.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration with a fixed sweep
//! order, so results are reproducible bit-for-bit across runs and platforms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// `u` is `m × r`, `v` is `n × r` with `r = min(m, n)`. Singular values are
/// sorted descending. Columns of `u` paired with a zero singular value are
/// zero vectors.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

impl Svd {
    pub fn new(a: &DMatrix<f64>) -> Svd {
        if a.nrows() >= a.ncols() {
            let (u, s, v) = hestenes(a.clone());
            let mut svd = Svd { u, singular_values: s, v };
            svd.fix_signs();
            svd
        } else {
            let (u_t, s, v_t) = hestenes(a.transpose());
            let mut svd = Svd { u: v_t, singular_values: s, v: u_t };
            svd.fix_signs();
            svd
        }
    }

    /// Number of singular values above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.singular_values.iter().cloned().fold(0.0, f64::max);
        if smax <= f64::MIN_POSITIVE {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
    }

    /// Rebuild `U diag(s) Vᵀ` from possibly modified singular values.
    pub fn recompose(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= s[j];
        }
        us * self.v.transpose()
    }

    // First nonzero entry of every left singular vector is made nonnegative.
    fn fix_signs(&mut self) {
        for j in 0..self.singular_values.len() {
            let first = self.u.column(j).iter().cloned().find(|x| x.abs() > 1e-14);
            if let Some(x) = first {
                if x < 0.0 {
                    self.u.column_mut(j).neg_mut();
                    self.v.column_mut(j).neg_mut();
                }
            }
        }
    }
}

// One-sided Jacobi on the columns of `a` (requires m >= n).
fn hestenes(mut a: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = a.ncols();
    let m = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal singular values keep column order
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vv = DMatrix::<f64>::zeros(n, n);
    let mut s = DVector::<f64>::zeros(n);
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        if norms[j] > 1e-300 && norms[j] > 1e-15 * smax {
            u.set_column(k, &(a.column(j) / norms[j]));
        }
        vv.set_column(k, &v.column(j));
    }
    (u, s, vv)
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    Svd::new(a).singular_values
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).sum()
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
    let mut vecs = DMatrix::<f64>::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(j));
    }
    (vals, vecs)
}

/// `V f(Λ) Vᵀ` for a symmetric matrix.
pub fn sym_apply(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(a);
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(vals[j]);
    }
    scaled * vecs.transpose()
}

/// Square root of a symmetric positive-definite matrix. Eigenvalues are
/// floored at `1e-14 · λ_max`; a matrix whose smallest eigenvalue is not
/// positive is rejected.
pub fn spd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(a)?;
    if is_diagonal(a) {
        let mut out = DMatrix::<f64>::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            if a[(i, i)] <= 0.0 {
                return Err(Error::input(format!(
                    "covariance is not positive definite (diagonal entry {} = {})",
                    i,
                    a[(i, i)]
                )));
            }
            out[(i, i)] = a[(i, i)].sqrt();
        }
        return Ok(out);
    }
    let (vals, _) = sym_eigen(a);
    let lmax = vals[vals.len() - 1];
    if vals[0] <= 0.0 {
        return Err(Error::input(format!(
            "covariance is not positive definite (min eigenvalue {:e})",
            vals[0]
        )));
    }
    let floor = 1e-14 * lmax;
    Ok(sym_apply(a, |l| l.max(floor).sqrt()))
}

pub(crate) fn is_diagonal(a: &DMatrix<f64>) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j && a[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::input("matrix is not square"));
    }
    let scale = a.amax().max(1.0);
    for j in 0..a.ncols() {
        for i in 0..j {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::input(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn sym_spectral_norm(a: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(a);
    vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Spectral norm of a general matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    singular_values(a).iter().cloned().fold(0.0, f64::max)
}

/// Row-major flattening of a matrix, the layout used for low-rank signals.
pub fn flatten_row_major(a: &DMatrix<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    DVector::from_fn(m * n, |k, _| a[(k / n, k % n)])
}

pub fn unflatten_row_major(x: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| x[i * cols + j])
}

/// Binomial coefficient as f64 (exact for the sizes the guards allow).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Advance `idx` to the next k-combination of `0..n` in lexicographic
/// order. Returns false when exhausted.
pub fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
