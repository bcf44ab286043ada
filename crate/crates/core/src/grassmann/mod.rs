//! Subspaces of ℝ^N, the gap metric, and the link between robust width and
//! the width property on nearby null spaces.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cs_space::CsSpace;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{singular_values, sym_eigen, sym_spectral_norm, spectral_norm};
use crate::rng::{derive_seed, gaussian_vec, substream, Stream};
use crate::solvers::SensingOperator;
use crate::width_rwp::{rwp_search, RwpParams, WITNESS_MARGIN};

/// Relative pivot size below which a QR column counts as dependent.
const RANK_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-10;

/// A subspace held as an `N × d` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

/// Flip each column so its largest-magnitude entry is positive.
fn fix_signs(mut q: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in q.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    q
}

impl Subspace {
    /// Span of the columns, via QR with column pivoting.
    pub fn from_spanning(columns: &DMatrix<f64>) -> Result<Self> {
        let n = columns.nrows();
        if n == 0 {
            return Err(Error::input("ambient dimension must be positive"));
        }
        if columns.ncols() == 0 || columns.amax() == 0.0 {
            return Ok(Subspace::zero(n));
        }
        let qr = columns.clone().col_piv_qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
        let rank = diag.iter().take_while(|&&d| d > RANK_TOL * diag[0]).count();
        let q = qr.q();
        Ok(Subspace { basis: fix_signs(q.columns(0, rank).into_owned()) })
    }

    /// Wraps a basis that must already be orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() == 0 {
            return Err(Error::input("ambient dimension must be positive"));
        }
        let d = basis.ncols();
        let err = (basis.tr_mul(&basis) - DMatrix::identity(d, d)).amax();
        if d > 0 && err > ORTHONORMAL_TOL {
            return Err(Error::input(format!("basis is not orthonormal (‖BᵀB − I‖max = {err:e})")));
        }
        Ok(Subspace { basis })
    }

    pub fn zero(n: usize) -> Self {
        Subspace { basis: DMatrix::zeros(n, 0) }
    }

    /// Uniform draw from the Grassmannian of `d`-dimensional subspaces.
    pub fn random(n: usize, d: usize, rng: &mut Stream) -> Result<Self> {
        if d > n {
            return Err(Error::input(format!("cannot draw a {d}-dimensional subspace of ℝ^{n}")));
        }
        let g = DMatrix::from_fn(n, d, |_, _| crate::rng::gaussian(rng));
        let s = Subspace::from_spanning(&g)?;
        if s.dim() != d {
            return Err(Error::NonConvergence(format!("Gaussian draw had rank {} < {d}", s.dim())));
        }
        Ok(s)
    }

    /// Null space of `Φ`, as the complement of its row space.
    pub fn kernel(op: &SensingOperator) -> Result<Self> {
        Ok(Subspace::from_spanning(&op.matrix().transpose())?.complement())
    }

    pub fn complement(&self) -> Self {
        let n = self.ambient();
        let (vals, vecs) = sym_eigen(&(DMatrix::identity(n, n) - self.projector()));
        let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.5).collect();
        Subspace { basis: fix_signs(vecs.select_columns(&keep)) }
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis * self.basis.tr_mul(x)
    }

    /// `‖P_{X⊥}x‖₂`.
    pub fn distance_to(&self, x: &DVector<f64>) -> f64 {
        (x - self.project(x)).norm()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.distance_to(x) <= tol * x.norm().max(1.0)
    }
}

fn same_ambient(x: &Subspace, y: &Subspace) -> Result<()> {
    check_dim(x.ambient(), y.ambient())
}

/// `‖P_X − P_Y‖₂`.
pub fn gap_metric(x: &Subspace, y: &Subspace) -> Result<f64> {
    same_ambient(x, y)?;
    Ok(sym_spectral_norm(&(x.projector() - y.projector())).clamp(0.0, 1.0))
}

/// `‖P_{Y⊥}P_X‖₂ = ‖(I − P_Y)U_X‖₂`, which equals the gap when the
/// dimensions agree.
pub fn one_sided_gap(x: &Subspace, y: &Subspace) -> Result<f64> {
    same_ambient(x, y)?;
    if x.dim() == 0 {
        return Ok(0.0);
    }
    let resid = x.basis() - y.basis() * y.basis().tr_mul(x.basis());
    Ok(spectral_norm(&resid).min(1.0))
}

/// `min_{x ∈ X, ‖x‖=1} ‖P_Y x‖₂`, the smallest singular value of `U_YᵀU_X`.
pub fn min_max_correlation(x: &Subspace, y: &Subspace) -> Result<f64> {
    same_ambient(x, y)?;
    if x.dim() == 0 {
        return Err(Error::input("min-max correlation needs a nontrivial subspace X"));
    }
    if y.dim() < x.dim() {
        return Ok(0.0);
    }
    let s = singular_values(&y.basis().tr_mul(x.basis()));
    Ok(s.min().clamp(0.0, 1.0))
}

/// `X = (Y ∩ e⊥) + span{e}`, which has the dimension of `Y`, contains `e`,
/// and satisfies `d(X, Y) = ‖P_{Y⊥}ê‖₂ < α`.
pub fn construct_nearby_subspace(y: &Subspace, e: &DVector<f64>, alpha: f64) -> Result<Subspace> {
    check_dim(y.ambient(), e.len())?;
    let norm = e.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::input("direction e must be a nonzero finite vector"));
    }
    if !(alpha <= 1.0) {
        return Err(Error::precondition(format!("α ≤ 1 fails (α = {alpha})")));
    }
    let e = e / norm;
    let off = y.distance_to(&e);
    if !(off < alpha) {
        return Err(Error::precondition(format!("‖P_(Y⊥)e‖₂ < α‖e‖₂ fails ({off} ≥ {alpha})")));
    }
    // Householder reflection in Y's coordinates sending w = U_Yᵀe to a
    // multiple of the first axis; the remaining columns span Y ∩ e⊥.
    let d = y.dim();
    let w = y.basis().tr_mul(&e);
    let mut v = w.clone();
    let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * w.norm();
    let vv = v.norm_squared();
    let h = DMatrix::identity(d, d) - (&v * v.transpose()) * (2.0 / vv);
    let rotated = y.basis() * h;
    let mut basis = DMatrix::zeros(y.ambient(), d);
    basis.columns_mut(0, d - 1).copy_from(&rotated.columns(1, d - 1));
    basis.column_mut(d - 1).copy_from(&e);
    let x = Subspace::from_orthonormal(basis)?;

    let gap = gap_metric(&x, y)?;
    if x.dim() != y.dim() || !x.contains(&e, 1e-10) || !(gap < alpha) {
        return Err(Error::precondition(format!(
            "constructed subspace failed re-verification (dim {} vs {}, gap {gap} vs α = {alpha})",
            x.dim(),
            y.dim()
        )));
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthPropertyReport {
    pub holds_empirically: bool,
    /// A vector of the subspace with `‖x‖₂ > ρ‖x‖♯`.
    pub violation: Option<Vec<f64>>,
    /// Largest `‖x‖₂/‖x‖♯` found on the subspace.
    pub max_ratio: f64,
    /// Whether the dense-grid oracle was also run (dimension ≤ 3).
    pub grid_checked: bool,
}

const ASCENT_ITERS: usize = 400;
const GRID_STEP_2D: f64 = 1e-3;
const GRID_STEP_3D: f64 = 1e-2;

fn ratio(space: &CsSpace, x: &DVector<f64>) -> f64 {
    let s = space.sharp(x);
    let n = space.norm2(x);
    if s > 0.0 {
        n / s
    } else if n > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Subgradient descent of `‖Uc‖♯` on the unit sphere of coefficients,
/// keeping the best ratio seen.
fn ascend(space: &CsSpace, u: &DMatrix<f64>, start: DVector<f64>) -> (f64, DVector<f64>) {
    let mut c = start.normalize();
    let mut best_x = u * &c;
    let mut best = ratio(space, &best_x);
    for k in 0..ASCENT_ITERS {
        let x = u * &c;
        let g = u.tr_mul(&space.subgradient(&x));
        let tangent = &g - &c * c.dot(&g);
        let tn = tangent.norm();
        if tn < 1e-14 {
            break;
        }
        let angle = 0.5 / ((k + 1) as f64).sqrt();
        c = (&c * angle.cos() - tangent * (angle.sin() / tn)).normalize();
        let x = u * &c;
        let r = ratio(space, &x);
        if r > best {
            best = r;
            best_x = x;
        }
    }
    (best, best_x)
}

/// Coefficient vectors covering the unit sphere of ℝ^d up to sign.
fn sphere_grid(d: usize) -> Vec<DVector<f64>> {
    use std::f64::consts::PI;
    match d {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => {
            let steps = (PI / GRID_STEP_2D).ceil() as usize;
            (0..steps).map(|i| {
                let t = i as f64 * PI / steps as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect()
        }
        3 => {
            let nt = (PI / 2.0 / GRID_STEP_3D).ceil() as usize;
            let np = (2.0 * PI / GRID_STEP_3D).ceil() as usize;
            (0..=nt)
                .flat_map(|i| {
                    let t = i as f64 * (PI / 2.0) / nt as f64;
                    (0..np).map(move |j| {
                        let p = j as f64 * 2.0 * PI / np as f64;
                        DVector::from_vec(vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
                    })
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Looks for `x ∈ Y` with `‖x‖₂ > ρ‖x‖♯` by maximizing `‖x‖₂/‖x‖♯` over the
/// unit sphere of `Y`. Starts are `restarts` random directions and the
/// projections of the coordinate vectors; subspaces of dimension ≤ 3 are
/// also scanned on a dense grid. A reported violation is re-verified; the
/// absence of one is evidence only.
pub fn width_property_check(
    y: &Subspace,
    space: &CsSpace,
    rho: f64,
    restarts: usize,
    seed: u64,
) -> Result<WidthPropertyReport> {
    check_dim(space.ambient_dim(), y.ambient())?;
    if !(rho > 0.0) {
        return Err(Error::input(format!("ρ = {rho} must be positive")));
    }
    let d = y.dim();
    if d == 0 {
        return Ok(WidthPropertyReport { holds_empirically: true, violation: None, max_ratio: 0.0, grid_checked: true });
    }
    let u = y.basis();
    let mut starts: Vec<DVector<f64>> =
        (0..restarts as u64).map(|r| gaussian_vec(&mut substream(seed, r), d)).collect();
    starts.extend(u.row_iter().map(|row| row.transpose()).filter(|c| c.norm() > 1e-12));

    let grid_checked = d <= 3;
    if grid_checked {
        let grid = sphere_grid(d);
        let best = grid
            .par_iter()
            .map(|c| ratio(space, &(u * c)))
            .enumerate()
            .reduce(|| (usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
        if best.0 != usize::MAX {
            starts.push(grid[best.0].clone());
        }
    }

    let outcomes: Vec<(f64, DVector<f64>)> = starts.into_par_iter().map(|c| ascend(space, u, c)).collect();
    let (max_ratio, best_x) = outcomes
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one start");
    let best_x = best_x.normalize();
    let violates = space.norm2(&best_x) > rho * space.sharp(&best_x) + WITNESS_MARGIN;
    Ok(WidthPropertyReport {
        holds_empirically: !violates,
        violation: violates.then(|| best_x.as_slice().to_vec()),
        max_ratio,
        grid_checked,
    })
}

/// Direction-2 evidence: an RWP witness placed inside a nearby subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearbyViolation {
    pub witness: Vec<f64>,
    pub gap: f64,
    pub witness_in_subspace: bool,
    pub width_property_fails: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub rho: f64,
    pub alpha: f64,
    pub kernel_dim: usize,
    pub trials: usize,
    /// Sampled nearby subspaces on which a width-property violation was found.
    pub direction1_failures: usize,
    pub direction1_failed_trials: Vec<usize>,
    pub rwp_violation_found: bool,
    pub direction2: Option<NearbyViolation>,
    /// With α > 1 every subspace of the right dimension is within reach, so
    /// direction 1 samples arbitrary subspaces.
    pub alpha_exceeds_one: bool,
    pub note: String,
}

const HARNESS_NOTE: &str = "one measurement matrix per null space: with ΦΦᵀ = I any other Ψ sharing the null space differs by an orthogonal change of measurement coordinates";

/// Unit vector whose distance to `Y` is `beta`.
fn direction_at_distance(y: &Subspace, perp: &Subspace, beta: f64, rng: &mut Stream) -> DVector<f64> {
    let inside = (y.basis() * gaussian_vec(rng, y.dim())).normalize();
    if perp.dim() == 0 {
        return inside;
    }
    let outside = (perp.basis() * gaussian_vec(rng, perp.dim())).normalize();
    inside * (1.0 - beta * beta).sqrt() + outside * beta
}

/// Empirical check that RWP for `Φ` matches the width property on every
/// subspace within gap `α` of `ker Φ`, in both directions.
pub fn rwp_ball_harness(
    op: &SensingOperator,
    space: &CsSpace,
    rho: f64,
    alpha: f64,
    trials: usize,
    restarts: usize,
    seed: u64,
) -> Result<HarnessReport> {
    check_dim(space.ambient_dim(), op.cols())?;
    let params = RwpParams::new(rho, alpha)?;
    let m = op.matrix();
    let orth = (m * m.transpose() - DMatrix::identity(op.rows(), op.rows())).amax();
    if orth > 1e-8 {
        return Err(Error::precondition(format!("ΦΦᵀ = I fails (‖ΦΦᵀ − I‖max = {orth:e})")));
    }
    let y = Subspace::kernel(op)?;
    let perp = y.complement();
    let d = y.dim();
    let n = y.ambient();
    let wide = alpha > 1.0;

    let failed: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Option<usize>> {
            if d == 0 {
                return Ok(None);
            }
            let mut rng = substream(derive_seed(&[seed, 1]), t as u64);
            let x = if wide {
                Subspace::random(n, d, &mut rng)?
            } else {
                let beta = alpha * rng.random::<f64>();
                let e = direction_at_distance(&y, &perp, beta, &mut rng);
                construct_nearby_subspace(&y, &e, alpha)?
            };
            let rep = width_property_check(&x, space, rho, restarts, derive_seed(&[seed, 2, t as u64]))?;
            Ok((!rep.holds_empirically).then_some(t))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let search = rwp_search(op, space, params, restarts.max(1), derive_seed(&[seed, 3]))?;
    let direction2 = match search.witness_vector() {
        Some(w) if d > 0 && y.distance_to(&w) < w.norm() => {
            let x = construct_nearby_subspace(&y, &w, alpha.min(1.0))?;
            let wp = width_property_check(&x, space, rho, restarts, derive_seed(&[seed, 4]))?;
            Some(NearbyViolation {
                gap: gap_metric(&x, &y)?,
                witness_in_subspace: x.contains(&w, 1e-10),
                width_property_fails: !wp.holds_empirically,
                witness: w.as_slice().to_vec(),
            })
        }
        _ => None,
    };

    Ok(HarnessReport {
        rho,
        alpha,
        kernel_dim: d,
        trials,
        direction1_failures: failed.len(),
        direction1_failed_trials: failed,
        rwp_violation_found: search.violation_found(),
        direction2,
        alpha_exceeds_one: wide,
        note: HARNESS_NOTE.into(),
    })
}
