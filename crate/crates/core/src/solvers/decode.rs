use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::operator::SensingOperator;
use super::prox::{project_l2_ball, prox_sharp_with, ProxWorkspace};
use crate::cs_space::{CsSpace, Model};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{sym_apply, sym_eigen};

/// `min ‖x‖♯ subject to ‖Φx − y‖₂ ≤ ε`.
#[derive(Debug, Clone)]
pub struct DecodeProblem<'a> {
    pub space: &'a CsSpace,
    pub operator: &'a SensingOperator,
    pub y: DVector<f64>,
    pub epsilon: f64,
}

impl<'a> DecodeProblem<'a> {
    pub fn new(space: &'a CsSpace, operator: &'a SensingOperator, y: DVector<f64>, epsilon: f64) -> Result<Self> {
        check_dim(space.ambient_dim(), operator.cols())?;
        check_dim(operator.rows(), y.len())?;
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::input(format!("noise radius ε = {epsilon} must be a nonnegative number")));
        }
        Ok(DecodeProblem { space, operator, y, epsilon })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Penalty τ.
    pub tau: f64,
    /// Linearization step μ for the operator normalized to `‖Φ‖ = 1`;
    /// `None` selects `0.9τ/‖Φ‖² = 0.9τ`.
    pub mu: Option<f64>,
    /// Keep the primal residual of every iteration.
    pub record_history: bool,
    /// Rebalance τ every few iterations when the primal and dual residuals
    /// drift more than a factor 10 apart. Only used for `ε > 0`: with the
    /// whitened equality constraint it drives τ down and stalls. Off by
    /// default, since the jumps in τ break the monotone residual trend.
    pub adaptive_penalty: bool,
}

const BALANCE_EVERY: usize = 20;
const BALANCE_RATIO: f64 = 10.0;
const MIN_TAU: f64 = 1e-4;
const MAX_TAU: f64 = 1e4;

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iters: 5000, tol_primal: 1e-7, tol_dual: 1e-7, tau: 1.0, mu: None, record_history: false, adaptive_penalty: false }
    }
}

impl SolverConfig {
    fn step(&self, op_norm: f64) -> Result<f64> {
        if self.max_iters == 0 || !(self.tol_primal > 0.0) || !(self.tol_dual > 0.0) || !(self.tau > 0.0) {
            return Err(Error::input("solver config needs max_iters ≥ 1 and positive tolerances and τ"));
        }
        let norm_sq = op_norm * op_norm;
        let mu = self.mu.unwrap_or(0.9 * self.tau / norm_sq.max(f64::MIN_POSITIVE));
        if !(mu > 0.0) || mu * norm_sq >= self.tau {
            return Err(Error::precondition(format!(
                "linearization step μ = {mu} violates μ‖Φ‖² < τ (‖Φ‖² = {norm_sq}, τ = {})",
                self.tau
            )));
        }
        Ok(mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Whether the noiseless constraint was whitened by `(ΦΦᵀ)^{-1/2}`.
    pub preconditioned: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub history: Vec<f64>,
}

impl DecodeResult {
    pub fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_star)
    }

    /// `‖Φx⋆ − y‖ ≤ ε(1 + 1e-6) + 1e-9`.
    pub fn residual_ok(&self, epsilon: f64) -> bool {
        self.residual <= epsilon * (1.0 + 1e-6) + 1e-9
    }
}

/// Linearized ADMM on `min ‖x‖♯ + ι_{B(y,ε)}(z)` subject to `Φx = z`:
///
/// ```text
/// x⁺ = prox_{μ♯}(x − (μ/τ)Φᵀ(Φx − z + u))
/// z⁺ = Proj_{B(y,ε)}(Φx⁺ + u)
/// u⁺ = u + Φx⁺ − z⁺
/// ```
///
/// For `ε = 0` and full row rank the constraint `Φx = y` is replaced by the
/// equivalent `(ΦΦᵀ)^{-1/2}Φx = (ΦΦᵀ)^{-1/2}y`, which has unit operator
/// norm; otherwise `Φ` is divided by `‖Φ‖` and the iterate rescaled at the
/// end. The final iterate is moved onto the constraint set by the
/// minimum-norm correction `Φᵀ(ΦΦᵀ)⁺(r′ − r)`.
pub fn decode(problem: &DecodeProblem<'_>, config: &SolverConfig) -> Result<DecodeResult> {
    let space = problem.space;
    let eps = problem.epsilon;
    let in_subspace = |x: DVector<f64>| match space.model() {
        Model::GradientSparsity(_) => space.project_ambient(&x),
        _ => x,
    };

    let a0 = effective_matrix(space, problem.operator);
    let gram = &a0 * a0.transpose();
    let (evals, _) = sym_eigen(&gram);
    let lmax = evals.iter().cloned().fold(0.0, f64::max);
    let full_rank = evals.len() > 0 && evals[0] > 1e-12 * lmax;
    let gram_pinv = sym_apply(&gram, |l| if l > 1e-12 * lmax { 1.0 / l } else { 0.0 });

    let preconditioned = eps == 0.0 && full_rank;
    // iterate on x̃ = s·x with a unit-norm operator
    let (a, b, var_scale) = if preconditioned {
        let whiten = sym_apply(&gram, |l| 1.0 / l.sqrt());
        (&whiten * &a0, &whiten * &problem.y, 1.0)
    } else {
        let n = lmax.sqrt();
        if n > 0.0 {
            (&a0 / n, problem.y.clone(), n)
        } else {
            (a0.clone(), problem.y.clone(), 1.0)
        }
    };
    let mut mu = config.step(if lmax > 0.0 { 1.0 } else { 0.0 })?;
    let mut tau = config.tau;
    let radius = if preconditioned { 0.0 } else { eps };

    let scale = problem.y.norm().max(1.0);
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut ax = DVector::zeros(a.nrows());
    let mut z = project_l2_ball(&ax, &b, radius);
    let mut u = DVector::zeros(a.nrows());
    let mut ws = ProxWorkspace::default();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut loop_converged = false;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    for it in 1..=config.max_iters {
        iterations = it;
        let grad = a.tr_mul(&(&ax - &z + &u));
        let x_next = in_subspace(prox_sharp_with(space, &in_subspace(&x - grad * (mu / tau)), mu, &mut ws));
        let ax_next = &a * &x_next;
        let z_next = project_l2_ball(&(&ax_next + &u), &b, radius);
        u += &ax_next - &z_next;

        primal = (&ax_next - &z_next).norm();
        dual = (&x_next - &x).norm() + a.tr_mul(&(&z_next - &z)).norm();
        if config.record_history {
            history.push(primal);
        }
        x = x_next;
        ax = ax_next;
        z = z_next;
        if primal <= config.tol_primal * scale && dual <= config.tol_dual * scale {
            loop_converged = true;
            break;
        }
        if config.adaptive_penalty && !preconditioned && it % BALANCE_EVERY == 0 {
            // u = τλ, so it moves with τ to keep the multiplier λ fixed
            let pen_dual = dual / tau;
            if primal > BALANCE_RATIO * pen_dual && tau > MIN_TAU {
                tau /= 2.0;
                mu /= 2.0;
                u /= 2.0;
            } else if pen_dual > BALANCE_RATIO * primal && tau < MAX_TAU {
                tau *= 2.0;
                mu *= 2.0;
                u *= 2.0;
            }
        }
    }

    x /= var_scale;
    // feasibility correction against the original constraint
    let r = &a0 * &x - &problem.y;
    let rn = r.norm();
    if rn > eps && full_rank {
        let target = if eps > 0.0 { &r * (eps / rn) } else { DVector::zeros(r.len()) };
        x += in_subspace(a0.tr_mul(&(&gram_pinv * (target - &r))));
    }
    let residual = (&a0 * &x - &problem.y).norm();
    let result = DecodeResult {
        objective: space.sharp_norm(&x)?,
        x_star: x.as_slice().to_vec(),
        residual,
        iterations,
        converged: false,
        primal_residual: primal,
        dual_residual: dual,
        preconditioned,
        history,
    };
    let ok = result.residual_ok(eps);
    Ok(DecodeResult { converged: loop_converged && ok, ..result })
}

/// `Φ`, or `Φ P_ℋ` for gradient sparsity so that iterates stay in ℋ.
fn effective_matrix(space: &CsSpace, op: &SensingOperator) -> DMatrix<f64> {
    match space.model() {
        Model::GradientSparsity(g) => {
            let n = g.vertices();
            let mut proj = DMatrix::identity(n, n);
            let labels = g.component_of();
            let mut sizes = vec![0usize; g.num_components()];
            for &c in labels {
                sizes[c] += 1;
            }
            for i in 0..n {
                for j in 0..n {
                    if labels[i] == labels[j] {
                        proj[(i, j)] -= 1.0 / sizes[labels[i]] as f64;
                    }
                }
            }
            op.matrix() * proj
        }
        _ => op.matrix().clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_measurement() {
        let s = CsSpace::l1(4, 1).unwrap();
        let op = SensingOperator::identity(4).unwrap();
        let y = DVector::from_row_slice(&[1.0, -2.0, 0.0, 0.5]);
        let p = DecodeProblem::new(&s, &op, y.clone(), 0.0).unwrap();
        let r = decode(&p, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.x() - &y).norm() < 1e-9);
        assert!((r.objective - 3.5).abs() < 1e-9);
    }

    #[test]
    fn zero_measurement_gives_zero() {
        let s = CsSpace::l1(4, 1).unwrap();
        let op = SensingOperator::dense(DMatrix::from_fn(2, 4, |i, j| (i + 2 * j) as f64 - 2.0)).unwrap();
        for eps in [0.0, 0.5] {
            let p = DecodeProblem::new(&s, &op, DVector::zeros(2), eps).unwrap();
            let r = decode(&p, &SolverConfig::default()).unwrap();
            assert!(r.converged);
            assert_eq!(r.x().norm(), 0.0);
        }
    }

    #[test]
    fn invalid_step_is_a_precondition_error() {
        let s = CsSpace::l1(2, 1).unwrap();
        let op = SensingOperator::identity(2).unwrap();
        let p = DecodeProblem::new(&s, &op, DVector::zeros(2), 0.1).unwrap();
        let cfg = SolverConfig { mu: Some(2.0), ..Default::default() };
        assert!(matches!(decode(&p, &cfg), Err(Error::Precondition(_))));
    }

    #[test]
    fn dimension_checks() {
        let s = CsSpace::l1(3, 1).unwrap();
        let op = SensingOperator::identity(2).unwrap();
        assert!(DecodeProblem::new(&s, &op, DVector::zeros(2), 0.0).is_err());
        let s = CsSpace::l1(2, 1).unwrap();
        assert!(DecodeProblem::new(&s, &op, DVector::zeros(3), 0.0).is_err());
        assert!(DecodeProblem::new(&s, &op, DVector::zeros(2), -1.0).is_err());
    }
}
