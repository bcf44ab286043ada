use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::width::project_to_feasible_sphere;
use crate::cs_space::CsSpace;
use crate::error::{check_dim, Error, Result};
use crate::rng::{gaussian_vec, substream};
use crate::solvers::SensingOperator;

/// Strict margin required of a reported witness.
pub const WITNESS_MARGIN: f64 = 1e-9;

/// Search stays inside the sharp ball shrunk by this relative amount, so
/// every feasible iterate clears `‖x‖₂ > ρ‖x‖♯` by about 1e-6.
const RADIUS_SHRINK: f64 = 1e-6;
const MAX_ITERS: usize = 2000;
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwpParams {
    pub rho: f64,
    pub alpha: f64,
}

impl RwpParams {
    pub fn new(rho: f64, alpha: f64) -> Result<Self> {
        if !(rho > 0.0) || !(alpha > 0.0) || !rho.is_finite() || !alpha.is_finite() {
            return Err(Error::input(format!("RWP parameters need ρ > 0 and α > 0, got ρ = {rho}, α = {alpha}")));
        }
        Ok(RwpParams { rho, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RwpVerdict {
    ViolationFound,
    NoViolationFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwpReport {
    pub verdict: RwpVerdict,
    pub witness: Option<Vec<f64>>,
    /// Smallest `‖Φx‖₂/‖x‖₂` seen over feasible iterates.
    pub min_ratio: f64,
    pub restarts: usize,
    /// No feasible point of `ρ⁻¹B♯ ∩ 𝕊` was reached from any start.
    pub empty_set: bool,
}

impl RwpReport {
    pub fn violation_found(&self) -> bool {
        self.verdict == RwpVerdict::ViolationFound
    }

    pub fn witness_vector(&self) -> Option<DVector<f64>> {
        self.witness.as_ref().map(|w| DVector::from_column_slice(w))
    }
}

/// Whether `x` strictly violates the width inequality at `(ρ, α)`:
/// `‖Φx‖₂ < α‖x‖₂` and `‖x‖₂ > ρ‖x‖♯`, both by [`WITNESS_MARGIN`].
pub fn is_rwp_witness(op: &SensingOperator, space: &CsSpace, params: RwpParams, x: &DVector<f64>) -> bool {
    let n = space.norm2(x);
    let phi = op.apply(&space.project_ambient(x)).norm();
    phi < params.alpha * n - WITNESS_MARGIN && n > params.rho * space.sharp(x) + WITNESS_MARGIN
}

struct StartOutcome {
    min_ratio: f64,
    witness: Option<DVector<f64>>,
    feasible: bool,
}

/// Minimize `‖Φx‖₂` over `ρ⁻¹B♯ ∩ 𝕊` by projected gradient
/// `x ← P(x − ΦᵀΦx/‖Φ‖²)`, where `P` returns the nearest unit vector in the
/// (slightly shrunk) sharp ball. Starts are `restarts` random directions
/// followed by the ambient coordinate directions. Only a re-verified strict
/// violation produces `ViolationFound`; otherwise the search is evidence,
/// not a certificate.
pub fn rwp_search(
    op: &SensingOperator,
    space: &CsSpace,
    params: RwpParams,
    restarts: usize,
    seed: u64,
) -> Result<RwpReport> {
    check_dim(space.ambient_dim(), op.cols())?;
    if restarts == 0 {
        return Err(Error::input("rwp_search needs at least one restart"));
    }
    let n = space.ambient_dim();
    let radius = (1.0 - RADIUS_SHRINK) / params.rho;
    let lipschitz = op.norm() * op.norm();

    let starts: Vec<DVector<f64>> = (0..restarts as u64)
        .map(|r| gaussian_vec(&mut substream(seed, r), n))
        .chain((0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })))
        .collect();

    let outcomes: Vec<StartOutcome> = starts
        .par_iter()
        .map(|start| descend(op, space, params, radius, lipschitz, start))
        .collect();

    let feasible = outcomes.iter().any(|o| o.feasible);
    let min_ratio = outcomes.iter().map(|o| o.min_ratio).fold(f64::INFINITY, f64::min);
    let witness = outcomes.into_iter().find_map(|o| o.witness);
    Ok(RwpReport {
        verdict: if witness.is_some() { RwpVerdict::ViolationFound } else { RwpVerdict::NoViolationFound },
        witness: witness.map(|w| w.as_slice().to_vec()),
        min_ratio,
        restarts,
        empty_set: !feasible,
    })
}

fn descend(
    op: &SensingOperator,
    space: &CsSpace,
    params: RwpParams,
    radius: f64,
    lipschitz: f64,
    start: &DVector<f64>,
) -> StartOutcome {
    let mut out = StartOutcome { min_ratio: f64::INFINITY, witness: None, feasible: false };
    let Some(mut x) = project_to_feasible_sphere(space, &space.project_ambient(start), radius) else {
        return out;
    };
    let mut stalled = false;
    for _ in 0..MAX_ITERS {
        if space.sharp(&x) > radius / (1.0 - RADIUS_SHRINK) {
            break;
        }
        out.feasible = true;
        let phi_x = op.apply(&x);
        out.min_ratio = out.min_ratio.min(phi_x.norm() / space.norm2(&x));
        if is_rwp_witness(op, space, params, &x) {
            out.witness = Some(x);
            return out;
        }
        if stalled || lipschitz == 0.0 {
            break;
        }
        let v = &x - op.apply_adjoint(&phi_x) / lipschitz;
        let Some(next) = project_to_feasible_sphere(space, &space.project_ambient(&v), radius) else {
            break;
        };
        stalled = (&next - &x).norm() < STEP_TOL;
        x = next;
    }
    out
}
