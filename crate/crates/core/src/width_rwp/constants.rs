use serde::{Deserialize, Serialize};

use super::search::RwpParams;
use crate::error::{Error, Result};

/// Recovery constants `(C0, C1)` in `‖x⋆ − x♮‖₂ ≤ C0‖x♮ − a‖♯ + C1ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeConstants {
    pub c0: f64,
    pub c1: f64,
}

/// No-squares `(J, δ)`-RIP with `δ < 1/3` gives RWP with `ρ = 3/√J`,
/// `α = 1/3 − δ`.
pub fn rip_to_rwp(j: usize, delta: f64) -> Result<RwpParams> {
    if j == 0 {
        return Err(Error::input("support size J must be positive"));
    }
    if !(0.0..1.0 / 3.0).contains(&delta) {
        return Err(Error::precondition(format!("RIP constant δ = {delta} must satisfy 0 ≤ δ < 1/3")));
    }
    RwpParams::new(3.0 / (j as f64).sqrt(), one_third_minus(delta))
}

/// `1/3 − δ` with 1/3 carried as a hi/lo pair, so the result is correctly
/// rounded whenever `hi − δ` is exact (`δ ∈ [1/6, 1/3)`).
fn one_third_minus(delta: f64) -> f64 {
    const HI: f64 = 1.0 / 3.0;
    // 1/3 − HI = 1/(3·2⁵⁴)
    const LO: f64 = 1.0 / (3.0 * 18014398509481984.0);
    (HI - delta) + LO
}

/// `C0 = 4ρ`, `C1 = 2/α`, valid when `ρ ≤ 1/(4L)`.
pub fn guarantee_constants(params: RwpParams, bound_l: f64) -> Result<GuaranteeConstants> {
    RwpParams::new(params.rho, params.alpha)?;
    if !(bound_l > 0.0) {
        return Err(Error::input(format!("bound L = {bound_l} must be positive")));
    }
    if params.rho > 1.0 / (4.0 * bound_l) {
        return Err(Error::precondition(format!(
            "ρ = {} exceeds 1/(4L) = {} for L = {bound_l}",
            params.rho,
            1.0 / (4.0 * bound_l)
        )));
    }
    Ok(GuaranteeConstants { c0: 4.0 * params.rho, c1: 2.0 / params.alpha })
}

/// Uniform recovery with `(C0, C1)` implies RWP with `ρ = 2C0`, `α = 1/(2C1)`.
pub fn converse_constants(c0: f64, c1: f64) -> Result<RwpParams> {
    if !(c0 > 0.0) || !(c1 > 0.0) {
        return Err(Error::input(format!("constants must be positive, got C0 = {c0}, C1 = {c1}")));
    }
    RwpParams::new(2.0 * c0, 1.0 / (2.0 * c1))
}

pub const CAI_ZHANG_T_MIN: f64 = 4.0 / 3.0;
pub const CAI_ZHANG_T_MAX: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaiZhangOutcome {
    pub feasible: bool,
    pub witness_t: Option<f64>,
}

/// Whether `(tK − 3)/(tK + 5) < √((t − 1)/t)` for some `t ∈ [4/3, 10⁴]`,
/// scanning a grid of the given step together with both endpoints.
pub fn cai_zhang_feasible(k: usize, resolution: f64) -> Result<CaiZhangOutcome> {
    if k == 0 {
        return Err(Error::input("K must be positive"));
    }
    if !(resolution > 0.0) {
        return Err(Error::input(format!("grid resolution {resolution} must be positive")));
    }
    let kf = k as f64;
    let holds = |t: f64| (t * kf - 3.0) / (t * kf + 5.0) < ((t - 1.0) / t).sqrt();
    let steps = ((CAI_ZHANG_T_MAX - CAI_ZHANG_T_MIN) / resolution).floor() as u64;
    let candidates = std::iter::once(CAI_ZHANG_T_MIN)
        .chain((1..=steps).map(|i| CAI_ZHANG_T_MIN + i as f64 * resolution))
        .chain(std::iter::once(CAI_ZHANG_T_MAX));
    for t in candidates {
        if t <= CAI_ZHANG_T_MAX && holds(t) {
            return Ok(CaiZhangOutcome { feasible: true, witness_t: Some(t) });
        }
    }
    Ok(CaiZhangOutcome { feasible: false, witness_t: None })
}

/// Largest K in `1..=k_max` for which [`cai_zhang_feasible`] holds.
pub fn cai_zhang_threshold(k_max: usize, resolution: f64) -> Result<Option<usize>> {
    let mut best = None;
    for k in 1..=k_max {
        if cai_zhang_feasible(k, resolution)?.feasible {
            best = Some(k);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum BudgetScheme {
    /// Escape through the mesh for an orthonormalized Gaussian.
    Gordon { width: f64, lambda: f64, alpha: f64, c: f64 },
    /// Small-ball bound for rows with covariance Σ.
    BowlingGeneral { width: f64, sigma_max: f64, sigma_min: f64, c0: f64, c1: f64 },
    /// Small-ball bound specialized to ℓ₁ with `v = max Σ_ii`.
    BowlingL1 { j: usize, n: usize, v: f64, sigma_min: f64, c0: f64, c1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBudget {
    pub m: u64,
    pub alpha: f64,
}

/// Number of measurements and resulting α for the chosen scheme.
pub fn measurement_budget(scheme: BudgetScheme) -> Result<MeasurementBudget> {
    let positive = |name: &str, x: f64| {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::input(format!("{name} = {x} must be positive")))
        }
    };
    match scheme {
        BudgetScheme::Gordon { width, lambda, alpha, c } => {
            positive("width", width)?;
            positive("λ", lambda)?;
            positive("α", alpha)?;
            let k = 1.0 + 1.0 / lambda.sqrt();
            if alpha >= 1.0 / k {
                return Err(Error::precondition(format!("α = {alpha} must be below 1/(1 + 1/√λ) = {}", 1.0 / k)));
            }
            let c_min = 1.0 / (1.0 - k * alpha).powi(2);
            if c <= c_min {
                return Err(Error::precondition(format!("C = {c} must exceed 1/(1 − (1 + 1/√λ)α)² = {c_min}")));
            }
            Ok(MeasurementBudget { m: (c * width * width).ceil() as u64, alpha })
        }
        BudgetScheme::BowlingGeneral { width, sigma_max, sigma_min, c0, c1 } => {
            positive("width", width)?;
            positive("σ_min", sigma_min)?;
            positive("c0", c0)?;
            positive("c1", c1)?;
            if sigma_max < sigma_min {
                return Err(Error::input(format!("σ_max = {sigma_max} is below σ_min = {sigma_min}")));
            }
            let m = (c0 * (sigma_max * sigma_max) / (sigma_min * sigma_min) * width * width).ceil();
            Ok(MeasurementBudget { m: m as u64, alpha: c1 * sigma_min * m.sqrt() })
        }
        BudgetScheme::BowlingL1 { j, n, v, sigma_min, c0, c1 } => {
            positive("v", v)?;
            positive("σ_min", sigma_min)?;
            positive("c0", c0)?;
            positive("c1", c1)?;
            if j == 0 || n < 2 || j > n {
                return Err(Error::input(format!("need 1 ≤ J ≤ N and N ≥ 2, got J = {j}, N = {n}")));
            }
            let m = (c0 * v / (sigma_min * sigma_min) * j as f64 * (n as f64).ln()).ceil();
            Ok(MeasurementBudget { m: m as u64, alpha: c1 * sigma_min * m.sqrt() })
        }
    }
}
