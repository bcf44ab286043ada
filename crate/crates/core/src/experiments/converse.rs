use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sweep::SLACK_TOL;
use super::{generate_signal, noise_direction, run_trial, SignalSpec, TrialRecord};
use crate::cs_space::CsSpace;
use crate::error::Result;
use crate::rng::{derive_seed, substream};
use crate::solvers::{SensingOperator, SolverConfig};
use crate::width_rwp::{converse_constants, rwp_search, GuaranteeConstants};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverseReport {
    pub c0: f64,
    pub c1: f64,
    pub rho: f64,
    pub alpha: f64,
    pub violation_found: bool,
    pub witness: Option<Vec<f64>>,
    pub trials: usize,
    pub negative_slack: usize,
    /// Every trial, including the one on the witness, met the bound.
    pub uniformly_good: bool,
    /// A width violation alongside uniformly good recovery; the converse
    /// says this cannot happen.
    pub contradiction: bool,
    pub records: Vec<TrialRecord>,
}

/// Checks recovery at `(C0, C1)` against an RWP search at `ρ = 2C0`,
/// `α = 1/(2C1)`. Trials are `trials` random signals (exact atoms plus a
/// unit-sharp-norm perturbation, `ε = 0.1`) and, when the search finds a
/// witness `w`, the signal `w` measured as `y = 0` with `ε = ‖Φw‖₂`.
pub fn converse_experiment(
    c0: f64,
    c1: f64,
    space: &CsSpace,
    op: &SensingOperator,
    trials: usize,
    restarts: usize,
    seed: u64,
    solver: &SolverConfig,
) -> Result<ConverseReport> {
    let params = converse_constants(c0, c1)?;
    let constants = GuaranteeConstants { c0, c1 };
    let search = rwp_search(op, space, params, restarts, derive_seed(&[seed, 0]))?;

    let mut records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(&[seed, 1, t as u64]);
            let mut rng = substream(trial_seed, 0);
            let x = generate_signal(space, SignalSpec { beta: 1.0 }, &mut rng);
            let dir = noise_direction(op.rows(), &mut rng);
            run_trial(space, op, &x, 0.1, &dir, constants, solver, trial_seed)
        })
        .collect::<Result<_>>()?;

    if let Some(w) = search.witness_vector() {
        let phi_w = op.forward(&w)?;
        let eps = phi_w.norm();
        let dir = if eps > 0.0 { -&phi_w / eps } else { phi_w.clone() };
        records.push(run_trial(space, op, &w, eps, &dir, constants, solver, derive_seed(&[seed, 2]))?);
    }

    let negative = records.iter().filter(|r| r.negative_slack(SLACK_TOL)).count();
    let uniformly_good = negative == 0;
    let violation = search.violation_found();
    Ok(ConverseReport {
        c0,
        c1,
        rho: params.rho,
        alpha: params.alpha,
        violation_found: violation,
        witness: search.witness,
        trials: records.len(),
        negative_slack: negative,
        uniformly_good,
        contradiction: violation && uniformly_good,
        records,
    })
}

pub fn count_contradictions(reports: &[ConverseReport]) -> usize {
    reports.iter().filter(|r| r.contradiction).count()
}
