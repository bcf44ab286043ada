//! End-to-end harnesses: forward recovery sweeps, the converse check, the
//! spiked-ensemble study and the recorded calibration results.

mod converse;
mod output;
mod results;
mod study;
mod sweep;

pub use converse::{count_contradictions, converse_experiment, ConverseReport};
pub use output::{config_hash, to_csv_string, ExperimentSummary, PlotData, PlotSeries, SCHEMA_VERSION};
pub use results::{
    calibrate_width_constant, record_results, trig_rwp_datapoint, ResultsFile, TrigDatapoint, WidthCalibration,
};
pub use study::{rwp_not_rip_study, RecoverySummary, StudyConfig, StudyReport, StudyRow, StudyTableRow};
pub use sweep::{forward_experiment, CellSummary, EnsembleChoice, ForwardResult, ParamsSource, SweepConfig, SLACK_TOL};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cs_space::{BlockStructure, CsSpace, GraphGradientParams};
use crate::error::{check_dim, Error, Result};
use crate::rng::{gaussian_vec, Stream};
use crate::solvers::{decode, DecodeProblem, SensingOperator, SolverConfig};
use crate::width_rwp::GuaranteeConstants;

/// Named model families, instantiated for a given `N` and `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    L1,
    Weighted { weights: Vec<f64> },
    Block { block_size: usize },
    PathGradient,
    GridGradient { rows: usize, cols: usize },
    LowRank { rows: usize, cols: usize },
}

impl ModelSpec {
    pub fn space(&self, n: usize, k: usize) -> Result<CsSpace> {
        let space = match self {
            ModelSpec::L1 => CsSpace::l1(n, k)?,
            ModelSpec::Weighted { weights } => CsSpace::weighted(weights.clone(), k)?,
            ModelSpec::Block { block_size } => CsSpace::block(BlockStructure::uniform(n, *block_size)?, k)?,
            ModelSpec::PathGradient => CsSpace::gradient(GraphGradientParams::path(n)?, k)?,
            ModelSpec::GridGradient { rows, cols } => CsSpace::gradient(GraphGradientParams::grid(*rows, *cols)?, k)?,
            ModelSpec::LowRank { rows, cols } => CsSpace::low_rank(*rows, *cols, k)?,
        };
        if space.ambient_dim() != n {
            return Err(Error::input(format!(
                "model has ambient dimension {}, but N = {n}",
                space.ambient_dim()
            )));
        }
        Ok(space)
    }
}

/// `x♮ = a + β·u/‖u‖♯` with `a` a random atom of full measure when one is
/// found and `u` Gaussian in ℋ; `β = 0` gives exact atoms. The guarantee is
/// uniform over signals, so this is only a coverage device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(default)]
    pub beta: f64,
}

const ATOM_DRAWS: usize = 64;

/// A random atom, preferring draws whose measure reaches `K`.
pub fn full_atom(space: &CsSpace, rng: &mut Stream) -> DVector<f64> {
    let k = space.sparsity_level() as f64;
    let mut best = space.random_atom(rng);
    for _ in 1..ATOM_DRAWS {
        if space.atom_measure(&best) >= k - 1e-9 {
            break;
        }
        let a = space.random_atom(rng);
        if space.atom_measure(&a) > space.atom_measure(&best) {
            best = a;
        }
    }
    best
}

pub fn generate_signal(space: &CsSpace, spec: SignalSpec, rng: &mut Stream) -> DVector<f64> {
    let a = full_atom(space, rng);
    let u = space.random_gaussian(rng);
    let s = space.sharp(&u);
    if spec.beta == 0.0 || s == 0.0 {
        return a;
    }
    a + u * (spec.beta / s)
}

/// Unit vector of `ℝ^M` for the noise.
pub fn noise_direction(m: usize, rng: &mut Stream) -> DVector<f64> {
    gaussian_vec(rng, m).normalize()
}

/// One decode against the recovery bound `C0‖x♮ − a‖♯ + C1ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub model: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub error_l2: f64,
    /// `‖x♮ − a‖♯` at the atom used for the bound.
    pub tail_sharp: f64,
    pub c0: f64,
    pub c1: f64,
    pub bound_value: f64,
    /// `bound_value − error_l2`, never clipped.
    pub slack: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub objective: f64,
    /// Solver did not converge; the record is kept but should not be
    /// counted as evidence either way.
    pub flagged: bool,
}

impl TrialRecord {
    pub fn negative_slack(&self, tol: f64) -> bool {
        self.slack < -tol
    }
}

/// Decodes `y = Φx♮ + ε·noise_dir` and evaluates the bound at
/// `a = best_atom_approx(x♮)`.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    space: &CsSpace,
    op: &SensingOperator,
    x_natural: &DVector<f64>,
    epsilon: f64,
    noise_dir: &DVector<f64>,
    constants: GuaranteeConstants,
    solver: &SolverConfig,
    seed: u64,
) -> Result<TrialRecord> {
    check_dim(op.rows(), noise_dir.len())?;
    space.check_dim(x_natural)?;
    if noise_dir.norm() > 1.0 + 1e-12 {
        return Err(Error::input(format!("noise direction has norm {} > 1", noise_dir.norm())));
    }
    let y = op.forward(&space.project_ambient(x_natural))? + noise_dir * epsilon;
    let problem = DecodeProblem::new(space, op, y, epsilon)?;
    let result = decode(&problem, solver)?;
    let a = space.best_atom_approx(x_natural)?;
    let tail_sharp = space.sharp(&(x_natural - &a));
    let error_l2 = space.norm2(&(result.x() - x_natural));
    let bound_value = constants.c0 * tail_sharp + constants.c1 * epsilon;
    Ok(TrialRecord {
        seed,
        model: space.model().id().into(),
        m: op.rows(),
        n: op.cols(),
        k: space.sparsity_level(),
        epsilon,
        error_l2,
        tail_sharp,
        c0: constants.c0,
        c1: constants.c1,
        bound_value,
        slack: bound_value - error_l2,
        converged: result.converged,
        iterations: result.iterations,
        residual: result.residual,
        objective: result.objective,
        flagged: !result.converged,
    })
}
