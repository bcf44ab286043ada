use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{ExperimentSummary, PlotData, PlotSeries};
use super::{generate_signal, noise_direction, run_trial, ModelSpec, SignalSpec, TrialRecord};
use crate::cs_space::CsSpace;
use crate::ensembles::{EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::solvers::{SensingOperator, SolverConfig};
use crate::width_rwp::{
    guarantee_constants, measurement_budget, rip_enumerate, rip_to_rwp, rwp_search, BudgetScheme, GuaranteeConstants,
    RwpParams,
};

/// Slack below `−SLACK_TOL` counts as a violation of the bound.
pub const SLACK_TOL: f64 = 1e-5;

/// Where a cell's `(ρ, α)` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ParamsSource {
    Fixed { rho: f64, alpha: f64 },
    /// Measure the no-squares constant of order `j` by enumeration and
    /// convert with `ρ = 3/√J`, `α = 1/3 − δ`.
    Rip { j: usize },
    /// `ρ = 1/(4√K)`, `α = 1/(2(1 + √λ))` with `λ = M/N`, so that
    /// `C0 = 1/√K` and `C1 = 4(1 + √λ) ≤ 8`.
    Headline,
    /// α from a measurement budget, ρ given.
    Budget { scheme: BudgetScheme, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleChoice {
    pub kind: EnsembleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

fn default_name() -> String {
    "forward".into()
}

fn default_restarts() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    pub n: usize,
    pub m_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub ensemble: EnsembleChoice,
    #[serde(default)]
    pub signal: SignalSpec,
    pub params: ParamsSource,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec { beta: 0.0 }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.k_values.is_empty() || self.epsilons.is_empty() {
            return Err(Error::input("sweep grid over (M, K, ε) must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::input("trials per cell must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::input("restarts must be at least 1"));
        }
        if self.n == 0 || self.m_values.contains(&0) || self.k_values.contains(&0) {
            return Err(Error::input("N, M and K must be positive"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::input(format!("ε = {e} must be a nonnegative number")));
        }
        if !(self.signal.beta >= 0.0) {
            return Err(Error::input(format!("signal β = {} must be nonnegative", self.signal.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub m: usize,
    pub k: usize,
    pub epsilon: f64,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    /// Measurements prescribed by a budget scheme, when that is the source.
    pub budget_m: Option<u64>,
    /// `Some(true)` when `rwp_search` found no violation at `(ρ, α)`.
    pub rwp_validated: Option<bool>,
    pub trials: usize,
    pub flagged: usize,
    pub negative_slack: usize,
    pub nonnegative_slack_fraction: f64,
    pub median_error: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub skipped: Option<String>,
}

impl CellSummary {
    fn skipped(m: usize, k: usize, epsilon: f64, reason: String) -> Self {
        CellSummary {
            m,
            k,
            epsilon,
            rho: None,
            alpha: None,
            c0: None,
            c1: None,
            budget_m: None,
            rwp_validated: None,
            trials: 0,
            flagged: 0,
            negative_slack: 0,
            nonnegative_slack_fraction: f64::NAN,
            median_error: f64::NAN,
            mean_error: f64::NAN,
            max_error: f64::NAN,
            skipped: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardResult {
    pub cells: Vec<CellSummary>,
    pub records: Vec<TrialRecord>,
}

impl ForwardResult {
    pub fn summary(&self, config: &SweepConfig) -> Result<ExperimentSummary<SweepConfig, Vec<CellSummary>>> {
        ExperimentSummary::new(&config.name, config.seed, config.clone(), self.cells.clone())
    }

    /// Per `(K, ε)`: fraction of nonnegative slack and median error against M.
    pub fn plot_data(&self, config: &SweepConfig) -> PlotData {
        let mut series = Vec::new();
        for &k in &config.k_values {
            for &eps in &config.epsilons {
                let cells: Vec<&CellSummary> =
                    self.cells.iter().filter(|c| c.k == k && c.epsilon == eps && c.skipped.is_none()).collect();
                let x: Vec<f64> = cells.iter().map(|c| c.m as f64).collect();
                series.push(PlotSeries {
                    label: format!("K={k} eps={eps} nonnegative slack"),
                    x_label: "M".into(),
                    y_label: "fraction".into(),
                    x: x.clone(),
                    y: cells.iter().map(|c| c.nonnegative_slack_fraction).collect(),
                });
                series.push(PlotSeries {
                    label: format!("K={k} eps={eps} median error"),
                    x_label: "M".into(),
                    y_label: "error_l2".into(),
                    x,
                    y: cells.iter().map(|c| c.median_error).collect(),
                });
            }
        }
        PlotData { experiment: config.name.clone(), series }
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct CellPlan {
    m: usize,
    k: usize,
    space: CsSpace,
    op: SensingOperator,
    params: RwpParams,
    constants: GuaranteeConstants,
    budget_m: Option<u64>,
    validated: bool,
}

fn resolve_params(source: &ParamsSource, op: &SensingOperator, m: usize, n: usize, k: usize) -> Result<(RwpParams, Option<u64>)> {
    match source {
        ParamsSource::Fixed { rho, alpha } => Ok((RwpParams::new(*rho, *alpha)?, None)),
        ParamsSource::Rip { j } => {
            let rip = rip_enumerate(op, *j)?;
            Ok((rip_to_rwp(*j, rip.delta_no_squares)?, None))
        }
        ParamsSource::Headline => {
            let lambda = m as f64 / n as f64;
            Ok((RwpParams::new(1.0 / (4.0 * (k as f64).sqrt()), 1.0 / (2.0 * (1.0 + lambda.sqrt())))?, None))
        }
        ParamsSource::Budget { scheme, rho } => {
            let budget = measurement_budget(*scheme)?;
            Ok((RwpParams::new(*rho, budget.alpha)?, Some(budget.m)))
        }
    }
}

fn plan_cell(config: &SweepConfig, op: &SensingOperator, m: usize, k: usize) -> Result<CellPlan> {
    let space = config.model.space(config.n, k)?;
    let (params, budget_m) = resolve_params(&config.params, op, m, config.n, k)?;
    let constants = guarantee_constants(params, space.bound_l())?;
    let search = rwp_search(op, &space, params, config.restarts, derive_seed(&[config.seed, m as u64, k as u64, 7]))?;
    Ok(CellPlan { m, k, space, op: op.clone(), params, constants, budget_m, validated: !search.violation_found() })
}

/// Runs every `(M, K, ε)` cell. One operator per M and one signal and
/// noise direction per `(M, K, trial)`, shared across ε so that error
/// curves in ε compare like with like. Output order is fixed by the grid.
pub fn forward_experiment(config: &SweepConfig) -> Result<ForwardResult> {
    config.validate()?;
    let mut plans: Vec<std::result::Result<CellPlan, (usize, usize, String)>> = Vec::new();
    for &m in &config.m_values {
        let spec = EnsembleSpec {
            kind: config.ensemble.kind,
            m,
            n: config.n,
            covariance: config.ensemble.covariance.clone(),
            seed: derive_seed(&[config.seed, m as u64]),
        };
        let op = spec.generate();
        for &k in &config.k_values {
            let plan = match &op {
                Ok(op) => plan_cell(config, op, m, k),
                Err(e) => Err(Error::input(e.to_string())),
            };
            plans.push(plan.map_err(|e| (m, k, e.to_string())));
        }
    }

    let jobs: Vec<(usize, usize, usize)> = plans
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_ok())
        .flat_map(|(pi, _)| (0..config.epsilons.len()).flat_map(move |ei| (0..config.trials).map(move |t| (pi, ei, t))))
        .collect();

    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(pi, ei, t)| {
            let plan = plans[pi].as_ref().expect("filtered to planned cells");
            let trial_seed = derive_seed(&[config.seed, plan.m as u64, plan.k as u64, t as u64]);
            let mut rng = substream(trial_seed, 0);
            let x = generate_signal(&plan.space, config.signal, &mut rng);
            let dir = noise_direction(plan.m, &mut rng);
            run_trial(&plan.space, &plan.op, &x, config.epsilons[ei], &dir, plan.constants, &config.solver, trial_seed)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut next = 0;
    for plan in &plans {
        for &eps in &config.epsilons {
            match plan {
                Err((m, k, reason)) => cells.push(CellSummary::skipped(*m, *k, eps, reason.clone())),
                Ok(p) => {
                    let rs = &records[next..next + config.trials];
                    next += config.trials;
                    let mut errs: Vec<f64> = rs.iter().map(|r| r.error_l2).collect();
                    let negative = rs.iter().filter(|r| r.negative_slack(SLACK_TOL)).count();
                    cells.push(CellSummary {
                        m: p.m,
                        k: p.k,
                        epsilon: eps,
                        rho: Some(p.params.rho),
                        alpha: Some(p.params.alpha),
                        c0: Some(p.constants.c0),
                        c1: Some(p.constants.c1),
                        budget_m: p.budget_m,
                        rwp_validated: Some(p.validated),
                        trials: rs.len(),
                        flagged: rs.iter().filter(|r| r.flagged).count(),
                        negative_slack: negative,
                        nonnegative_slack_fraction: 1.0 - negative as f64 / rs.len() as f64,
                        mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
                        max_error: errs.iter().cloned().fold(0.0, f64::max),
                        median_error: median(&mut errs),
                        skipped: None,
                    });
                }
            }
        }
    }
    Ok(ForwardResult { cells, records })
}
