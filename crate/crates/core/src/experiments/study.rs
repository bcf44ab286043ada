use nalgebra::DVector;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cs_space::CsSpace;
use crate::ensembles::{spiked, support_condition_number};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, gaussian, substream};
use crate::solvers::{decode, DecodeProblem, SolverConfig};
use crate::width_rwp::{cai_zhang_feasible, cai_zhang_threshold, rip_sample};

fn default_rip_samples() -> usize {
    200
}

fn default_tolerance() -> f64 {
    1e-4
}

fn default_resolution() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub m: usize,
    pub j_values: Vec<usize>,
    pub seeds: usize,
    /// Sparsity of the recovery trials.
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Random supports per operator for the sampled RIP lower bound.
    #[serde(default = "default_rip_samples")]
    pub rip_samples: usize,
    /// Relative ℓ₂ error counted as successful recovery.
    #[serde(default = "default_tolerance")]
    pub success_tolerance: f64,
    #[serde(default = "default_resolution")]
    pub cai_zhang_resolution: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub j: usize,
    /// `(J + 1)/4`.
    pub ratio_threshold: f64,
    /// Eigenvalue ratio of `Φ_JᵀΦ_J` on the support `{0, …, J−1}`, per seed.
    pub ratios: Vec<f64>,
    pub median_ratio: f64,
    pub fraction_exceeding: f64,
    /// `max(0, (J − 3)/(J + 5))`, the lower bound on any order-J RIP
    /// constant implied by the ratio exceeding `(J + 1)/4`.
    pub delta_lower_bound: f64,
    /// Median over seeds of the sampled squared-convention RIP constant
    /// (itself a lower bound).
    pub sampled_delta_median: f64,
    /// The sparsity level whose Cai–Zhang condition is tested at this J.
    pub implied_k: usize,
    pub cai_zhang_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub k: usize,
    pub seeds: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<StudyRow>,
    pub recovery: RecoverySummary,
    /// Largest K in 1..=40 passing the Cai–Zhang condition.
    pub cai_zhang_k_star: Option<usize>,
}

impl StudyReport {
    /// Comparison table, one line per J.
    pub fn table(&self) -> Vec<StudyTableRow> {
        self.rows
            .iter()
            .map(|r| StudyTableRow {
                j: r.j,
                ratio_threshold: r.ratio_threshold,
                median_ratio: r.median_ratio,
                fraction_exceeding: r.fraction_exceeding,
                delta_lower_bound: r.delta_lower_bound,
                sampled_delta_median: r.sampled_delta_median,
                implied_k: r.implied_k,
                cai_zhang_feasible: r.cai_zhang_feasible,
                recovery_k: self.recovery.k,
                recovery_success_rate: self.recovery.success_rate,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTableRow {
    pub j: usize,
    pub ratio_threshold: f64,
    pub median_ratio: f64,
    pub fraction_exceeding: f64,
    pub delta_lower_bound: f64,
    pub sampled_delta_median: f64,
    pub implied_k: usize,
    pub cai_zhang_feasible: bool,
    pub recovery_k: usize,
    pub recovery_success_rate: f64,
}

/// Spiked-covariance operators: badly conditioned on small supports, so
/// RIP-based guarantees say nothing, while ℓ₁ recovery still succeeds.
pub fn rwp_not_rip_study(config: &StudyConfig) -> Result<StudyReport> {
    let (n, m) = (config.n, config.m);
    if config.seeds == 0 || config.j_values.is_empty() {
        return Err(Error::input("study needs at least one seed and one J"));
    }
    if let Some(&j) = config.j_values.iter().find(|&&j| j == 0 || j > n) {
        return Err(Error::input(format!("J = {j} must lie in 1..={n}")));
    }
    if config.k == 0 || config.k > n {
        return Err(Error::input(format!("recovery sparsity K = {} must lie in 1..={n}", config.k)));
    }
    let op_seed = |s: usize| derive_seed(&[config.seed, s as u64]);
    let ops = (0..config.seeds).into_par_iter().map(|s| spiked(n, m, op_seed(s))).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &j in &config.j_values {
        let support: Vec<usize> = (0..j).collect();
        let threshold = (j as f64 + 1.0) / 4.0;
        let ratios: Vec<f64> = ops.par_iter().map(|op| support_condition_number(op.matrix(), &support)).collect();
        let mut deltas = ops
            .par_iter()
            .enumerate()
            .map(|(s, op)| {
                rip_sample(op, j, config.rip_samples, derive_seed(&[config.seed, s as u64, j as u64]))
                    .map(|r| r.delta_squares)
            })
            .collect::<Result<Vec<f64>>>()?;
        let exceeding = ratios.iter().filter(|&&r| r > threshold).count();
        let mut sorted = ratios.clone();
        rows.push(StudyRow {
            j,
            ratio_threshold: threshold,
            median_ratio: super::sweep::median(&mut sorted),
            fraction_exceeding: exceeding as f64 / ratios.len() as f64,
            ratios,
            delta_lower_bound: ((j as f64 - 3.0) / (j as f64 + 5.0)).max(0.0),
            sampled_delta_median: super::sweep::median(&mut deltas),
            implied_k: j,
            cai_zhang_feasible: cai_zhang_feasible(j, config.cai_zhang_resolution)?.feasible,
        });
    }

    let space = CsSpace::l1(n, config.k)?;
    let errors: Vec<f64> = ops
        .par_iter()
        .enumerate()
        .map(|(s, op)| {
            let mut rng = substream(derive_seed(&[config.seed, s as u64, 0xEC]), 0);
            let support = sample(&mut rng, n, config.k).into_vec();
            let mut x = DVector::zeros(n);
            for i in support {
                x[i] = gaussian(&mut rng);
            }
            let y = op.forward(&x)?;
            let res = decode(&DecodeProblem::new(&space, op, y, 0.0)?, &config.solver)?;
            Ok((res.x() - &x).norm() / x.norm())
        })
        .collect::<Result<_>>()?;
    let successes = errors.iter().filter(|&&e| e <= config.success_tolerance).count();

    Ok(StudyReport {
        n,
        m,
        rows,
        recovery: RecoverySummary {
            k: config.k,
            seeds: config.seeds,
            successes,
            success_rate: successes as f64 / config.seeds as f64,
            max_relative_error: errors.iter().cloned().fold(0.0, f64::max),
            relative_errors: errors,
            tolerance: config.success_tolerance,
        },
        cai_zhang_k_star: cai_zhang_threshold(40, config.cai_zhang_resolution)?,
    })
}
