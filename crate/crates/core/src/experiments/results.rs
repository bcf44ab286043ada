//! Values measured once and kept in the repository's results file.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::SCHEMA_VERSION;
use crate::cs_space::CsSpace;
use crate::ensembles::{subsampled_trig, EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::grassmann::{rwp_ball_harness, HarnessReport};
use crate::rng::derive_seed;
use crate::width_rwp::{analytic_width_bound_l1, cai_zhang_threshold, gaussian_width_mc, rwp_search, RwpParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthCalibration {
    pub n: usize,
    pub j_values: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Monte Carlo width of `√J·B₁ ∩ 𝕊` per J.
    pub widths: Vec<f64>,
    pub candidates: Vec<f64>,
    /// Smallest candidate c with `width ≤ c√(J ln(N/J))`-type bound at every J.
    pub calibrated_c: Option<f64>,
}

/// Finds the smallest `c` among `candidates` for which the analytic ℓ₁
/// width bound dominates the Monte Carlo width at every J.
pub fn calibrate_width_constant(
    n: usize,
    j_values: &[usize],
    samples: usize,
    seed: u64,
    candidates: &[f64],
) -> Result<WidthCalibration> {
    let space = CsSpace::l1(n, 1)?;
    let widths = j_values
        .iter()
        .map(|&j| {
            gaussian_width_mc(&space, 1.0 / (j as f64).sqrt(), samples, 0.95, derive_seed(&[seed, j as u64]))
                .map(|w| w.mean)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut calibrated = None;
    for c in sorted {
        let ok = j_values
            .iter()
            .zip(&widths)
            .map(|(&j, &w)| analytic_width_bound_l1(j, n, c).map(|b| w <= b))
            .collect::<Result<Vec<bool>>>()?;
        if ok.iter().all(|&b| b) {
            calibrated = Some(c);
            break;
        }
    }
    Ok(WidthCalibration {
        n,
        j_values: j_values.to_vec(),
        samples,
        seed,
        widths,
        candidates: candidates.to_vec(),
        calibrated_c: calibrated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigDatapoint {
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub alpha: f64,
    pub seeds: usize,
    pub restarts: usize,
    pub no_violation: usize,
    pub note: String,
}

/// RWP search on subsampled cosine operators; reported as data only.
pub fn trig_rwp_datapoint(
    n: usize,
    m: usize,
    params: RwpParams,
    seeds: usize,
    restarts: usize,
    seed: u64,
) -> Result<TrigDatapoint> {
    if seeds == 0 {
        return Err(Error::input("need at least one seed"));
    }
    let space = CsSpace::l1(n, 1)?;
    let clean = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let op = subsampled_trig(n, m, derive_seed(&[seed, s as u64]))?;
            rwp_search(&op, &space, params, restarts, derive_seed(&[seed, s as u64, 1])).map(|r| !r.violation_found())
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(TrigDatapoint {
        n,
        m,
        rho: params.rho,
        alpha: params.alpha,
        seeds,
        restarts,
        no_violation: clean.iter().filter(|&&c| c).count(),
        note: "real-field surrogate: rows of the orthonormal cosine basis, sampled without replacement".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub width_calibration: WidthCalibration,
    pub cai_zhang_resolution: f64,
    pub cai_zhang_k_star: Option<usize>,
    pub trig: TrigDatapoint,
    pub grassmann_harness: HarnessReport,
}

/// Recomputes every recorded value from `seed`.
pub fn record_results(seed: u64) -> Result<ResultsFile> {
    let width_calibration =
        calibrate_width_constant(64, &[2, 4, 8, 16], 2000, derive_seed(&[seed, 1]), &[1.0, 1.5, 2.0, 3.0])?;
    let resolution = 1e-2;
    let trig = trig_rwp_datapoint(64, 32, RwpParams::new(1.0 / 2f64.sqrt(), 0.1)?, 20, 8, derive_seed(&[seed, 2]))?;
    let op = EnsembleSpec::new(EnsembleKind::Orthonormalized, 12, 16, derive_seed(&[seed, 3])).generate()?;
    let grassmann_harness =
        rwp_ball_harness(&op, &CsSpace::l1(16, 1)?, 1.0 / 2f64.sqrt(), 0.1, 200, 4, derive_seed(&[seed, 4]))?;
    Ok(ResultsFile {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        width_calibration,
        cai_zhang_resolution: resolution,
        cai_zhang_k_star: cai_zhang_threshold(40, resolution)?,
        trig,
        grassmann_harness,
    })
}
