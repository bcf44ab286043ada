use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{binomial, next_combination};
use crate::rng::substream;
use crate::solvers::SensingOperator;

/// Largest number of supports enumerated exhaustively.
pub const ENUMERATION_GUARD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub j: usize,
    /// `max(1 − σ_min, σ_max − 1)`.
    pub delta_no_squares: f64,
    /// `max(1 − σ_min², σ_max² − 1)`.
    pub delta_squares: f64,
    /// Support attaining the no-squares constant.
    pub worst_support: Vec<usize>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub supports_checked: u64,
    /// False in sampling mode, where the deltas are only lower bounds.
    pub exhaustive: bool,
}

struct Extremes {
    sigma_min: f64,
    sigma_max: f64,
    worst: Vec<usize>,
    worst_delta: f64,
    count: u64,
}

impl Extremes {
    fn new() -> Self {
        Extremes { sigma_min: f64::INFINITY, sigma_max: 0.0, worst: Vec::new(), worst_delta: f64::NEG_INFINITY, count: 0 }
    }

    fn visit(&mut self, phi: &DMatrix<f64>, support: &[usize]) {
        let (smin, smax) = support_singular_range(phi, support);
        self.sigma_min = self.sigma_min.min(smin);
        self.sigma_max = self.sigma_max.max(smax);
        let d = (1.0 - smin).max(smax - 1.0);
        if d > self.worst_delta {
            self.worst_delta = d;
            self.worst = support.to_vec();
        }
        self.count += 1;
    }

    fn report(self, j: usize, exhaustive: bool) -> RipReport {
        let (smin, smax) = (self.sigma_min, self.sigma_max);
        RipReport {
            j,
            delta_no_squares: (1.0 - smin).max(smax - 1.0),
            delta_squares: (1.0 - smin * smin).max(smax * smax - 1.0),
            worst_support: self.worst,
            sigma_min: smin,
            sigma_max: smax,
            supports_checked: self.count,
            exhaustive,
        }
    }
}

/// Extremal singular values of the column submatrix `Φ_S`, from the
/// eigenvalues of `Φ_SᵀΦ_S`.
pub fn support_singular_range(phi: &DMatrix<f64>, support: &[usize]) -> (f64, f64) {
    let sub = phi.select_columns(support);
    let gram = sub.tr_mul(&sub);
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let lmax = eig.iter().cloned().fold(0.0, f64::max);
    (lmin.sqrt(), lmax.sqrt())
}

fn check_support_size(op: &SensingOperator, j: usize) -> Result<()> {
    if j == 0 || j > op.cols() {
        return Err(Error::input(format!("support size J = {j} must lie in 1..={}", op.cols())));
    }
    Ok(())
}

/// Tightest RIP constants over all size-J supports.
pub fn rip_enumerate(op: &SensingOperator, j: usize) -> Result<RipReport> {
    check_support_size(op, j)?;
    let n = op.cols();
    let count = binomial(n, j);
    if count > ENUMERATION_GUARD {
        return Err(Error::Guard(format!(
            "C({n}, {j}) = {count:.3e} supports exceed the enumeration guard {ENUMERATION_GUARD:.0e}; use sampling mode"
        )));
    }
    let mut ext = Extremes::new();
    let mut idx: Vec<usize> = (0..j).collect();
    loop {
        ext.visit(op.matrix(), &idx);
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    Ok(ext.report(j, true))
}

/// RIP constants over `samples` uniformly random supports; a lower bound on
/// the true constants.
pub fn rip_sample(op: &SensingOperator, j: usize, samples: usize, seed: u64) -> Result<RipReport> {
    check_support_size(op, j)?;
    if samples == 0 {
        return Err(Error::input("sampling mode needs at least one support"));
    }
    let mut ext = Extremes::new();
    for s in 0..samples as u64 {
        let mut rng = substream(seed, s);
        let mut support = sample(&mut rng, op.cols(), j).into_vec();
        support.sort_unstable();
        ext.visit(op.matrix(), &support);
    }
    Ok(ext.report(j, false))
}
