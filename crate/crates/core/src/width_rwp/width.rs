use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cs_space::{CsSpace, Model};
use crate::error::{Error, Result};
use crate::linalg::{flatten_row_major, unflatten_row_major, Svd};
use crate::rng::{gaussian_vec, substream};
use crate::solvers::{prox_sharp_with, ProxWorkspace};

/// Relative bracket width at which the threshold bisection stops.
const BISECTION_TOL: f64 = 1e-13;
const BISECTION_MAX_STEPS: usize = 200;

/// Monte Carlo estimate of a Gaussian width with a one-sided bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub samples: usize,
    pub upper_conf: f64,
    pub confidence_level: f64,
    pub per_sample_solver_tol: f64,
}

/// `sup ⟨x, g⟩` over `‖x‖₂ ≤ 1, ‖x‖♯ ≤ 1/ρ`.
pub fn width_sample(space: &CsSpace, rho: f64, g: &DVector<f64>) -> Result<f64> {
    check_rho(rho)?;
    space.check_dim(g)?;
    Ok(sharp_ball_maximizer(space, g, 1.0 / rho).map_or(0.0, |(v, _)| v))
}

/// As [`width_sample`], also returning the maximizing unit vector.
pub fn width_maximizer(space: &CsSpace, rho: f64, g: &DVector<f64>) -> Result<Option<(f64, DVector<f64>)>> {
    check_rho(rho)?;
    space.check_dim(g)?;
    Ok(sharp_ball_maximizer(space, g, 1.0 / rho))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::input(format!("ρ = {rho} must be positive")));
    }
    Ok(())
}

/// Maximize `⟨x, g⟩` over `‖x‖₂ ≤ 1, ‖x‖♯ ≤ r`.
///
/// By duality the value is `min_{λ ≥ 0} λr + ‖prox_{λ♯}(g)‖₂`, convex in λ
/// with derivative `r − ‖u‖♯/‖u‖₂` at `u = prox_{λ♯}(g)`. The threshold is
/// bisected on that derivative; the maximizer is `u/‖u‖₂`, a unit vector
/// with `‖x‖♯ ≤ r`. Weighted, block and low-rank models reduce to a
/// weighted ℓ₁ problem on entry magnitudes, block norms or singular values.
/// Returns `None` when `g` vanishes on ℋ.
pub(crate) fn sharp_ball_maximizer(space: &CsSpace, g: &DVector<f64>, r: f64) -> Option<(f64, DVector<f64>)> {
    match space.model() {
        Model::WeightedSparsity(p) => {
            let a = g.map(f64::abs);
            let s = weighted_l1_threshold(&a, p.weights(), r)?;
            let x = DVector::from_fn(g.len(), |i, _| g[i].signum() * s[i]);
            Some(finish(x, g))
        }
        Model::BlockSparsity(b) => {
            let norms = b.block_norms(g);
            let s = weighted_l1_threshold(&DVector::from_vec(norms.clone()), &vec![1.0; norms.len()], r)?;
            let mut x = DVector::zeros(g.len());
            for (j, blk) in b.blocks().iter().enumerate() {
                if s[j] > 0.0 {
                    for &i in blk {
                        x[i] = g[i] * s[j] / norms[j];
                    }
                }
            }
            Some(finish(x, g))
        }
        Model::LowRank(p) => {
            let svd = Svd::new(&unflatten_row_major(g, p.rows, p.cols));
            let k = svd.singular_values.len();
            let s = weighted_l1_threshold(&svd.singular_values, &vec![1.0; k], r)?;
            Some(finish(flatten_row_major(&svd.recompose(&s)), g))
        }
        Model::GradientSparsity(_) => generic_threshold(space, &space.project_ambient(g), r),
    }
}

fn finish(x: DVector<f64>, g: &DVector<f64>) -> (f64, DVector<f64>) {
    let x = &x / x.norm();
    (x.dot(g), x)
}

/// Soft-thresholded magnitudes `(a − λw)₊` at the optimal λ, on the
/// feasible side of the bisection bracket.
fn weighted_l1_threshold(a: &DVector<f64>, w: &[f64], r: f64) -> Option<DVector<f64>> {
    let norm_a = a.norm();
    if norm_a == 0.0 {
        return None;
    }
    let sharp = |s: &DVector<f64>| s.iter().zip(w).map(|(x, w)| x * w).sum::<f64>();
    if sharp(a) <= r * norm_a {
        return Some(a.clone());
    }
    let shrink = |lam: f64| DVector::from_fn(a.len(), |i, _| (a[i] - lam * w[i]).max(0.0));
    let mut lo = 0.0;
    let mut hi = a.iter().zip(w).map(|(a, w)| a / w).fold(0.0, f64::max);
    for _ in 0..BISECTION_MAX_STEPS {
        if hi - lo <= BISECTION_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let s = shrink(mid);
        let n = s.norm();
        if n > 0.0 && sharp(&s) > r * n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = shrink(hi);
    if s.norm() > 0.0 {
        Some(s)
    } else {
        Some(shrink(lo))
    }
}

/// Same bisection using the model's prox directly (TV has no magnitude
/// reduction).
fn generic_threshold(space: &CsSpace, g: &DVector<f64>, r: f64) -> Option<(f64, DVector<f64>)> {
    let norm_g = space.norm2(g);
    if norm_g <= 1e-300 {
        return None;
    }
    if space.sharp(g) <= r * norm_g {
        return Some(finish(g.clone(), g));
    }
    let mut ws = ProxWorkspace::default();
    let mut lo = 0.0;
    let mut hi = norm_g / r;
    let mut best: Option<DVector<f64>> = None;
    for _ in 0..BISECTION_MAX_STEPS {
        if hi - lo <= 1e-10 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let u = space.project_ambient(&prox_sharp_with(space, g, mid, &mut ws));
        let n = u.norm();
        if n > 1e-14 * norm_g && space.sharp(&u) > r * n {
            lo = mid;
        } else {
            hi = mid;
            if n > 1e-14 * norm_g {
                best = Some(u);
            }
        }
    }
    let u = best.unwrap_or_else(|| space.project_ambient(&prox_sharp_with(space, g, lo, &mut ws)));
    if u.norm() == 0.0 {
        return None;
    }
    Some(finish(u, g))
}

/// Average of [`width_sample`] over iid standard Gaussians in ℋ, with the
/// Lipschitz-concentration bound `mean + √(2 ln(1/(1−conf))/n)`.
///
/// Sample `i` draws from substream `(seed, i)` and the mean is reduced in
/// index order, so the result does not depend on the worker count.
pub fn gaussian_width_mc(space: &CsSpace, rho: f64, samples: usize, confidence: f64, seed: u64) -> Result<WidthEstimate> {
    check_rho(rho)?;
    if samples < 2 {
        return Err(Error::input("at least two samples are required"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::input(format!("confidence level {confidence} must lie in (0, 1)")));
    }
    let n = space.ambient_dim();
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let g = space.project_ambient(&gaussian_vec(&mut rng, n));
            sharp_ball_maximizer(space, &g, 1.0 / rho).map_or(0.0, |(v, _)| v)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / samples as f64;
    let upper_conf = mean + (2.0 * (1.0 / (1.0 - confidence)).ln() / samples as f64).sqrt();
    let per_sample_solver_tol = match space.model() {
        Model::GradientSparsity(_) => 1e-7,
        _ => BISECTION_TOL,
    };
    Ok(WidthEstimate { mean, samples, upper_conf, confidence_level: confidence, per_sample_solver_tol })
}

/// `c·√(J ln(cN/J))`.
pub fn analytic_width_bound_l1(j: usize, n: usize, c: f64) -> Result<f64> {
    if j == 0 || j > n {
        return Err(Error::input(format!("need 1 ≤ J ≤ N, got J = {j}, N = {n}")));
    }
    if !(c > 0.0) {
        return Err(Error::input(format!("constant c = {c} must be positive")));
    }
    let arg = c * n as f64 / j as f64;
    if arg <= 1.0 {
        return Err(Error::input(format!("cN/J = {arg} must exceed 1")));
    }
    Ok(c * (j as f64 * arg.ln()).sqrt())
}

/// Monte Carlo estimate of `E‖g_J‖₂`, the norm of the J largest-magnitude
/// entries of a standard Gaussian in ℝ^N.
pub fn top_j_energy_mc(j: usize, n: usize, samples: usize, seed: u64) -> Result<f64> {
    if j == 0 || j > n || samples == 0 {
        return Err(Error::input(format!("need 1 ≤ J ≤ N and samples ≥ 1, got J = {j}, N = {n}")));
    }
    let values: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let mut g: Vec<f64> = gaussian_vec(&mut rng, n).iter().map(|x| x * x).collect();
            g.sort_by(|a, b| b.total_cmp(a));
            g[..j].iter().sum::<f64>().sqrt()
        })
        .collect();
    Ok(values.iter().sum::<f64>() / samples as f64)
}

/// Unit vectors of the sharp ball nearest to `v`; `None` if the shrunk ball
/// misses the sphere in the direction of `v`.
pub(crate) fn project_to_feasible_sphere(space: &CsSpace, v: &DVector<f64>, r: f64) -> Option<DVector<f64>> {
    sharp_ball_maximizer(space, v, r).map(|(_, x)| x)
}
