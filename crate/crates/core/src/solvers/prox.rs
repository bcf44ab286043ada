use nalgebra::{DMatrix, DVector};

use crate::cs_space::{piecewise_mean, CsSpace, GraphGradientParams, Model};
use crate::error::{Error, Result};
use crate::linalg::{flatten_row_major, unflatten_row_major, Svd};

/// Warm-start state carried between successive prox evaluations.
#[derive(Debug, Clone, Default)]
pub struct ProxWorkspace {
    tv_dual: Option<DVector<f64>>,
}

/// Duality-gap target for the TV prox, relative to `max(1, ‖v‖²)`. Since
/// `½‖u − u*‖² ≤ gap`, this pins the primal error near 1e-7 relative.
const TV_GAP_TOL: f64 = 1e-14;
const TV_MAX_ITERS: usize = 20_000;
const TV_POLISH_EVERY: usize = 25;

/// `argmin_u ½‖u − v‖² + t‖u‖♯`.
pub fn prox_sharp(space: &CsSpace, v: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    space.check_dim(v)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::input(format!("prox parameter t = {t} must be positive")));
    }
    Ok(prox_sharp_with(space, v, t, &mut ProxWorkspace::default()))
}

pub(crate) fn prox_sharp_with(space: &CsSpace, v: &DVector<f64>, t: f64, ws: &mut ProxWorkspace) -> DVector<f64> {
    match space.model() {
        Model::WeightedSparsity(p) => {
            DVector::from_fn(v.len(), |i, _| soft_threshold(v[i], t * p.weights()[i]))
        }
        Model::BlockSparsity(b) => {
            let mut out = DVector::zeros(v.len());
            for (blk, n) in b.blocks().iter().zip(b.block_norms(v)) {
                if n > t {
                    let scale = 1.0 - t / n;
                    for &i in blk {
                        out[i] = scale * v[i];
                    }
                }
            }
            out
        }
        Model::LowRank(p) => {
            let svd = Svd::new(&unflatten_row_major(v, p.rows, p.cols));
            let s = svd.singular_values.map(|s| (s - t).max(0.0));
            flatten_row_major(&svd.recompose(&s))
        }
        Model::GradientSparsity(g) => tv_prox(g, v, t, &mut ws.tv_dual),
    }
}

pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `center + min(1, radius/‖u − center‖)(u − center)`.
pub fn project_l2_ball(u: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = u - center;
    let n = d.norm();
    if n <= radius {
        u.clone()
    } else if n == 0.0 || radius <= 0.0 {
        center.clone()
    } else {
        center + d * (radius / n)
    }
}

/// TV prox through its dual `min_{|p| ≤ t} ½‖v − ∇ᵀp‖²`, solved by
/// projected accelerated gradient with step `1/(2Δ)` and adaptive restart.
/// Every few iterations the current active set is frozen and the free
/// edges are solved exactly; the polished point is kept when its gap is
/// below tolerance.
fn tv_prox(g: &GraphGradientParams, v: &DVector<f64>, t: f64, warm: &mut Option<DVector<f64>>) -> DVector<f64> {
    let m = g.edges().len();
    if m == 0 || g.max_total_degree() == 0 {
        return v.clone();
    }
    let step = 1.0 / (2.0 * g.max_total_degree() as f64);
    let tol = TV_GAP_TOL * v.norm_squared().max(1.0);
    let clip = |p: &mut DVector<f64>| p.apply(|x| *x = x.clamp(-t, t));

    let mut p = match warm.take() {
        Some(mut w) if w.len() == m => {
            clip(&mut w);
            w
        }
        _ => DVector::zeros(m),
    };
    let mut y = p.clone();
    let mut theta: f64 = 1.0;
    let mut best_u = v - g.divergence_adjoint(&p);
    let mut best_gap = tv_gap(g, &best_u, &p, t);

    for k in 1..=TV_MAX_ITERS {
        if best_gap <= tol {
            break;
        }
        let uy = v - g.divergence_adjoint(&y);
        let mut next = &y + g.gradient(&uy) * step;
        clip(&mut next);
        let restart = (&y - &next).dot(&(&next - &p)) > 0.0;
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        if restart {
            y = next.clone();
            theta = 1.0;
        } else {
            y = &next + (&next - &p) * ((theta - 1.0) / theta_next);
            theta = theta_next;
        }
        p = next;

        let u = v - g.divergence_adjoint(&p);
        let gap = tv_gap(g, &u, &p, t);
        if gap < best_gap {
            best_gap = gap;
            best_u = u;
        }
        if k % TV_POLISH_EVERY == 0 && best_gap > tol {
            if let Some((pp, up, gp)) = polish_active_set(g, v, &p, t) {
                if gp < best_gap {
                    best_gap = gp;
                    best_u = up;
                    if gp <= tol {
                        p = pp;
                    }
                }
            }
        }
    }
    *warm = Some(p);
    best_u
}

/// Duality gap `t‖∇u‖₁ − ⟨∇u, p⟩` for `u = v − ∇ᵀp`, `|p| ≤ t`.
fn tv_gap(g: &GraphGradientParams, u: &DVector<f64>, p: &DVector<f64>, t: f64) -> f64 {
    let d = g.gradient(u);
    (t * d.lp_norm(1) - d.dot(p)).max(0.0)
}

/// Fix edges whose dual sits at the box boundary, then solve the remaining
/// edges exactly: `u` is the per-component mean of `v − ∇_Bᵀp_B` over the
/// free subgraph, and `p_F` the minimum-norm solution of `∇_Fᵀp_F = w − u`.
fn polish_active_set(
    g: &GraphGradientParams,
    v: &DVector<f64>,
    p: &DVector<f64>,
    t: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let n = g.vertices();
    let free: Vec<bool> = p.iter().map(|x| x.abs() < t * (1.0 - 1e-6)).collect();
    let mut pb = DVector::zeros(p.len());
    for (e, x) in p.iter().enumerate() {
        if !free[e] {
            pb[e] = t * x.signum();
        }
    }
    let w = v - g.divergence_adjoint(&pb);
    let (labels, sizes) = g.subgraph_components(&free);
    let u = piecewise_mean(&w, &labels, sizes.len());
    let rhs = &w - &u;

    // (L_F + P_ker) q = rhs, with P_ker the projector onto piecewise constants
    let mut lap = DMatrix::zeros(n, n);
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        if free[e] {
            lap[(i, i)] += 1.0;
            lap[(j, j)] += 1.0;
            lap[(i, j)] -= 1.0;
            lap[(j, i)] -= 1.0;
        }
    }
    for a in 0..n {
        for b in 0..n {
            if labels[a] == labels[b] {
                lap[(a, b)] += 1.0 / sizes[labels[a]] as f64;
            }
        }
    }
    let q = lap.cholesky()?.solve(&rhs);
    let dq = g.gradient(&q);
    let mut full = pb;
    for (e, &f) in free.iter().enumerate() {
        if f {
            full[e] = dq[e].clamp(-t, t);
        }
    }
    let u = v - g.divergence_adjoint(&full);
    let gap = tv_gap(g, &u, &full, t);
    Some((full, u, gap))
}
