#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rwplab::linalg::next_combination;
use rwplab::rng::{gaussian, substream};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = substream(seed, 0);
    DMatrix::from_fn(rows, cols, |_, _| gaussian(&mut rng))
}

/// Minimum ℓ₁ norm over `Φx = y` by enumerating basic solutions: every
/// support of size ≤ M with independent columns is solved exactly and the
/// cheapest consistent one is kept.
pub fn l1_basic_solution_oracle(phi: &DMatrix<f64>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let (m, n) = phi.shape();
    let mut best = (f64::INFINITY, DVector::zeros(n));
    if y.norm() == 0.0 {
        return (0.0, DVector::zeros(n));
    }
    for size in 1..=m.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let sub = DMatrix::from_fn(m, size, |i, j| phi[(i, idx[j])]);
            let svd = sub.clone().svd(true, true);
            let smin = svd.singular_values.min();
            if smin > 1e-10 * svd.singular_values.max() {
                if let Ok(xs) = svd.solve(y, 1e-14) {
                    if (&sub * &xs - y).norm() <= 1e-9 * y.norm().max(1.0) {
                        let cost = xs.lp_norm(1);
                        if cost < best.0 {
                            let mut x = DVector::zeros(n);
                            for (j, &i) in idx.iter().enumerate() {
                                x[i] = xs[j];
                            }
                            best = (cost, x);
                        }
                    }
                }
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    best
}

/// Random CS space of the given family, N ≤ 64 and matrices at most 16×16.
pub fn random_space(family: usize, rng: &mut rwplab::rng::Stream) -> rwplab::CsSpace {
    use rand::Rng;
    use rwplab::cs_space::{BlockStructure, GraphGradientParams};
    use rwplab::CsSpace;
    match family {
        0 => {
            let n = rng.random_range(1..=64);
            let weights = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let budget = rng.random_range(1..=n) as f64 * 1.5;
            CsSpace::weighted(weights, budget.ceil() as usize).unwrap()
        }
        1 => {
            let size = rng.random_range(1..=8);
            let blocks = rng.random_range(1..=64 / size);
            CsSpace::block(BlockStructure::uniform(size * blocks, size).unwrap(), rng.random_range(1..=blocks)).unwrap()
        }
        2 => {
            let g = if rng.random_bool(0.5) {
                GraphGradientParams::path(rng.random_range(2..=64)).unwrap()
            } else {
                GraphGradientParams::grid(rng.random_range(1..=8), rng.random_range(2..=8)).unwrap()
            };
            let k = rng.random_range(1..=g.edges().len());
            CsSpace::gradient(g, k).unwrap()
        }
        _ => {
            let rows = rng.random_range(1..=16);
            let cols = rng.random_range(1..=16);
            CsSpace::low_rank(rows, cols, rng.random_range(1..=rows.min(cols))).unwrap()
        }
    }
}

pub const FAMILIES: [&str; 4] = ["weighted", "block", "gradient", "low_rank"];

/// Point of the thickened set `{x : ‖P_{Y⊥}x‖ < α‖x‖}`, by rejection.
pub fn thickened_point(y: &rwplab::grassmann::Subspace, alpha: f64, rng: &mut rwplab::rng::Stream) -> DVector<f64> {
    use rand::Rng;
    loop {
        let inside = y.basis() * rwplab::rng::gaussian_vec(rng, y.dim());
        let scale = rng.random_range(0.0..1.0);
        let x = &inside + rwplab::rng::gaussian_vec(rng, y.ambient()) * (scale * inside.norm() / (y.ambient() as f64).sqrt());
        if y.distance_to(&x) < alpha * x.norm() {
            return x;
        }
    }
}
