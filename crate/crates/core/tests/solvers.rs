mod common;

use common::{gaussian_matrix, l1_basic_solution_oracle};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rwplab::cs_space::{BlockStructure, CsSpace, GraphGradientParams};
use rwplab::rng::{gaussian_vec, substream};
use rwplab::solvers::{decode, prox_sharp, DecodeProblem, SensingOperator, SolverConfig};

/// The prox objective is 1-strongly convex, so `p` is the minimizer iff
/// `F(p + d) ≥ F(p) + ½‖d‖²` along every direction and step.
fn assert_prox_optimal(space: &CsSpace, v: &DVector<f64>, t: f64, seed: u64) {
    let p = prox_sharp(space, v, t).unwrap();
    let f = |u: &DVector<f64>| 0.5 * (u - v).norm_squared() + t * space.sharp_norm(u).unwrap();
    let fp = f(&p);
    let mut rng = substream(seed, 1);
    for _ in 0..200 {
        let d = space.project_ambient(&gaussian_vec(&mut rng, v.len()));
        let d = &d / d.norm();
        for s in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let u = &p + &d * s;
            let lower = fp + 0.5 * s * s;
            assert!(f(&u) >= lower - 1e-6 * s * s - 1e-10, "{}: step {s}", space.model().id());
        }
    }
}

#[test]
fn prox_matches_line_search_oracle() {
    let cycle = GraphGradientParams::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let spaces = [
        CsSpace::weighted(vec![1.0, 0.5, 2.0, 1.5], 2).unwrap(),
        CsSpace::block(BlockStructure::new(vec![vec![0, 2], vec![1], vec![3]]).unwrap(), 1).unwrap(),
        CsSpace::low_rank(2, 2, 1).unwrap(),
        CsSpace::gradient(cycle, 1).unwrap(),
        CsSpace::gradient(GraphGradientParams::path(4).unwrap(), 1).unwrap(),
    ];
    for (k, space) in spaces.iter().enumerate() {
        for trial in 0..20u64 {
            let mut rng = substream(100 + k as u64, trial);
            let v = space.project_ambient(&(gaussian_vec(&mut rng, 4) * 2.0));
            let t = rng.random_range(0.05..1.5);
            assert_prox_optimal(space, &v, t, trial);
        }
    }
}

#[test]
fn tv_prox_on_grid_is_optimal() {
    let g = GraphGradientParams::grid(4, 4).unwrap();
    let space = CsSpace::gradient(g, 2).unwrap();
    for trial in 0..10u64 {
        let mut rng = substream(7, trial);
        let v = space.project_ambient(&gaussian_vec(&mut rng, 16));
        assert_prox_optimal(&space, &v, 0.3, trial);
    }
}

#[test]
fn sparse_gaussian_example_is_recovered() {
    let phi = gaussian_matrix(6, 8, 42);
    let op = SensingOperator::dense(phi.clone()).unwrap();
    let space = CsSpace::l1(8, 1).unwrap();
    let mut x = DVector::zeros(8);
    x[2] = 2.0;
    let y = &phi * &x;
    let r = decode(&DecodeProblem::new(&space, &op, y.clone(), 0.0).unwrap(), &SolverConfig::default()).unwrap();
    assert!(r.converged);
    assert!((r.x() - &x).norm() <= 1e-5 * x.norm());
    let (oracle, oracle_x) = l1_basic_solution_oracle(&phi, &y);
    assert!((oracle_x - &x).norm() < 1e-9);
    assert!((r.objective - oracle).abs() <= 1e-5 * oracle);
}

#[test]
fn objective_matches_lp_oracle() {
    for trial in 0..50u64 {
        let mut rng = substream(2024, trial);
        let n = rng.random_range(3..=10);
        let m = rng.random_range(2..=n.min(8));
        let phi = gaussian_matrix(m, n, 1000 + trial);
        let k = rng.random_range(1..=m);
        let mut x = DVector::zeros(n);
        for _ in 0..k {
            x[rng.random_range(0..n)] = rwplab::rng::gaussian(&mut rng);
        }
        let y = &phi * &x;
        let (oracle, _) = l1_basic_solution_oracle(&phi, &y);
        let op = SensingOperator::dense(phi).unwrap();
        let space = CsSpace::l1(n, 1).unwrap();
        // absolute stopping tolerance tight enough for a 1e-5 relative objective
        let cfg = SolverConfig { max_iters: 50_000, tol_primal: 1e-9, tol_dual: 1e-9, ..Default::default() };
        let r = decode(&DecodeProblem::new(&space, &op, y, 0.0).unwrap(), &cfg).unwrap();
        assert!(r.converged, "trial {trial} did not converge");
        assert!(r.residual_ok(0.0));
        assert!(
            (r.objective - oracle).abs() <= 1e-5 * oracle.max(1e-12),
            "trial {trial}: {} vs {oracle}",
            r.objective
        );
    }
}

#[test]
fn noisy_decodes_are_feasible() {
    let spaces = [
        CsSpace::l1(12, 2).unwrap(),
        CsSpace::block(BlockStructure::uniform(12, 3).unwrap(), 1).unwrap(),
        CsSpace::low_rank(3, 4, 1).unwrap(),
        CsSpace::gradient(GraphGradientParams::path(12).unwrap(), 2).unwrap(),
    ];
    for (k, space) in spaces.iter().enumerate() {
        let phi = gaussian_matrix(8, 12, 300 + k as u64) / 8f64.sqrt();
        let op = SensingOperator::dense(phi.clone()).unwrap();
        let mut rng = substream(301, k as u64);
        let x = space.random_atom(&mut rng);
        let y = &phi * &x + gaussian_vec(&mut rng, 8) * 0.01;
        for eps in [0.0, 0.05, 0.2] {
            let cfg = SolverConfig { max_iters: 50_000, ..Default::default() };
            let r = decode(&DecodeProblem::new(space, &op, y.clone(), eps).unwrap(), &cfg).unwrap();
            if r.converged {
                assert!(r.residual_ok(eps), "{} eps {eps}: residual {}", space.model().id(), r.residual);
            }
            assert!(r.converged, "{} eps {eps} did not converge", space.model().id());
        }
    }
}

#[test]
fn smoothed_primal_residual_is_non_increasing() {
    for trial in 0..10u64 {
        let phi = gaussian_matrix(6, 10, 500 + trial);
        let op = SensingOperator::dense(phi.clone()).unwrap();
        let space = CsSpace::l1(10, 2).unwrap();
        let mut x = DVector::zeros(10);
        x[(trial % 10) as usize] = 1.0;
        x[((trial + 3) % 10) as usize] = -0.5;
        for eps in [0.0, 0.1] {
            let y = &phi * &x;
            let cfg = SolverConfig { record_history: true, ..Default::default() };
            let r = decode(&DecodeProblem::new(&space, &op, y, eps).unwrap(), &cfg).unwrap();
            let h = &r.history;
            let windows: Vec<f64> = h.chunks(20).filter(|c| c.len() == 20).map(|c| c.iter().sum::<f64>() / 20.0).collect();
            let floor = 1e-7 * 20.0;
            for w in windows.windows(2) {
                assert!(w[1] <= w[0] + floor, "trial {trial} eps {eps}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn identity_any_measurement() {
    let space = CsSpace::low_rank(2, 3, 1).unwrap();
    let op = SensingOperator::dense(DMatrix::identity(6, 6)).unwrap();
    let y = DVector::from_row_slice(&[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
    let r = decode(&DecodeProblem::new(&space, &op, y.clone(), 0.0).unwrap(), &SolverConfig::default()).unwrap();
    assert!((r.x() - &y).norm() < 1e-8);
    assert!((r.objective - space.sharp_norm(&y).unwrap()).abs() < 1e-8);
}

#[test]
fn adaptive_penalty_reaches_the_same_optimum() {
    let op = rwplab::ensembles::EnsembleSpec::new(rwplab::ensembles::EnsembleKind::Orthonormalized, 16, 32, 9)
        .generate()
        .unwrap();
    let space = CsSpace::l1(32, 3).unwrap();
    let mut rng = substream(610, 0);
    let x = gaussian_vec(&mut rng, 32);
    let y = op.forward(&x).unwrap();
    let fixed = SolverConfig { max_iters: 50_000, ..Default::default() };
    let adaptive = SolverConfig { adaptive_penalty: true, ..fixed.clone() };
    let a = decode(&DecodeProblem::new(&space, &op, y.clone(), 0.3).unwrap(), &fixed).unwrap();
    let b = decode(&DecodeProblem::new(&space, &op, y, 0.3).unwrap(), &adaptive).unwrap();
    assert!(a.converged && b.converged);
    assert!(b.residual_ok(0.3));
    assert!((a.objective - b.objective).abs() <= 1e-5 * a.objective, "{} vs {}", a.objective, b.objective);
}
