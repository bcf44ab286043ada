use nalgebra::{DMatrix, DVector};
use rwplab::cs_space::CsSpace;
use rwplab::ensembles::{EnsembleKind, EnsembleSpec};
use rwplab::experiments::*;
use rwplab::rng::substream;
use rwplab::solvers::{SensingOperator, SolverConfig};
use rwplab::width_rwp::{guarantee_constants, GuaranteeConstants, RwpParams};
use rwplab::Error;

fn sweep_toml(extra: &str) -> String {
    format!(
        r#"
name = "unit"
n = 24
m_values = [12, 18]
k_values = [1, 2]
epsilons = [0.0, 0.05, 0.2]
trials = 6
seed = 3
restarts = 2
{extra}

[model]
model = "l1"

[ensemble]
kind = "orthonormalized"

[signal]
beta = 0.5
"#
    )
}

fn headline_config() -> SweepConfig {
    SweepConfig::from_toml(&sweep_toml("[params]\nsource = \"headline\"")).unwrap()
}

#[test]
fn exact_atom_is_recovered_without_noise() {
    let op = EnsembleSpec::new(EnsembleKind::Orthonormalized, 32, 64, 11).generate().unwrap();
    let space = CsSpace::l1(64, 3).unwrap();
    let consts = guarantee_constants(RwpParams::new(1.0 / (4.0 * 3f64.sqrt()), 0.25).unwrap(), space.bound_l()).unwrap();
    let mut x = DVector::zeros(64);
    x[3] = 1.5;
    x[40] = -0.7;
    x[41] = 2.0;
    let dir = DVector::from_element(32, 0.0);
    let rec = run_trial(&space, &op, &x, 0.0, &dir, consts, &SolverConfig::default(), 0).unwrap();
    assert!(rec.error_l2 <= 1e-5, "{}", rec.error_l2);
    assert!(rec.slack >= -1e-5);
    assert_eq!(rec.tail_sharp, 0.0);
}

#[test]
fn huge_noise_makes_zero_feasible() {
    let op = EnsembleSpec::new(EnsembleKind::Orthonormalized, 10, 20, 2).generate().unwrap();
    let space = CsSpace::l1(20, 2).unwrap();
    let mut rng = substream(4, 0);
    let x = generate_signal(&space, SignalSpec { beta: 0.3 }, &mut rng);
    let dir = noise_direction(10, &mut rng);
    let eps = 10.0 * op.forward(&x).unwrap().norm();
    let consts = GuaranteeConstants { c0: 0.5, c1: 2.0 };
    let rec = run_trial(&space, &op, &x, eps, &dir, consts, &SolverConfig::default(), 0).unwrap();
    assert!(rec.error_l2 <= x.norm() + 1e-6);
    assert!(consts.c1 * eps > consts.c0 * rec.tail_sharp);
    assert!(rec.slack > 0.0);
}

#[test]
fn noise_direction_must_be_in_the_unit_ball() {
    let op = SensingOperator::identity(3).unwrap();
    let space = CsSpace::l1(3, 1).unwrap();
    let x = DVector::from_element(3, 1.0);
    let bad = DVector::from_element(3, 1.0);
    let consts = GuaranteeConstants { c0: 1.0, c1: 1.0 };
    assert!(matches!(
        run_trial(&space, &op, &x, 0.1, &bad, consts, &SolverConfig::default(), 0),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn sweep_config_validation() {
    assert!(SweepConfig::from_toml(&sweep_toml("[params]\nsource = \"headline\"")).is_ok());
    let empty = sweep_toml("[params]\nsource = \"headline\"").replace("k_values = [1, 2]", "k_values = []");
    assert!(matches!(SweepConfig::from_toml(&empty), Err(Error::InvalidInput(_))));
    let zero = sweep_toml("[params]\nsource = \"headline\"").replace("trials = 6", "trials = 0");
    assert!(SweepConfig::from_toml(&zero).is_err());
    assert!(matches!(SweepConfig::from_toml("n = "), Err(Error::Config(_))));
}

#[test]
fn headline_constants_stay_below_eight() {
    let cfg = headline_config();
    let res = forward_experiment(&cfg).unwrap();
    assert_eq!(res.cells.len(), 2 * 2 * 3);
    assert_eq!(res.records.len(), 2 * 2 * 3 * 6);
    for c in &res.cells {
        assert!(c.skipped.is_none());
        let lambda = c.m as f64 / 24.0;
        assert!((c.c1.unwrap() - 4.0 * (1.0 + lambda.sqrt())).abs() < 1e-12);
        assert!(c.c1.unwrap() <= 8.0);
        assert!((c.c0.unwrap() - 1.0 / (c.k as f64).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn forward_sweep_is_deterministic_across_thread_counts() {
    let cfg = headline_config();
    let a = forward_experiment(&cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| forward_experiment(&cfg).unwrap());
    assert_eq!(to_csv_string(&a.records).unwrap(), to_csv_string(&b.records).unwrap());
    assert_eq!(a.summary(&cfg).unwrap().to_json().unwrap(), b.summary(&cfg).unwrap().to_json().unwrap());
}

#[test]
fn errors_grow_with_noise_in_the_median() {
    let res = forward_experiment(&headline_config()).unwrap();
    for pair in res.cells.chunks(3) {
        for w in pair.windows(2) {
            assert!(w[1].epsilon > w[0].epsilon);
            assert!(w[1].median_error >= 0.9 * w[0].median_error, "{:?}", w);
        }
    }
}

#[test]
fn validated_cells_have_no_negative_slack() {
    // with ρ ≤ 1/(4√K) a violation-free search needs a kernel whose vectors
    // all have ℓ₁/ℓ₂ > 4√K; a square orthogonal Φ qualifies trivially
    let cfg = SweepConfig::from_toml(
        &sweep_toml("[params]\nsource = \"headline\"").replace("m_values = [12, 18]", "m_values = [18, 24]"),
    )
    .unwrap();
    let res = forward_experiment(&cfg).unwrap();
    assert!(res.cells.iter().any(|c| c.rwp_validated == Some(true)));
    assert!(res.cells.iter().filter(|c| c.m == 18).all(|c| c.rwp_validated == Some(false)));
    for c in res.cells.iter().filter(|c| c.rwp_validated == Some(true)) {
        assert_eq!(c.negative_slack, 0, "{c:?}");
    }
}

#[test]
fn rip_sourced_cells_are_skipped_with_a_reason() {
    let cfg = SweepConfig::from_toml(
        &sweep_toml("[params]\nsource = \"rip\"\nj = 9")
            .replace("n = 24", "n = 12")
            .replace("m_values = [12, 18]", "m_values = [10]"),
    )
    .unwrap();
    let res = forward_experiment(&cfg).unwrap();
    assert!(res.records.is_empty());
    for c in &res.cells {
        let reason = c.skipped.as_deref().unwrap();
        assert!(reason.contains("RIP constant") || reason.contains("1/(4L)"), "{reason}");
    }
}

#[test]
fn summary_embeds_version_seed_and_hash() {
    let cfg = headline_config();
    let res = forward_experiment(&cfg).unwrap();
    let summary = res.summary(&cfg).unwrap();
    assert_eq!(summary.schema_version, SCHEMA_VERSION);
    assert_eq!(summary.seed, 3);
    assert_eq!(summary.config_hash, config_hash(&cfg).unwrap());
    assert_eq!(summary.config_hash.len(), 64);
    let json: serde_json::Value = serde_json::from_str(&summary.to_json().unwrap()).unwrap();
    assert_eq!(json["config"]["n"], 24);
    let mut other = cfg.clone();
    other.seed = 4;
    assert_ne!(config_hash(&other).unwrap(), summary.config_hash);
    let plot = res.plot_data(&cfg);
    assert_eq!(plot.series.len(), 2 * 2 * 3);
    assert!(plot.series.iter().all(|s| s.x == vec![12.0, 18.0]));
}

#[test]
fn kernel_direction_gives_a_consistent_converse() {
    let mut phi = DMatrix::<f64>::zeros(5, 8);
    for i in 0..5 {
        phi[(i, i + 1)] = 1.0;
    }
    let op = SensingOperator::dense(phi).unwrap();
    let space = CsSpace::l1(8, 1).unwrap();
    let rep = converse_experiment(0.1, 1.0, &space, &op, 4, 4, 0, &SolverConfig::default()).unwrap();
    assert!(rep.violation_found);
    assert!(!rep.uniformly_good);
    assert!(!rep.contradiction);
    let last = rep.records.last().unwrap();
    assert!((last.error_l2 - 1.0).abs() < 1e-6 && last.slack < 0.0);
}

#[test]
fn generous_measurements_give_a_consistent_converse() {
    let op = EnsembleSpec::new(EnsembleKind::Orthonormalized, 30, 32, 5).generate().unwrap();
    let space = CsSpace::l1(32, 1).unwrap();
    let rep = converse_experiment(0.25, 10.0, &space, &op, 10, 4, 1, &SolverConfig::default()).unwrap();
    assert!(!rep.violation_found);
    assert!(rep.uniformly_good);
    assert_eq!(count_contradictions(&[rep]), 0);
}

#[test]
fn study_formulas_and_small_run() {
    let cfg = StudyConfig {
        n: 40,
        m: 20,
        j_values: vec![3, 20],
        seeds: 6,
        k: 2,
        seed: 0,
        rip_samples: 20,
        success_tolerance: 1e-4,
        cai_zhang_resolution: 1e-2,
        solver: SolverConfig::default(),
    };
    let rep = rwp_not_rip_study(&cfg).unwrap();
    assert_eq!(rep.rows[0].delta_lower_bound, 0.0);
    assert!((rep.rows[1].delta_lower_bound - 17.0 / 25.0).abs() < 1e-15);
    assert!(!rep.rows[1].cai_zhang_feasible);
    assert!(rep.rows[1].sampled_delta_median > 0.0);
    assert_eq!(rep.table().len(), 2);
    assert!(rep.recovery.success_rate >= 0.5);
    assert!(rep.cai_zhang_k_star.unwrap() <= 25);
}

#[test]
fn width_calibration_and_trig_datapoint() {
    let cal = calibrate_width_constant(32, &[2, 4], 300, 1, &[3.0, 1.0, 2.0]).unwrap();
    assert_eq!(cal.widths.len(), 2);
    if let Some(c) = cal.calibrated_c {
        assert!([1.0, 2.0, 3.0].contains(&c));
    }
    let t = trig_rwp_datapoint(16, 8, RwpParams::new(0.7, 0.1).unwrap(), 3, 2, 0).unwrap();
    assert!(t.no_violation <= 3);
    assert!(t.note.contains("without replacement"));
}
