//! Acceptance suite, one line per criterion.
//!
//! The whole suite runs twice (the second time on a 3-thread pool) and the
//! serialized artifacts of both runs are compared byte for byte. Artifacts of
//! the first run are kept under `$CARGO_TARGET_TMPDIR/acceptance/`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::{json, Value};

use common::{gaussian_matrix, l1_basic_solution_oracle, random_space, thickened_point, FAMILIES};
use rwplab::cs_space::CsSpace;
use rwplab::ensembles::{EnsembleKind, EnsembleSpec};
use rwplab::experiments::{forward_experiment, rwp_not_rip_study, to_csv_string, StudyConfig, SweepConfig};
use rwplab::grassmann::{construct_nearby_subspace, gap_metric, min_max_correlation, Subspace};
use rwplab::rng::{gaussian, substream};
use rwplab::solvers::{decode, DecodeProblem, SensingOperator, SolverConfig};
use rwplab::width_rwp::{
    cai_zhang_feasible, cai_zhang_threshold, converse_constants, gaussian_width_mc, guarantee_constants, rip_enumerate,
    rip_to_rwp, rwp_search, RwpParams,
};

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
    budget: Duration,
    elapsed: Duration,
}

/// Byte artifacts keyed by file name.
type Artifacts = BTreeMap<String, Vec<u8>>;

fn put_json(art: &mut Artifacts, name: &str, v: &Value) {
    art.insert(name.into(), (serde_json::to_string_pretty(v).unwrap() + "\n").into_bytes());
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn criterion_1(art: &mut Artifacts) -> (bool, String) {
    let r = rip_to_rwp(9, 0.2).unwrap();
    let g = guarantee_constants(RwpParams::new(0.05, 0.25).unwrap(), 4.0).unwrap();
    let c = converse_constants(1.0, 2.0).unwrap();
    let ok = r.rho == 1.0 && r.alpha == 2.0 / 15.0 && g.c0 == 0.2 && g.c1 == 8.0 && c.rho == 2.0 && c.alpha == 0.25;
    put_json(art, "c1_constants.json", &json!({"rip_to_rwp": r, "guarantee": g, "converse": c}));
    (ok, format!("rip→rwp ({}, {}), guarantee ({}, {}), converse ({}, {})", r.rho, r.alpha, g.c0, g.c1, c.rho, c.alpha))
}

fn criterion_2(art: &mut Artifacts) -> (bool, String) {
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    let mut unconverged = 0;
    let mut rows = Vec::new();
    for trial in 0..50u64 {
        let mut rng = substream(0xACC2, trial);
        let n = rng.random_range(3..=10);
        let m = rng.random_range(2..=n.min(8));
        let phi = gaussian_matrix(m, n, derive(2, trial));
        let k = rng.random_range(1..=m);
        let mut x = DVector::zeros(n);
        for _ in 0..k {
            x[rng.random_range(0..n)] = gaussian(&mut rng);
        }
        let y = &phi * &x;
        let (oracle, _) = l1_basic_solution_oracle(&phi, &y);
        let op = SensingOperator::dense(phi).unwrap();
        let space = CsSpace::l1(n, 1).unwrap();
        let cfg = SolverConfig { max_iters: 50_000, tol_primal: 1e-9, tol_dual: 1e-9, ..Default::default() };
        let r = decode(&DecodeProblem::new(&space, &op, y, 0.0).unwrap(), &cfg).unwrap();
        let rel = (r.objective - oracle).abs() / oracle.max(1e-12);
        worst = worst.max(rel);
        if !r.converged {
            unconverged += 1;
        } else if !r.residual_ok(0.0) {
            infeasible += 1;
        }
        rows.push(json!({"n": n, "m": m, "objective": r.objective, "oracle": oracle, "converged": r.converged}));
    }
    put_json(art, "c2_lp_oracle.json", &Value::Array(rows));
    (
        worst <= 1e-5 && infeasible == 0 && unconverged == 0,
        format!("max relative objective gap {worst:.2e}, {unconverged} unconverged, {infeasible} infeasible"),
    )
}

fn derive(a: u64, b: u64) -> u64 {
    rwplab::rng::derive_seed(&[0xACCE, a, b])
}

fn criterion_3(art: &mut Artifacts) -> (bool, String) {
    let mut summary = Vec::new();
    let mut failures = 0;
    for (family, name) in FAMILIES.iter().enumerate() {
        let mut worst = [0.0f64; 3];
        let mut bad = 0;
        for trial in 0..1000u64 {
            let mut rng = substream(derive(3, family as u64), trial);
            let space = random_space(family, &mut rng);
            let a = space.random_atom(&mut rng);
            let z = space.random_gaussian(&mut rng) * rng.random_range(0.01..10.0);
            match space.decompose(&a, &z) {
                Ok(d) => {
                    let cert = space.certify(&a, &z, &d);
                    worst[0] = worst[0].max(cert.reconstruction);
                    worst[1] = worst[1].max(cert.orthogonality);
                    worst[2] = worst[2].max(cert.additivity);
                    if !cert.all_ok() {
                        bad += 1;
                    }
                }
                Err(_) => bad += 1,
            }
        }
        failures += bad;
        summary.push(json!({"model": name, "trials": 1000, "failures": bad,
            "max_reconstruction": worst[0], "max_orthogonality": worst[1], "max_additivity": worst[2]}));
    }
    put_json(art, "c3_decomposition.json", &Value::Array(summary));
    (failures == 0, format!("{failures} failures over 4×1000 trials"))
}

fn criterion_4(art: &mut Artifacts) -> (bool, String) {
    let mut rng = substream(derive(4, 0), 0);
    let mut identity = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=32);
        let d = rng.random_range(1..n);
        let x = Subspace::random(n, d, &mut rng).unwrap();
        let y = Subspace::random(n, d, &mut rng).unwrap();
        let (gap, corr) = (gap_metric(&x, &y).unwrap(), min_max_correlation(&x, &y).unwrap());
        identity = identity.max((corr * corr + gap * gap - 1.0).abs());
    }
    let mut contained = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=16);
        let d = rng.random_range(1..=n);
        let alpha = rng.random_range(0.01..=1.0);
        let y = Subspace::random(n, d, &mut rng).unwrap();
        let e = thickened_point(&y, alpha, &mut rng);
        if let Ok(x) = construct_nearby_subspace(&y, &e, alpha) {
            if x.contains(&e, 1e-10) && gap_metric(&x, &y).unwrap() < alpha {
                contained += 1;
            }
        }
    }
    let mut triangle_excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let s: Vec<Subspace> =
            (0..3).map(|_| Subspace::random(n, rng.random_range(0..=n), &mut rng).unwrap()).collect();
        let excess = gap_metric(&s[0], &s[2]).unwrap()
            - gap_metric(&s[0], &s[1]).unwrap()
            - gap_metric(&s[1], &s[2]).unwrap();
        triangle_excess = triangle_excess.max(excess);
    }
    put_json(
        art,
        "c4_grassmann.json",
        &json!({"max_identity_error": identity, "contained": contained, "max_triangle_excess": triangle_excess}),
    );
    (
        identity <= 1e-8 && contained == 1000 && triangle_excess <= 1e-12,
        format!("identity error {identity:.1e}, containment {contained}/1000, triangle excess {triangle_excess:.1e}"),
    )
}

fn criterion_5(art: &mut Artifacts) -> (bool, String) {
    let samples = 10_000;
    let slack = 3.0 / (samples as f64).sqrt();
    let mut ok = true;
    let mut rows = Vec::new();
    let mut detail = Vec::new();
    for n in [8usize, 32, 128] {
        let nf = n as f64;
        let space = CsSpace::l1(n, 1).unwrap();
        let est = gaussian_width_mc(&space, 1.0 / nf.sqrt(), samples, 0.95, derive(5, n as u64)).unwrap();
        let (lo, hi) = ((1.0 - 1.0 / nf) * nf.sqrt() - slack, nf.sqrt() + slack);
        let inside = est.mean > lo && est.mean < hi;
        ok &= inside;
        detail.push(format!("N={n}: {:.4} in ({lo:.4}, {hi:.4})", est.mean));
        rows.push(json!({"n": n, "estimate": est, "lower": lo, "upper": hi}));
    }
    let est = gaussian_width_mc(&CsSpace::l1(1, 1).unwrap(), 1.0, samples, 0.95, derive(5, 1)).unwrap();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    ok &= (est.mean - target).abs() < 0.02;
    detail.push(format!("N=1: {:.4} vs {target:.4}", est.mean));
    rows.push(json!({"n": 1, "estimate": est, "target": target}));
    put_json(art, "c5_width.json", &Value::Array(rows));
    (ok, detail.join("; "))
}

fn criterion_6(art: &mut Artifacts) -> (bool, String) {
    let mut tested = 0;
    let mut violations = 0;
    let mut attempt = 0u64;
    let mut rows = Vec::new();
    while tested < 500 {
        attempt += 1;
        let mut rng = substream(derive(6, 0), attempt);
        let n = rng.random_range(9..=12);
        let j = rng.random_range(9..=n);
        let m = rng.random_range(j..=n);
        let scale = rng.random_range(0.01..0.08);
        let phi = DMatrix::<f64>::identity(m, n) + DMatrix::from_fn(m, n, |_, _| scale * gaussian(&mut rng));
        let op = SensingOperator::dense(phi).unwrap();
        let rip = rip_enumerate(&op, j).unwrap();
        if rip.delta_no_squares >= 1.0 / 3.0 {
            continue;
        }
        let params = rip_to_rwp(j, rip.delta_no_squares).unwrap();
        let rep = rwp_search(&op, &CsSpace::l1(n, 1).unwrap(), params, 4, derive(6, attempt)).unwrap();
        if rep.violation_found() {
            violations += 1;
        }
        rows.push(json!({"attempt": attempt, "n": n, "m": m, "j": j, "delta": rip.delta_no_squares,
            "min_ratio": rep.min_ratio, "violation": rep.violation_found()}));
        tested += 1;
    }
    put_json(art, "c6_rip_implies_rwp.json", &Value::Array(rows));
    (violations == 0, format!("{violations} violations over {tested} operators ({attempt} drawn)"))
}

fn criterion_7(art: &mut Artifacts) -> (bool, String) {
    let (n, m, k) = (64, 32, 3);
    let op = EnsembleSpec::new(EnsembleKind::Orthonormalized, m, n, derive(7, 0)).generate().unwrap();
    let space = CsSpace::l1(n, k).unwrap();
    let rho = 1.0 / (4.0 * space.bound_l());

    // a kernel vector on M+1 coordinates has ℓ₁/ℓ₂ ≤ √(M+1) < 1/ρ, which is
    // an RWP violation at every α > 0
    let phi = op.matrix();
    let lead = phi.columns(0, m).into_owned();
    let w = lead.lu().solve(&(-phi.column(m))).unwrap();
    let mut v = DVector::zeros(n);
    v.rows_mut(0, m).copy_from(&w);
    v[m] = 1.0;
    let kernel_ratio = v.lp_norm(1) / v.norm();
    let leak = (phi * &v).norm() / v.norm();
    let certificate = kernel_ratio < 1.0 / rho && leak < 1e-10;

    let alphas = [0.3, 0.1, 0.03, 0.01, 0.003, 0.001];
    let searches: Vec<Value> = alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let rep = rwp_search(&op, &space, RwpParams::new(rho, alpha).unwrap(), 8, derive(7, i as u64 + 1)).unwrap();
            json!({"alpha": alpha, "violation": rep.violation_found(), "min_ratio": rep.min_ratio})
        })
        .collect();
    let validated: Vec<f64> = searches
        .iter()
        .filter(|s| s["violation"] == false)
        .map(|s| s["alpha"].as_f64().unwrap())
        .collect();

    // headline constants, reported as data
    let cfg = SweepConfig::from_toml(&format!(
        r#"
name = "criterion7"
n = {n}
m_values = [{m}]
k_values = [{k}]
epsilons = [0.0, 0.1]
trials = 100
seed = {seed}

[model]
model = "l1"

[ensemble]
kind = "orthonormalized"

[signal]
beta = 0.5

[params]
source = "headline"

[solver]
max_iters = 100000
"#,
        seed = derive(7, 99)
    ))
    .unwrap();
    let res = forward_experiment(&cfg).unwrap();
    let neg: usize = res.cells.iter().map(|c| c.negative_slack).sum();
    let flagged: usize = res.cells.iter().map(|c| c.flagged).sum();
    let total = res.records.len();
    art.insert("c7_records.csv".into(), to_csv_string(&res.records).unwrap().into_bytes());
    put_json(
        art,
        "c7_forward.json",
        &json!({"rho": rho, "kernel_ratio": kernel_ratio, "kernel_leak": leak, "searches": searches,
            "validated_alphas": validated, "summary": res.summary(&cfg).unwrap()}),
    );
    let pass = !validated.is_empty() && neg == 0;
    let reason = if validated.is_empty() {
        format!(
            "no validated (ρ, α) with ρ ≤ 1/(4L) = {rho:.4}: ker Φ holds a vector with ℓ₁/ℓ₂ = {kernel_ratio:.3} < \
             1/ρ = {:.3} (certificate {certificate}), so every α fails; ",
            1.0 / rho
        )
    } else {
        String::new()
    };
    (
        pass,
        format!(
            "{reason}headline constants: negative slack {neg}/{total} ({flagged} flagged), nonnegative fraction {:.3}",
            1.0 - neg as f64 / total as f64
        ),
    )
}

fn criterion_8(art: &mut Artifacts) -> (bool, String) {
    let cfg = StudyConfig {
        n: 200,
        m: 50,
        j_values: vec![20],
        seeds: 50,
        k: 5,
        seed: derive(8, 0),
        rip_samples: 200,
        success_tolerance: 1e-4,
        cai_zhang_resolution: 1e-2,
        solver: SolverConfig::default(),
    };
    let rep = rwp_not_rip_study(&cfg).unwrap();
    let row = &rep.rows[0];
    let i = row.fraction_exceeding >= 0.9;
    let ii = row.delta_lower_bound == 17.0 / 25.0 && !row.cai_zhang_feasible;
    let iii = rep.recovery.success_rate >= 0.9 && rep.recovery.tolerance == 1e-4;
    art.insert("c8_table.csv".into(), to_csv_string(&rep.table()).unwrap().into_bytes());
    put_json(art, "c8_study.json", &serde_json::to_value(&rep).unwrap());
    (
        i && ii && iii,
        format!(
            "(i) ratio > {} in {:.0}% of seeds; (ii) δ ≥ {:.2}, K={} Cai–Zhang feasible: {}; (iii) K={} recovery {:.0}% \
             (max rel. error {:.1e})",
            row.ratio_threshold,
            100.0 * row.fraction_exceeding,
            row.delta_lower_bound,
            row.implied_k,
            row.cai_zhang_feasible,
            rep.recovery.k,
            100.0 * rep.recovery.success_rate,
            rep.recovery.max_relative_error
        ),
    )
}

fn criterion_9(art: &mut Artifacts) -> (bool, String) {
    let infeasible = (26..=40).all(|k| !cai_zhang_feasible(k, 1e-2).unwrap().feasible);
    let star = cai_zhang_threshold(40, 1e-2).unwrap();
    put_json(art, "c9_cai_zhang.json", &json!({"infeasible_26_to_40": infeasible, "k_star": star}));
    (infeasible && star.is_some_and(|s| s <= 25), format!("26..=40 infeasible: {infeasible}; K* = {star:?}"))
}

type Check = fn(&mut Artifacts) -> (bool, String);

const CHECKS: [(usize, Check, u64); 9] = [
    (1, criterion_1, 0),
    (2, criterion_2, 2),
    (3, criterion_3, 5),
    (4, criterion_4, 2),
    (5, criterion_5, 3),
    (6, criterion_6, 10),
    (7, criterion_7, 15),
    (8, criterion_8, 20),
    (9, criterion_9, 1),
];

fn run_suite() -> (Vec<Outcome>, Artifacts) {
    let mut art = Artifacts::new();
    let outcomes = CHECKS
        .iter()
        .map(|&(id, check, budget_min)| {
            let start = Instant::now();
            let (pass, detail) = check(&mut art);
            let budget = if budget_min == 0 { Duration::from_secs(1) } else { mins(budget_min) };
            Outcome { id, pass, detail, budget, elapsed: start.elapsed() }
        })
        .collect();
    (outcomes, art)
}

fn main() {
    let (mut outcomes, first) = run_suite();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let (_, second) = pool.install(run_suite);

    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    outcomes.push(Outcome {
        id: 10,
        pass: differing.is_empty() && first.len() == second.len(),
        detail: format!("{} artifacts compared, differing: {differing:?}", first.len()),
        budget: Duration::MAX,
        elapsed: Duration::ZERO,
    });

    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    for (name, bytes) in &first {
        std::fs::write(dir.join(name), bytes).unwrap();
    }

    let mut failed = 0;
    for o in &outcomes {
        let in_time = o.elapsed <= o.budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let time = if o.id == 10 { String::new() } else { format!(" [{:.1}s]", o.elapsed.as_secs_f64()) };
        let late = if in_time { "" } else { " over time budget;" };
        println!("criterion {:>2}: {}{time}{late} {}", o.id, if pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed; artifacts in {}", outcomes.len() - failed, dir.display());
    if failed > 0 {
        std::process::exit(1);
    }
}
