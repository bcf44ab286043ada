use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rwplab::ensembles::*;
use rwplab::Error;

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.amax()
}

/// Orthogonal projector onto the row space, from an SVD.
fn row_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let r = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
    let v = vt.rows(0, r).transpose();
    &v * v.transpose()
}

fn sample_covariance(rows: &DMatrix<f64>) -> DMatrix<f64> {
    rows.tr_mul(rows) / rows.nrows() as f64
}

#[test]
fn gaussian_is_deterministic_and_seed_sensitive() {
    let a = gaussian_iid(20, 30, 5).unwrap();
    let b = gaussian_iid(20, 30, 5).unwrap();
    assert_eq!(a.matrix(), b.matrix());
    let c = gaussian_iid(20, 30, 6).unwrap();
    let differing = a.matrix().iter().zip(c.matrix().iter()).filter(|(x, y)| (*x - *y).abs() > 1e-12).count();
    assert!(differing as f64 >= 0.99 * 600.0);
}

#[test]
fn gaussian_entry_moments() {
    let g = gaussian_iid(1000, 1000, 17).unwrap();
    let n = g.matrix().len() as f64;
    let mean = g.matrix().sum() / n;
    let var = g.matrix().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.01, "{mean}");
    assert!((var - 1.0).abs() < 0.02, "{var}");
}

#[test]
fn orthonormal_rows_are_fixed_points() {
    let q = dct_matrix(8).rows(0, 3).into_owned();
    let phi = orthonormalize_rows(&q).unwrap();
    assert!(max_abs(&(phi.matrix() - &q)) < 1e-12);
    let phi = orthonormalize_rows(&(&q * 3.0)).unwrap();
    assert!(max_abs(&(phi.matrix() - &q)) < 1e-12);
}

#[test]
fn orthonormalized_gaussian_keeps_row_space() {
    let g = gaussian_iid(4, 8, 23).unwrap().matrix().clone();
    let phi = orthonormalize_rows(&g).unwrap();
    let m = phi.matrix();
    assert!(max_abs(&(m * m.transpose() - DMatrix::identity(4, 4))) <= 1e-10);
    assert!(max_abs(&(row_projector(m) - row_projector(&g))) <= 1e-10);
}

#[test]
fn singular_rows_are_rejected_with_the_eigenvalue() {
    let g = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
    let err = orthonormalize_rows(&g).unwrap_err();
    assert!(matches!(err, Error::Precondition(ref m) if m.contains("eigenvalue")), "{err}");
}

#[test]
fn identity_covariance_reproduces_gaussian_iid() {
    let a = correlated_rows(&DMatrix::identity(6, 6), 9, 41).unwrap();
    let b = gaussian_iid(9, 6, 41).unwrap();
    assert_eq!(a.matrix(), b.matrix());
}

#[test]
fn diagonal_covariance_second_moments() {
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
    let rows = correlated_rows(&cov, 100_000, 3).unwrap();
    let s = sample_covariance(rows.matrix());
    assert!((s[(0, 0)] / 4.0 - 1.0).abs() < 0.05);
    assert!((s[(1, 1)] - 1.0).abs() < 0.05);
}

#[test]
fn non_spd_covariance_is_rejected() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(correlated_rows(&cov, 3, 0).is_err());
}

#[test]
fn spiked_sample_covariance_top_eigenvalue() {
    let (cov, stats) = spiked_covariance(20, 7).unwrap();
    let rows = correlated_rows(&cov, 100_000, 8).unwrap();
    let top = SymmetricEigen::new(sample_covariance(rows.matrix())).eigenvalues.max();
    assert!((top / stats.sigma_max_sq - 1.0).abs() < 0.1, "{top}");
}

#[test]
fn spiked_stats_match_the_eigensolver() {
    for (n, m) in [(1, 3), (2, 1), (5, 4), (20, 7), (60, 40)] {
        let (cov, stats) = spiked_covariance(n, m).unwrap();
        let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(eig.max(), stats.sigma_max_sq) < 1e-10);
        assert!(rel(eig.min(), stats.sigma_min_sq) < 1e-10);
        assert!(rel(cov.diagonal().max(), stats.v) < 1e-10);
    }
}

#[test]
fn spiked_principal_submatrix_ratio_is_j_plus_one() {
    let (cov, _) = spiked_covariance(20, 7).unwrap();
    let sub = cov.view((0, 0), (5, 5)).into_owned();
    let eig = SymmetricEigen::new(sub).eigenvalues;
    assert!((eig.max() / eig.min() - 6.0).abs() < 1e-10);
}

#[test]
fn spiked_ensemble_is_badly_conditioned_on_small_supports() {
    let (n, m, j) = (60, 40, 10);
    let support: Vec<usize> = (0..j).collect();
    let hits = (0..50u64)
        .filter(|&seed| {
            let op = spiked(n, m, seed).unwrap();
            support_condition_number(op.matrix(), &support) > (j as f64 + 1.0) / 4.0
        })
        .count();
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn full_trig_basis_is_orthogonal() {
    let op = subsampled_trig(16, 16, 2).unwrap();
    let m = op.matrix();
    assert!(max_abs(&(m.tr_mul(m) - DMatrix::identity(16, 16))) <= 1e-10);
}

#[test]
fn trig_rows_are_distinct_and_rescaled() {
    for seed in 0..10 {
        let op = subsampled_trig(64, 32, seed).unwrap();
        let idx = op.row_indices().unwrap();
        assert!(idx.windows(2).all(|w| w[0] < w[1]) && idx[31] < 64);
        for i in 0..32 {
            assert!((op.matrix().row(i).norm() - 2f64.sqrt()).abs() < 1e-12);
        }
    }
}

#[test]
fn container_round_trip() {
    let op = subsampled_trig(12, 5, 9).unwrap();
    let mut buf = Vec::new();
    write_container(&mut buf, &op).unwrap();
    assert_eq!(buf.len(), 40 + 12 * 5 * 8);
    assert_eq!(&buf[0..4], b"RWPL");
    let (header, back) = read_container(buf.as_slice()).unwrap();
    assert_eq!(header, ContainerHeader { kind: Some(EnsembleKind::SubsampledTrig), m: 5, n: 12, seed: Some(9) });
    assert_eq!(back.matrix(), op.matrix());
    assert_eq!(back.metadata().ensemble, "subsampled_trig");

    let mut side = Vec::new();
    write_sidecar(&mut side, &op).unwrap();
    let desc: OperatorDescriptor = serde_json::from_slice(&side).unwrap();
    assert_eq!(desc.row_indices.as_deref(), op.row_indices());
    assert_eq!((desc.m, desc.n, desc.seed), (5, 12, Some(9)));
}

#[test]
fn corrupt_containers_are_input_errors() {
    let op = gaussian_iid(2, 2, 1).unwrap();
    let mut buf = Vec::new();
    write_container(&mut buf, &op).unwrap();
    assert!(matches!(read_container(&buf[..buf.len() - 1]), Err(Error::InvalidInput(_))));
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_container(bad.as_slice()), Err(Error::InvalidInput(_))));
    assert!(read_container(&buf[..10]).is_err());
}

#[test]
fn text_vectors_round_trip_and_skip_comments() {
    let x = DVector::from_vec(vec![0.1, -2.5e-300, 1.0 / 3.0, 7.0]);
    let mut buf = Vec::new();
    write_text_vector(&mut buf, &x).unwrap();
    assert_eq!(read_text_vector(buf.as_slice()).unwrap(), x);
    let hand = "# y\n1\n\n  2.5 \n-3e-2\n";
    assert_eq!(read_text_vector(hand.as_bytes()).unwrap().as_slice(), &[1.0, 2.5, -0.03]);
    assert!(read_text_vector("1\nabc\n".as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn specs_regenerate_bit_identically(seed in any::<u64>(), m in 1usize..6, extra in 0usize..6, which in 0usize..4) {
        let n = m + extra;
        let kind = [EnsembleKind::GaussianIid, EnsembleKind::Orthonormalized, EnsembleKind::Spiked, EnsembleKind::SubsampledTrig][which];
        let spec = EnsembleSpec::new(kind, m, n, seed);
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        prop_assert_eq!(a.matrix(), b.matrix());
        let json = serde_json::to_string(&spec).unwrap();
        let back: EnsembleSpec = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn orthonormalized_rows_are_orthonormal(seed in any::<u64>(), m in 1usize..8, extra in 0usize..8) {
        let op = EnsembleSpec::new(EnsembleKind::Orthonormalized, m, m + extra + 1, seed).generate().unwrap();
        let g = op.matrix() * op.matrix().transpose();
        prop_assert!(max_abs(&(g - DMatrix::identity(m, m))) <= 1e-10);
    }
}
