use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::densela::{kron_vec, qr};
use crate::models::{random_stable_system, scalar_system};
use crate::qbsys::{QBSystem, QuadraticOperator};
use crate::sim::SnapshotSet;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn orthonormal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    qr(&random(rng, r, c)).0.columns(0, c).into_owned()
}

fn controlled_system(n: usize, m: usize, p: usize, seed: u64) -> QBSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_stable_system(n, seed, 0.3).unwrap();
    let b = random(&mut rng, n, m);
    let c = random(&mut rng, p, n);
    let nl = (0..m).map(|_| random(&mut rng, n, n) * 0.1).collect();
    QBSystem::new(
        base.e().clone(),
        base.a().clone(),
        base.h().clone(),
        nl,
        b,
        Some(c),
    )
    .unwrap()
}

#[test]
fn scalar_lqg_singular_value() {
    let sys = QBSystem::new(
        DMatrix::identity(1, 1),
        DMatrix::from_element(1, 1, -1.0),
        QuadraticOperator::zeros(1, 1),
        Vec::new(),
        DMatrix::from_element(1, 1, 1.0),
        Some(DMatrix::from_element(1, 1, 1.0)),
    )
    .unwrap();
    let art = lqg_balanced_truncation(&sys, 1).unwrap();
    assert_relative_eq!(
        art.sigma.as_ref().unwrap()[0],
        2f64.sqrt() - 1.0,
        epsilon = 1e-12
    );
}

#[test]
fn full_order_balancing_identity() {
    let sys = controlled_system(6, 2, 2, 3);
    let art = lqg_balanced_truncation(&sys, 6).unwrap();
    let sigma = art.sigma.clone().unwrap();
    let (f, c) = art.riccati_residuals.unwrap();
    assert!(f < 1e-8 && c < 1e-8, "{f:e} {c:e}");
    // solving the reduced Riccati equations again returns Sigma itself
    let r = &art.system;
    let ric = crate::densela::solve_riccati_lqg(r.a(), r.b(), r.c().unwrap()).unwrap();
    let s = DMatrix::from_diagonal(&sigma);
    assert!((&ric.filter.x - &s).norm() <= 1e-8 * s.norm());
    assert!((&ric.control.x - &s).norm() <= 1e-8 * s.norm());
}

#[test]
fn lqg_projectors_and_residuals() {
    for (n, seed) in [(2, 1), (4, 2), (7, 5)] {
        let sys = controlled_system(10, 2, 3, seed);
        let art = lqg_balanced_truncation(&sys, n).unwrap();
        let id = &art.left * &art.right;
        assert!((id - DMatrix::<f64>::identity(n, n)).abs().max() < 1e-8);
        let s = art.sigma.as_ref().unwrap();
        assert!(s.iter().all(|&v| v > 0.0));
        assert!(s.as_slice().windows(2).all(|w| w[1] <= w[0]));
        let (f, c) = art.riccati_residuals.unwrap();
        assert!(f <= 1e-6 && c <= 1e-6, "n={n}: {f:e} {c:e}");
        let cert = lqg_sigma_certificate(&art).unwrap();
        assert_eq!(cert.dim(), n);
        assert_eq!(art.system.h().asymmetry(), 0.0);
    }
}

#[test]
fn lqg_order_out_of_range() {
    let sys = controlled_system(4, 1, 1, 0);
    assert!(lqg_balanced_truncation(&sys, 0).is_err());
    assert!(lqg_balanced_truncation(&sys, 5).is_err());
}

#[test]
fn pod_rank_one_reconstructs() {
    let col = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let x = DMatrix::from_columns(&[col.clone(), col.clone(), col.clone()]);
    let pod = pod_basis(&x, 1).unwrap();
    let recon = &pod.basis * (pod.basis.transpose() * &x);
    assert!((recon - &x).norm() < 1e-12 * x.norm());
    assert!(pod_basis(&x, 2).is_err());
}

#[test]
fn pod_full_rank_and_eckart_young() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&mut rng, 8, 20);
    let full = pod_basis(&x, 8).unwrap();
    let recon = &full.basis * (full.basis.transpose() * &x);
    assert!((recon - &x).norm() < 1e-12 * x.norm());
    for n in 1..8 {
        let pod = pod_basis(&x, n).unwrap();
        let vtv = pod.basis.transpose() * &pod.basis;
        assert!((vtv - DMatrix::<f64>::identity(n, n)).abs().max() < 1e-12);
        let err = (&x - &pod.basis * (pod.basis.transpose() * &x)).norm_squared();
        let tail: f64 = pod.singular_values.iter().skip(n).map(|s| s * s).sum();
        assert_relative_eq!(err, tail, max_relative = 1e-10);
    }
}

#[test]
fn pod_blockwise_is_block_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t: Vec<f64> = (0..12).map(f64::from).collect();
    let a = SnapshotSet::new(t.clone(), random(&mut rng, 5, 12), None).unwrap();
    let b = SnapshotSet::new(t, random(&mut rng, 4, 12), None).unwrap();
    let pod = pod_blockwise(&[a, b], 3).unwrap();
    assert_eq!(pod.basis.shape(), (9, 6));
    assert!(pod.basis.view((0, 3), (5, 3)).iter().all(|&v| v == 0.0));
    assert!(pod.basis.view((5, 0), (4, 3)).iter().all(|&v| v == 0.0));
    let vtv = pod.basis.transpose() * &pod.basis;
    assert!((vtv - DMatrix::<f64>::identity(6, 6)).abs().max() < 1e-12);
}

#[test]
fn galerkin_identity_basis_is_noop() {
    let sys = controlled_system(5, 1, 2, 4);
    let r = galerkin_reduce(&sys, &DMatrix::identity(5, 5)).unwrap();
    assert!((r.a() - sys.a()).norm() < 1e-14);
    assert!((r.h().to_dense() - sys.h().to_dense()).norm() < 1e-14);
    assert!((&r.bilinear()[0] - &sys.bilinear()[0]).norm() < 1e-14);
    assert!((r.b() - sys.b()).norm() < 1e-14);
}

#[test]
fn galerkin_projection_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sys = controlled_system(12, 1, 1, 8);
    let v = orthonormal(&mut rng, 12, 4);
    let r = galerkin_reduce(&sys, &v).unwrap();
    assert_eq!(r.h().asymmetry(), 0.0);
    for _ in 0..5 {
        let xr = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_element(1, rng.random_range(-1.0..1.0));
        let lhs = r.rhs(&xr, Some(&u)).unwrap();
        let rhs = v.transpose() * sys.rhs(&(&v * &xr), Some(&u)).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }
}

#[test]
fn galerkin_quadratic_matches_kronecker() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let sys = random_stable_system(30, 1, 1.0).unwrap();
    let v = orthonormal(&mut rng, 30, 5);
    let r = galerkin_reduce(&sys, &v).unwrap();
    let xr = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
    let blockwise = r.h().apply(&xr, &xr);
    let y = &v * &xr;
    let explicit = v.transpose() * (sys.h().to_dense() * kron_vec(&y, &y));
    assert!((blockwise - explicit).norm() < 1e-12);
}

fn synthetic_opinf_data(k: usize, seed: u64) -> (QBSystem, SnapshotSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -2.0]);
    let h = QuadraticOperator::from_dense(&DMatrix::from_row_slice(
        2,
        4,
        &[0.5, 0.1, 0.1, -0.3, 0.0, 0.2, 0.2, 0.7],
    ))
    .unwrap();
    let b = DMatrix::from_row_slice(2, 1, &[1.0, -0.5]);
    let sys = QBSystem::new(DMatrix::identity(2, 2), a, h, Vec::new(), b, None).unwrap();
    let x = random(&mut rng, 2, k);
    let u = random(&mut rng, 1, k);
    let mut snap = SnapshotSet::new((0..k).map(|i| i as f64).collect(), x, Some(u)).unwrap();
    let mut d = DMatrix::zeros(2, k);
    for c in 0..k {
        let xc = snap.x.column(c).into_owned();
        let uc = snap.u.as_ref().unwrap().column(c).into_owned();
        d.set_column(c, &sys.rhs(&xc, Some(&uc)).unwrap());
    }
    snap.xdot = Some(d);
    (sys, snap)
}

#[test]
fn opinf_recovers_synthetic_system() {
    let (sys, snap) = synthetic_opinf_data(40, 1);
    let art =
        operator_inference(&snap, &DMatrix::identity(2, 2), &OpInfOptions::default()).unwrap();
    let r = &art.system;
    assert!((r.a() - sys.a()).abs().max() < 1e-8);
    assert!((r.h().to_dense() - sys.h().to_dense()).abs().max() < 1e-8);
    assert!((r.b() - sys.b()).abs().max() < 1e-8);
    assert_eq!(art.method, RomMethod::Opinf);
}

#[test]
fn opinf_rejects_empty_and_rank_deficient_data() {
    let empty = SnapshotSet::new(Vec::new(), DMatrix::zeros(2, 0), None).unwrap();
    assert!(
        operator_inference(&empty, &DMatrix::identity(2, 2), &OpInfOptions::default()).is_err()
    );
    let (_, snap) = synthetic_opinf_data(4, 2);
    match operator_inference(&snap, &DMatrix::identity(2, 2), &OpInfOptions::default()) {
        Err(crate::Error::RankDeficient(msg)) => assert!(msg.contains("condition number")),
        other => panic!("expected rank deficiency, got {other:?}"),
    }
    assert!(operator_inference(
        &snap,
        &DMatrix::identity(2, 2),
        &OpInfOptions {
            reg: 1e-6,
            ..Default::default()
        }
    )
    .is_ok());
}

#[test]
fn opinf_residual_non_increasing_over_nested_bases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = 200;
    let x = random(&mut rng, 8, k);
    let mut snap = SnapshotSet::new(
        (0..k).map(|i| i as f64).collect(),
        x,
        Some(random(&mut rng, 1, k)),
    )
    .unwrap();
    snap.xdot = Some(random(&mut rng, 8, k));
    let v = orthonormal(&mut rng, 8, 6);
    let mut last = f64::INFINITY;
    for n in 1..=6 {
        let basis = v.columns(0, n).into_owned();
        let art = operator_inference(&snap, &basis, &OpInfOptions::default()).unwrap();
        // residual of the fit in the first reduced coordinate, which every
        // nested model shares
        let xr = basis.transpose() * &snap.x;
        let target = (basis.transpose() * snap.xdot.as_ref().unwrap())
            .row(0)
            .into_owned();
        let mut res = 0.0;
        for c in 0..k {
            let u = snap.u.as_ref().unwrap().column(c).into_owned();
            let f = art
                .system
                .rhs(&xr.column(c).into_owned(), Some(&u))
                .unwrap();
            res += (f[0] - target[c]).powi(2);
        }
        assert!(res <= last * (1.0 + 1e-9), "n={n}: {res} > {last}");
        last = res;
    }
}

#[test]
fn rom_file_round_trip() {
    let sys = controlled_system(6, 1, 2, 1);
    let art = lqg_balanced_truncation(&sys, 3).unwrap();
    let json = serde_json::to_string(&art.to_file()).unwrap();
    let back = RomArtifact::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(back.method, RomMethod::Lqgbt);
    assert_eq!(back.sigma, art.sigma);
    assert!((back.right - &art.right).norm() == 0.0);
    assert!((back.system.a() - art.system.a()).norm() == 0.0);
}

#[test]
fn certificate_kinds_parse_and_apply() {
    for kind in CertificateKind::ALL {
        assert_eq!(kind.to_string().parse::<CertificateKind>().unwrap(), kind);
    }
    assert!("bogus".parse::<CertificateKind>().is_err());
    let sys = controlled_system(6, 1, 2, 6);
    let art = lqg_balanced_truncation(&sys, 3).unwrap();
    let cert = certificate_for(CertificateKind::LyapunovIdentity, &art).unwrap();
    assert!(cert.residual < 1e-10);
    let sigma = certificate_for(CertificateKind::LqgSigma, &art).unwrap();
    assert_eq!(sigma.p, DMatrix::from_diagonal(art.sigma.as_ref().unwrap()));
    let pod = RomArtifact {
        method: RomMethod::Pod,
        sigma: None,
        riccati_residuals: None,
        ..art
    };
    assert!(matches!(
        certificate_for(CertificateKind::LqgSigma, &pod),
        Err(crate::Error::InvalidCertificate(_))
    ));
}

#[test]
fn riccati_implied_rejects_indefinite() {
    let sys = scalar_system(1.0);
    let ok = riccati_implied_certificate(&sys, &DMatrix::from_element(1, 1, 1.0)).unwrap();
    assert_relative_eq!(ok.q_f[(0, 0)], 2f64.sqrt(), epsilon = 1e-12);
    let unstable = QBSystem::autonomous(
        DMatrix::identity(1, 1),
        DMatrix::from_element(1, 1, 1.0),
        QuadraticOperator::zeros(1, 1),
    )
    .unwrap();
    assert!(riccati_implied_certificate(&unstable, &DMatrix::from_element(1, 1, 1.0)).is_err());
}

#[test]
fn suggested_order_counts_large_values() {
    let s = DVector::from_vec(vec![1.0, 1e-3, 1e-9, 1e-11, 1e-14]);
    assert_eq!(suggest_order(&s, SUGGEST_THRESHOLD), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn galerkin_keeps_h_symmetric(seed in 0u64..1000, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_stable_system(8, seed, 1.0).unwrap();
        let v = orthonormal(&mut rng, 8, n);
        let r = galerkin_reduce(&sys, &v).unwrap();
        prop_assert!(r.h().asymmetry() <= 1e-14);
    }
}

#[test]
fn midpoint_scheme_is_second_order() {
    // x' = -x + u with u = 1 from x(0) = 0: x = 1 - exp(-t)
    let fit = |k: usize| {
        let dt = 1.0 / k as f64;
        let t: Vec<f64> = (0..=k).map(|i| i as f64 * dt).collect();
        let x = DMatrix::from_fn(1, k + 1, |_, c| 1.0 - (-t[c]).exp());
        let u = DMatrix::from_element(1, k + 1, 1.0);
        let snap = SnapshotSet::new(t, x, Some(u)).unwrap();
        let art = operator_inference(&snap, &DMatrix::identity(1, 1), &OpInfOptions::default()).unwrap();
        (art.system.a()[(0, 0)] + 1.0).abs()
    };
    let (coarse, fine) = (fit(50), fit(100));
    assert!(coarse < 1e-2);
    assert!(coarse / fine > 3.0, "{coarse:e} {fine:e}");
}
