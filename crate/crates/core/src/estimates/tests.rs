use super::*;
use crate::densela::solve_lyapunov;
use crate::models::{diagonal_2d, random_stable_system, scalar_system};
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_cert() -> LyapunovCertificate {
    let sys = scalar_system(0.5);
    solve_lyapunov(sys.a(), sys.e(), &DMatrix::from_element(1, 1, 2f64.sqrt())).unwrap()
}

fn identity_cert(sys: &QBSystem) -> LyapunovCertificate {
    let n = sys.n();
    solve_lyapunov(sys.a(), sys.e(), &DMatrix::identity(n, n)).unwrap()
}

fn random_mu(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn parameter_counts() {
    for n in 1..=25 {
        assert_eq!(parameter_count(n), n * n * (n - 1) / 2);
    }
    assert_eq!(parameter_count(1), 0);
    assert_eq!(parameter_count(3), 9);
    assert_eq!(parameter_count(21), 4410);
}

#[test]
fn index_map_is_bijective() {
    for n in 1..=7 {
        let m = MuParametrization::new(n);
        let triples: Vec<_> = m.triples().collect();
        assert_eq!(triples.len(), m.dim());
        for (k, &(i, p, q)) in triples.iter().enumerate() {
            assert_eq!(m.index(i, p, q), k);
            assert_eq!(m.triple(k), (i, p, q));
        }
    }
}

#[test]
fn perturbations_leave_quadratic_term_unchanged() {
    let m = MuParametrization::new(4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = m.skew_matrices(&random_mu(&mut rng, m.dim()));
    for _ in 0..10 {
        let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let mut total = DVector::zeros(4);
        for (i, si) in s.iter().enumerate() {
            total += si * &x * x[i];
        }
        assert!(total.norm() < 1e-14);
    }
}

#[test]
fn scalar_chain() {
    let sys = scalar_system(0.5);
    let cert = scalar_cert();
    assert_relative_eq!(cert.p[(0, 0)], 1.0, epsilon = 1e-14);
    assert_relative_eq!(analytic_radius(&sys, &cert).unwrap(), 2.0, epsilon = 1e-12);
    let prob = RadiusProblem::new(&sys, &cert).unwrap();
    let empty = DVector::zeros(0);
    assert_relative_eq!(prob.build_g(&empty)[(0, 0)], 1.0, epsilon = 1e-14);
    assert_relative_eq!(prob.build_j(&empty)[(0, 0)], 0.5, epsilon = 1e-14);
    let (alpha, grad) = prob.objective(&empty);
    assert_relative_eq!(alpha, 0.5, epsilon = 1e-14);
    assert_eq!(grad.len(), 0);
    for &x in &[-1.0, 0.3, 1.7] {
        let xv = DVector::from_element(1, x);
        let expected = -2.0 * x * x + 2.0 * 0.5 * x * x * x;
        assert_relative_eq!(prob.vdot(&xv), expected, epsilon = 1e-13);
        assert_relative_eq!(prob.vdot_via_j(&empty, &xv), expected, epsilon = 1e-13);
    }
}

#[test]
fn zero_quadratic_gives_infinite_radius() {
    let sys = random_stable_system(3, 4, 0.0).unwrap();
    let cert = identity_cert(&sys);
    assert!(analytic_radius(&sys, &cert).unwrap().is_infinite());
    let est = optimize_radius(&sys, &cert, &OptimizeOptions::default()).unwrap();
    assert!(est.rho_star.is_infinite());
    let prob = RadiusProblem::new(&sys, &cert).unwrap();
    let mu = DVector::zeros(parameter_count(3));
    assert_eq!(prob.build_g(&mu), DMatrix::zeros(9, 3));
    assert_eq!(prob.objective(&mu).0, 0.0);
}

#[test]
fn g_blocks_symmetric() {
    let sys = random_stable_system(4, 5, 0.5).unwrap();
    let cert = identity_cert(&sys);
    let prob = RadiusProblem::new(&sys, &cert).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = prob.build_g(&random_mu(&mut rng, parameter_count(4)));
    for i in 0..4 {
        let b = g.view((4 * i, 0), (4, 4));
        assert!((b - b.transpose()).norm() <= 1e-13 * b.norm());
    }
}

#[test]
fn certificate_dimension_mismatch_rejected() {
    let sys = random_stable_system(3, 7, 0.5).unwrap();
    let cert = scalar_cert();
    assert!(matches!(
        analytic_radius(&sys, &cert),
        Err(Error::InvalidCertificate(_))
    ));
    assert!(RadiusProblem::new(&sys, &cert).is_err());
}

#[test]
fn generalized_mass_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 4;
    let base = random_stable_system(n, 9, 0.4).unwrap();
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
    let e = DMatrix::identity(n, n) * 1.5 + &g * g.transpose();
    let sys = QBSystem::autonomous(e, base.a().clone(), base.h().clone()).unwrap();
    let cert = identity_cert(&sys);
    let prob = RadiusProblem::new(&sys, &cert).unwrap();
    let mu = random_mu(&mut rng, parameter_count(n));
    for _ in 0..10 {
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let direct = 2.0 * (sys.e() * &x).dot(&(&cert.p * sys.force(&x, None)));
        assert_relative_eq!(prob.vdot(&x), direct, epsilon = 1e-12);
        let via = prob.vdot_via_j(&mu, &x);
        assert!((via - direct).abs() <= 1e-11 * (1.0 + direct.abs()));
        let v = x.dot(&(sys.e().transpose() * &cert.p * sys.e() * &x));
        assert_relative_eq!(prob.v(&x), v, epsilon = 1e-12);
    }
}

#[test]
fn rectangular_qf_uses_pseudo_inverse() {
    let sys = random_stable_system(3, 10, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let q_f = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
    let cert = solve_lyapunov(sys.a(), sys.e(), &q_f).unwrap();
    let prob = RadiusProblem::new(&sys, &cert).unwrap();
    assert!(prob.qf_factored());
    assert_eq!(prob.factor_rank(), 3);
    let mu = random_mu(&mut rng, parameter_count(3));
    let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
    let d = prob.vdot(&x);
    assert!((prob.vdot_via_j(&mu, &x) - d).abs() <= 1e-11 * (1.0 + d.abs()));
}

#[test]
fn scalar_optimum_is_exact() {
    let est = optimize_radius(
        &scalar_system(0.5),
        &scalar_cert(),
        &OptimizeOptions::default(),
    )
    .unwrap();
    assert_relative_eq!(est.rho_star, 2.0, epsilon = 1e-12);
    assert_relative_eq!(est.rho_analytic, 2.0, epsilon = 1e-12);
}

#[test]
fn two_dimensional_optimum_matches_grid_search() {
    // n = 2 has d = 2 parameters; a fine grid around the optimizer's answer
    // must not find anything meaningfully better.
    let sys = diagonal_2d(12, 0.5).unwrap();
    let cert = identity_cert(&sys);
    let est = optimize_radius(&sys, &cert, &OptimizeOptions::default()).unwrap();
    assert!(est.rho_star + 1e-9 >= est.rho_analytic);
    let prob = RadiusProblem::new(&sys, &cert).unwrap();
    let mut grid_best = f64::INFINITY;
    let span = 4.0 * (1.0 + est.mu_star.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let steps = 200;
    for a in 0..=steps {
        for b in 0..=steps {
            let mu = DVector::from_vec(vec![
                -span + 2.0 * span * a as f64 / steps as f64,
                -span + 2.0 * span * b as f64 / steps as f64,
            ]);
            grid_best = grid_best.min(prob.alpha(&mu));
        }
    }
    assert!(
        est.alpha_star <= grid_best * (1.0 + 1e-3),
        "{} vs grid {}",
        est.alpha_star,
        grid_best
    );
}

#[test]
fn restarts_are_monotone() {
    let sys = random_stable_system(4, 13, 0.5).unwrap();
    let cert = identity_cert(&sys);
    let mut last = f64::INFINITY;
    for restarts in 1..=4 {
        let opts = OptimizeOptions {
            restarts,
            seed: 3,
            ..Default::default()
        };
        let est = optimize_radius(&sys, &cert, &opts).unwrap();
        assert!(est.alpha_star <= last);
        last = est.alpha_star;
    }
}

#[test]
fn estimate_json_round_trip() {
    let sys = random_stable_system(3, 14, 0.0).unwrap();
    let est = optimize_radius(&sys, &identity_cert(&sys), &OptimizeOptions::default()).unwrap();
    let json = est.to_json().unwrap();
    let back = StabilityEstimate::from_json(&json).unwrap();
    assert!(back.rho_star.is_infinite() && back.rho_analytic.is_infinite());
    assert_eq!(back.certificate.p, est.certificate.p);
    assert!(est.csv_record("toy").starts_with("toy,3,inf,inf,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn vdot_identity_and_mu_invariance(seed in 0u64..10_000) {
        let n = 6;
        let sys = random_stable_system(n, seed, 0.3).unwrap();
        let cert = identity_cert(&sys);
        let prob = RadiusProblem::new(&sys, &cert).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let d = prob.vdot(&x);
        for _ in 0..3 {
            let mu = random_mu(&mut rng, parameter_count(n)) * 10.0;
            prop_assert!((prob.vdot_via_j(&mu, &x) - d).abs() <= 1e-11 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn j_is_affine_and_alpha_convex(seed in 0u64..10_000, a in 0.0f64..1.0) {
        let n = 5;
        let sys = random_stable_system(n, seed, 0.3).unwrap();
        let prob = RadiusProblem::new(&sys, &identity_cert(&sys)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        let m1 = random_mu(&mut rng, parameter_count(n));
        let m2 = random_mu(&mut rng, parameter_count(n));
        let mix = &m1 * a + &m2 * (1.0 - a);
        let j = prob.build_j(&mix);
        let lin = prob.build_j(&m1) * a + prob.build_j(&m2) * (1.0 - a);
        prop_assert!((&j - lin).norm() <= 1e-12 * (1.0 + j.norm()));
        let lhs = prob.alpha(&mix);
        prop_assert!(lhs <= a * prob.alpha(&m1) + (1.0 - a) * prob.alpha(&m2) + 1e-12);
    }

    #[test]
    fn subgradient_matches_finite_differences(seed in 0u64..10_000) {
        let n = 4;
        let sys = random_stable_system(n, seed, 0.5).unwrap();
        let prob = RadiusProblem::new(&sys, &identity_cert(&sys)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
        let mu = random_mu(&mut rng, parameter_count(n));
        let sv = crate::densela::singular_values(&prob.build_j(&mu));
        prop_assume!(sv.len() < 2 || sv[0] - sv[1] > 1e-6 * sv[0].max(1.0) && sv[0] - sv[1] > 1e-3);
        let (_, grad) = prob.objective(&mu);
        let h = 1e-6;
        for k in 0..parameter_count(n) {
            let mut mp = mu.clone();
            let mut mm = mu.clone();
            mp[k] += h;
            mm[k] -= h;
            let fd = (prob.alpha(&mp) - prob.alpha(&mm)) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() <= 1e-5 * (1.0 + grad[k].abs()), "k={} fd={} grad={}", k, fd, grad[k]);
        }
    }
}

#[test]
fn rigorous_analytic_level_set_has_negative_vdot() {
    let sys = scalar_system(0.5);
    let diag = analytic_diagnostics(&sys, &scalar_cert()).unwrap();
    assert_relative_eq!(diag.rho_rigorous, 2.0, epsilon = 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..5 {
        let base = random_stable_system(4, seed, 0.5).unwrap();
        let e = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 + 0.5 * i as f64 } else { 0.0 });
        let sys = QBSystem::autonomous(e, base.a().clone(), base.h().clone()).unwrap();
        let cert = identity_cert(&sys);
        let diag = analytic_diagnostics(&sys, &cert).unwrap();
        assert!(diag.rho_rigorous <= diag.rho * (1.0 + 1e-12));
        let prob = RadiusProblem::new(&sys, &cert).unwrap();
        let level = &cert.p_f * sys.e();
        for _ in 0..50 {
            let y = random_mu(&mut rng, 4).normalize() * (0.999 * diag.rho_rigorous);
            let x = level.clone().lu().solve(&y).unwrap();
            assert!(prob.vdot(&x) < 0.0);
        }
    }
}
