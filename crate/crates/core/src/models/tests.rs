use super::*;
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn fem_constant_state_has_no_convection() {
    let (sys, _) = build_burgers_fem(&BurgersFemConfig::default()).unwrap();
    let x = DVector::from_element(sys.n(), 0.7);
    assert!(sys.h().apply(&x, &x).amax() < 1e-14);
}

#[test]
fn fem_mass_rows_sum_to_element_length() {
    let cfg = BurgersFemConfig::default();
    let (sys, _) = build_burgers_fem(&cfg).unwrap();
    for k in 0..sys.n() {
        assert_relative_eq!(sys.e().row(k).sum(), cfg.step(), max_relative = 1e-13);
    }
    assert_relative_eq!(sys.e()[(0, 0)], 4.0 * cfg.step() / 6.0);
    assert_relative_eq!(sys.e()[(0, sys.n() - 1)], cfg.step() / 6.0);
}

#[test]
fn fem_periodic_diffusion_annihilates_constants() {
    let (sys, _) = build_burgers_fem(&BurgersFemConfig::default()).unwrap();
    let ones = DVector::from_element(sys.n(), 1.0);
    assert!((sys.a() * ones).norm() <= 1e-10 * sys.a().norm());
}

#[test]
fn fem_inputs_partition_the_domain() {
    let cfg = BurgersFemConfig::default();
    let (sys, x0) = build_burgers_fem(&cfg).unwrap();
    assert_eq!((sys.n(), sys.m()), (101, 3));
    assert_eq!(sys.c().unwrap(), &DMatrix::identity(101, 101));
    for j in 0..3 {
        assert_relative_eq!(sys.b().column(j).sum(), 1.0 / 3.0, max_relative = 1e-12);
    }
    // node 10 lies well inside the first control interval
    assert_relative_eq!(sys.b()[(10, 0)], cfg.step(), max_relative = 1e-12);
    assert_eq!(sys.b()[(10, 1)], 0.0);
    assert_relative_eq!(x0[0], 0.0);
    assert!(x0.iter().skip(51).all(|&v| v == 0.0));
    assert_relative_eq!(
        x0[25],
        0.5 * (2.0 * std::f64::consts::PI * 25.0 / 101.0).sin().powi(2)
    );
}

#[test]
fn fem_convection_is_energy_neutral_on_the_periodic_mesh() {
    let (sys, x0) = build_burgers_fem(&BurgersFemConfig::default()).unwrap();
    assert!(x0.dot(&sys.h().apply(&x0, &x0)).abs() < 1e-14);
}

#[test]
fn config_validation() {
    assert!(build_burgers_fem(&BurgersFemConfig {
        n: 2,
        ..Default::default()
    })
    .is_err());
    assert!(build_burgers_fem(&BurgersFemConfig {
        epsilon: 0.0,
        ..Default::default()
    })
    .is_err());
    assert!(build_burgers_fem(&BurgersFemConfig {
        periodic: false,
        ..Default::default()
    })
    .is_err());
    assert!(build_burgers_fd(&BurgersFdConfig {
        n: 2,
        ..Default::default()
    })
    .is_err());
    assert!(build_fhn_lifted(&FhnConfig {
        grid: 2,
        ..Default::default()
    })
    .is_err());
    let cfg: BurgersFdConfig = serde_json::from_str(r#"{"n": 16}"#).unwrap();
    assert_eq!(
        cfg,
        BurgersFdConfig {
            n: 16,
            epsilon: 0.1
        }
    );
}

#[test]
fn built_operators_are_symmetrized() {
    let (fem, _) = build_burgers_fem(&BurgersFemConfig {
        n: 12,
        ..Default::default()
    })
    .unwrap();
    let fd = build_burgers_fd(&BurgersFdConfig {
        n: 12,
        ..Default::default()
    })
    .unwrap();
    let fhn = build_fhn_lifted(&FhnConfig {
        grid: 6,
        ..Default::default()
    })
    .unwrap();
    for sys in [&fem, &fd, &fhn] {
        assert!(sys.h().asymmetry() < 1e-15);
    }
}

#[test]
fn fhn_dimensions_and_mass() {
    let cfg = FhnConfig::default();
    let sys = build_fhn_lifted(&cfg).unwrap();
    assert_eq!(sys.n(), 600);
    assert_eq!(sys.m(), 2);
    let diag = DVector::from_fn(600, |i, _| if i < 200 { 0.015 } else { 1.0 });
    assert_eq!(sys.e(), &DMatrix::from_diagonal(&diag));
    let uniform = build_fhn_lifted(&FhnConfig {
        mass: FhnMass::Uniform,
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(
        uniform.e(),
        &DMatrix::from_diagonal_element(600, 600, 0.015)
    );
    assert_eq!(sys.b()[(0, 0)], 2.0 * 0.015f64.powi(2) / cfg.step());
    assert!(sys.b().column(0).iter().skip(1).all(|&v| v == 0.0));
}

#[test]
fn fhn_zero_state_constant_forcing() {
    let cfg = FhnConfig {
        grid: 10,
        ..Default::default()
    };
    let sys = build_fhn_lifted(&cfg).unwrap();
    let u = DVector::from_vec(vec![0.0, 1.0]);
    let f = sys.rhs(&DVector::zeros(sys.n()), Some(&u)).unwrap();
    for k in 0..cfg.grid {
        assert_relative_eq!(f[cfg.v_index(k)], cfg.c / cfg.epsilon, max_relative = 1e-14);
        assert_relative_eq!(f[cfg.w_index(k)], cfg.c, max_relative = 1e-14);
        assert_eq!(f[cfg.z_index(k)], 0.0);
    }
}

#[test]
fn fhn_mass_conventions_share_dynamics() {
    let cfg = FhnConfig {
        grid: 9,
        ..Default::default()
    };
    let a = build_fhn_lifted(&cfg).unwrap();
    let b = build_fhn_lifted(&FhnConfig {
        mass: FhnMass::Uniform,
        ..cfg
    })
    .unwrap();
    let x = DVector::from_fn(27, |i, _| (0.37 * i as f64).sin());
    let u = DVector::from_vec(vec![0.8, 1.0]);
    let (fa, fb) = (a.rhs(&x, Some(&u)).unwrap(), b.rhs(&x, Some(&u)).unwrap());
    assert!((&fa - &fb).norm() <= 1e-12 * fa.norm());
}

#[test]
fn fhn_lifted_rhs_matches_chain_rule_on_the_manifold() {
    let cfg = FhnConfig {
        grid: 8,
        ..Default::default()
    };
    let sys = build_fhn_lifted(&cfg).unwrap();
    let g = cfg.grid;
    let v = DVector::from_fn(g, |k, _| 0.3 * (k as f64 * 0.7).sin());
    let w = DVector::from_fn(g, |k, _| 0.1 * (k as f64).cos());
    let mut x = DVector::zeros(3 * g);
    for k in 0..g {
        x[cfg.v_index(k)] = v[k];
        x[cfg.w_index(k)] = w[k];
        x[cfg.z_index(k)] = v[k] * v[k];
    }
    let u = DVector::from_vec(vec![0.8, 1.0]);
    let f = sys.rhs(&x, Some(&u)).unwrap();
    for k in 0..g {
        let dz = 2.0 * v[k] * f[cfg.v_index(k)];
        assert_relative_eq!(f[cfg.z_index(k)], dz, max_relative = 1e-11, epsilon = 1e-12);
    }
}

#[test]
fn fd_zero_state_is_rest() {
    let sys = build_burgers_fd(&BurgersFdConfig::default()).unwrap();
    let f = sys
        .rhs(&DVector::zeros(128), Some(&DVector::zeros(1)))
        .unwrap();
    assert_eq!(f.amax(), 0.0);
    assert_eq!(sys.e(), &DMatrix::identity(128, 128));
}

#[test]
fn fd_diffusion_stencil() {
    let cfg = BurgersFdConfig::default();
    let sys = build_burgers_fd(&cfg).unwrap();
    let d = cfg.epsilon / cfg.step().powi(2);
    let a = sys.a();
    assert_relative_eq!(a[(5, 4)], d);
    assert_relative_eq!(a[(5, 5)], -2.0 * d);
    assert_relative_eq!(a[(5, 6)], d);
    assert_eq!(a.row(5).iter().filter(|v| **v != 0.0).count(), 3);
    assert_relative_eq!(sys.b()[(0, 0)], d);
    assert_relative_eq!(sys.b()[(127, 0)], -d);
}

fn fd_truncation_error(n: usize) -> f64 {
    let cfg = BurgersFdConfig { n, epsilon: 0.1 };
    let sys = build_burgers_fd(&cfg).unwrap();
    let u = 0.6;
    let pi = std::f64::consts::PI;
    let z = |s: f64| u * (pi * s).cos() + 0.3 * (2.0 * pi * s).sin();
    let dz = |s: f64| -u * pi * (pi * s).sin() + 0.6 * pi * (2.0 * pi * s).cos();
    let ddz = |s: f64| -u * pi * pi * (pi * s).cos() - 1.2 * pi * pi * (2.0 * pi * s).sin();
    let h = cfg.step();
    let x = DVector::from_fn(n, |k, _| z((k + 1) as f64 * h));
    let f = sys.rhs(&x, Some(&DVector::from_element(1, u))).unwrap();
    (0..n)
        .map(|k| {
            let s = (k + 1) as f64 * h;
            (f[k] - (cfg.epsilon * ddz(s) - z(s) * dz(s))).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn fd_manufactured_solution_second_order() {
    let e1 = fd_truncation_error(128);
    let e2 = fd_truncation_error(256);
    let e3 = fd_truncation_error(512);
    assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "ratio {}", e1 / e2);
    assert!(e2 / e3 > 3.5 && e2 / e3 < 4.5, "ratio {}", e2 / e3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn periodic_fd_convection_conserves_energy(
        n in 3usize..40,
        seed in proptest::collection::vec(-1.0f64..1.0, 40),
    ) {
        let h = periodic_convection(n).unwrap();
        let x = DVector::from_fn(n, |k, _| seed[k]);
        let energy = x.dot(&h.apply(&x, &x));
        prop_assert!(energy.abs() <= 1e-12 * x.norm().powi(3));
    }
}
