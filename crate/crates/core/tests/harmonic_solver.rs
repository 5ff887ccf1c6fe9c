mod common;

use apms::bessel::{bessel_j, BesselOrderBound};
use apms::harmonic_solver::{build_design_matrix, fit_harmonics, solve_complex_amplitudes, ALL_GROUPS};
use apms::{synthesize, FrequencyTriple, Params, Series};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::RngExt;

fn triple(p: &Params) -> FrequencyTriple<f64> {
    FrequencyTriple { omega_c: p.omega_c, omega_a: p.omega_a, omega_p: p.omega_p }
}

fn residual(design: &apms::harmonic_solver::DesignMatrix<f64>, x: &[Complex64], data: &[f64]) -> f64 {
    let fit = design.entries.mul_vec(x);
    fit.iter().zip(data).map(|(f, &d)| (Complex64::new(d, 0.0) - f).norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn amplitudes_follow_bessel_products() {
    // group 1, order m holds (A/2) e^{jθ} J_m(k_p); group 3 holds (sA k_a/4) e^{j(θ+θ_a)} J_m(k_p)
    let p = Params::table1();
    let x: Series = synthesize(&p, -125, 251).unwrap();
    let m = BesselOrderBound { m_max: 8 };
    let d = build_design_matrix(&triple(&p), m, -125, 251, &ALL_GROUPS).unwrap();
    let part = solve_complex_amplitudes(&x, &d).unwrap();
    for k in -8i32..=8 {
        let j = bessel_j(k, p.k_p).unwrap();
        let r1 = Complex64::from_polar(p.amplitude / 2.0 * j, p.theta);
        let r3 = Complex64::from_polar(p.s * p.amplitude * p.k_a / 4.0 * j, p.theta + p.theta_a);
        assert!((part.r(1).unwrap()[(k + 8) as usize] - r1).norm() < 1e-6, "group 1, m {k}");
        assert!((part.r(3).unwrap()[(k + 8) as usize] - r3).norm() < 1e-6, "group 3, m {k}");
    }
}

#[test]
fn noiseless_real_fit() {
    // enough orders that the truncated Bessel tail is below 1e-13
    let mut rng = common::rng(11);
    let mut solved = 0;
    while solved < 10 {
        let p = common::draw_params(&mut rng, 2);
        let x: Series = synthesize(&p, -100, 201).unwrap();
        let m = (1..).find(|&m| bessel_j(m, p.k_p).unwrap().abs() < 1e-13).unwrap() as usize;
        let d = build_design_matrix(&triple(&p), BesselOrderBound { m_max: m }, -100, 201, &ALL_GROUPS).unwrap();
        let Ok(fit) = fit_harmonics(&x, &d) else { continue };
        solved += 1;
        let err = fit.fitted.iter().zip(&x.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9, "max error {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn least_squares_optimality(seed in any::<u64>(), col in 0usize..18, re in -1.0f64..1.0, im in -1.0f64..1.0) {
        let mut rng = common::rng(seed);
        let p = common::draw_params(&mut rng, 1);
        let noise: Vec<f64> = (0..81).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Series::new(noise, -40).unwrap();
        let d = build_design_matrix(&triple(&p), BesselOrderBound { m_max: 1 }, -40, 81, &ALL_GROUPS).unwrap();
        let part = solve_complex_amplitudes(&x, &d).unwrap();
        let sol: Vec<Complex64> = part.groups.iter().flat_map(|g| g.clone().unwrap()).collect();
        let base = residual(&d, &sol, &x.values);
        prop_assert!((base - part.residual_norm).abs() <= 1e-9 * (1.0 + base));
        let dir = Complex64::new(re, im);
        prop_assume!(dir.norm() > 1e-3);
        let dir = dir / dir.norm() * 1e-3;
        for sign in [1.0, -1.0] {
            let mut moved = sol.clone();
            moved[col] += dir * sign;
            prop_assert!(residual(&d, &moved, &x.values) >= base - 1e-12);
        }
    }
}
