use std::f64::consts::PI;

use apms::bessel::{bessel_j, invert_bessel_ratio};
use proptest::prelude::*;

/// Trapezoid rule on `J_m(x) = (1/2π) ∫ cos(mτ − x sin τ) dτ` over one period.
fn integral_oracle(m: i32, x: f64) -> f64 {
    let n = 512;
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            (m as f64 * t - x * t.sin()).cos()
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn matches_integral_representation() {
    for &x in &[0.1_f64, 0.5, 1.0, 2.0, 5.0, 12.0, 30.0] {
        for m in -40..=40 {
            let got = bessel_j(m, x).unwrap();
            let want = integral_oracle(m, x);
            assert!((got - want).abs() < 1e-12, "J_{m}({x}) = {got}, oracle {want}");
        }
    }
}

#[test]
fn normalization() {
    for &x in &[0.1_f64, 0.5, 1.0, 2.0, 5.0] {
        let s: f64 = (-40..=40).map(|m| bessel_j(m, x).unwrap().powi(2)).sum();
        assert!((s - 1.0).abs() <= 1e-10, "x = {x}: sum {s}");
    }
}

#[test]
fn ratio_round_trip() {
    for order in [1u32, 2] {
        for i in 0..40 {
            let k = 0.05 + 1.95 * i as f64 / 39.0;
            let ratio = bessel_j(0, k).unwrap() / bessel_j(order as i32, k).unwrap();
            let back = invert_bessel_ratio(ratio, order).unwrap();
            assert!((back - k).abs() <= 1e-8, "order {order}, k {k}: got {back}");
        }
    }
}

#[test]
fn single_precision_agrees() {
    for m in -10..=10 {
        let a = bessel_j(m, 1.3_f32).unwrap() as f64;
        let b = bessel_j(m, 1.3_f64).unwrap();
        assert!((a - b).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn reflection_is_exact(m in 0i32..=40, x in 0.0f64..20.0) {
        let j = bessel_j(m, x).unwrap();
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert_eq!(bessel_j(-m, x).unwrap(), sign * j);
        prop_assert_eq!(bessel_j(m, -x).unwrap(), sign * j);
    }

    #[test]
    fn recurrence(m in -10i32..=10, x in 0.5f64..5.0) {
        let lhs = bessel_j(m - 1, x).unwrap() + bessel_j(m + 1, x).unwrap();
        let rhs = 2.0 * m as f64 / x * bessel_j(m, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9);
    }
}
