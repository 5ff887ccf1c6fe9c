#![allow(dead_code)]

use std::f64::consts::PI;

use apms::bessel::significant_order;
use apms::scalar::wrap_phase;
use apms::Params;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Valid parameters with at most `max_order` significant PM sidebands and
/// every sideband line inside (0.15, π − 0.15).
pub fn draw_params(rng: &mut ChaCha20Rng, max_order: usize) -> Params {
    loop {
        let k_p: f64 = rng.random_range(0.1..1.5);
        let m = significant_order(k_p).unwrap().m_max;
        if m > max_order {
            continue;
        }
        let m = m as f64;
        let omega_p = rng.random_range(0.04..0.15);
        let omega_a = rng.random_range(f64::max(0.25, (2.0 * m + 2.0) * omega_p)..1.2);
        let omega_c = rng.random_range(0.3..PI - 0.3);
        let spread = (m + 1.0) * omega_p;
        if omega_c - omega_a - spread < 0.15 || omega_c + omega_a + spread > PI - 0.15 || omega_a >= omega_c {
            continue;
        }
        return Params {
            amplitude: rng.random_range(0.5..5.0),
            theta: rng.random_range(-PI..PI),
            omega_c,
            omega_a,
            omega_p,
            k_a: rng.random_range(0.1..0.9),
            k_p,
            theta_a: rng.random_range(-PI..PI),
            theta_b: rng.random_range(-PI..PI),
            s: rng.random_range(0.3..1.5),
            r: 1.0,
        };
    }
}

/// Per-parameter errors in the order
/// ω_c, ω_a, ω_p (absolute), A (relative), θ, θ_a, θ_b (wrapped), k_a, k_p, s (relative).
pub fn errors(est: &Params, truth: &Params) -> [f64; 10] {
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    let ph = |a: f64, b: f64| wrap_phase(a - b).abs();
    [
        (est.omega_c - truth.omega_c).abs(),
        (est.omega_a - truth.omega_a).abs(),
        (est.omega_p - truth.omega_p).abs(),
        rel(est.amplitude, truth.amplitude),
        ph(est.theta, truth.theta),
        ph(est.theta_a, truth.theta_a),
        ph(est.theta_b, truth.theta_b),
        rel(est.k_a, truth.k_a),
        rel(est.k_p, truth.k_p),
        rel(est.s, truth.s),
    ]
}

pub const ERROR_NAMES: [&str; 10] = ["omega_c", "omega_a", "omega_p", "A", "theta", "theta_a", "theta_b", "k_a", "k_p", "s"];

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
