//! Bessel functions of the first kind, integer order.
//!
//! `J_m(k_p)` weights the PM sidelines of every spectral cluster, so the
//! estimator needs three things from this module: point evaluation, the
//! significant-order bound `M`, and inversion of `J_0(k)/J_n(k)` for
//! recovering `k_p` from measured line ratios.
//!
//! ```
//! use apms::bessel::{bessel_j, invert_bessel_ratio, significant_order};
//! let j0 = bessel_j(0, 0.4_f64).unwrap();
//! let j1 = bessel_j(1, 0.4_f64).unwrap();
//! assert!((invert_bessel_ratio(j0 / j1, 1).unwrap() - 0.4).abs() < 1e-8);
//! assert_eq!(significant_order(0.4_f64).unwrap().m_max, 2);
//! ```

use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::error::{ApmsError, Result};
use crate::scalar::Scalar;

/// Largest supported `|order|`.
pub const MAX_ORDER: i32 = 200;
/// Largest supported `|x|`.
pub const MAX_ARG: f64 = 50.0;
/// Default significance threshold on `|J_m(k_p)|` that defines `M`.
pub const DEFAULT_THRESHOLD: f64 = 0.01;
/// Lower end of the ratio-inversion search interval.
pub const K_MIN: f64 = 1e-4;
/// Upper end of the ratio-inversion search interval.
pub const K_CAP: f64 = 3.0;

const SERIES_LIMIT: f64 = 12.0;

/// Number of significant PM sidelines on each side of a cluster center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BesselOrderBound {
    pub m_max: usize,
}

/// `J_order(x)` with absolute error below `1e-12` (in `f64`) on the
/// supported domain `|order| ≤ 200`, `|x| ≤ 50`.
///
/// Negative orders and arguments are reduced through
/// `J_{-n}(x) = (-1)^n J_n(x)` and `J_n(-x) = (-1)^n J_n(x)`, so reflection
/// holds exactly.
pub fn bessel_j<T: Scalar>(order: i32, x: T) -> Result<T> {
    if order.abs() > MAX_ORDER || !(x.abs() <= T::lit(MAX_ARG)) {
        return Err(ApmsError::arg(format!(
            "bessel_j domain is |order| <= {MAX_ORDER}, |x| <= {MAX_ARG}; got order {order}, x {}",
            x.as_f64()
        )));
    }
    let n = order.unsigned_abs();
    let mut v = if x.abs() <= T::lit(SERIES_LIMIT) {
        series(n, x.abs())
    } else {
        miller(n, x.abs())
    };
    let odd = n % 2 == 1;
    if odd && order < 0 {
        v = -v;
    }
    if odd && x < T::zero() {
        v = -v;
    }
    Ok(v)
}

fn series<T: Scalar>(n: u32, x: T) -> T {
    if x == T::zero() {
        return if n == 0 { T::one() } else { T::zero() };
    }
    let half = x / T::lit(2.0);
    let mut term = T::one();
    for i in 1..=n {
        term = term * half / T::from_u32(i).unwrap();
    }
    let q = -half * half;
    let mut sum = term;
    let tol = T::epsilon() * T::lit(0.1);
    let nn = T::from_u32(n).unwrap();
    for k in 1..1000u32 {
        let kk = T::from_u32(k).unwrap();
        term = term * q / (kk * (kk + nn));
        sum = sum + term;
        if term.abs() <= tol * sum.abs() {
            break;
        }
    }
    sum
}

fn miller<T: Scalar>(n: u32, x: T) -> T {
    let start = (n.max(x.to_u32().unwrap_or(0)) + 60) | 1;
    let big = T::max_value().sqrt().sqrt();
    let two = T::lit(2.0);
    let mut next = T::zero();
    let mut cur = T::min_positive_value().sqrt();
    let mut at_n = if start == n { cur } else { T::zero() };
    let mut sumsq = T::zero();
    let mut even_sum = T::zero();
    let mut k = start;
    loop {
        // cur holds the unnormalized value at order k
        if k == 0 {
            sumsq = sumsq + cur * cur;
            even_sum = even_sum + cur;
        } else {
            sumsq = sumsq + two * cur * cur;
            if k.is_multiple_of(2) {
                even_sum = even_sum + two * cur;
            }
        }
        if k == n {
            at_n = cur;
        }
        if k == 0 {
            break;
        }
        let prev = two * T::from_u32(k).unwrap() / x * cur - next;
        next = cur;
        cur = prev;
        k -= 1;
        if cur.abs() > big {
            let s = T::one() / big;
            cur = cur * s;
            next = next * s;
            at_n = at_n * s;
            sumsq = sumsq * s * s;
            even_sum = even_sum * s;
        }
    }
    let scale = sumsq.sqrt();
    let sign = if even_sum < T::zero() { -T::one() } else { T::one() };
    sign * at_n / scale
}

/// Derivative `J'_m(x) = (J_{m-1}(x) - J_{m+1}(x)) / 2`.
pub fn bessel_j_derivative<T: Scalar>(order: i32, x: T) -> Result<T> {
    Ok((bessel_j(order - 1, x)? - bessel_j(order + 1, x)?) / T::lit(2.0))
}

/// `[J_{-M}(x), …, J_M(x)]`.
pub fn bessel_row<T: Scalar>(m_max: usize, x: T) -> Result<Vec<T>> {
    let m = m_max as i32;
    (-m..=m).map(|k| bessel_j(k, x)).collect()
}

/// Largest `m ≥ 0` with `|J_m(k_p)| > 0.01`.
pub fn significant_order<T: Scalar>(k_p: T) -> Result<BesselOrderBound> {
    significant_order_with(k_p, T::lit(DEFAULT_THRESHOLD))
}

/// [`significant_order`] with an explicit threshold.
pub fn significant_order_with<T: Scalar>(k_p: T, threshold: T) -> Result<BesselOrderBound> {
    if !(k_p >= T::zero()) || k_p > T::lit(10.0) {
        return Err(ApmsError::arg(format!(
            "significant_order needs 0 <= k_p <= 10, got {}",
            k_p.as_f64()
        )));
    }
    if !(threshold > T::zero()) {
        return Err(ApmsError::arg("significance threshold must be positive"));
    }
    let mut m_max = 0;
    for m in 1..=60 {
        if bessel_j(m, k_p)?.abs() > threshold {
            m_max = m as usize;
        }
    }
    Ok(BesselOrderBound { m_max })
}

fn ratio_f64(k: f64, order: u32) -> f64 {
    let j0 = bessel_j(0, k).unwrap_or(f64::NAN);
    let jn = bessel_j(order as i32, k).unwrap_or(f64::NAN);
    j0 / jn
}

/// Interval of values attained by `J_0(k)/J_order(k)` for `k ∈ [K_MIN, K_CAP]`.
pub fn attainable_ratio_interval(order: u32) -> (f64, f64) {
    (ratio_f64(K_CAP, order), ratio_f64(K_MIN, order))
}

/// Solves `J_0(k)/J_order(k) = ratio` for `k ∈ [1e-4, 3]`, `order ∈ {1, 2}`.
///
/// The ratio is strictly decreasing on that interval, so a bracketed Brent
/// search returns the unique root.
pub fn invert_bessel_ratio<T: Scalar>(ratio: T, order: u32) -> Result<T> {
    if order != 1 && order != 2 {
        return Err(ApmsError::arg(format!("ratio inversion supports orders 1 and 2, got {order}")));
    }
    let target = ratio.as_f64();
    let (lo, hi) = attainable_ratio_interval(order);
    if !(target >= lo && target <= hi) {
        return Err(ApmsError::RatioInversion { ratio: target, order, lo, hi });
    }
    let mut conv = SimpleConvergency { eps: 1e-15_f64, max_iter: 400 };
    let k = find_root_brent(K_MIN, K_CAP, |k: f64| ratio_f64(k, order) - target, &mut conv)
        .map_err(|e| ApmsError::Estimation(format!("Bessel ratio inversion did not converge: {e:?}")))?;
    Ok(T::lit(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Power series evaluated independently in f64 with exact factorials.
    fn oracle(n: u32, x: f64) -> f64 {
        let mut s = 0.0;
        let mut fact_k = 1.0;
        for k in 0..60u32 {
            if k > 0 {
                fact_k *= k as f64;
            }
            let fact_nk: f64 = (1..=(n + k)).map(|i| i as f64).product();
            s += (-1.0f64).powi(k as i32) * (x / 2.0).powi((2 * k + n) as i32) / (fact_k * fact_nk);
        }
        s
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_j(0, 0.0_f64).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0_f64).unwrap(), 0.0);
        assert_eq!(bessel_j(-2, 0.4_f64).unwrap(), bessel_j(2, 0.4_f64).unwrap());
    }

    #[test]
    fn matches_series_oracle() {
        assert!((bessel_j(0, 0.4_f64).unwrap() - 0.960_398).abs() < 1e-6);
        for &x in &[0.1, 0.4, 1.0, 2.5, 5.0, 9.0] {
            for n in 0..8 {
                let d = bessel_j(n as i32, x).unwrap() - oracle(n, x);
                assert!(d.abs() < 1e-12, "n={n} x={x} d={d}");
            }
        }
    }

    #[test]
    fn branches_agree_near_switch() {
        for &x in &[10.0, 12.0, 12.5] {
            for n in [0, 1, 2, 5, 13, 40] {
                let a: f64 = miller(n, x);
                let b: f64 = series(n, x);
                assert!((a - b).abs() < 1e-12, "n={n} x={x} {a} {b}");
            }
        }
    }

    #[test]
    fn recurrence_matches_reference_values() {
        // reference values from an independent Bessel implementation
        let table = [
            (35.0_f64, [-0.12684568275631256, 0.04399094217962565, -0.12112335074542385, 0.014965632617051026]),
            (49.9, [0.04578862546790692, -0.10279695736888547, 0.060021078635156905, -0.14103479689268286]),
        ];
        for (x, vals) in table {
            for (n, want) in [0, 1, 13, 40].into_iter().zip(vals) {
                let got: f64 = bessel_j(n, x).unwrap();
                assert!((got - want).abs() < 1e-12, "n={n} x={x} {got} {want}");
            }
        }
    }

    #[test]
    fn known_large_argument_values() {
        // Abramowitz & Stegun table entries
        assert!((bessel_j(0, 20.0_f64).unwrap() - 0.167_024_664_340_583).abs() < 1e-12);
        assert!((bessel_j(1, 20.0_f64).unwrap() - 0.066_833_124_175_850).abs() < 1e-12);
    }

    #[test]
    fn domain_checks() {
        assert!(bessel_j(201, 1.0_f64).is_err());
        assert!(bessel_j(0, 50.5_f64).is_err());
        assert!(bessel_j(0, f64::NAN).is_err());
    }

    #[test]
    fn significant_orders() {
        assert_eq!(significant_order(0.0_f64).unwrap().m_max, 0);
        assert_eq!(significant_order(0.4_f64).unwrap().m_max, 2);
        assert_eq!(significant_order(0.5_f64).unwrap().m_max, 2);
        assert!(significant_order(-0.1_f64).is_err());
    }

    #[test]
    fn ratio_inversion_examples() {
        let k = invert_bessel_ratio(4.8993_f64, 1).unwrap();
        assert!((k - 0.4).abs() < 1e-4);
        let k = invert_bessel_ratio(3.8737_f64, 1).unwrap();
        assert!((k - 0.5).abs() < 1e-4);
        match invert_bessel_ratio(-1.0_f64, 1) {
            Err(ApmsError::RatioInversion { .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(invert_bessel_ratio(2.0_f64, 3).is_err());
    }

    #[test]
    fn works_in_f32() {
        let v: f32 = bessel_j(1, 0.5_f32).unwrap();
        assert!((v as f64 - bessel_j(1, 0.5_f64).unwrap()).abs() < 1e-6);
        let k: f32 = invert_bessel_ratio(bessel_j(0, 0.7_f32).unwrap() / bessel_j(2, 0.7_f32).unwrap(), 2).unwrap();
        assert!((k - 0.7).abs() < 1e-3);
    }
}
