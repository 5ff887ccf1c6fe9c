//! Centered product sequence `p[l] = x[−l] · x[l]`.
//!
//! For an APMS block the spectrum of `p` shows lines at `ω_a`, `2ω_a` and
//! clusters of PM sidelines around `2ω_c`, `2ω_c ± ω_a`, `2ω_c ± 2ω_a`.

use crate::error::{ApmsError, Result};
use crate::scalar::Scalar;
use crate::signal_model::SampleSeries;

/// `p[l]` for `l = −L..L`, stored from `l = −L` upward.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSequence<T> {
    pub values: Vec<T>,
    pub half_length: usize,
}

impl<T: Scalar> ProductSequence<T> {
    /// `p[l]`.
    pub fn at(&self, l: i64) -> T {
        self.values[(l + self.half_length as i64) as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let h = self.half_length as i64;
        -h..=h
    }
}

/// Recenters the block on its middle sample and forms the products.
pub fn product_sequence<T: Scalar>(block: &SampleSeries<T>) -> Result<ProductSequence<T>> {
    let n = block.values.len();
    if n.is_multiple_of(2) {
        return Err(ApmsError::arg(format!(
            "product sequence needs an odd block length, got {n}; drop one sample"
        )));
    }
    let half = n / 2;
    let x = &block.values;
    let values = (0..n).map(|i| x[i] * x[n - 1 - i]).collect();
    Ok(ProductSequence { values, half_length: half })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_block() {
        let s = SampleSeries::new(vec![1.5_f64; 7], 0).unwrap();
        let p = product_sequence(&s).unwrap();
        assert_eq!(p.half_length, 3);
        assert!(p.values.iter().all(|&v| v == 2.25));
    }

    #[test]
    fn cosine_identity() {
        let (w, th) = (0.7_f64, 0.4_f64);
        let s = SampleSeries::new((-10..=10).map(|n| (w * n as f64 + th).cos()).collect(), -10).unwrap();
        let p = product_sequence(&s).unwrap();
        for l in p.lags() {
            let want = 0.5 * (2.0 * th).cos() + 0.5 * (2.0 * w * l as f64).cos();
            assert!((p.at(l) - want).abs() < 1e-14);
        }
        assert_eq!(p.at(0), s.values[10] * s.values[10]);
    }

    #[test]
    fn even_length_rejected() {
        let s = SampleSeries::new(vec![1.0_f64; 8], 0).unwrap();
        assert!(product_sequence(&s).is_err());
    }
}
