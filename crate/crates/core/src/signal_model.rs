//! The APMS signal model and its synthesis.
//!
//! ```text
//! x[n] = A cos φ[n]
//!      + (s A k_a / 2) cos(φ[n] + ω_a n + θ_a)
//!      + (r A k_a / 2) cos(φ[n] − ω_a n − θ_a − θ_b)
//! φ[n] = ω_c n + k_p sin(ω_p n) + θ
//! ```
//!
//! `n` is always the absolute sample index of the record.

use serde::{Deserialize, Serialize};

use crate::error::{ApmsError, Result};
use crate::scalar::{wrap_phase, Scalar};

/// The eleven parameters of one stationary block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ApmsParams<T> {
    pub amplitude: T,
    pub theta: T,
    pub omega_c: T,
    pub omega_a: T,
    pub omega_p: T,
    pub k_a: T,
    pub k_p: T,
    pub theta_a: T,
    pub theta_b: T,
    pub s: T,
    /// Lower-sideband scale. Estimation fixes it at 1.
    #[serde(default = "one")]
    pub r: T,
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> ApmsParams<T> {
    /// Parameters used for the synthesized-signal experiment of the paper,
    /// with its nine-digit literals.
    #[allow(clippy::approx_constant)]
    pub fn table1() -> Self {
        ApmsParams {
            amplitude: T::lit(3.0),
            theta: T::lit(0.261799387),
            omega_c: T::lit(1.256637061),
            omega_a: T::lit(0.785398163),
            omega_p: T::lit(0.062831853),
            k_a: T::lit(0.5),
            k_p: T::lit(0.4),
            theta_a: T::lit(0.392699081),
            theta_b: T::lit(0.314159265),
            s: T::lit(0.6),
            r: T::one(),
        }
    }

    /// A plain cosine `amplitude · cos(omega n + theta)` expressed in the
    /// model (`k_a = k_p = 0`); the modulating frequencies are placeholders.
    pub fn cosine(amplitude: T, omega: T, theta: T) -> Self {
        ApmsParams {
            amplitude,
            theta,
            omega_c: omega,
            omega_a: omega / T::lit(2.0),
            omega_p: omega / T::lit(4.0),
            k_a: T::zero(),
            k_p: T::zero(),
            theta_a: T::zero(),
            theta_b: T::zero(),
            s: T::one(),
            r: T::one(),
        }
    }

    /// Checks the model invariants, returning the first violated field.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let fields: [(&'static str, T); 11] = [
            ("amplitude", self.amplitude),
            ("theta", self.theta),
            ("omega_c", self.omega_c),
            ("omega_a", self.omega_a),
            ("omega_p", self.omega_p),
            ("k_a", self.k_a),
            ("k_p", self.k_p),
            ("theta_a", self.theta_a),
            ("theta_b", self.theta_b),
            ("s", self.s),
            ("r", self.r),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err((name, "not finite".into()));
            }
        }
        if self.amplitude <= T::zero() {
            return Err(("amplitude", format!("must be > 0, got {}", self.amplitude)));
        }
        for (name, w) in [("omega_c", self.omega_c), ("omega_a", self.omega_a), ("omega_p", self.omega_p)] {
            if w <= T::zero() || w >= T::PI() {
                return Err((name, format!("must lie in (0, π), got {w}")));
            }
        }
        if self.omega_a >= self.omega_c {
            return Err(("omega_a", format!("must be below omega_c ({} >= {})", self.omega_a, self.omega_c)));
        }
        if self.k_a < T::zero() {
            return Err(("k_a", format!("must be >= 0, got {}", self.k_a)));
        }
        if self.k_p < T::zero() {
            return Err(("k_p", format!("must be >= 0, got {}", self.k_p)));
        }
        if self.s <= T::zero() {
            return Err(("s", format!("must be > 0, got {}", self.s)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(f, why)| ApmsError::arg(format!("{f}: {why}")))
    }

    /// Copy with every phase wrapped into `(−π, π]`.
    pub fn normalized(mut self) -> Self {
        self.theta = wrap_phase(self.theta);
        self.theta_a = wrap_phase(self.theta_a);
        self.theta_b = wrap_phase(self.theta_b);
        self
    }

    #[inline]
    fn carrier_phase(&self, n: T) -> T {
        self.omega_c * n + self.k_p * (self.omega_p * n).sin() + self.theta
    }

    #[inline]
    pub(crate) fn value_at(&self, n: T) -> T {
        let phi = self.carrier_phase(n);
        let half = self.amplitude * self.k_a / T::lit(2.0);
        let am = self.omega_a * n + self.theta_a;
        self.amplitude * phi.cos() + self.s * half * (phi + am).cos() + self.r * half * (phi - am - self.theta_b).cos()
    }

    #[inline]
    pub(crate) fn carrier_at(&self, n: T) -> T {
        self.amplitude * self.carrier_phase(n).cos()
    }
}

/// A block or record of samples at consecutive absolute indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries<T> {
    pub values: Vec<T>,
    pub start_index: i64,
    #[serde(default = "unit_rate")]
    pub sample_rate: f64,
}

fn unit_rate() -> f64 {
    1.0
}

impl<T: Scalar> SampleSeries<T> {
    /// Validates non-emptiness and finiteness.
    pub fn new(values: Vec<T>, start_index: i64) -> Result<Self> {
        if values.is_empty() {
            return Err(ApmsError::arg("sample series is empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ApmsError::arg(format!("sample {i} is not finite")));
        }
        Ok(SampleSeries { values, start_index, sample_rate: 1.0 })
    }

    pub fn with_rate(mut self, sample_rate: f64) -> Self {
        self.sample_rate = sample_rate;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Absolute indices `start_index ..`.
    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.values.len() as i64).map(move |i| self.start_index + i)
    }

    /// Sub-series `[offset, offset + len)` keeping absolute indexing.
    pub fn slice(&self, offset: usize, len: usize) -> Result<Self> {
        if offset + len > self.values.len() || len == 0 {
            return Err(ApmsError::arg(format!(
                "slice [{offset}, {}) outside series of length {}",
                offset + len,
                self.values.len()
            )));
        }
        Ok(SampleSeries {
            values: self.values[offset..offset + len].to_vec(),
            start_index: self.start_index + offset as i64,
            sample_rate: self.sample_rate,
        })
    }

    pub fn mean_square(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>() / T::from_index(self.values.len() as i64)
    }
}

/// `c_0 + c_1 n + … + c_d n^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPolynomial<T> {
    pub coefficients: Vec<T>,
}

impl<T: Scalar> ParamPolynomial<T> {
    pub fn constant(c: T) -> Self {
        ParamPolynomial { coefficients: vec![c] }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, n: T) -> T {
        self.coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * n + c)
    }
}

/// Polynomial trajectories for every parameter over an absolute time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingModel<T> {
    pub amplitude: ParamPolynomial<T>,
    pub theta: ParamPolynomial<T>,
    pub omega_c: ParamPolynomial<T>,
    pub omega_a: ParamPolynomial<T>,
    pub omega_p: ParamPolynomial<T>,
    pub k_a: ParamPolynomial<T>,
    pub k_p: ParamPolynomial<T>,
    pub theta_a: ParamPolynomial<T>,
    pub theta_b: ParamPolynomial<T>,
    pub s: ParamPolynomial<T>,
    pub r: ParamPolynomial<T>,
    pub block_centers: Vec<i64>,
    pub block_length: usize,
}

impl<T: Scalar> TimeVaryingModel<T> {
    /// Degree-0 model reproducing `params` over one block.
    pub fn constant(params: &ApmsParams<T>, block_centers: Vec<i64>, block_length: usize) -> Result<Self> {
        let c = ParamPolynomial::constant;
        Self::new(
            [
                c(params.amplitude),
                c(params.theta),
                c(params.omega_c),
                c(params.omega_a),
                c(params.omega_p),
                c(params.k_a),
                c(params.k_p),
                c(params.theta_a),
                c(params.theta_b),
                c(params.s),
                c(params.r),
            ],
            block_centers,
            block_length,
        )
    }

    /// Builds the model from polynomials in `ApmsParams` field order and
    /// verifies it on the modeled span.
    pub fn new(polys: [ParamPolynomial<T>; 11], block_centers: Vec<i64>, block_length: usize) -> Result<Self> {
        let [amplitude, theta, omega_c, omega_a, omega_p, k_a, k_p, theta_a, theta_b, s, r] = polys;
        let m = TimeVaryingModel {
            amplitude,
            theta,
            omega_c,
            omega_a,
            omega_p,
            k_a,
            k_p,
            theta_a,
            theta_b,
            s,
            r,
            block_centers,
            block_length,
        };
        m.validate()?;
        Ok(m)
    }

    /// Structural checks plus parameter validity at every index of the span.
    pub fn validate(&self) -> Result<()> {
        if self.block_centers.is_empty() {
            return Err(ApmsError::arg("time-varying model has no block centers"));
        }
        if self.block_length == 0 || self.block_length.is_multiple_of(2) {
            return Err(ApmsError::arg(format!("block_length must be odd, got {}", self.block_length)));
        }
        if self.block_centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ApmsError::arg("block centers must be strictly increasing"));
        }
        for p in self.polys() {
            if p.coefficients.is_empty() || p.coefficients.iter().any(|c| !c.is_finite()) {
                return Err(ApmsError::arg("every parameter polynomial needs finite coefficients"));
            }
        }
        let (a, b) = self.span();
        for n in a..b {
            self.params_at(n)?;
        }
        Ok(())
    }

    fn polys(&self) -> [&ParamPolynomial<T>; 11] {
        [
            &self.amplitude,
            &self.theta,
            &self.omega_c,
            &self.omega_a,
            &self.omega_p,
            &self.k_a,
            &self.k_p,
            &self.theta_a,
            &self.theta_b,
            &self.s,
            &self.r,
        ]
    }

    /// Half-open index range covered by the blocks.
    pub fn span(&self) -> (i64, i64) {
        let half = (self.block_length as i64 - 1) / 2;
        let first = *self.block_centers.first().unwrap_or(&0);
        let last = *self.block_centers.last().unwrap_or(&0);
        (first - half, last + half + 1)
    }

    /// Parameters at absolute index `n`.
    pub fn params_at(&self, n: i64) -> Result<ApmsParams<T>> {
        let t = T::from_index(n);
        let p = ApmsParams {
            amplitude: self.amplitude.eval(t),
            theta: self.theta.eval(t),
            omega_c: self.omega_c.eval(t),
            omega_a: self.omega_a.eval(t),
            omega_p: self.omega_p.eval(t),
            k_a: self.k_a.eval(t),
            k_p: self.k_p.eval(t),
            theta_a: self.theta_a.eval(t),
            theta_b: self.theta_b.eval(t),
            s: self.s.eval(t),
            r: self.r.eval(t),
        };
        p.check().map_err(|(field, reason)| ApmsError::InvalidModel { field, n, reason })?;
        Ok(p)
    }
}

/// Samples `n_first .. n_first + count` of the stationary model.
pub fn synthesize<T: Scalar>(params: &ApmsParams<T>, n_first: i64, count: usize) -> Result<SampleSeries<T>> {
    params.validate()?;
    if count == 0 {
        return Err(ApmsError::arg("count must be positive"));
    }
    let values = (0..count as i64).map(|i| params.value_at(T::from_index(n_first + i))).collect();
    Ok(SampleSeries { values, start_index: n_first, sample_rate: 1.0 })
}

/// First term of the model, `A cos(ω_c n + k_p sin(ω_p n) + θ)`.
pub fn carrier_component<T: Scalar>(params: &ApmsParams<T>, n: i64) -> Result<T> {
    params.validate()?;
    Ok(params.carrier_at(T::from_index(n)))
}

/// Samples of a time-varying model; every polynomial is evaluated at `n`.
pub fn synthesize_time_varying<T: Scalar>(
    model: &TimeVaryingModel<T>,
    n_first: i64,
    count: usize,
) -> Result<SampleSeries<T>> {
    if count == 0 {
        return Err(ApmsError::arg("count must be positive"));
    }
    let mut values = Vec::with_capacity(count);
    for n in n_first..n_first + count as i64 {
        let p = model.params_at(n)?;
        values.push(p.value_at(T::from_index(n)));
    }
    Ok(SampleSeries { values, start_index: n_first, sample_rate: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn table1_first_sample() {
        let x = synthesize(&ApmsParams::<f64>::table1(), 0, 1).unwrap();
        let oracle = 3.0 * (PI / 12.0).cos()
            + 0.45 * (PI / 12.0 + PI / 8.0).cos()
            + 0.75 * (PI / 12.0 - PI / 8.0 - PI / 10.0).cos();
        assert!((x.values[0] - oracle).abs() < 1e-8);
        assert!((x.values[0] - 3.9317).abs() < 1e-4);
    }

    #[test]
    fn trivial_cosines() {
        let p = ApmsParams::cosine(1.0, 0.7, 0.0);
        assert_eq!(synthesize(&p, 0, 1).unwrap().values[0], 1.0);
        let p = ApmsParams::cosine(2.0, 0.7, PI);
        assert!((synthesize(&p, 0, 1).unwrap().values[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn carrier_values() {
        let p = ApmsParams::<f64>::table1();
        assert!((carrier_component(&p, 0).unwrap() - 3.0 * (PI / 12.0).cos()).abs() < 1e-8);
        let q = ApmsParams { k_p: 0.0, theta: PI / 2.0 - 0.3, ..p };
        let n = 1;
        let q = ApmsParams { omega_c: 0.3, omega_a: 0.2, ..q };
        assert!(carrier_component(&q, n).unwrap().abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_params() {
        let p = ApmsParams::<f64>::table1();
        assert!(synthesize(&ApmsParams { amplitude: 0.0, ..p }, 0, 4).is_err());
        assert!(synthesize(&ApmsParams { omega_a: 1.3, ..p }, 0, 4).is_err());
        assert!(synthesize(&ApmsParams { s: -1.0, ..p }, 0, 4).is_err());
        assert!(synthesize(&p, 0, 0).is_err());
    }

    #[test]
    fn time_varying_reduces_to_constant() {
        let p = ApmsParams::<f64>::table1();
        let m = TimeVaryingModel::constant(&p, vec![125], 251).unwrap();
        let a = synthesize(&p, 0, 251).unwrap();
        let b = synthesize_time_varying(&m, 0, 251).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_amplitude_closed_form() {
        let p = ApmsParams::cosine(1.0, 0.9, 0.0);
        let mut m = TimeVaryingModel::constant(&p, vec![50], 101).unwrap();
        m.amplitude = ParamPolynomial { coefficients: vec![1.0, 0.001] };
        let x = synthesize_time_varying(&m, 0, 101).unwrap();
        for (n, v) in x.values.iter().enumerate() {
            let n = n as f64;
            assert!((v - (1.0 + 0.001 * n) * (0.9 * n).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_model_names_field_and_index() {
        let p = ApmsParams::cosine(1.0, 0.9, 0.0);
        let mut m = TimeVaryingModel::constant(&p, vec![50], 101).unwrap();
        m.amplitude = ParamPolynomial { coefficients: vec![1.0, -0.02] };
        match synthesize_time_varying(&m, 0, 101) {
            Err(ApmsError::InvalidModel { field: "amplitude", n: 50, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(m.validate().is_err());
    }

    #[test]
    fn json_field_names() {
        let v = serde_json::to_value(ApmsParams::<f64>::table1()).unwrap();
        for k in ["amplitude", "theta", "omega_c", "omega_a", "omega_p", "k_a", "k_p", "theta_a", "theta_b", "s", "r"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        let m = TimeVaryingModel::constant(&ApmsParams::<f64>::table1(), vec![20], 41).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert!(v["amplitude"].is_array());
    }
}
