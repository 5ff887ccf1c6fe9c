//! Bessel-sideband design matrix and its complex least-squares solution.
//!
//! Six phasor groups cover the carrier and the two AM sidebands, each with
//! its positive- and negative-frequency half:
//!
//! | group | column `m` |
//! |---|---|
//! | 1 | `e^{ j(ω_c + mω_p)n}` |
//! | 2 | `e^{−j(ω_c − mω_p)n}` |
//! | 3 | `e^{ j(ω_c + ω_a + mω_p)n}` |
//! | 4 | `e^{−j(ω_c + ω_a − mω_p)n}` |
//! | 5 | `e^{ j(ω_c − ω_a + mω_p)n}` |
//! | 6 | `e^{−j(ω_c − ω_a − mω_p)n}` |
//!
//! with `m = −M..M` and `n` the absolute sample index.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::bessel::BesselOrderBound;
use crate::error::{ApmsError, Result};
use crate::frequency_estimator::FrequencyTriple;
use crate::linalg::{Mat, PivotedQr};
use crate::scalar::Scalar;
use crate::signal_model::SampleSeries;

/// Groups of the full carrier-plus-sideband system.
pub const ALL_GROUPS: [u8; 6] = [1, 2, 3, 4, 5, 6];
/// Groups left after the carrier has been subtracted.
pub const SIDEBAND_GROUPS: [u8; 4] = [3, 4, 5, 6];

/// Group and Bessel order of one design column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub group: u8,
    pub order: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T: Scalar> {
    pub entries: Mat<Complex<T>>,
    pub column_map: Vec<ColumnLabel>,
    pub m_max: BesselOrderBound,
    pub n_first: i64,
    pub groups: Vec<u8>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }
}

// signed frequency of column (g, m)
fn column_frequency<T: Scalar>(f: &FrequencyTriple<T>, group: u8, m: i32) -> T {
    let mw = T::from_index(m as i64) * f.omega_p;
    match group {
        1 => f.omega_c + mw,
        2 => -(f.omega_c - mw),
        3 => f.omega_c + f.omega_a + mw,
        4 => -(f.omega_c + f.omega_a - mw),
        5 => f.omega_c - f.omega_a + mw,
        _ => -(f.omega_c - f.omega_a - mw),
    }
}

/// Phasor columns for samples `n_first .. n_first + n_count`.
pub fn build_design_matrix<T: Scalar>(
    freqs: &FrequencyTriple<T>,
    m_max: BesselOrderBound,
    n_first: i64,
    n_count: usize,
    groups: &[u8],
) -> Result<DesignMatrix<T>> {
    if groups.is_empty() || groups.iter().any(|g| !(1..=6).contains(g)) {
        return Err(ApmsError::arg(format!("groups must be a non-empty subset of 1..=6, got {groups:?}")));
    }
    let m = m_max.m_max as i32;
    let column_map: Vec<ColumnLabel> = groups
        .iter()
        .flat_map(|&group| (-m..=m).map(move |order| ColumnLabel { group, order }))
        .collect();
    let cols = column_map.len();
    if n_count <= cols {
        return Err(ApmsError::Underdetermined { rows: n_count, cols });
    }
    let w: Vec<T> = column_map.iter().map(|c| column_frequency(freqs, c.group, c.order)).collect();
    let entries = Mat::from_fn(n_count, cols, |i, j| {
        let ph = w[j] * T::from_index(n_first + i as i64);
        Complex::new(ph.cos(), ph.sin())
    });
    Ok(DesignMatrix { entries, column_map, m_max, n_first, groups: groups.to_vec() })
}

/// Solved amplitudes, split by group; each present group holds `2M+1`
/// values ordered `m = −M..M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexAmplitudePartition<T> {
    pub groups: [Option<Vec<Complex<T>>>; 6],
    pub m_max: BesselOrderBound,
    pub residual_norm: T,
    pub condition: T,
}

impl<T: Scalar> ComplexAmplitudePartition<T> {
    /// Amplitudes of group `g` (1-based).
    pub fn r(&self, g: u8) -> Option<&[Complex<T>]> {
        self.groups.get(g as usize - 1).and_then(|v| v.as_deref())
    }

    /// Relative mismatch between group `odd` and the reversed conjugate of
    /// its partner `odd + 1`; small for real data.
    pub fn conjugate_mismatch(&self, odd: u8) -> Option<T> {
        let a = self.r(odd)?;
        let b = self.r(odd + 1)?;
        let num: T = a.iter().zip(b.iter().rev()).map(|(x, y)| (x - y.conj()).norm_sqr()).sum();
        let den: T = a.iter().map(|x| x.norm_sqr()).sum();
        Some(if den > T::zero() { (num / den).sqrt() } else { num.sqrt() })
    }
}

/// Least-squares amplitudes plus the real part of the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFit<T> {
    pub amplitudes: ComplexAmplitudePartition<T>,
    pub fitted: Vec<T>,
}

/// Solves `X ≈ W R` by pivoted QR.
pub fn solve_complex_amplitudes<T: Scalar>(
    data: &SampleSeries<T>,
    design: &DesignMatrix<T>,
) -> Result<ComplexAmplitudePartition<T>> {
    fit_harmonics(data, design).map(|f| f.amplitudes)
}

/// [`solve_complex_amplitudes`] that also returns `Re(W R)`.
pub fn fit_harmonics<T: Scalar>(data: &SampleSeries<T>, design: &DesignMatrix<T>) -> Result<HarmonicFit<T>> {
    if data.len() != design.rows() {
        return Err(ApmsError::arg(format!(
            "data has {} samples but the design matrix has {} rows",
            data.len(),
            design.rows()
        )));
    }
    if data.start_index != design.n_first {
        return Err(ApmsError::arg(format!(
            "data starts at n = {} but the design matrix at n = {}",
            data.start_index, design.n_first
        )));
    }
    let qr = PivotedQr::new(&design.entries, T::rank_eps());
    let b: Vec<Complex<T>> = data.values.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let Some(x) = qr.solve(&b) else {
        let mut groups: Vec<u8> = qr.dependent_columns().iter().map(|&c| design.column_map[c].group).collect();
        groups.sort_unstable();
        groups.dedup();
        return Err(ApmsError::SolverRankDeficient { groups });
    };
    let fit = design.entries.mul_vec(&x);
    let residual_norm = fit.iter().zip(&b).map(|(f, v)| (v - f).norm_sqr()).sum::<T>().sqrt();
    let width = 2 * design.m_max.m_max + 1;
    let mut groups: [Option<Vec<Complex<T>>>; 6] = Default::default();
    for (k, &g) in design.groups.iter().enumerate() {
        groups[g as usize - 1] = Some(x[k * width..(k + 1) * width].to_vec());
    }
    Ok(HarmonicFit {
        amplitudes: ComplexAmplitudePartition {
            groups,
            m_max: design.m_max,
            residual_norm,
            condition: qr.condition_estimate(),
        },
        fitted: fit.iter().map(|c| c.re).collect(),
    })
}
