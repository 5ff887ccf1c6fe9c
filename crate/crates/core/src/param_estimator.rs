//! Staged recovery of all APMS parameters from one block.
//!
//! Stage 1 proposes frequency triples (see [`crate::frequency_estimator`]).
//! Stage 2 solves the six-group Bessel system and reads `k_p` from ratios
//! of neighbouring amplitudes, `θ` from the argument of the summed squared
//! amplitudes and `A` from their moduli. Stage 3 subtracts the carrier,
//! solves the four sideband groups and reads `θ_a`, `θ_b`, `s` and `k_a`.
//! Every frequency triple is carried through both stages and the one whose
//! resynthesis fits the block best is kept.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_j_derivative, invert_bessel_ratio, significant_order_with, BesselOrderBound};
use crate::error::{ApmsError, Result};
use crate::frequency_estimator::{frequency_candidates, DetectionSettings, FrequencyCandidates, FrequencyTriple};
use crate::harmonic_solver::{
    build_design_matrix, fit_harmonics, ComplexAmplitudePartition, ALL_GROUPS, SIDEBAND_GROUPS,
};
use crate::linalg::{solve_square, Mat};
use crate::product_function::product_sequence;
use crate::scalar::{wrap_phase, Scalar};
use crate::signal_model::{ApmsParams, SampleSeries};

/// `k_a` below this (relative to `A`) is reported as "no AM".
pub const NO_AM_THRESHOLD: f64 = 1e-6;
/// Rows per design column required of a block.
pub const ROWS_PER_COLUMN: usize = 4;

/// How element-wise estimates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Arithmetic mean of the individual estimates.
    Plain,
    /// Each estimate weighted by its sensitivity to the amplitudes.
    #[default]
    Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// AR order for both spectra; `None` picks `min(60, len / 3)`.
    pub ar_order: Option<usize>,
    pub grid_size: usize,
    /// Product-spectrum line floor relative to the strongest line.
    pub prominence: f64,
    /// Minimum line amplitude in standard errors.
    pub significance: f64,
    /// Largest acceptable residual NRMSE.
    pub residual_tolerance: f64,
    pub averaging: Averaging,
    /// Least-squares refinement of the winning frequencies.
    pub refine_frequencies: bool,
    /// Bessel order used while refining frequencies.
    pub refine_order: usize,
    /// Hypotheses kept from each spectrum.
    pub candidate_limit: usize,
    /// Also search the spectrum of the block itself.
    pub direct_candidates: bool,
    /// `|J_m|` floor for significant sidebands.
    pub bessel_threshold: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            ar_order: None,
            grid_size: crate::spectral::DEFAULT_GRID,
            prominence: 0.005,
            significance: 3.0,
            residual_tolerance: 0.5,
            averaging: Averaging::Precision,
            refine_frequencies: true,
            refine_order: 4,
            candidate_limit: 6,
            direct_candidates: true,
            bessel_threshold: crate::bessel::DEFAULT_THRESHOLD,
        }
    }
}

impl EstimatorConfig {
    pub fn detection(&self) -> DetectionSettings {
        DetectionSettings {
            ar_order: self.ar_order,
            grid_size: self.grid_size,
            prominence: self.prominence,
            significance: self.significance,
            candidate_limit: self.candidate_limit,
            use_direct: self.direct_candidates,
            ..DetectionSettings::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < crate::spectral::MIN_GRID {
            return Err(ApmsError::arg(format!("grid size must be at least {}", crate::spectral::MIN_GRID)));
        }
        if !(self.prominence > 0.0 && self.prominence < 1.0) {
            return Err(ApmsError::arg("prominence must lie in (0, 1)"));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(ApmsError::arg("residual tolerance must be positive"));
        }
        if self.ar_order == Some(0) {
            return Err(ApmsError::arg("AR order must be positive"));
        }
        Ok(())
    }
}

/// A combined estimate and the spread (max − min) of its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averaged<T> {
    pub value: T,
    pub spread: T,
    pub count: usize,
}

fn spread<T: Scalar>(v: &[T]) -> T {
    let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
    let lo = v.iter().copied().fold(T::infinity(), T::min);
    if v.is_empty() {
        T::zero()
    } else {
        hi - lo
    }
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_index(v.len() as i64)
}

fn group<T: Scalar>(p: &ComplexAmplitudePartition<T>, g: u8) -> Result<&[Complex<T>]> {
    p.r(g).ok_or_else(|| ApmsError::arg(format!("amplitude group {g} missing from the partition")))
}

// r2 stored m = −M..M holds J_{−m}; reversed it runs like r1
fn reversed<T: Scalar>(v: &[Complex<T>]) -> Vec<Complex<T>> {
    v.iter().rev().copied().collect()
}

fn sum_sq<T: Scalar>(v: &[Complex<T>]) -> Complex<T> {
    v.iter().fold(Complex::new(T::zero(), T::zero()), |acc, z| acc + z * z)
}

/// `k_p` from `J_0/J_{|m|}` ratios, `|m| ≤ 2`, of groups 1 and 2.
pub fn estimate_kp<T: Scalar>(partition: &ComplexAmplitudePartition<T>) -> Result<T> {
    estimate_kp_with(partition, Averaging::Plain).map(|a| a.value)
}

pub fn estimate_kp_with<T: Scalar>(partition: &ComplexAmplitudePartition<T>, averaging: Averaging) -> Result<Averaged<T>> {
    let m = partition.m_max.m_max as i64;
    let vecs = [group(partition, 1)?.to_vec(), reversed(group(partition, 2)?)];
    let mut ks = Vec::new();
    let mut orders = Vec::new();
    for v in &vecs {
        let c = v[m as usize];
        if c.norm_sqr() == T::zero() {
            continue;
        }
        for o in [-2_i64, -1, 1, 2] {
            if o.abs() > m {
                continue;
            }
            let d = v[(m + o) as usize];
            if d.norm_sqr() == T::zero() {
                continue;
            }
            let sign = if o < 0 && o % 2 != 0 { -T::one() } else { T::one() };
            let ratio = (c / d).re * sign;
            if let Ok(k) = invert_bessel_ratio(ratio, o.unsigned_abs() as u32) {
                ks.push(k);
                orders.push(o.unsigned_abs() as i32);
            }
        }
    }
    if ks.is_empty() {
        return Err(ApmsError::Estimation(
            "no Bessel ratio could be inverted; k_p is probably 0".into(),
        ));
    }
    let plain = mean(&ks);
    let value = match averaging {
        Averaging::Plain => plain,
        Averaging::Precision => {
            let w: Vec<T> = orders.iter().map(|&o| kp_weight(o, plain)).collect();
            let sw: T = w.iter().copied().sum();
            if sw > T::zero() && sw.is_finite() {
                ks.iter().zip(&w).map(|(&k, &w)| k * w).sum::<T>() / sw
            } else {
                plain
            }
        }
    };
    Ok(Averaged { value, spread: spread(&ks), count: ks.len() })
}

// squared sensitivity of J_0/J_o to k, scaled by J_o
fn kp_weight<T: Scalar>(order: i32, k: T) -> T {
    let f = || -> Result<T> {
        let j0 = bessel_j(0, k)?;
        let jo = bessel_j(order, k)?;
        let d = bessel_j_derivative(0, k)? / j0 - bessel_j_derivative(order, k)? / jo;
        Ok((jo * d) * (jo * d))
    };
    f().ok().filter(|w| w.is_finite()).unwrap_or_else(T::zero)
}

/// Principal `θ = ½ arg(S₁ + conj S₂)`, `S_g = Σ_m r_g[m]²`; defined mod π.
pub fn estimate_theta<T: Scalar>(partition: &ComplexAmplitudePartition<T>) -> Result<T> {
    let r1 = group(partition, 1)?;
    let r2 = group(partition, 2)?;
    let s = sum_sq(r1) + sum_sq(r2).conj();
    let energy: T = r1.iter().chain(r2).map(|z| z.norm_sqr()).sum();
    if s.norm() <= T::lit(1e-12) * energy || energy == T::zero() {
        return Err(ApmsError::Estimation("sum of squared carrier amplitudes vanishes; θ is undefined".into()));
    }
    Ok(s.arg() / T::lit(2.0))
}

/// Carrier amplitude from the moduli of groups 1 and 2.
pub fn estimate_amplitude<T: Scalar>(
    partition: &ComplexAmplitudePartition<T>,
    k_p: T,
    averaging: Averaging,
    threshold: T,
) -> Result<Averaged<T>> {
    let m = partition.m_max.m_max;
    let j = crate::bessel::bessel_row(m, k_p)?;
    let vecs = [group(partition, 1)?.to_vec(), reversed(group(partition, 2)?)];
    let two = T::lit(2.0);
    let parts: Vec<T> = vecs
        .iter()
        .flat_map(|v| v.iter().zip(&j).filter(|(_, jm)| jm.abs() > threshold).map(|(r, jm)| two * r.norm() / jm.abs()))
        .collect();
    if parts.is_empty() {
        return Err(ApmsError::Estimation(format!("no Bessel weight exceeds {threshold} at k_p = {k_p}")));
    }
    let value = match averaging {
        Averaging::Plain => mean(&parts),
        Averaging::Precision => {
            let num: T = vecs.iter().flat_map(|v| v.iter().zip(&j).map(|(r, jm)| two * r.norm() * jm.abs())).sum();
            let den: T = two * j.iter().map(|&x| x * x).sum::<T>();
            num / den
        }
    };
    Ok(Averaged { value, spread: spread(&parts), count: parts.len() })
}

/// `x[n] − A cos(ω_c n + k_p sin(ω_p n) + θ)`.
pub fn subtract_carrier<T: Scalar>(data: &SampleSeries<T>, params: &ApmsParams<T>) -> Result<SampleSeries<T>> {
    if data.is_empty() {
        return Err(ApmsError::arg("data is empty"));
    }
    params.validate()?;
    let values = data.indices().zip(&data.values).map(|(n, &v)| v - params.carrier_at(T::from_index(n))).collect();
    Ok(SampleSeries { values, start_index: data.start_index, sample_rate: data.sample_rate })
}

/// Carrier quantities already estimated when stage 3 runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownCarrier<T> {
    pub amplitude: T,
    pub theta: T,
    pub k_p: T,
}

/// Sideband parameters; the phases are principal values (mod π ambiguity
/// still open) unless resolved by [`estimate_block`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandEstimate<T> {
    pub theta_a: T,
    pub theta_b: T,
    pub s: Averaged<T>,
    pub k_a: Averaged<T>,
    pub no_am: bool,
}

/// `θ_a`, `θ_b`, `s`, `k_a` from the sideband groups 3–6 (with `r = 1`).
pub fn estimate_sideband_params<T: Scalar>(
    partition0: &ComplexAmplitudePartition<T>,
    known: &KnownCarrier<T>,
) -> Result<SidebandEstimate<T>> {
    let jrow = crate::bessel::bessel_row(partition0.m_max.m_max, known.k_p)?;
    let sj: T = jrow.iter().map(|&v| v * v).sum();
    let s: Vec<Complex<T>> = (3..=6).map(|g| group(partition0, g).map(sum_sq)).collect::<Result<_>>()?;
    let four = T::lit(4.0);
    let a = known.amplitude;
    // s·k_a, s·k_a, k_a, k_a
    let e: Vec<T> = s.iter().map(|z| four * (z.norm() / sj).sqrt() / a).collect();
    let tiny = T::lit(NO_AM_THRESHOLD);
    let zero = Averaged { value: T::zero(), spread: T::zero(), count: 0 };
    if e.iter().copied().fold(T::zero(), T::max) < tiny {
        return Ok(SidebandEstimate {
            theta_a: T::zero(),
            theta_b: T::zero(),
            s: Averaged { value: T::one(), ..zero },
            k_a: zero,
            no_am: true,
        });
    }
    if e[2] < tiny || e[3] < tiny {
        return Err(ApmsError::SUndefined);
    }
    let s_parts = [(s[0].norm() / s[2].norm()).sqrt(), (s[1].norm() / s[3].norm()).sqrt()];
    let s_val = mean(&s_parts);
    let ka_parts = [e[0] / s_val, e[1] / s_val, e[2], e[3]];
    let k_a = mean(&ka_parts);
    let half = T::lit(0.5);
    let upper = s[0] + s[1].conj();
    let lower = s[2] + s[3].conj();
    let theta_a = half * upper.arg() - known.theta;
    let theta_b = known.theta - theta_a - half * lower.arg();
    Ok(SidebandEstimate {
        theta_a: wrap_phase(theta_a),
        theta_b: wrap_phase(theta_b),
        s: Averaged { value: s_val, spread: spread(&s_parts), count: 2 },
        k_a: Averaged { value: k_a, spread: spread(&ka_parts), count: 4 },
        no_am: k_a < tiny,
    })
}

/// Spreads of the averaged quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spreads<T> {
    pub k_p: T,
    pub amplitude: T,
    pub s: T,
    pub k_a: T,
    /// `|½ arg S₁ − (−½ arg S₂)|`, wrapped mod π.
    pub theta: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    /// Clusters and hypotheses from both spectra.
    pub frequency: Option<FrequencyCandidates<T>>,
    pub candidates_evaluated: usize,
    /// Frequencies before refinement.
    pub selected: FrequencyTriple<T>,
    pub refined: bool,
    pub m_max: usize,
    pub carrier_condition: T,
    pub sideband_condition: T,
    pub spreads: Spreads<T>,
    /// `2|S₁|^{1/2}`, an independent amplitude reading.
    pub amplitude_cross_check: T,
    /// Relative mismatch of the conjugate group pairs (1, 2), (3, 4), (5, 6).
    pub conjugate_mismatch: [T; 3],
    /// Which half-angle branches won and by how much.
    pub ambiguity: Vec<String>,
    pub no_am: bool,
    /// `ω_p` carries no information when `k_p = 0`.
    pub omega_p_indeterminate: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct EstimationReport<T> {
    pub params: ApmsParams<T>,
    pub residual_nrmse: T,
    pub diagnostics: Diagnostics<T>,
}

fn max_order_for(n: usize, groups: usize) -> usize {
    let per = ROWS_PER_COLUMN * groups;
    if n < per {
        0
    } else {
        (n / per - 1) / 2
    }
}

struct StageResult<T> {
    params: ApmsParams<T>,
    nrmse: T,
    m_max: usize,
    cond2: T,
    cond3: T,
    spreads: Spreads<T>,
    cross: T,
    conj: [T; 3],
    ambiguity: Vec<String>,
    no_am: bool,
    kp_zero: bool,
}

fn sq_dist<T: Scalar>(x: &SampleSeries<T>, f: impl Fn(T) -> T) -> T {
    x.indices().zip(&x.values).map(|(n, &v)| {
        let d = v - f(T::from_index(n));
        d * d
    }).sum()
}

fn run_stages<T: Scalar>(x: &SampleSeries<T>, f: FrequencyTriple<T>, pm: bool, cfg: &EstimatorConfig) -> Result<StageResult<T>> {
    let cap = max_order_for(x.len(), 6);
    let thr = T::lit(cfg.bessel_threshold);
    let mut m = if pm { 3.min(cap) } else { 0 };
    let mut kp = Averaged { value: T::zero(), spread: T::zero(), count: 0 };
    let mut fit;
    let mut iterations = 0;
    loop {
        let d = build_design_matrix(&f, BesselOrderBound { m_max: m }, x.start_index, x.len(), &ALL_GROUPS)
            .map_err(|e| e.in_stage("stage 2"))?;
        fit = fit_harmonics(x, &d).map_err(|e| e.in_stage("stage 2"))?;
        iterations += 1;
        if m == 0 {
            kp.value = T::zero();
            break;
        }
        kp = estimate_kp_with(&fit.amplitudes, cfg.averaging).map_err(|e| e.in_stage("stage 2"))?;
        let m2 = significant_order_with(kp.value, thr).map_err(|e| e.in_stage("stage 2"))?.m_max.min(cap);
        if m2 == m || iterations >= 3 {
            break;
        }
        m = m2;
    }
    let part = &fit.amplitudes;
    let k_p = kp.value;
    let amp = estimate_amplitude(part, k_p, cfg.averaging, thr).map_err(|e| e.in_stage("stage 2"))?;
    let th0 = estimate_theta(part).map_err(|e| e.in_stage("stage 2"))?;
    let base = ApmsParams {
        amplitude: amp.value,
        theta: th0,
        omega_c: f.omega_c,
        omega_a: f.omega_a,
        omega_p: f.omega_p,
        k_a: T::zero(),
        k_p,
        theta_a: T::zero(),
        theta_b: T::zero(),
        s: T::one(),
        r: T::one(),
    };
    if base.amplitude <= T::zero() || !base.amplitude.is_finite() {
        return Err(ApmsError::Estimation("carrier amplitude estimate is not positive".into()).in_stage("stage 2"));
    }
    let mut ambiguity = Vec::new();
    let mut best_theta = (T::infinity(), th0);
    for th in [th0, th0 + T::PI()] {
        let p = ApmsParams { theta: wrap_phase(th), ..base };
        let r = sq_dist(x, |n| p.carrier_at(n));
        if r < best_theta.0 {
            best_theta = (r, wrap_phase(th));
        }
    }
    if best_theta.1 != wrap_phase(th0) {
        ambiguity.push("theta: shifted by π".into());
    }
    let carrier = ApmsParams { theta: best_theta.1, ..base };
    let x0 = SampleSeries {
        values: x.indices().zip(&x.values).map(|(n, &v)| v - carrier.carrier_at(T::from_index(n))).collect(),
        start_index: x.start_index,
        sample_rate: x.sample_rate,
    };
    let d0 = build_design_matrix(&f, BesselOrderBound { m_max: part.m_max.m_max }, x.start_index, x.len(), &SIDEBAND_GROUPS)
        .map_err(|e| e.in_stage("stage 3"))?;
    let fit0 = fit_harmonics(&x0, &d0).map_err(|e| e.in_stage("stage 3"))?;
    let known = KnownCarrier { amplitude: carrier.amplitude, theta: carrier.theta, k_p };
    let sb = estimate_sideband_params(&fit0.amplitudes, &known).map_err(|e| e.in_stage("stage 3"))?;
    let energy: T = x.values.iter().map(|&v| v * v).sum();
    let mut best: Option<(T, ApmsParams<T>, (bool, bool))> = None;
    let branches: &[(bool, bool)] = if sb.no_am { &[(false, false)] } else { &[(false, false), (true, false), (false, true), (true, true)] };
    for &(da, db) in branches {
        let sa = if da { T::PI() } else { T::zero() };
        let sbb = if db { T::PI() } else { T::zero() };
        let p = ApmsParams {
            k_a: sb.k_a.value,
            s: sb.s.value,
            theta_a: wrap_phase(sb.theta_a + sa),
            theta_b: wrap_phase(sb.theta_b + sbb - sa),
            ..carrier
        };
        let r = sq_dist(x, |n| p.value_at(n));
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, p, (da, db)));
        }
    }
    let (res, params, (da, db)) = best.expect("at least one branch");
    if da {
        ambiguity.push("theta_a: shifted by π".into());
    }
    if db {
        ambiguity.push("theta_b: shifted by π".into());
    }
    let nrmse = if energy > T::zero() { (res / energy).sqrt() } else { T::infinity() };
    let r1 = part.r(1).expect("group 1");
    let r2 = part.r(2).expect("group 2");
    let half = T::lit(0.5);
    let theta_spread = wrap_phase(T::lit(2.0) * (half * sum_sq(r1).arg() + half * sum_sq(r2).arg())).abs() / T::lit(2.0);
    Ok(StageResult {
        params: params.normalized(),
        nrmse,
        m_max: part.m_max.m_max,
        cond2: part.condition,
        cond3: fit0.amplitudes.condition,
        spreads: Spreads { k_p: kp.spread, amplitude: amp.spread, s: sb.s.spread, k_a: sb.k_a.spread, theta: theta_spread },
        cross: T::lit(2.0) * sum_sq(r1).norm().sqrt(),
        conj: [
            part.conjugate_mismatch(1).unwrap_or_else(T::zero),
            fit0.amplitudes.conjugate_mismatch(3).unwrap_or_else(T::zero),
            fit0.amplitudes.conjugate_mismatch(5).unwrap_or_else(T::zero),
        ],
        ambiguity,
        no_am: sb.no_am,
        kp_zero: k_p == T::zero(),
    })
}

// x − Re(W R) for the six-group system
fn carrier_residual<T: Scalar>(x: &SampleSeries<T>, w: &[T; 3], m: usize) -> Option<Vec<T>> {
    let f = FrequencyTriple { omega_c: w[0], omega_a: w[1], omega_p: w[2] };
    let d = build_design_matrix(&f, BesselOrderBound { m_max: m }, x.start_index, x.len(), &ALL_GROUPS).ok()?;
    let fit = fit_harmonics(x, &d).ok()?;
    Some(x.values.iter().zip(&fit.fitted).map(|(&a, &b)| a - b).collect())
}

/// Levenberg–Marquardt on the frequencies named in `free`, minimizing the
/// six-group least-squares residual.
fn refine_frequencies<T: Scalar>(x: &SampleSeries<T>, start: FrequencyTriple<T>, m: usize, free: &[usize]) -> FrequencyTriple<T> {
    let mut w = [start.omega_c, start.omega_a, start.omega_p];
    let Some(mut r) = carrier_residual(x, &w, m) else { return start };
    let cost = |r: &[T]| r.iter().map(|&v| v * v).sum::<T>();
    let mut c = cost(&r);
    let mut lam = T::lit(1e-3);
    let h = T::epsilon().sqrt().max(T::lit(1e-7));
    let k = free.len();
    'outer: for _ in 0..30 {
        let mut jac: Vec<Vec<T>> = Vec::with_capacity(k);
        for &i in free {
            let mut wp = w;
            wp[i] = wp[i] + h;
            let Some(rp) = carrier_residual(x, &wp, m) else { break 'outer };
            jac.push(rp.iter().zip(&r).map(|(&a, &b)| (a - b) / h).collect());
        }
        let jtj = Mat::from_fn(k, k, |a, b| jac[a].iter().zip(&jac[b]).map(|(&u, &v)| u * v).sum::<T>());
        let g: Vec<T> = (0..k).map(|a| -jac[a].iter().zip(&r).map(|(&u, &v)| u * v).sum::<T>()).collect();
        let step = loop {
            let a = Mat::from_fn(k, k, |i, j| {
                let v = jtj.get(i, j);
                if i == j {
                    v + lam * v
                } else {
                    v
                }
            });
            let accepted = solve_square(&a, &g).and_then(|d| {
                let mut w2 = w;
                for (ii, &i) in free.iter().enumerate() {
                    w2[i] = w2[i] + d[ii];
                }
                let r2 = carrier_residual(x, &w2, m)?;
                let c2 = cost(&r2);
                (c2 < c).then_some((d, w2, r2, c2))
            });
            match accepted {
                Some((d, w2, r2, c2)) => {
                    w = w2;
                    r = r2;
                    c = c2;
                    lam = (lam / T::lit(10.0)).max(T::lit(1e-9));
                    break d;
                }
                None => {
                    lam = lam * T::lit(10.0);
                    if lam > T::lit(1e8) {
                        break 'outer;
                    }
                }
            }
        };
        if step.iter().all(|d| d.abs() < T::lit(1e-13)) {
            break;
        }
    }
    FrequencyTriple { omega_c: w[0], omega_a: w[1], omega_p: w[2] }
}

fn triples<T: Scalar>(cands: &FrequencyCandidates<T>) -> Vec<(FrequencyTriple<T>, bool)> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut push = |t: FrequencyTriple<T>, pm: bool| {
        if !t.is_ordered() {
            return;
        }
        let k = |v: T| (v * T::lit(1e5)).round().as_f64() as i64;
        if seen.insert((k(t.omega_c), k(t.omega_a), k(t.omega_p))) {
            out.push((t, pm));
        }
    };
    for &(wc, wa) in &cands.pairs {
        if cands.spacings.is_empty() {
            push(FrequencyTriple { omega_c: wc, omega_a: wa, omega_p: wa / T::lit(2.0) }, false);
            continue;
        }
        for &wp in &cands.spacings {
            for i in -1..=1 {
                for j in -1..=1 {
                    let t = FrequencyTriple {
                        omega_c: wc + T::from_index(i) * wp,
                        omega_a: wa + T::from_index(j) * wp,
                        omega_p: wp,
                    };
                    push(t, true);
                }
            }
        }
    }
    out
}

/// Estimates every parameter of one block.
///
/// The block must have odd length and at least 24 samples; its
/// `start_index` is the absolute time of the first sample.
pub fn estimate_block<T: Scalar>(block: &SampleSeries<T>, config: &EstimatorConfig) -> Result<EstimationReport<T>> {
    config.validate()?;
    let n = block.len();
    if n.is_multiple_of(2) {
        return Err(ApmsError::arg(format!("block length must be odd, got {n}")));
    }
    if n < ROWS_PER_COLUMN * 6 {
        return Err(ApmsError::arg(format!("block needs at least {} samples, got {n}", ROWS_PER_COLUMN * 6)));
    }
    if block.values.iter().all(|&v| v == T::zero()) {
        return Err(ApmsError::arg("block is identically zero"));
    }
    let seq = product_sequence(block).map_err(|e| e.in_stage("product sequence"))?;
    let cands = frequency_candidates(block, &seq, &config.detection()).map_err(|e| e.in_stage("frequency"))?;
    let list = triples(&cands);
    let mut best: Option<(StageResult<T>, FrequencyTriple<T>, bool)> = None;
    let mut last_err = None;
    for &(t, pm) in &list {
        match run_stages(block, t, pm, config) {
            Ok(s) if s.nrmse.is_finite() => {
                if best.as_ref().is_none_or(|b| s.nrmse < b.0.nrmse) {
                    best = Some((s, t, pm));
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    let Some((mut stage, selected, pm)) = best else {
        return Err(last_err.unwrap_or_else(|| {
            ApmsError::Resolution("no frequency triple satisfies 0 < ω_p < ω_a < ω_c < π".into()).in_stage("frequency")
        }));
    };
    let mut refined = false;
    let mut notes = cands.notes.clone();
    if config.refine_frequencies {
        let pm_active = pm && !stage.kp_zero;
        let m = if pm_active { config.refine_order.min(max_order_for(n, 6)) } else { 0 };
        let free: &[usize] = match (pm_active && m > 0, stage.no_am) {
            (true, false) => &[0, 1, 2],
            (true, true) => &[0, 2],
            (false, false) => &[0, 1],
            (false, true) => &[0],
        };
        let t = refine_frequencies(block, selected, m, free);
        if t.is_ordered() && t != selected {
            match run_stages(block, t, pm, config) {
                Ok(s) if s.nrmse <= stage.nrmse => {
                    stage = s;
                    refined = true;
                }
                Ok(_) => notes.push("frequency refinement did not lower the residual; kept the unrefined fit".into()),
                Err(e) => notes.push(format!("refined frequencies failed: {e}")),
            }
        }
    }
    let tol = T::lit(config.residual_tolerance);
    if !(stage.nrmse <= tol) {
        return Err(ApmsError::PoorFit { nrmse: stage.nrmse.as_f64(), tolerance: config.residual_tolerance });
    }
    if stage.kp_zero {
        notes.push("k_p = 0: omega_p is indeterminate".into());
    }
    if stage.no_am {
        notes.push("no AM detected: k_a = 0, s, theta_a and theta_b are placeholders".into());
    }
    Ok(EstimationReport {
        params: stage.params,
        residual_nrmse: stage.nrmse,
        diagnostics: Diagnostics {
            frequency: Some(cands),
            candidates_evaluated: list.len(),
            selected,
            refined,
            m_max: stage.m_max,
            carrier_condition: stage.cond2,
            sideband_condition: stage.cond3,
            spreads: stage.spreads,
            amplitude_cross_check: stage.cross,
            conjugate_mismatch: stage.conj,
            ambiguity: stage.ambiguity,
            no_am: stage.no_am,
            omega_p_indeterminate: stage.kp_zero,
            notes,
        },
    })
}
