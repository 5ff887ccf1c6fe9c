//! Block-wise tracking of slowly varying parameters.
//!
//! A long record is cut into odd-length blocks, each block is estimated on
//! its own, and the per-block values are fitted by polynomials in the
//! absolute sample index. Frequencies are fitted as instantaneous
//! frequencies and converted to the `ω(n)·n` form of the model; phases are
//! unwrapped along the record before fitting.

use serde::{Deserialize, Serialize};

use crate::error::{ApmsError, Result};
use crate::linalg::{Mat, PivotedQr};
use crate::param_estimator::{estimate_block, EstimationReport, EstimatorConfig};
use crate::scalar::Scalar;
use crate::signal_model::{synthesize, synthesize_time_varying, ApmsParams, ParamPolynomial, SampleSeries, TimeVaryingModel};

/// Block lengths tried by [`sweep_block_lengths`] by default.
pub const SWEEP_LENGTHS: [usize; 5] = [21, 31, 41, 51, 61];
/// Smallest block [`block_symmetry`] accepts.
pub const MIN_SYMMETRY_LENGTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub block_length: usize,
    pub hop: usize,
    /// Centers relative to the first sample of the record.
    pub centers: Vec<i64>,
}

impl BlockPlan {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn half(&self) -> i64 {
        (self.block_length as i64 - 1) / 2
    }

    /// Offset of block `i` within the record.
    pub fn start(&self, i: usize) -> usize {
        (self.centers[i] - self.half()) as usize
    }
}

/// Every block of `block_length` samples starting at multiples of `hop`
/// that fits inside the record.
pub fn plan_blocks(record_length: usize, block_length: usize, hop: usize) -> Result<BlockPlan> {
    if block_length == 0 || block_length.is_multiple_of(2) {
        return Err(ApmsError::arg(format!(
            "block length must be odd (the product sequence is centered), got {block_length}"
        )));
    }
    if hop == 0 {
        return Err(ApmsError::arg("hop must be positive"));
    }
    if block_length > record_length {
        return Err(ApmsError::arg(format!(
            "block length {block_length} exceeds the record length {record_length}"
        )));
    }
    let half = (block_length as i64 - 1) / 2;
    let centers = (0..=record_length - block_length).step_by(hop).map(|s| s as i64 + half).collect();
    Ok(BlockPlan { block_length, hop, centers })
}

/// Height and spacing symmetry of the three strongest DFT peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryScore<T> {
    pub score: T,
    /// Peak frequencies in rad/sample, ascending.
    pub peak_omegas: Vec<T>,
    /// Fewer than three peaks were found.
    pub degraded: bool,
}

/// Symmetry score from up to three `(ω, height)` peaks; the side peaks are
/// compared in height and in distance to the middle one.
pub fn symmetry_from_peaks<T: Scalar>(peaks: &[(T, T)]) -> SymmetryScore<T> {
    let mut p: Vec<(T, T)> = peaks.to_vec();
    p.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let rel = |a: T, b: T| if a + b > T::zero() { (a - b).abs() / (a + b) } else { T::zero() };
    let (score, degraded) = match p.len() {
        0 | 1 => (T::one(), true),
        2 => (T::one() - rel(p[0].1, p[1].1) / T::lit(2.0), true),
        _ => {
            let h = rel(p[0].1, p[2].1);
            let d = rel(p[1].0 - p[0].0, p[2].0 - p[1].0);
            (T::one() - (h + d) / T::lit(2.0), false)
        }
    };
    SymmetryScore { score, peak_omegas: p.iter().map(|q| q.0).collect(), degraded }
}

fn dft_magnitude<T: Scalar>(x: &[T], size: usize) -> Vec<T> {
    let step = T::TAU() / T::from_index(size as i64);
    (0..size / 2 + 1)
        .map(|k| {
            let w = step * T::from_index(k as i64);
            let (mut re, mut im) = (T::zero(), T::zero());
            for (i, &v) in x.iter().enumerate() {
                let ph = w * T::from_index(i as i64);
                re = re + v * ph.cos();
                im = im - v * ph.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

// cosine/sine least-squares fit at fixed frequencies: (amplitudes, fitted values)
fn sinusoid_fit<T: Scalar>(x: &[T], freqs: &[T]) -> (Vec<T>, Vec<T>) {
    let k = freqs.len();
    let a = Mat::from_fn(x.len(), 2 * k, |i, j| {
        let ph = freqs[j % k] * T::from_index(i as i64);
        if j < k {
            ph.cos()
        } else {
            ph.sin()
        }
    });
    let c = PivotedQr::new(&a, T::rank_eps()).solve_min_norm(x);
    let amps = (0..k).map(|j| (c[j] * c[j] + c[j + k] * c[j + k]).sqrt()).collect();
    (amps, a.mul_vec(&c))
}

/// Three-peak symmetry of the block spectrum.
///
/// Peaks are taken one at a time from the zero-padded DFT of what the
/// earlier peaks leave unexplained (each pass refits all peaks found so far
/// by least squares), so window leakage of a strong line is not mistaken
/// for a side peak. Heights are the fitted line amplitudes; lines weaker
/// than 1% of the strongest do not count.
pub fn block_symmetry<T: Scalar>(block: &SampleSeries<T>) -> Result<SymmetryScore<T>> {
    let n = block.len();
    if n < MIN_SYMMETRY_LENGTH {
        return Err(ApmsError::arg(format!("symmetry needs at least {MIN_SYMMETRY_LENGTH} samples, got {n}")));
    }
    let x = &block.values;
    let size = (16 * n).next_power_of_two().max(1024);
    let step = T::TAU() / T::from_index(size as i64);
    let sep = T::TAU() / T::from_index(n as i64);
    let mut freqs: Vec<T> = Vec::new();
    let mut residual = x.clone();
    for _ in 0..3 {
        let mag = dft_magnitude(&residual, size);
        let best = (1..mag.len() - 1)
            .filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])
            .filter(|&k| freqs.iter().all(|&f| (f - step * T::from_index(k as i64)).abs() >= sep))
            .max_by(|&a, &b| mag[a].partial_cmp(&mag[b]).unwrap_or(std::cmp::Ordering::Equal));
        let Some(k) = best else { break };
        let (l, c, r) = (mag[k - 1], mag[k], mag[k + 1]);
        let den = l - c - c + r;
        let off = if den < T::zero() { (l - r) / (den + den) } else { T::zero() };
        freqs.push(step * (T::from_index(k as i64) + off));
        let (_, fit) = sinusoid_fit(x, &freqs);
        residual = x.iter().zip(&fit).map(|(&a, &b)| a - b).collect();
    }
    let (amps, _) = sinusoid_fit(x, &freqs);
    let top = amps.iter().copied().fold(T::zero(), T::max);
    let peaks: Vec<(T, T)> =
        freqs.into_iter().zip(amps).filter(|&(_, a)| top > T::zero() && a >= T::lit(0.01) * top).collect();
    Ok(symmetry_from_peaks(&peaks))
}

/// Mean symmetry score of the blocks of `record` for each candidate length.
pub fn sweep_block_lengths<T: Scalar>(record: &SampleSeries<T>, lengths: &[usize]) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for &len in lengths {
        let plan = match plan_blocks(record.len(), len, len) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let mut total = T::zero();
        for i in 0..plan.len() {
            total = total + block_symmetry(&record.slice(plan.start(i), len)?)?.score;
        }
        out.push((len, total / T::from_index(plan.len() as i64)));
    }
    if out.is_empty() {
        return Err(ApmsError::arg("no candidate block length fits the record"));
    }
    Ok(out)
}

/// Best-scoring entry of a sweep; shorter blocks win ties.
pub fn best_block_length<T: Scalar>(sweep: &[(usize, T)]) -> Option<usize> {
    sweep
        .iter()
        .fold(None, |best: Option<(usize, T)>, &(l, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((l, s)),
        })
        .map(|b| b.0)
}

/// Result for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BlockOutcome<T> {
    /// Absolute index of the block center.
    pub center: i64,
    pub symmetry: Option<SymmetryScore<T>>,
    pub report: Option<EstimationReport<T>>,
    pub error: Option<String>,
}

/// Estimates every planned block; blocks run on worker threads and come
/// back in center order.
pub fn estimate_blocks<T: Scalar>(
    record: &SampleSeries<T>,
    plan: &BlockPlan,
    config: &EstimatorConfig,
) -> Result<Vec<BlockOutcome<T>>> {
    let blocks: Vec<SampleSeries<T>> =
        (0..plan.len()).map(|i| record.slice(plan.start(i), plan.block_length)).collect::<Result<_>>()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(blocks.len().max(1));
    let run = |b: &SampleSeries<T>| {
        let center = b.start_index + plan.half();
        let symmetry = block_symmetry(b).ok();
        match estimate_block(b, config) {
            Ok(r) => BlockOutcome { center, symmetry, report: Some(r), error: None },
            Err(e) => BlockOutcome { center, symmetry, report: None, error: Some(e.to_string()) },
        }
    };
    let chunk = blocks.len().div_ceil(workers).max(1);
    let out = std::thread::scope(|s| {
        let handles: Vec<_> = blocks.chunks(chunk).map(|c| s.spawn(move || c.iter().map(run).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("block worker panicked")).collect()
    });
    Ok(out)
}

/// Least-squares polynomial of `degree` through `(x, y)`, returned in raw
/// powers of `x`.
pub fn fit_polynomial<T: Scalar>(x: &[T], y: &[T], degree: usize) -> Result<ParamPolynomial<T>> {
    if x.len() != y.len() {
        return Err(ApmsError::arg("abscissa and ordinate lengths differ"));
    }
    if x.len() < degree + 1 {
        return Err(ApmsError::arg(format!("degree {degree} needs at least {} points, got {}", degree + 1, x.len())));
    }
    let c = x.iter().copied().sum::<T>() / T::from_index(x.len() as i64);
    let s = x.iter().map(|&v| (v - c).abs()).fold(T::zero(), T::max).max(T::one());
    let a = Mat::from_fn(x.len(), degree + 1, |i, j| ((x[i] - c) / s).powi(j as i32));
    let b = PivotedQr::new(&a, T::rank_eps())
        .solve(y)
        .ok_or_else(|| ApmsError::PolynomialFit(format!("degree {degree} is not identifiable from {} distinct points", x.len())))?;
    // expand Σ b_k ((x − c)/s)^k into powers of x
    let mut coef = vec![T::zero(); degree + 1];
    for (k, &bk) in b.iter().enumerate() {
        let scale = bk / s.powi(k as i32);
        let mut binom = T::one();
        for j in 0..=k {
            coef[j] = coef[j] + scale * binom * (-c).powi((k - j) as i32);
            binom = binom * T::from_index((k - j) as i64) / T::from_index(j as i64 + 1);
        }
    }
    Ok(ParamPolynomial { coefficients: coef })
}

fn rms_residual<T: Scalar>(p: &ParamPolynomial<T>, x: &[T], y: &[T]) -> T {
    let ss: T = x.iter().zip(y).map(|(&a, &b)| (p.eval(a) - b) * (p.eval(a) - b)).sum();
    (ss / T::from_index(x.len().max(1) as i64)).sqrt()
}

/// Removes 2π jumps between consecutive values.
pub fn unwrap_phases<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(v.len());
    for &a in v {
        let next = match out.last() {
            None => a,
            Some(&prev) => a + T::TAU() * ((prev - a) / T::TAU()).round(),
        };
        out.push(next);
    }
    out
}

// instantaneous-frequency polynomial d(n) → coefficients of ω(n) with ω(n)·n = ∫d
fn phase_rate_poly<T: Scalar>(d: &ParamPolynomial<T>) -> ParamPolynomial<T> {
    ParamPolynomial {
        coefficients: d.coefficients.iter().enumerate().map(|(k, &c)| c / T::from_index(k as i64 + 1)).collect(),
    }
}

// unwraps ψ_i = ω_i n_i + θ_i by following the trapezoid-integrated frequency
fn track_phase<T: Scalar>(centers: &[T], omegas: &[T], phases: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(centers.len());
    for i in 0..centers.len() {
        let psi = omegas[i] * centers[i] + phases[i];
        let next = if i == 0 {
            psi
        } else {
            let pred = out[i - 1] + (omegas[i - 1] + omegas[i]) / T::lit(2.0) * (centers[i] - centers[i - 1]);
            psi + T::TAU() * ((pred - psi) / T::TAU()).round()
        };
        out.push(next);
    }
    out
}

/// Polynomial model plus the RMS fit residual of every parameter (stored
/// in the matching field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ParameterFit<T> {
    pub model: TimeVaryingModel<T>,
    pub residuals: ApmsParams<T>,
    pub degree: usize,
}

/// Fits every parameter over the block centers.
pub fn fit_parameter_polynomials<T: Scalar>(
    reports: &[(i64, EstimationReport<T>)],
    degree: usize,
    block_length: usize,
) -> Result<ParameterFit<T>> {
    if reports.len() < degree + 1 {
        return Err(ApmsError::arg(format!(
            "degree {degree} needs at least {} successful blocks, got {}",
            degree + 1,
            reports.len()
        )));
    }
    let mut sorted: Vec<&(i64, EstimationReport<T>)> = reports.iter().collect();
    sorted.sort_by_key(|r| r.0);
    let centers: Vec<i64> = sorted.iter().map(|r| r.0).collect();
    let n: Vec<T> = centers.iter().map(|&c| T::from_index(c)).collect();
    let get = |f: fn(&ApmsParams<T>) -> T| sorted.iter().map(|r| f(&r.1.params)).collect::<Vec<T>>();

    let amp = get(|p| p.amplitude);
    let amplitude = fit_polynomial(&n, &amp, degree)?;

    let wc = get(|p| p.omega_c);
    let d_c = fit_polynomial(&n, &wc, degree)?;
    let omega_c = phase_rate_poly(&d_c);
    let psi_c = track_phase(&n, &wc, &get(|p| p.theta));
    let theta_pts = unwrap_phases(&n.iter().zip(&psi_c).map(|(&t, &psi)| psi - omega_c.eval(t) * t).collect::<Vec<_>>());
    let theta = fit_polynomial(&n, &theta_pts, degree)?;

    let wa = get(|p| p.omega_a);
    let d_a = fit_polynomial(&n, &wa, degree)?;
    let omega_a = phase_rate_poly(&d_a);
    let psi_a = track_phase(&n, &wa, &get(|p| p.theta_a));
    let theta_a_pts = unwrap_phases(&n.iter().zip(&psi_a).map(|(&t, &psi)| psi - omega_a.eval(t) * t).collect::<Vec<_>>());
    let theta_a = fit_polynomial(&n, &theta_a_pts, degree)?;

    let theta_b_pts = unwrap_phases(&get(|p| p.theta_b));
    let theta_b = fit_polynomial(&n, &theta_b_pts, degree)?;

    let pm: Vec<usize> = (0..sorted.len()).filter(|&i| !sorted[i].1.diagnostics.omega_p_indeterminate).collect();
    let wp_all = get(|p| p.omega_p);
    let (omega_p, wp_res) = if pm.len() > degree {
        let x: Vec<T> = pm.iter().map(|&i| n[i]).collect();
        let y: Vec<T> = pm.iter().map(|&i| wp_all[i]).collect();
        let d = fit_polynomial(&x, &y, degree)?;
        let r = rms_residual(&d, &x, &y);
        (phase_rate_poly(&d), r)
    } else {
        let mean = wp_all.iter().copied().sum::<T>() / T::from_index(wp_all.len() as i64);
        (ParamPolynomial::constant(mean), T::zero())
    };

    let ka = get(|p| p.k_a);
    let kp = get(|p| p.k_p);
    let s_v = get(|p| p.s);
    let r_v = get(|p| p.r);
    let k_a = fit_polynomial(&n, &ka, degree)?;
    let k_p = fit_polynomial(&n, &kp, degree)?;
    let s = fit_polynomial(&n, &s_v, degree)?;
    let r = fit_polynomial(&n, &r_v, degree)?;

    let half = (block_length as i64 - 1) / 2;
    let (lo, hi) = (centers[0] - half, centers[centers.len() - 1] + half + 1);
    if let Some(bad) = (lo..hi).find(|&i| amplitude.eval(T::from_index(i)) <= T::zero()) {
        return Err(ApmsError::PolynomialFit(format!(
            "fitted amplitude is not positive at n = {bad}; lower the polynomial degree"
        )));
    }
    let residuals = ApmsParams {
        amplitude: rms_residual(&amplitude, &n, &amp),
        theta: rms_residual(&theta, &n, &theta_pts),
        omega_c: rms_residual(&d_c, &n, &wc),
        omega_a: rms_residual(&d_a, &n, &wa),
        omega_p: wp_res,
        k_a: rms_residual(&k_a, &n, &ka),
        k_p: rms_residual(&k_p, &n, &kp),
        theta_a: rms_residual(&theta_a, &n, &theta_a_pts),
        theta_b: rms_residual(&theta_b, &n, &theta_b_pts),
        s: rms_residual(&s, &n, &s_v),
        r: rms_residual(&r, &n, &r_v),
    };
    let model = TimeVaryingModel::new(
        [amplitude, theta, omega_c, omega_a, omega_p, k_a, k_p, theta_a, theta_b, s, r],
        centers,
        block_length,
    )
    .map_err(|e| match e {
        ApmsError::InvalidModel { field, n, reason } => ApmsError::PolynomialFit(format!(
            "fitted `{field}` is invalid at n = {n} ({reason}); lower the polynomial degree"
        )),
        other => other,
    })?;
    Ok(ParameterFit { model, residuals, degree })
}

/// A regenerated record.
#[derive(Debug, Clone, PartialEq)]
pub struct Regenerated<T> {
    pub series: SampleSeries<T>,
    /// Some samples lie outside the span the model was fitted on.
    pub extrapolated: bool,
}

/// Samples `0 .. record_length` of the model.
pub fn regenerate<T: Scalar>(model: &TimeVaryingModel<T>, record_length: usize) -> Result<Regenerated<T>> {
    regenerate_range(model, 0, record_length)
}

pub fn regenerate_range<T: Scalar>(model: &TimeVaryingModel<T>, n_first: i64, count: usize) -> Result<Regenerated<T>> {
    let (a, b) = model.span();
    let extrapolated = n_first < a || n_first + count as i64 > b;
    Ok(Regenerated { series: synthesize_time_varying(model, n_first, count)?, extrapolated })
}

/// Each block resynthesized from its own report; samples no block covers
/// are zero.
pub fn regenerate_blockwise<T: Scalar>(
    outcomes: &[BlockOutcome<T>],
    block_length: usize,
    n_first: i64,
    count: usize,
) -> Result<SampleSeries<T>> {
    let mut values = vec![T::zero(); count];
    let half = (block_length as i64 - 1) / 2;
    for o in outcomes {
        let Some(r) = &o.report else { continue };
        let seg = synthesize(&r.params, o.center - half, block_length)?;
        for (n, &v) in seg.indices().zip(&seg.values) {
            let i = n - n_first;
            if i >= 0 && (i as usize) < count {
                values[i as usize] = v;
            }
        }
    }
    SampleSeries::new(values, n_first)
}

/// `‖x − x̂‖₂ / ‖x‖₂`.
pub fn reconstruction_error<T: Scalar>(original: &SampleSeries<T>, regenerated: &SampleSeries<T>) -> Result<T> {
    if original.len() != regenerated.len() {
        return Err(ApmsError::arg(format!(
            "length mismatch: {} original vs {} regenerated samples",
            original.len(),
            regenerated.len()
        )));
    }
    let e: T = original.values.iter().map(|&v| v * v).sum();
    if e == T::zero() {
        return Err(ApmsError::arg("original series has zero energy"));
    }
    let d: T = original.values.iter().zip(&regenerated.values).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((d / e).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSettings {
    pub block_length: usize,
    pub hop: usize,
    pub degree: usize,
}

impl Default for BlockSettings {
    fn default() -> Self {
        BlockSettings { block_length: 41, hop: 41, degree: 2 }
    }
}

/// Everything produced by [`run_blocks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BlockRun<T> {
    pub plan: BlockPlan,
    pub blocks: Vec<BlockOutcome<T>>,
    /// Centers of blocks left out of the fit.
    pub failed: Vec<i64>,
    pub fit: ParameterFit<T>,
}

/// Plans, estimates and fits a whole record.
pub fn run_blocks<T: Scalar>(
    record: &SampleSeries<T>,
    settings: &BlockSettings,
    config: &EstimatorConfig,
) -> Result<BlockRun<T>> {
    let mut plan = plan_blocks(record.len(), settings.block_length, settings.hop)?;
    for c in &mut plan.centers {
        *c += record.start_index;
    }
    let relative = BlockPlan { centers: plan.centers.iter().map(|c| c - record.start_index).collect(), ..plan.clone() };
    let blocks = estimate_blocks(record, &relative, config)?;
    let failed: Vec<i64> = blocks.iter().filter(|b| b.report.is_none()).map(|b| b.center).collect();
    let good: Vec<(i64, EstimationReport<T>)> =
        blocks.iter().filter_map(|b| b.report.clone().map(|r| (b.center, r))).collect();
    let fit = fit_parameter_polynomials(&good, settings.degree, settings.block_length)?;
    Ok(BlockRun { plan, blocks, failed, fit })
}
