//! Spectral line clusters and the resolution of `ω_c`, `ω_a`, `ω_p`.
//!
//! The product sequence of an APMS block has lines at `ω_a`, `2ω_a` and
//! clusters of PM sidelines (spacing `ω_p`) centered at `2ω_c + jω_a`,
//! `j = −2..2`, all folded into `[0, π]`. Clusters are found from spectral
//! peaks, centered by sideline height symmetry, and every fold-consistent
//! assignment of centers to those labels is scored.
//!
//! The same machinery also runs on the block itself, where the clusters sit
//! at `ω_c` and `ω_c ± ω_a`; [`frequency_candidates`] merges both views into
//! a short list of `(ω_c, ω_a)` hypotheses and `ω_p` spacings for the
//! parameter estimator to rank.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ApmsError, Result};
use crate::linalg::{Mat, PivotedQr};
use crate::product_function::ProductSequence;
use crate::scalar::Scalar;
use crate::signal_model::SampleSeries;
use crate::spectral::{
    default_ar_order, fit_ar, log_psd_curvature, psd_at, refine_peak, ArModel, RankPolicy, SpectrumEstimate,
};

/// Relative tolerance on gap agreement inside a cluster.
pub const GAP_TOLERANCE: f64 = 0.2;

/// Label `(a, b)` of a product-spectrum center `a ω_c + b ω_a`.
pub const CENTER_LABELS: [(i32, i32); 7] = [(2, -2), (2, -1), (2, 0), (2, 1), (2, 2), (0, 1), (0, 2)];

/// Uniformly spaced group of spectral lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakCluster<T> {
    pub center_omega: T,
    pub peak_omegas: Vec<T>,
    pub peak_heights: Vec<T>,
    /// Mean adjacent gap; zero for a singleton.
    pub spacing: T,
}

impl<T: Scalar> PeakCluster<T> {
    pub fn is_singleton(&self) -> bool {
        self.peak_omegas.len() < 2
    }

    /// Summed line height, used as the cluster weight.
    pub fn weight(&self) -> T {
        self.peak_heights.iter().copied().sum()
    }
}

/// Resolved carrier, AM and PM frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTriple<T> {
    pub omega_c: T,
    pub omega_a: T,
    pub omega_p: T,
}

impl<T: Scalar> FrequencyTriple<T> {
    /// `0 < ω_p < ω_a < ω_c < π`.
    pub fn is_ordered(&self) -> bool {
        T::zero() < self.omega_p
            && self.omega_p < self.omega_a
            && self.omega_a < self.omega_c
            && self.omega_c < T::PI()
    }
}

/// One scored assignment of detected centers to model frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierHypothesis<T> {
    pub omega_c: T,
    pub omega_a: T,
    /// Lower is better.
    pub score: T,
}

/// Folds a frequency into `[0, π]`.
pub fn fold<T: Scalar>(w: T) -> T {
    let two_pi = T::TAU();
    let r = w - two_pi * (w / two_pi).floor();
    if r > T::PI() {
        two_pi - r
    } else {
        r
    }
}

fn unfolds<T: Scalar>(f: T) -> [T; 4] {
    let two_pi = T::TAU();
    [f, two_pi - f, two_pi + f, two_pi + two_pi - f]
}

fn nearest<T: Scalar>(xs: &[T], v: T) -> Option<(usize, T)> {
    xs.iter()
        .enumerate()
        .map(|(i, &x)| (i, (x - v).abs()))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
}

/// Center of a run of lines: the member about which the other lines are
/// most symmetric in height (mirror images about 0 and π included).
pub fn cluster_center<T: Scalar>(omegas: &[T], heights: &[T], tol: T) -> T {
    let two_pi = T::TAU();
    let mut best: Option<((T, T), T)> = None;
    for (ci, &c) in omegas.iter().enumerate() {
        let mut mis = T::zero();
        let mut tot = T::zero();
        for (i, (&f, &h)) in omegas.iter().zip(heights).enumerate() {
            if i == ci {
                continue;
            }
            let mut tgt = c + c - f;
            if tgt < -tol {
                tgt = -tgt;
            }
            if tgt > T::PI() + tol {
                tgt = two_pi - tgt;
            }
            match nearest(omegas, tgt) {
                Some((j, d)) if d <= tol && (j != i || c.abs() < tol) => mis = mis + (h - heights[j]).abs(),
                _ => mis = mis + h,
            }
            tot = tot + h;
        }
        let score = if tot > T::zero() { mis / tot } else { T::zero() };
        let key = (score, -heights[ci]);
        let better = match &best {
            None => true,
            Some((k, _)) => key.0 < k.0 || (key.0 == k.0 && key.1 < k.1),
        };
        if better {
            best = Some((key, c));
        }
    }
    best.map(|(_, c)| c).unwrap_or_else(T::zero)
}

fn make_cluster<T: Scalar>(omegas: &[T], heights: &[T], run: &[usize], tol: T) -> PeakCluster<T> {
    let f: Vec<T> = run.iter().map(|&i| omegas[i]).collect();
    let h: Vec<T> = run.iter().map(|&i| heights[i]).collect();
    let spacing = if f.len() > 1 {
        (f[f.len() - 1] - f[0]) / T::from_index(f.len() as i64 - 1)
    } else {
        T::zero()
    };
    PeakCluster { center_omega: cluster_center(&f, &h, tol), peak_omegas: f, peak_heights: h, spacing }
}

/// Groups sorted lines into runs of adjacent peaks whose gaps agree (within
/// 20%) with the most common gap.
pub fn group_peaks<T: Scalar>(omegas: &[T], heights: &[T], tol: T) -> Vec<PeakCluster<T>> {
    if omegas.is_empty() {
        return Vec::new();
    }
    let gtol = T::lit(GAP_TOLERANCE);
    let gaps: Vec<T> = omegas.windows(2).map(|w| w[1] - w[0]).collect();
    let mut reference = None;
    let mut best: Option<(usize, T)> = None;
    for &g in &gaps {
        let count = gaps.iter().filter(|&&o| (o - g).abs() <= gtol * g).count();
        let better = match best {
            None => true,
            Some((c, bg)) => count > c || (count == c && g < bg),
        };
        if better {
            best = Some((count, g));
        }
    }
    if let Some((count, g)) = best {
        if count >= 2 {
            reference = Some(g);
        }
    }
    let mut runs: Vec<Vec<usize>> = vec![vec![0]];
    for (i, &g) in gaps.iter().enumerate() {
        match reference {
            Some(r) if (g - r).abs() <= gtol * r => runs.last_mut().expect("non-empty").push(i + 1),
            _ => runs.push(vec![i + 1]),
        }
    }
    runs.iter().map(|r| make_cluster(omegas, heights, r, tol)).collect()
}

/// Peaks of a PSD grid above `min_prominence × max`, grouped into clusters.
pub fn detect_clusters<T: Scalar>(spectrum: &SpectrumEstimate<T>, min_prominence: T) -> Result<Vec<PeakCluster<T>>> {
    let peaks = crate::spectral::spectrum_peaks(spectrum);
    let top = peaks.iter().map(|p| p.1).fold(T::zero(), T::max);
    let kept: Vec<(T, T)> = peaks.into_iter().filter(|p| p.1 >= min_prominence * top).collect();
    if kept.is_empty() {
        return Err(ApmsError::Detection { found: 0 });
    }
    let (w, h): (Vec<T>, Vec<T>) = kept.into_iter().unzip();
    Ok(group_peaks(&w, &h, spectrum.step() * T::lit(2.0)))
}

/// Mean of all adjacent gaps across multi-peak clusters.
pub fn estimate_pm_spacing<T: Scalar>(clusters: &[PeakCluster<T>]) -> Result<T> {
    let gaps: Vec<T> = clusters
        .iter()
        .filter(|c| !c.is_singleton())
        .flat_map(|c| c.peak_omegas.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
        .collect();
    if gaps.is_empty() {
        return Err(ApmsError::SpacingUndefined);
    }
    Ok(gaps.iter().copied().sum::<T>() / T::from_index(gaps.len() as i64))
}

/// Scores every fold-consistent way of explaining two detected centers as
/// two of the labels `a ω_c + b ω_a`; returns the best `limit` distinct
/// `(ω_c, ω_a)` pairs, lowest score first, larger `ω_a` on ties.
pub fn carrier_hypotheses<T: Scalar>(
    centers: &[T],
    omega_p: Option<T>,
    tol: T,
    limit: usize,
) -> Vec<CarrierHypothesis<T>> {
    let nz: Vec<T> = centers.iter().copied().filter(|&c| c > tol).collect();
    let mut out: BTreeMap<(i64, i64), CarrierHypothesis<T>> = BTreeMap::new();
    let four_tol = tol * T::lit(4.0);
    for (ci, &f1) in nz.iter().enumerate() {
        for (cj, &f2) in nz.iter().enumerate() {
            if ci == cj {
                continue;
            }
            for (li, t1) in CENTER_LABELS.iter().enumerate() {
                for (lj, t2) in CENTER_LABELS.iter().enumerate() {
                    if li == lj {
                        continue;
                    }
                    let det = t1.0 * t2.1 - t1.1 * t2.0;
                    if det == 0 {
                        continue;
                    }
                    let detf = T::from_index(det as i64);
                    for u1 in unfolds(f1) {
                        for u2 in unfolds(f2) {
                            let wc = (u1 * T::from_index(t2.1 as i64) - u2 * T::from_index(t1.1 as i64)) / detf;
                            let wa = (T::from_index(t1.0 as i64) * u2 - T::from_index(t2.0 as i64) * u1) / detf;
                            if !(T::zero() < wa && wa < wc && wc < T::PI()) {
                                continue;
                            }
                            if let Some(wp) = omega_p {
                                if wp >= wa {
                                    continue;
                                }
                            }
                            let score = hypothesis_score(centers, wc, wa, tol, four_tol);
                            let key = ((wc * T::lit(1e4)).round().as_f64() as i64, (wa * T::lit(1e4)).round().as_f64() as i64);
                            let h = CarrierHypothesis { omega_c: wc, omega_a: wa, score };
                            match out.get(&key) {
                                Some(o) if o.score <= score => {}
                                _ => {
                                    out.insert(key, h);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut list: Vec<CarrierHypothesis<T>> = out.into_values().collect();
    list.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.omega_a.partial_cmp(&a.omega_a).unwrap_or(std::cmp::Ordering::Equal))
    });
    list.truncate(limit);
    list
}

fn hypothesis_score<T: Scalar>(centers: &[T], wc: T, wa: T, tol: T, cap: T) -> T {
    let mut pred: Vec<T> = CENTER_LABELS
        .iter()
        .map(|&(a, b)| fold(T::from_index(a as i64) * wc + T::from_index(b as i64) * wa))
        .collect();
    pred.push(T::zero());
    let unexplained: T = centers
        .iter()
        .map(|&c| nearest(&pred, c).map(|(_, d)| d).unwrap_or(cap).min(cap) / cap)
        .sum();
    let two = T::lit(2.0);
    let first = [fold(two * wc), fold(two * wc - wa), fold(two * wc + wa), fold(wa)];
    let missing = first
        .iter()
        .filter(|&&f| nearest(centers, f).map(|(_, d)| d > tol).unwrap_or(true))
        .count();
    unexplained + T::lit(0.5) * T::from_index(missing as i64)
}

/// `(ω_c, ω_a)` from product-spectrum clusters.
///
/// When the two highest centers read as `2ω_c + 2ω_a` and `2ω_c + ω_a`
/// explain every detected center, that inversion is returned directly;
/// otherwise the best fold-consistent assignment wins.
pub fn resolve_carrier_frequencies<T: Scalar>(clusters: &[PeakCluster<T>], tol: T) -> Result<(T, T)> {
    let centers: Vec<T> = clusters.iter().map(|c| c.center_omega).collect();
    let mut nz: Vec<T> = centers.iter().copied().filter(|&c| c > tol).collect();
    if nz.len() < 2 {
        return Err(ApmsError::Resolution(format!(
            "need at least two non-dc cluster centers, found {}",
            nz.len()
        )));
    }
    nz.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let (c1, c2) = (nz[0], nz[1]);
    let wa = c1 - c2;
    let wc = (c2 + c2 - c1) / T::lit(2.0);
    if T::zero() < wa && wa < wc {
        let mut pred: Vec<T> = CENTER_LABELS
            .iter()
            .map(|&(a, b)| T::from_index(a as i64) * wc + T::from_index(b as i64) * wa)
            .collect();
        pred.push(T::zero());
        let all_explained = centers.iter().all(|&c| nearest(&pred, c).map(|(_, d)| d <= tol).unwrap_or(false));
        if all_explained {
            return Ok((wc, wa));
        }
    }
    let wp = estimate_pm_spacing(clusters).ok();
    let hyps = carrier_hypotheses(&centers, wp, tol, 8);
    match hyps.first() {
        Some(h) if h.score < T::from_index(centers.len() as i64) => Ok((h.omega_c, h.omega_a)),
        _ => Err(ApmsError::Resolution(format!(
            "no assignment of centers {:?} matches within {}; candidates: {:?}",
            centers.iter().map(|c| c.as_f64()).collect::<Vec<_>>(),
            tol.as_f64(),
            hyps.iter().map(|h| (h.omega_c.as_f64(), h.omega_a.as_f64(), h.score.as_f64())).collect::<Vec<_>>()
        ))),
    }
}

/// Full triple from product-spectrum clusters.
pub fn resolve_frequencies<T: Scalar>(clusters: &[PeakCluster<T>], tol: T) -> Result<FrequencyTriple<T>> {
    let (omega_c, omega_a) = resolve_carrier_frequencies(clusters, tol)?;
    let omega_p = estimate_pm_spacing(clusters)?;
    let t = FrequencyTriple { omega_c, omega_a, omega_p };
    if !t.is_ordered() {
        return Err(ApmsError::Resolution(format!(
            "resolved triple violates 0 < ω_p < ω_a < ω_c < π: {:?}",
            (omega_c.as_f64(), omega_a.as_f64(), omega_p.as_f64())
        )));
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// line detection used by the estimator

/// Settings for line detection and candidate generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSettings {
    pub ar_order: Option<usize>,
    pub grid_size: usize,
    /// Line amplitude floor relative to the strongest line (product path).
    pub prominence: f64,
    /// Line amplitude floor relative to the strongest line (direct path).
    pub direct_prominence: f64,
    /// Minimum line amplitude in standard errors.
    pub significance: f64,
    /// Hypotheses kept per path.
    pub candidate_limit: usize,
    pub use_direct: bool,
    pub use_product: bool,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        DetectionSettings {
            ar_order: None,
            grid_size: crate::spectral::DEFAULT_GRID,
            prominence: 0.005,
            direct_prominence: 0.01,
            significance: 3.0,
            candidate_limit: 6,
            use_direct: true,
            use_product: true,
        }
    }
}

/// Spectral lines with least-squares amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSet<T> {
    pub omegas: Vec<T>,
    pub amplitudes: Vec<T>,
    /// `−d² ln PSD/dω²` at each line.
    pub curvature: Vec<T>,
    pub ar_order: usize,
    pub ar_rank: usize,
}

fn ar_peaks<T: Scalar>(model: &ArModel<T>, grid: usize, min_sep: T) -> Vec<(T, T)> {
    let step = T::PI() / T::from_index(grid as i64 - 1);
    let lp: Vec<T> = (0..grid)
        .map(|k| psd_at(model, T::from_index(k as i64) * step).max(T::min_positive_value()).ln())
        .collect();
    let mut peaks = Vec::new();
    for i in 0..grid {
        let l = if i > 0 { lp[i - 1] } else { lp[1] };
        let r = if i + 1 < grid { lp[i + 1] } else { lp[grid - 2] };
        if lp[i] > l && lp[i] > r {
            let w0 = T::from_index(i as i64) * step;
            let w = if i == 0 || i + 1 == grid { w0 } else { refine_peak(model, w0, step) };
            peaks.push((w, psd_at(model, w)));
        }
    }
    peaks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut kept: Vec<(T, T)> = Vec::new();
    for p in peaks {
        if kept.iter().all(|q| (p.0 - q.0).abs() > min_sep) {
            kept.push(p);
        }
    }
    kept.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    kept
}

// Least-squares line amplitudes at fixed frequencies and their standard error.
fn line_amplitudes<T: Scalar>(t: &[T], y: &[T], freqs: &[T], quadrature: bool) -> (Vec<T>, T) {
    let k = freqs.len();
    let cols = if quadrature { 2 * k } else { k };
    let a = Mat::from_fn(t.len(), cols, |i, j| {
        if j < k {
            (freqs[j] * t[i]).cos()
        } else {
            (freqs[j - k] * t[i]).sin()
        }
    });
    let qr = PivotedQr::new(&a, T::epsilon() * T::lit(100.0));
    let c = qr.solve_min_norm(y);
    let fit = a.mul_vec(&c);
    let rss: T = fit.iter().zip(y).map(|(&f, &v)| (v - f) * (v - f)).sum();
    let dof = T::from_index((y.len() as i64 - cols as i64).max(1));
    let se = (rss / dof * T::lit(2.0) / T::from_index(y.len() as i64)).sqrt();
    let amps = (0..k)
        .map(|j| if quadrature { (c[j] * c[j] + c[j + k] * c[j + k]).sqrt() } else { c[j].abs() })
        .collect();
    (amps, se)
}

fn detect_lines<T: Scalar>(
    t: &[T],
    y: &[T],
    settings: &DetectionSettings,
    quadrature: bool,
    prominence: T,
    drop_edges: bool,
) -> Result<LineSet<T>> {
    let order = settings.ar_order.unwrap_or_else(|| default_ar_order(y.len())).min(y.len() / 3).max(1);
    let model = fit_ar(y, order, RankPolicy::MinNorm)?;
    let min_sep = T::PI() / T::from_index(y.len() as i64);
    let mut peaks = ar_peaks(&model, settings.grid_size.max(crate::spectral::MIN_GRID), min_sep);
    if drop_edges {
        let e = T::lit(1e-3);
        peaks.retain(|p| p.0 > e && p.0 < T::PI() - e);
    }
    let freqs: Vec<T> = peaks.iter().map(|p| p.0).collect();
    if freqs.is_empty() {
        return Err(ApmsError::Detection { found: 0 });
    }
    let (amps, se) = line_amplitudes(t, y, &freqs, quadrature);
    let top = amps.iter().copied().fold(T::zero(), T::max);
    let sig = T::lit(settings.significance);
    let keep: Vec<usize> = (0..freqs.len()).filter(|&i| amps[i] >= prominence * top && amps[i] >= sig * se).collect();
    let omegas: Vec<T> = keep.iter().map(|&i| freqs[i]).collect();
    if omegas.is_empty() {
        return Err(ApmsError::Detection { found: 0 });
    }
    let (amplitudes, _) = line_amplitudes(t, y, &omegas, quadrature);
    let curvature = omegas.iter().map(|&w| log_psd_curvature(&model, w).max(T::lit(1e-12))).collect();
    Ok(LineSet { omegas, amplitudes, curvature, ar_order: order, ar_rank: model.rank })
}

/// Lines of the product sequence (cosine amplitudes over `l = −L..L`).
pub fn detect_product_lines<T: Scalar>(seq: &ProductSequence<T>, settings: &DetectionSettings) -> Result<LineSet<T>> {
    let t: Vec<T> = seq.lags().map(T::from_index).collect();
    detect_lines(&t, &seq.values, settings, false, T::lit(settings.prominence), false)
}

/// Lines of the block itself (cosine and sine amplitudes).
pub fn detect_direct_lines<T: Scalar>(block: &SampleSeries<T>, settings: &DetectionSettings) -> Result<LineSet<T>> {
    let t: Vec<T> = (0..block.len() as i64).map(T::from_index).collect();
    detect_lines(&t, &block.values, settings, true, T::lit(settings.direct_prominence), true)
}

/// Spacing shared by the most (amplitude-weighted) line pairs; the
/// smallest spacing scoring within 30% of the best is taken so that a
/// harmonic of the true spacing does not win.
pub fn reference_spacing<T: Scalar>(omegas: &[T], amps: &[T], dmin: T, dmax: T) -> Option<T> {
    let stol = T::lit(GAP_TOLERANCE);
    let mut d = Vec::new();
    let mut w = Vec::new();
    for i in 0..omegas.len() {
        for j in i + 1..omegas.len() {
            let g = omegas[j] - omegas[i];
            if dmin < g && g < dmax {
                d.push(g);
                w.push(amps[i].min(amps[j]));
            }
        }
    }
    if d.is_empty() {
        return None;
    }
    let mut scored = Vec::with_capacity(d.len());
    for &dd in &d {
        let mut sw = T::zero();
        let mut swd = T::zero();
        let mut count = 0;
        for (&g, &wt) in d.iter().zip(&w) {
            if (g - dd).abs() <= stol * dd {
                sw = sw + wt;
                swd = swd + wt * g;
                count += 1;
            }
        }
        let score = if count >= 2 { sw } else { T::zero() };
        let mean = if sw > T::zero() { swd / sw } else { dd };
        scored.push((score, mean));
    }
    let top = scored.iter().map(|s| s.0).fold(T::zero(), T::max);
    if top <= T::zero() {
        return None;
    }
    scored
        .iter()
        .filter(|s| s.0 >= T::lit(0.3) * top)
        .map(|s| s.1)
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.min(v))))
}

/// Links each line to the strongest line one spacing above it.
pub fn chain_lines<T: Scalar>(omegas: &[T], amps: &[T], spacing: Option<T>) -> Vec<Vec<usize>> {
    let n = omegas.len();
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    if let Some(sp) = spacing {
        let tol = T::lit(GAP_TOLERANCE) * sp;
        for i in 0..n {
            let cand = (0..n)
                .filter(|&j| (omegas[j] - omegas[i] - sp).abs() <= tol)
                .max_by(|&a, &b| amps[a].partial_cmp(&amps[b]).unwrap_or(std::cmp::Ordering::Equal));
            if let Some(j) = cand {
                let take = match prev[j] {
                    None => true,
                    Some(p) => amps[i] > amps[p],
                };
                if take {
                    if let Some(p) = prev[j] {
                        next[p] = None;
                    }
                    next[i] = Some(j);
                    prev[j] = Some(i);
                }
            }
        }
    }
    let mut runs = Vec::new();
    for i in 0..n {
        if prev[i].is_none() {
            let mut r = vec![i];
            while let Some(j) = next[*r.last().expect("non-empty")] {
                r.push(j);
            }
            runs.push(r);
        }
    }
    runs
}

/// Clusters of the block spectrum, chained by the reference spacing.
pub fn direct_clusters<T: Scalar>(lines: &LineSet<T>, block_len: usize, tol: T) -> Vec<PeakCluster<T>> {
    let dmin = T::lit(0.9) * T::TAU() / T::from_index(block_len as i64);
    let sp = reference_spacing(&lines.omegas, &lines.amplitudes, dmin, T::lit(0.5));
    chain_lines(&lines.omegas, &lines.amplitudes, sp)
        .iter()
        .map(|r| make_cluster(&lines.omegas, &lines.amplitudes, r, tol))
        .collect()
}

/// `(ω_c, ω_a)` hypotheses from block-spectrum cluster centers: every pair
/// of centers read as (lower sideband, carrier), (carrier, upper sideband)
/// or (lower, upper); scored by the weight of centers left unexplained.
pub fn direct_hypotheses<T: Scalar>(clusters: &[PeakCluster<T>], tol: T) -> Vec<CarrierHypothesis<T>> {
    let cen: Vec<T> = clusters.iter().map(|c| c.center_omega).collect();
    let wt: Vec<T> = clusters.iter().map(|c| c.weight()).collect();
    let total: T = wt.iter().copied().sum();
    let two = T::lit(2.0);
    let mut out = Vec::new();
    for i in 0..cen.len() {
        for j in i + 1..cen.len() {
            let (c1, c2) = if cen[i] <= cen[j] { (cen[i], cen[j]) } else { (cen[j], cen[i]) };
            let d = c2 - c1;
            for (wc, wa) in [(c2, d), (c1, d), ((c1 + c2) / two, d / two)] {
                let pred = [wc - wa, wc, wc + wa];
                let mut sc = T::zero();
                for (&c, &w) in cen.iter().zip(&wt) {
                    let dist = pred.iter().map(|&q| (c - q).abs()).fold(T::infinity(), T::min);
                    if dist > tol {
                        sc = sc + w;
                    }
                }
                let score = if total > T::zero() { sc / total } else { T::zero() };
                out.push(CarrierHypothesis { omega_c: wc, omega_a: wa, score });
            }
        }
    }
    if cen.len() == 1 {
        // a lone line: carrier only, AM frequency is a placeholder
        out.push(CarrierHypothesis { omega_c: cen[0], omega_a: cen[0] / two, score: T::one() });
    }
    out.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.omega_a.partial_cmp(&a.omega_a).unwrap_or(std::cmp::Ordering::Equal))
    });
    out
}

/// Weighted least-squares refinement of `(ω_c, ω_a, ω_p)` from every
/// product line that can be labeled `a ω_c + b ω_a + m ω_p` (folded).
pub fn refine_from_lines<T: Scalar>(
    lines: &LineSet<T>,
    start: FrequencyTriple<T>,
    tol: T,
    m_limit: i32,
) -> FrequencyTriple<T> {
    let two_pi = T::TAU();
    let (mut wc, mut wa, mut wp) = (start.omega_c, start.omega_a, start.omega_p);
    let mut labels: Vec<(i32, i32)> = CENTER_LABELS.to_vec();
    labels.push((0, 0));
    for _ in 0..3 {
        let mut rows: Vec<[T; 3]> = Vec::new();
        let mut rhs = Vec::new();
        let mut weights = Vec::new();
        for ((&f, &h), &k) in lines.omegas.iter().zip(&lines.amplitudes).zip(&lines.curvature) {
            let mut best: Option<(T, i32, i32, i32, bool, T)> = None;
            for &(a, b) in &labels {
                for m in -m_limit..=m_limit {
                    let raw = T::from_index(a as i64) * wc + T::from_index(b as i64) * wa + T::from_index(m as i64) * wp;
                    let kk = (raw / two_pi).floor();
                    let r = raw - kk * two_pi;
                    let pos = r <= T::PI();
                    let pf = if pos { r } else { two_pi - r };
                    let d = (pf - f).abs();
                    if best.is_none_or(|bb| d < bb.0) {
                        best = Some((d, a, b, m, pos, kk));
                    }
                }
            }
            let Some((d, a, b, m, pos, kk)) = best else { continue };
            if d > tol || (a == 0 && b == 0 && m == 0) {
                continue;
            }
            rows.push([T::from_index(a as i64), T::from_index(b as i64), T::from_index(m as i64)]);
            rhs.push(if pos { f + kk * two_pi } else { (kk + T::one()) * two_pi - f });
            weights.push((h * h * k).sqrt());
        }
        if rows.is_empty() {
            break;
        }
        let full = Mat::from_fn(rows.len(), 3, |i, j| rows[i][j] * weights[i]);
        let y: Vec<T> = rhs.iter().zip(&weights).map(|(&v, &w)| v * w).collect();
        let qr = PivotedQr::new(&full, T::lit(1e-9));
        if let Some(s) = qr.solve(&y) {
            wc = s[0];
            wa = s[1];
            wp = s[2];
            continue;
        }
        let two = Mat::from_fn(rows.len(), 2, |i, j| rows[i][j] * weights[i]);
        let y2: Vec<T> = (0..rows.len()).map(|i| (rhs[i] - rows[i][2] * wp) * weights[i]).collect();
        match PivotedQr::new(&two, T::lit(1e-9)).solve(&y2) {
            Some(s) => {
                wc = s[0];
                wa = s[1];
            }
            None => break,
        }
    }
    FrequencyTriple { omega_c: wc, omega_a: wa, omega_p: wp }
}

/// Everything the frequency stage found, for ranking and for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCandidates<T> {
    /// `(ω_c, ω_a)` pairs in evaluation order.
    pub pairs: Vec<(T, T)>,
    /// PM spacings measured by each path.
    pub spacings: Vec<T>,
    pub product_clusters: Vec<PeakCluster<T>>,
    pub product_hypotheses: Vec<CarrierHypothesis<T>>,
    pub direct_clusters: Vec<PeakCluster<T>>,
    pub direct_hypotheses: Vec<CarrierHypothesis<T>>,
    pub notes: Vec<String>,
}

/// Runs the product-spectrum and block-spectrum paths.
pub fn frequency_candidates<T: Scalar>(
    block: &SampleSeries<T>,
    seq: &ProductSequence<T>,
    settings: &DetectionSettings,
) -> Result<FrequencyCandidates<T>> {
    let grid = settings.grid_size.max(crate::spectral::MIN_GRID);
    let tol = T::TAU() / T::from_index(grid as i64 - 1);
    let limit = settings.candidate_limit.max(1);
    let mut out = FrequencyCandidates {
        pairs: Vec::new(),
        spacings: Vec::new(),
        product_clusters: Vec::new(),
        product_hypotheses: Vec::new(),
        direct_clusters: Vec::new(),
        direct_hypotheses: Vec::new(),
        notes: Vec::new(),
    };
    let mut first_err = None;
    if settings.use_direct {
        match detect_direct_lines(block, settings) {
            Ok(lines) => {
                if lines.ar_rank < lines.ar_order {
                    out.notes.push(format!(
                        "block AR fit rank {} < order {}; minimum-norm solution used",
                        lines.ar_rank, lines.ar_order
                    ));
                }
                let clusters = direct_clusters(&lines, block.len(), tol);
                let hyps = direct_hypotheses(&clusters, tol);
                if let Ok(wp) = estimate_pm_spacing(&clusters) {
                    out.spacings.push(wp);
                }
                out.pairs.extend(hyps.iter().take(limit).map(|h| (h.omega_c, h.omega_a)));
                out.direct_clusters = clusters;
                out.direct_hypotheses = hyps.into_iter().take(limit).collect();
            }
            Err(e) => {
                out.notes.push(format!("block spectrum: {e}"));
                first_err.get_or_insert(e);
            }
        }
    }
    if settings.use_product {
        match detect_product_lines(seq, settings) {
            Ok(lines) => {
                if lines.ar_rank < lines.ar_order {
                    out.notes.push(format!(
                        "product AR fit rank {} < order {}; minimum-norm solution used",
                        lines.ar_rank, lines.ar_order
                    ));
                }
                let clusters = group_peaks(&lines.omegas, &lines.amplitudes, tol);
                let centers: Vec<T> = clusters.iter().map(|c| c.center_omega).collect();
                let wp0 = estimate_pm_spacing(&clusters).ok();
                let hyps = carrier_hypotheses(&centers, wp0, tol, 2 * limit);
                let mut refined = Vec::new();
                for h in &hyps {
                    for wc in [h.omega_c, T::PI() - h.omega_c] {
                        let wp = wp0.unwrap_or(h.omega_a / T::lit(2.0));
                        let start = FrequencyTriple { omega_c: wc, omega_a: h.omega_a, omega_p: wp };
                        let t = refine_from_lines(&lines, start, tol.max(T::lit(0.25) * wp), 10);
                        refined.push((t.omega_c, t.omega_a));
                    }
                }
                out.pairs.extend(refined.into_iter().take(limit));
                if let Some(wp) = wp0 {
                    out.spacings.push(wp);
                }
                out.product_clusters = clusters;
                out.product_hypotheses = hyps;
            }
            Err(e) => {
                out.notes.push(format!("product spectrum: {e}"));
                first_err.get_or_insert(e);
            }
        }
    }
    if out.pairs.is_empty() {
        return Err(first_err.unwrap_or(ApmsError::Resolution("no frequency hypotheses".into())));
    }
    Ok(out)
}
