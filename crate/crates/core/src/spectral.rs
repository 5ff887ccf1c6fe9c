//! Modified covariance AR fitting, AR power spectra and PEF roots.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{ApmsError, Result};
use crate::linalg::{Mat, PivotedQr};
use crate::product_function::ProductSequence;
use crate::scalar::Scalar;

/// Largest AR order picked by [`default_ar_order`].
pub const DEFAULT_MAX_ORDER: usize = 60;
/// Default number of PSD grid points over `[0, π]`.
pub const DEFAULT_GRID: usize = 4096;
/// Smallest accepted PSD grid.
pub const MIN_GRID: usize = 512;

/// AR model in prediction form `x̂[n] = −Σ a_k x[n−k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel<T> {
    pub order: usize,
    pub coefficients: Vec<T>,
    pub noise_variance: T,
    /// Numerical rank of the forward-backward data matrix at fit time.
    pub rank: usize,
}

/// PSD samples on a uniform grid over `[0, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate<T> {
    pub omega: Vec<T>,
    pub psd: Vec<T>,
}

impl<T: Scalar> SpectrumEstimate<T> {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Grid spacing.
    pub fn step(&self) -> T {
        if self.omega.len() < 2 {
            T::PI()
        } else {
            self.omega[1] - self.omega[0]
        }
    }
}

/// What the fit does when the forward-backward matrix is rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Raise [`ApmsError::ArRankDeficient`].
    #[default]
    Strict,
    /// Return the minimum-norm solution at the requested order.
    MinNorm,
}

/// `min(60, ⌊len/3⌋)`.
pub fn default_ar_order(len: usize) -> usize {
    DEFAULT_MAX_ORDER.min(len / 3)
}

/// Modified covariance fit of the product sequence.
pub fn fit_ar_modified_covariance<T: Scalar>(seq: &ProductSequence<T>, order: usize) -> Result<ArModel<T>> {
    fit_ar(&seq.values, order, RankPolicy::Strict)
}

/// Modified covariance fit of an arbitrary real sequence.
///
/// Minimizes the summed forward and backward prediction error power by a
/// pivoted QR of the stacked data matrix.
pub fn fit_ar<T: Scalar>(x: &[T], order: usize, policy: RankPolicy) -> Result<ArModel<T>> {
    let n = x.len();
    if order == 0 {
        return Err(ApmsError::arg("AR order must be positive"));
    }
    if 3 * order > n {
        return Err(ApmsError::arg(format!(
            "AR order {order} too high for {n} samples (max {})",
            n / 3
        )));
    }
    if x.iter().all(|&v| v == T::zero()) {
        return Err(ApmsError::arg("cannot fit an AR model to an all-zero sequence"));
    }
    let rows = 2 * (n - order);
    let half = n - order;
    let a = Mat::from_fn(rows, order, |i, k| {
        if i < half {
            x[i + order - 1 - k]
        } else {
            x[i - half + 1 + k]
        }
    });
    let y: Vec<T> = (0..rows).map(|i| if i < half { -x[i + order] } else { -x[i - half] }).collect();
    let qr = PivotedQr::new(&a, T::rank_eps());
    let coefficients = match (qr.solve(&y), policy) {
        (Some(c), _) => c,
        (None, RankPolicy::Strict) => {
            return Err(ApmsError::ArRankDeficient { rank: qr.rank(), order });
        }
        (None, RankPolicy::MinNorm) => qr.solve_min_norm(&y),
    };
    let fit = a.mul_vec(&coefficients);
    let noise_variance =
        fit.iter().zip(&y).map(|(&f, &t)| (t - f) * (t - f)).sum::<T>() / T::from_index(rows as i64);
    Ok(ArModel { order, coefficients, noise_variance, rank: qr.rank() })
}

fn response<T: Scalar>(model: &ArModel<T>, omega: T) -> Complex<T> {
    let mut h = Complex::new(T::one(), T::zero());
    for (k, &a) in model.coefficients.iter().enumerate() {
        let ph = -omega * T::from_index(k as i64 + 1);
        h = h + Complex::new(ph.cos(), ph.sin()) * a;
    }
    h
}

/// `σ² / |1 + Σ a_k e^{−jkω}|²` at one frequency.
pub fn psd_at<T: Scalar>(model: &ArModel<T>, omega: T) -> T {
    let h = response(model, omega).norm_sqr();
    if h > T::zero() {
        model.noise_variance / h
    } else {
        T::infinity()
    }
}

/// `−d² ln PSD / dω²`, positive at a peak.
pub fn log_psd_curvature<T: Scalar>(model: &ArModel<T>, omega: T) -> T {
    let mut h = Complex::new(T::one(), T::zero());
    let mut h1 = Complex::new(T::zero(), T::zero());
    let mut h2 = Complex::new(T::zero(), T::zero());
    for (k, &a) in model.coefficients.iter().enumerate() {
        let kk = T::from_index(k as i64 + 1);
        let e = Complex::new((-omega * kk).cos(), (-omega * kk).sin()) * a;
        h = h + e;
        h1 = h1 + e * Complex::new(T::zero(), -kk);
        h2 = h2 - e * (kk * kk);
    }
    let q = h1 / h;
    let v = h2 / h - q * q;
    T::lit(2.0) * v.re
}

/// AR PSD on `grid_size` points spanning `[0, π]`.
pub fn ar_psd<T: Scalar>(model: &ArModel<T>, grid_size: usize) -> Result<SpectrumEstimate<T>> {
    if grid_size < MIN_GRID {
        return Err(ApmsError::arg(format!("PSD grid must have at least {MIN_GRID} points, got {grid_size}")));
    }
    let step = T::PI() / T::from_index(grid_size as i64 - 1);
    let omega: Vec<T> = (0..grid_size).map(|k| T::from_index(k as i64) * step).collect();
    let psd = omega.iter().map(|&w| psd_at(model, w)).collect();
    Ok(SpectrumEstimate { omega, psd })
}

/// Local maxima of the PSD grid with parabolic refinement on log-PSD.
pub fn spectrum_peaks<T: Scalar>(spec: &SpectrumEstimate<T>) -> Vec<(T, T)> {
    let g = spec.psd.len();
    if g < 3 {
        return Vec::new();
    }
    let lp: Vec<T> = spec.psd.iter().map(|&p| p.max(T::min_positive_value()).ln()).collect();
    let h = spec.step();
    let mut out = Vec::new();
    for i in 0..g {
        let l = if i > 0 { lp[i - 1] } else { lp[1] };
        let r = if i + 1 < g { lp[i + 1] } else { lp[g - 2] };
        if !(lp[i] > l && lp[i] > r) {
            continue;
        }
        if i == 0 || i + 1 == g {
            out.push((spec.omega[i], spec.psd[i]));
            continue;
        }
        let den = l - T::lit(2.0) * lp[i] + r;
        let d = if den < T::zero() { T::lit(0.5) * (l - r) / den } else { T::zero() };
        let w = spec.omega[i] + d * h;
        let peak_log = lp[i] - T::lit(0.25) * (l - r) * d;
        out.push((w, peak_log.exp()));
    }
    out
}

/// Golden-section maximization of the continuous AR PSD within `±half_width`.
pub fn refine_peak<T: Scalar>(model: &ArModel<T>, omega: T, half_width: T) -> T {
    let gr = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut lo = (omega - half_width).max(T::zero());
    let mut hi = (omega + half_width).min(T::PI());
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let mut fc = psd_at(model, c);
    let mut fd = psd_at(model, d);
    for _ in 0..80 {
        if hi - lo <= T::epsilon() * T::lit(4.0) {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = psd_at(model, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = psd_at(model, d);
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// One root of the prediction error filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PefRoot<T> {
    pub radius: T,
    /// `|arg z|`, folded into `[0, π]`.
    pub angle: T,
    /// Number of returned roots sharing this radius and folded angle.
    pub multiplicity: usize,
}

/// Roots of `z^p + a_1 z^{p−1} + … + a_p`, sorted by descending radius.
pub fn pef_roots<T: Scalar>(model: &ArModel<T>) -> Result<Vec<PefRoot<T>>> {
    if model.order == 0 || model.coefficients.is_empty() {
        return Err(ApmsError::arg("PEF roots need order >= 1"));
    }
    let coeffs: Vec<Complex<T>> = model.coefficients.iter().map(|&a| Complex::new(a, T::zero())).collect();
    let mut roots = None;
    for attempt in 0..4 {
        if let Some(r) = aberth(&coeffs, T::lit(0.4 + 0.37 * attempt as f64)) {
            roots = Some(r);
            break;
        }
    }
    let roots = roots.ok_or_else(|| ApmsError::Estimation("PEF root finding did not converge".into()))?;
    let mut out: Vec<PefRoot<T>> =
        roots.iter().map(|z| PefRoot { radius: z.norm(), angle: z.arg().abs(), multiplicity: 1 }).collect();
    out.sort_by(|a, b| b.radius.partial_cmp(&a.radius).unwrap_or(std::cmp::Ordering::Equal));
    let tol = T::lit(1e-6);
    let snapshot = out.clone();
    for r in out.iter_mut() {
        r.multiplicity = snapshot
            .iter()
            .filter(|q| (q.radius - r.radius).abs() <= tol * (T::one() + r.radius) && (q.angle - r.angle).abs() <= tol)
            .count();
    }
    Ok(out)
}

// Aberth–Ehrlich iteration on the monic polynomial with lower coefficients `c`.
fn aberth<T: Scalar>(c: &[Complex<T>], rot: T) -> Option<Vec<Complex<T>>> {
    let n = c.len();
    let mut bound = T::zero();
    for (k, a) in c.iter().enumerate() {
        let m = a.norm();
        if m > T::zero() {
            bound = bound.max(m.powf(T::one() / T::from_index(k as i64 + 1)));
        }
    }
    if bound == T::zero() {
        return Some(vec![Complex::new(T::zero(), T::zero()); n]);
    }
    let radius = bound;
    let mut z: Vec<Complex<T>> = (0..n)
        .map(|k| {
            let a = T::TAU() * T::from_index(k as i64) / T::from_index(n as i64) + rot;
            Complex::from_polar(radius, a)
        })
        .collect();
    let eval = |x: Complex<T>| {
        let mut p = Complex::new(T::one(), T::zero());
        let mut d = Complex::new(T::zero(), T::zero());
        for &a in c {
            d = d * x + p;
            p = p * x + a;
        }
        (p, d)
    };
    let tol = T::epsilon() * T::lit(8.0);
    for _ in 0..1000 {
        let mut done = true;
        for k in 0..n {
            let (p, d) = eval(z[k]);
            if p.norm() == T::zero() {
                continue;
            }
            let ratio = p / d;
            let mut s = Complex::new(T::zero(), T::zero());
            for j in 0..n {
                if j != k {
                    let diff = z[k] - z[j];
                    if diff.norm() > T::zero() {
                        s = s + Complex::new(T::one(), T::zero()) / diff;
                    }
                }
            }
            let w = ratio / (Complex::new(T::one(), T::zero()) - ratio * s);
            if !w.re.is_finite() || !w.im.is_finite() {
                return None;
            }
            z[k] = z[k] - w;
            if w.norm() > tol * (T::one() + z[k].norm()) {
                done = false;
            }
        }
        if done {
            return Some(z);
        }
    }
    None
}
