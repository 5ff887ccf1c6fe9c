//! Dense least squares by Householder QR with column pivoting.
//!
//! Works over real scalars and over `Complex<T>` through the small
//! [`Elem`] trait. Rank is decided from the diagonal of `R` relative to the
//! largest pivot.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex;

use crate::scalar::Scalar;

/// Field element the factorization runs over.
pub trait Elem<T: Scalar>:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn from_real(v: T) -> Self;
    fn conj(self) -> Self;
    fn modulus(self) -> T;
    fn norm_sqr(self) -> T;
    fn scale(self, k: T) -> Self;
}

impl<T: Scalar> Elem<T> for T {
    fn zero() -> Self {
        T::zero()
    }
    fn from_real(v: T) -> Self {
        v
    }
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> T {
        self.abs()
    }
    fn norm_sqr(self) -> T {
        self * self
    }
    fn scale(self, k: T) -> Self {
        self * k
    }
}

impl<T: Scalar> Elem<T> for Complex<T> {
    fn zero() -> Self {
        Complex::new(T::zero(), T::zero())
    }
    fn from_real(v: T) -> Self {
        Complex::new(v, T::zero())
    }
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    fn modulus(self) -> T {
        self.norm()
    }
    fn norm_sqr(self) -> T {
        Complex::norm_sqr(&self)
    }
    fn scale(self, k: T) -> Self {
        Complex::new(self.re * k, self.im * k)
    }
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

impl<E: Copy> Mat<E> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> E {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: E) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[E] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [E] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.data.swap(a * self.rows + i, b * self.rows + i);
            }
        }
    }
}

impl<E> Mat<E> {
    /// `y = A x`.
    pub fn mul_vec<T: Scalar>(&self, x: &[E]) -> Vec<E>
    where
        E: Elem<T>,
    {
        let mut y = vec![E::zero(); self.rows];
        for (j, &xj) in x.iter().enumerate().take(self.cols) {
            let c = &self.data[j * self.rows..(j + 1) * self.rows];
            for (yi, &a) in y.iter_mut().zip(c) {
                *yi = *yi + a * xj;
            }
        }
        y
    }
}

/// Householder reflector `H = I - tau v v^H` stored with `v[0] = 1`.
#[derive(Debug, Clone)]
struct Reflector<E> {
    v: Vec<E>,
    tau: E,
}

impl<E> Reflector<E> {
    // x <- H^H x on the trailing part starting at `off`
    fn apply<T: Scalar>(&self, x: &mut [E], off: usize)
    where
        E: Elem<T>,
    {
        let seg = &mut x[off..off + self.v.len()];
        let mut dot = E::zero();
        for (&vi, &xi) in self.v.iter().zip(seg.iter()) {
            dot = dot + vi.conj() * xi;
        }
        let k = self.tau.conj() * dot;
        for (xi, &vi) in seg.iter_mut().zip(&self.v) {
            *xi = *xi - vi * k;
        }
    }
}

fn householder<T: Scalar, E: Elem<T>>(x: &[E]) -> (Reflector<E>, E) {
    let norm = x.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
    let x0 = x[0];
    if norm == T::zero() {
        let mut v = vec![E::zero(); x.len()];
        v[0] = E::from_real(T::one());
        return (Reflector { v, tau: E::zero() }, E::zero());
    }
    let m0 = x0.modulus();
    let phase = if m0 == T::zero() { E::from_real(T::one()) } else { x0.scale(T::one() / m0) };
    let beta = -(phase.scale(norm));
    let u0 = x0 - beta;
    let mut v = Vec::with_capacity(x.len());
    v.push(E::from_real(T::one()));
    for &xi in &x[1..] {
        v.push(xi / u0);
    }
    let vnorm2 = v.iter().map(|e| e.norm_sqr()).sum::<T>();
    let tau = E::from_real(T::lit(2.0) / vnorm2);
    (Reflector { v, tau }, beta)
}

/// `A P = Q R` with greedy column pivoting.
#[derive(Debug, Clone)]
pub struct PivotedQr<T: Scalar, E: Elem<T>> {
    r: Mat<E>,
    reflectors: Vec<Reflector<E>>,
    perm: Vec<usize>,
    rank: usize,
    rank_tol: T,
}

impl<T: Scalar, E: Elem<T>> PivotedQr<T, E> {
    /// Factors `a`; columns whose pivot falls below `rel_tol × |R_00|`
    /// count as dependent.
    pub fn new(a: &Mat<E>, rel_tol: T) -> Self {
        let (m, n) = (a.rows, a.cols);
        let mut r = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::new();
        let steps = m.min(n);
        let mut norms: Vec<T> = (0..n).map(|j| col_norm2(r.col(j), 0)).collect();
        for k in 0..steps {
            let mut p = k;
            for j in k + 1..n {
                if norms[j] > norms[p] {
                    p = j;
                }
            }
            r.swap_cols(k, p);
            perm.swap(k, p);
            norms.swap(k, p);
            let (h, beta) = householder(&r.col(k)[k..]);
            {
                let c = r.col_mut(k);
                c[k] = beta;
                for v in c[k + 1..].iter_mut() {
                    *v = E::zero();
                }
            }
            for j in k + 1..n {
                h.apply(r.col_mut(j), k);
                // downdating loses accuracy, so recompute
                norms[j] = col_norm2(r.col(j), k + 1);
            }
            reflectors.push(h);
        }
        let d0 = if steps > 0 { r.get(0, 0).modulus() } else { T::zero() };
        let thresh = rel_tol * d0;
        let rank = (0..steps).take_while(|&k| r.get(k, k).modulus() > thresh).count();
        PivotedQr { r, reflectors, perm, rank, rank_tol: rel_tol }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn cols(&self) -> usize {
        self.r.cols
    }

    pub fn rank_tolerance(&self) -> T {
        self.rank_tol
    }

    /// Original indices of the columns pivoted past the numerical rank.
    pub fn dependent_columns(&self) -> Vec<usize> {
        self.perm[self.rank..].to_vec()
    }

    /// Diagonal of `R` in pivot order.
    pub fn r_diagonal(&self) -> Vec<T> {
        (0..self.r.rows.min(self.r.cols)).map(|k| self.r.get(k, k).modulus()).collect()
    }

    /// `|R_00| / |R_kk|` at the last retained pivot.
    pub fn condition_estimate(&self) -> T {
        if self.rank == 0 {
            return T::infinity();
        }
        self.r.get(0, 0).modulus() / self.r.get(self.rank - 1, self.rank - 1).modulus()
    }

    fn qh_b(&self, b: &[E]) -> Vec<E> {
        let mut y = b.to_vec();
        for (k, h) in self.reflectors.iter().enumerate() {
            h.apply(&mut y, k);
        }
        y
    }

    /// Basic least-squares solution; `None` when rank deficient.
    pub fn solve(&self, b: &[E]) -> Option<Vec<E>> {
        let n = self.r.cols;
        if self.rank < n {
            return None;
        }
        let y = self.qh_b(b);
        let mut z = vec![E::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.r.get(i, j) * z[j];
            }
            z[i] = s / self.r.get(i, i);
        }
        let mut x = vec![E::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        Some(x)
    }

    /// Minimum-norm least-squares solution through a complete orthogonal
    /// decomposition of the rank-`r` leading rows of `R`.
    pub fn solve_min_norm(&self, b: &[E]) -> Vec<E> {
        let n = self.r.cols;
        let r = self.rank;
        if r == n {
            return self.solve(b).expect("full rank");
        }
        let y = self.qh_b(b);
        let mut x = vec![E::zero(); n];
        if r == 0 {
            return x;
        }
        // R1^H (n × r) = Z T
        let r1h = Mat::from_fn(n, r, |i, j| if i >= j { self.r.get(j, i).conj() } else { E::zero() });
        let inner = PivotlessQr::new(r1h);
        // T^H w = y[..r]
        let mut w = vec![E::zero(); r];
        for i in 0..r {
            let mut s = y[i];
            for (j, &wj) in w.iter().enumerate().take(i) {
                s = s - inner.t.get(j, i).conj() * wj;
            }
            w[i] = s / inner.t.get(i, i).conj();
        }
        let z = inner.apply_q(&w);
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }
}

struct PivotlessQr<T: Scalar, E: Elem<T>> {
    t: Mat<E>,
    reflectors: Vec<Reflector<E>>,
    _m: std::marker::PhantomData<T>,
}

impl<T: Scalar, E: Elem<T>> PivotlessQr<T, E> {
    fn new(mut a: Mat<E>) -> Self {
        let (m, n) = (a.rows, a.cols);
        let mut reflectors = Vec::new();
        for k in 0..n.min(m) {
            let (h, beta) = householder(&a.col(k)[k..]);
            {
                let c = a.col_mut(k);
                c[k] = beta;
                for v in c[k + 1..].iter_mut() {
                    *v = E::zero();
                }
            }
            for j in k + 1..n {
                h.apply(a.col_mut(j), k);
            }
            reflectors.push(h);
        }
        PivotlessQr { t: a, reflectors, _m: std::marker::PhantomData }
    }

    // Q [w; 0]
    fn apply_q(&self, w: &[E]) -> Vec<E> {
        let mut y = vec![E::zero(); self.t.rows];
        y[..w.len()].copy_from_slice(w);
        for (k, h) in self.reflectors.iter().enumerate().rev() {
            // H is Hermitian up to tau conjugation: apply H rather than H^H
            let seg = &mut y[k..k + h.v.len()];
            let mut dot = E::zero();
            for (&vi, &xi) in h.v.iter().zip(seg.iter()) {
                dot = dot + vi.conj() * xi;
            }
            let kf = h.tau * dot;
            for (xi, &vi) in seg.iter_mut().zip(&h.v) {
                *xi = *xi - vi * kf;
            }
        }
        y
    }
}

fn col_norm2<T: Scalar, E: Elem<T>>(c: &[E], from: usize) -> T {
    c[from..].iter().map(|v| v.norm_sqr()).sum::<T>()
}

/// Result of a full-rank least-squares solve.
#[derive(Debug, Clone)]
pub struct LsSolution<T, E> {
    pub x: Vec<E>,
    pub residual_norm: T,
    pub condition: T,
}

/// Euclidean norm of `b - A x`.
pub fn residual_norm<T: Scalar, E: Elem<T>>(a: &Mat<E>, x: &[E], b: &[E]) -> T {
    let ax = a.mul_vec(x);
    ax.iter().zip(b).map(|(&p, &q)| (q - p).norm_sqr()).sum::<T>().sqrt()
}

/// Solves `min ‖b − A x‖` or returns the original indices of dependent columns.
pub fn lstsq<T: Scalar, E: Elem<T>>(a: &Mat<E>, b: &[E], rel_tol: T) -> Result<LsSolution<T, E>, Vec<usize>> {
    let qr = PivotedQr::new(a, rel_tol);
    match qr.solve(b) {
        Some(x) => {
            let residual_norm = residual_norm(a, &x, b);
            Ok(LsSolution { x, residual_norm, condition: qr.condition_estimate() })
        }
        None => Err(qr.dependent_columns()),
    }
}

/// Solves a small square real system; `None` when singular.
pub fn solve_square<T: Scalar>(a: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    PivotedQr::new(a, T::epsilon() * T::lit(16.0)).solve(b)
}
