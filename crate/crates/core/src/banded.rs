//! Tridiagonal and banded kernels: Thomas elimination, pivoted band LU,
//! Sturm counts and inverse iteration for symmetric tridiagonal matrices.

use std::ops::{Add, Div, Mul, Sub};

use crate::error::{Error, Result};

/// Solves a tridiagonal system without pivoting.
///
/// `sub[i]` couples row `i + 1` to column `i`, `sup[i]` couples row `i` to
/// column `i + 1`.
pub fn thomas<T>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Vec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    let n = diag.len();
    debug_assert!(sub.len() + 1 == n && sup.len() + 1 == n && rhs.len() == n);
    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut den = diag[0];
    if n > 1 {
        c.push(sup[0] / den);
    }
    d.push(rhs[0] / den);
    for i in 1..n {
        den = diag[i] - sub[i - 1] * c[i - 1];
        if i + 1 < n {
            c.push(sup[i] / den);
        }
        d.push((rhs[i] - sub[i - 1] * d[i - 1]) / den);
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] = x[i] - c[i] * next;
    }
    x
}

/// LU factorization with partial pivoting of a band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
    min_pivot: f64,
}

/// Band matrix under assembly; entries outside the band are rejected.
#[derive(Debug, Clone)]
pub struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<f64>,
}

impl Band {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Band { n, kl, ku, width, a: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.a[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl >= i && j <= i + self.ku {
            self.a[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.a[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(self) -> BandLu {
        let Band { n, kl, ku, width, mut a } = self;
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        let mut piv = vec![0; n];
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = a[at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = a[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    a.swap(at(k, j), at(p, j));
                }
            }
            let pivot = a[at(k, k)];
            min_pivot = min_pivot.min(pivot.abs());
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..=last_row {
                let m = a[at(i, k)] / pivot;
                a[at(i, k)] = m;
                if m != 0.0 {
                    for j in k + 1..=last_col {
                        a[at(i, j)] -= m * a[at(k, j)];
                    }
                }
            }
        }
        BandLu { n, kl, ku, width, a, piv, min_pivot }
    }
}

impl BandLu {
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, kl, ku, width) = (self.n, self.kl, self.ku, self.width);
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= self.a[at(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.a[at(k, j)] * x[j];
            }
            let d = self.a[at(k, k)];
            x[k] = if d == 0.0 { s / f64::MIN_POSITIVE } else { s / d };
        }
        x
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Dimension { expected: diag.len().saturating_sub(1), got: off.len() });
        }
        Ok(SymTridiag { diag, off })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    /// Gershgorin interval containing the spectrum.
    pub fn bounds(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sylvester inertia of `A − x`).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut d = self.diag[0] - x;
        for i in 0..self.n() {
            if i > 0 {
                d = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / d;
            }
            if d == 0.0 {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue_bisect(&self, k: usize) -> f64 {
        assert!(k < self.n());
        let (mut lo, mut hi) = self.bounds();
        let span = (hi - lo).abs().max(1.0);
        lo -= 1e-12 * span;
        hi += 1e-12 * span;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Factors `A − shift` with partial pivoting.
    pub fn shifted_lu(&self, shift: f64) -> BandLu {
        let n = self.n();
        let mut b = Band::zeros(n, 1, 1);
        for i in 0..n {
            b.set(i, i, self.diag[i] - shift);
            if i + 1 < n {
                b.set(i, i + 1, self.off[i]);
                b.set(i + 1, i, self.off[i]);
            }
        }
        b.factor()
    }

    /// Eigenvector for an eigenvalue estimate by inverse iteration.
    pub fn inverse_iteration(&self, shift: f64, start: &[f64], iterations: usize) -> Vec<f64> {
        let lu = self.shifted_lu(shift);
        let mut x = start.to_vec();
        normalize(&mut x);
        for _ in 0..iterations {
            x = lu.solve(&x);
            normalize(&mut x);
        }
        x
    }
}

pub(crate) fn normalize(x: &mut [f64]) {
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
}
