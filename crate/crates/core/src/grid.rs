//! Radial mesh, quadrature and the discrete radial Laplacian.
//!
//! Nodes sit at half-offset positions `s_j = (j + ½)/n` of a computational
//! coordinate mapped to the radius by `r(s) = R sinh(βs)/sinh(β)`. With β = 0
//! the map is the identity `r = Rs` and the mesh is uniform. Quadrature is
//! the midpoint rule in `s` with weights `w_j = 2π r_j r′(s_j) Δs`.
//!
//! The Laplacian is written in flux form. With face coefficients
//! `c_f = 2π r_f / (r′(s_f) Δs)` (vanishing at the origin face) and the
//! Dirichlet ghost `u_n = −u_{n−1}`, the stiffness matrix `K` is symmetric
//! tridiagonal and `−Δ_l u = K u / w + l² u / r²`. This operator is
//! self-adjoint in the weighted inner product and `uᵀKu` is the discrete
//! Dirichlet energy.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Amplitude;

pub const DEFAULT_N: usize = 4096;
pub const DEFAULT_BETA: f64 = 7.5;
pub const MIN_NODES: usize = 16;

/// Default truncation radius `30/√ω`.
pub fn default_r_max(omega: f64) -> f64 {
    30.0 / omega.sqrt()
}

/// Values a field may hold: reals or complex numbers.
pub trait FieldValue:
    Amplitude + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}

impl<T> FieldValue for T where
    T: Amplitude + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>
{
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_sector(l: u32) -> Self {
        if l == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r_max: f64,
    n: usize,
    beta: f64,
    ds: f64,
    nodes: Vec<f64>,
    jac: Vec<f64>,
    weights: Vec<f64>,
    flux: Vec<f64>,
}

/// Uniform half-offset mesh.
pub fn make_grid(r_max: f64, n: usize) -> Result<RadialGrid> {
    RadialGrid::uniform(r_max, n)
}

impl RadialGrid {
    pub fn uniform(r_max: f64, n: usize) -> Result<Self> {
        Self::new(r_max, n, 0.0)
    }

    /// Mesh clustered at the origin with stretching `beta`.
    pub fn new(r_max: f64, n: usize, beta: f64) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::param(format!("r_max must be positive, got {r_max}")));
        }
        if n < MIN_NODES {
            return Err(Error::param(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        if !(beta.is_finite() && (0.0..=30.0).contains(&beta)) {
            return Err(Error::param(format!("stretching must lie in [0, 30], got {beta}")));
        }
        let ds = 1.0 / n as f64;
        let map = Map { r_max, beta };
        let mut nodes = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            let s = (j as f64 + 0.5) * ds;
            let (r, dr) = map.eval(s);
            nodes.push(r);
            jac.push(dr);
            weights.push(2.0 * PI * r * dr * ds);
        }
        let mut flux = Vec::with_capacity(n + 1);
        flux.push(0.0);
        for f in 1..=n {
            let (r, dr) = map.eval(f as f64 * ds);
            flux.push(2.0 * PI * r / (dr * ds));
        }
        Ok(RadialGrid { r_max, n, beta, ds, nodes, jac, weights, flux })
    }

    /// Default stretched mesh for frequency `omega`.
    pub fn for_frequency(omega: f64, n: usize) -> Result<Self> {
        Self::new(default_r_max(omega), n, DEFAULT_BETA)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `dr/ds` at the nodes.
    pub fn jacobian(&self) -> &[f64] {
        &self.jac
    }

    /// Face coefficients `c_0..=c_n`.
    pub fn flux(&self) -> &[f64] {
        &self.flux
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    /// Same mesh family with twice the nodes.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.r_max, 2 * self.n, self.beta)
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.n, got: len })
        }
    }

    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Weighted inner product `Σ w u v`.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }

    /// Diagonal and off-diagonal of the stiffness matrix `K`.
    pub fn stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let c = &self.flux;
        let mut diag: Vec<f64> = (0..n).map(|j| c[j] + c[j + 1]).collect();
        diag[n - 1] = c[n - 1] + 2.0 * c[n];
        let off = (1..n).map(|f| -c[f]).collect();
        (diag, off)
    }

    /// `K u` for a real or complex field.
    pub fn stiffness_apply<T: FieldValue>(&self, u: &[T]) -> Vec<T> {
        let n = self.n;
        let c = &self.flux;
        let mut out = vec![T::default(); n];
        for j in 0..n {
            let mut acc = T::default();
            if j > 0 {
                acc = acc + (u[j] - u[j - 1]) * c[j];
            }
            if j + 1 < n {
                acc = acc + (u[j] - u[j + 1]) * c[j + 1];
            } else {
                acc = acc + u[j] * (2.0 * c[n]);
            }
            out[j] = acc;
        }
        out
    }

    /// `−Δ_l u` with parity at the origin and Dirichlet data at `r_max`.
    pub fn radial_laplacian_apply<T: FieldValue>(&self, u: &[T], l: u32) -> Result<Vec<T>> {
        self.check_len(u.len())?;
        let l2 = f64::from(l * l);
        let mut out = self.stiffness_apply(u);
        for j in 0..self.n {
            let r = self.nodes[j];
            out[j] = out[j] * (1.0 / self.weights[j]) + u[j] * (l2 / (r * r));
        }
        Ok(out)
    }

    /// Discrete `‖∂_r u‖²`, equal to `uᴴKu`.
    pub fn grad_norm_sq<T: FieldValue>(&self, u: &[T]) -> Result<f64> {
        self.check_len(u.len())?;
        let n = self.n;
        let c = &self.flux;
        let mut s = 0.0;
        for f in 1..n {
            s += c[f] * (u[f] - u[f - 1]).abs2();
        }
        s += 2.0 * c[n] * u[n - 1].abs2();
        Ok(s)
    }

    /// Centred radial derivative with the given parity at the origin.
    pub fn derivative(&self, u: &[f64], parity: Parity) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let n = self.n;
        let mut out = vec![0.0; n];
        for j in 0..n {
            let left = if j == 0 { parity.sign() * u[0] } else { u[j - 1] };
            let right = if j + 1 == n { -u[n - 1] } else { u[j + 1] };
            out[j] = (right - left) / (2.0 * self.ds * self.jac[j]);
        }
        Ok(out)
    }

    /// Computational coordinate of radius `r`.
    pub fn s_of_r(&self, r: f64) -> f64 {
        Map { r_max: self.r_max, beta: self.beta }.inverse(r)
    }

    /// Four-point Lagrange interpolation in the computational coordinate.
    ///
    /// Uses the parity extension across the origin and the Dirichlet ghost
    /// at `r_max`; returns zero beyond `r_max`.
    pub fn interpolate(&self, u: &[f64], parity: Parity, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.r_max {
            return 0.0;
        }
        let n = self.n as isize;
        let x = self.s_of_r(r) / self.ds - 0.5;
        let base = (x.floor() as isize).clamp(-1, n - 1);
        let t = x - base as f64;
        let at = |k: isize| -> f64 {
            if k < 0 {
                parity.sign() * u[(-k - 1) as usize]
            } else if k >= n {
                let m = 2 * n - 1 - k;
                if m < 0 {
                    0.0
                } else {
                    -u[m as usize]
                }
            } else {
                u[k as usize]
            }
        };
        let (p0, p1, p2, p3) = (at(base - 1), at(base), at(base + 1), at(base + 2));
        let a = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let b = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let c = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let d = (t + 1.0) * t * (t - 1.0) / 6.0;
        a * p0 + b * p1 + c * p2 + d * p3
    }
}

#[derive(Clone, Copy)]
struct Map {
    r_max: f64,
    beta: f64,
}

impl Map {
    fn eval(&self, s: f64) -> (f64, f64) {
        if self.beta == 0.0 {
            (self.r_max * s, self.r_max)
        } else {
            let k = self.r_max / self.beta.sinh();
            (k * (self.beta * s).sinh(), k * self.beta * (self.beta * s).cosh())
        }
    }

    fn inverse(&self, r: f64) -> f64 {
        if self.beta == 0.0 {
            r / self.r_max
        } else {
            (r * self.beta.sinh() / self.r_max).asinh() / self.beta
        }
    }
}

/// A real or complex function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField<T> {
    grid: Arc<RadialGrid>,
    values: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    r_max: f64,
    n: usize,
    #[serde(default)]
    beta: f64,
    values: Vec<T>,
}

impl<T: FieldValue> RadialField<T> {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<T>) -> Result<Self> {
        grid.check_len(values.len())?;
        if values.iter().any(|v| !v.abs2().is_finite()) {
            return Err(Error::param("field has non-finite entries"));
        }
        Ok(RadialField { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![T::default(); grid.n()];
        RadialField { grid, values }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> T) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialField { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.grid.grad_norm_sq(&self.values).expect("length checked at construction")
    }

    pub fn mass(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v.abs2()).sum()
    }
}

impl<T: FieldValue + Serialize> RadialField<T> {
    pub fn to_json(&self) -> Result<String> {
        let env = Envelope {
            r_max: self.grid.r_max(),
            n: self.grid.n(),
            beta: self.grid.beta(),
            values: self.values.clone(),
        };
        crate::io::to_json_string(&env)
    }
}

impl<T: FieldValue + for<'de> Deserialize<'de>> RadialField<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope<T> = serde_json::from_str(text)?;
        let grid = RadialGrid::new(env.r_max, env.n, env.beta)?;
        RadialField::new(Arc::new(grid), env.values)
    }
}

/// Split into real and imaginary parts for CSV output.
pub trait CsvValue: Copy {
    fn parts(self) -> (f64, f64);
    fn from_parts(re: f64, im: f64) -> Self;
}

impl CsvValue for f64 {
    fn parts(self) -> (f64, f64) {
        (self, 0.0)
    }
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
}

impl CsvValue for Complex64 {
    fn parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
}

impl<T: FieldValue + CsvValue> RadialField<T> {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,value_re,value_im")?;
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let (re, im) = v.parts();
            writeln!(out, "{},{},{}", crate::io::fmt_f64(*r), crate::io::fmt_f64(re), crate::io::fmt_f64(im))?;
        }
        Ok(())
    }

    /// Reads values written by [`write_csv`](Self::write_csv) onto `grid`.
    pub fn read_csv<R: BufRead>(grid: Arc<RadialGrid>, input: R) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n());
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::param(format!("line {}: expected 3 columns", k + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::param(format!("line {}: {e}", k + 1)))
            };
            values.push(T::from_parts(parse(cols[1])?, parse(cols[2])?));
        }
        RadialField::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_grid(0.0, 100).is_err());
        assert!(make_grid(-1.0, 100).is_err());
        assert!(make_grid(10.0, 8).is_err());
        assert!(RadialGrid::new(10.0, 100, -1.0).is_err());
    }

    #[test]
    fn area_uniform() {
        let g = make_grid(10.0, 4096).unwrap();
        let area = g.integrate(&vec![1.0; 4096]).unwrap();
        assert!(rel(area, PI * 100.0) < 1e-12);
    }

    #[test]
    fn area_stretched() {
        let g = RadialGrid::new(10.0, 4096, DEFAULT_BETA).unwrap();
        let area = g.integrate(&vec![1.0; 4096]).unwrap();
        assert!(rel(area, PI * 100.0) < 1e-6);
    }

    #[test]
    fn gaussian_integral() {
        // Closed form: ∫ e^{−r²} 2πr dr over [0, R] = π(1 − e^{−R²}).
        let g = make_grid(10.0, 4096).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let exact = PI * (1.0 - (-100.0f64).exp());
        let err = rel(g.integrate(&v).unwrap(), exact);
        assert!(err < 1e-6, "{err}");
        // The midpoint rule's leading error is πh²/12 times the integrand at the origin.
        let h = 10.0 / 4096.0;
        let lead = (g.integrate(&v).unwrap() - exact) / (h * h);
        assert!((lead - PI / 12.0).abs() < 1e-3 * PI / 12.0, "{lead}");
    }

    #[test]
    fn second_moment_integral() {
        // ∫ r² e^{−r²} 2πr dr = π Γ(2) = π.
        let g = make_grid(10.0, 4096).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|r| r * r * (-r * r).exp()).collect();
        assert!(rel(g.integrate(&v).unwrap(), PI) < 1e-6);
    }

    #[test]
    fn linear_moments_exact() {
        for n in [16, 100, 1000] {
            let g = make_grid(3.0, n).unwrap();
            assert!(rel(g.integrate(&vec![1.0; n]).unwrap(), PI * 9.0) < 1e-12);
        }
    }

    #[test]
    fn length_mismatch() {
        let g = make_grid(1.0, 32).unwrap();
        assert!(matches!(g.integrate(&[1.0; 31]), Err(Error::Dimension { expected: 32, got: 31 })));
        assert!(g.grad_norm_sq(&[1.0; 3]).is_err());
    }

    fn lap_error(g: &RadialGrid, l: u32) -> (f64, f64) {
        let (v, exact): (Vec<f64>, Vec<f64>) = g
            .nodes()
            .iter()
            .map(|&r| {
                let e = (-r * r).exp();
                if l == 0 {
                    // −v″ − v′/r for v = e^{−r²}
                    (e, (4.0 - 4.0 * r * r) * e)
                } else {
                    // −v″ − v′/r + v/r² for v = r e^{−r²}
                    (r * e, (8.0 * r - 4.0 * r * r * r) * e)
                }
            })
            .unzip();
        let lap = g.radial_laplacian_apply(&v, l).unwrap();
        let diff: Vec<f64> = lap.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let max = diff.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
        (max, g.norm(&diff) / g.norm(&exact))
    }

    #[test]
    fn laplacian_gaussian_order_two() {
        let (e1, _) = lap_error(&make_grid(8.0, 2048).unwrap(), 0);
        let (e2, _) = lap_error(&make_grid(8.0, 4096).unwrap(), 0);
        assert!(e2 < 1e-3, "{e2}");
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "{order}");
    }

    #[test]
    fn laplacian_sector_one_order_two() {
        // The first node carries an O(h) pointwise error for odd data, so
        // the order is measured in the weighted norm.
        let (_, e1) = lap_error(&make_grid(8.0, 2048).unwrap(), 1);
        let (_, e2) = lap_error(&make_grid(8.0, 4096).unwrap(), 1);
        assert!(e2 < 1e-3, "{e2}");
        assert!((e1 / e2).log2() > 1.9);
    }

    #[test]
    fn laplacian_stretched_converges() {
        for l in [0, 1] {
            let (_, e1) = lap_error(&RadialGrid::new(8.0, 2048, DEFAULT_BETA).unwrap(), l);
            let (_, e2) = lap_error(&RadialGrid::new(8.0, 4096, DEFAULT_BETA).unwrap(), l);
            assert!((e1 / e2).log2() > 1.9, "{l} {e1} {e2}");
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes_inside() {
        let g = make_grid(5.0, 256).unwrap();
        let lap = g.radial_laplacian_apply(&vec![1.0; 256], 0).unwrap();
        assert!(lap[..255].iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn gradient_norms() {
        let g = make_grid(20.0, 8192).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 2.0).exp()).collect();
        assert!(rel(g.grad_norm_sq(&u).unwrap(), PI) < 1e-6);
        assert_eq!(g.grad_norm_sq(&vec![0.0; 8192]).unwrap(), 0.0);
    }

    #[test]
    fn gradient_norm_of_constant_inside_support_is_zero() {
        let g = make_grid(5.0, 64).unwrap();
        // Constant data has no interior differences; only the wall term remains.
        let c = vec![1.0; 64];
        let wall = 2.0 * g.flux()[64];
        assert!((g.grad_norm_sq(&c).unwrap() - wall).abs() < 1e-12 * wall);
    }

    #[test]
    fn gradient_norm_matches_laplacian_form() {
        let g = RadialGrid::new(10.0, 4096, DEFAULT_BETA).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (1.0 - r * r / 25.0).max(0.0).powi(4)).collect();
        let lap = g.radial_laplacian_apply(&u, 0).unwrap();
        let form = g.dot(&lap, &u);
        assert!(rel(form, g.grad_norm_sq(&u).unwrap()) < 1e-4);
    }

    #[test]
    fn complex_gradient_norm_sums_parts() {
        let g = make_grid(6.0, 512).unwrap();
        let re: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let im: Vec<f64> = g.nodes().iter().map(|r| r * (-r * r).exp()).collect();
        let z: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let sum = g.grad_norm_sq(&re).unwrap() + g.grad_norm_sq(&im).unwrap();
        assert!(rel(g.grad_norm_sq(&z).unwrap(), sum) < 1e-14);
    }

    #[test]
    fn derivative_of_gaussian() {
        let g = RadialGrid::new(8.0, 4096, DEFAULT_BETA).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let d = g.derivative(&u, Parity::Even).unwrap();
        let err = g
            .nodes()
            .iter()
            .zip(&d)
            .map(|(r, x)| (x + 2.0 * r * (-r * r).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn interpolation_reproduces_smooth_data() {
        let g = RadialGrid::new(10.0, 2048, DEFAULT_BETA).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        for k in 0..200 {
            let r = 4.0 * f64::from(k) / 200.0 + 1e-3;
            assert!((g.interpolate(&u, Parity::Even, r) - (-r * r).exp()).abs() < 1e-8);
        }
        for (j, &r) in g.nodes().iter().enumerate() {
            assert!((g.interpolate(&u, Parity::Even, r) - u[j]).abs() < 1e-13);
        }
        assert_eq!(g.interpolate(&u, Parity::Even, 11.0), 0.0);
    }

    #[test]
    fn field_json_round_trip() {
        let g = Arc::new(RadialGrid::new(4.0, 32, 2.0).unwrap());
        let f = RadialField::from_fn(g, |r| (-r).exp() / 3.0);
        let text = f.to_json().unwrap();
        let back = RadialField::<f64>::from_json(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json().unwrap(), text);
        let z = RadialField::from_fn(f.grid().clone(), |r| Complex64::new(r.cos(), r.sin() / 7.0));
        let back = RadialField::<Complex64>::from_json(&z.to_json().unwrap()).unwrap();
        assert_eq!(back, z);
    }

    #[test]
    fn field_csv_round_trip() {
        let g = Arc::new(make_grid(4.0, 32).unwrap());
        let z = RadialField::from_fn(g.clone(), |r| Complex64::new(r.cos(), -r / 3.0));
        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("r,value_re,value_im\n"));
        let back = RadialField::<Complex64>::read_csv(g, &buf[..]).unwrap();
        assert_eq!(back, z);
    }

    #[test]
    fn field_rejects_nonfinite() {
        let g = Arc::new(make_grid(4.0, 16).unwrap());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(RadialField::new(g.clone(), v).is_err());
        assert!(RadialField::new(g, vec![0.0; 15]).is_err());
    }

    fn vanishing_field(seed: &[f64], g: &RadialGrid) -> Vec<f64> {
        let n = g.n();
        (0..n)
            .map(|j| {
                let r = g.nodes()[j] / g.r_max();
                let k = j % seed.len();
                seed[k] * (1.0 - r * r)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn laplacian_self_adjoint(
            a in proptest::collection::vec(-1.0f64..1.0, 8..40),
            b in proptest::collection::vec(-1.0f64..1.0, 8..40),
            beta in 0.0f64..8.0,
            l in 0u32..4,
        ) {
            let g = RadialGrid::new(10.0, 512, beta).unwrap();
            let u = vanishing_field(&a, &g);
            let v = vanishing_field(&b, &g);
            let lu = g.radial_laplacian_apply(&u, l).unwrap();
            let lv = g.radial_laplacian_apply(&v, l).unwrap();
            let lhs = g.dot(&lu, &v);
            let rhs = g.dot(&u, &lv);
            let scale = g.norm(&u) * g.norm(&v) * (1.0 + lhs.abs().max(rhs.abs()) / (g.norm(&u) * g.norm(&v)));
            prop_assert!((lhs - rhs).abs() / scale < 1e-10);
        }

        #[test]
        fn quadrature_exact_for_constants(r_max in 0.1f64..100.0, n in 16usize..2000) {
            let g = make_grid(r_max, n).unwrap();
            let area = g.integrate(&vec![1.0; n]).unwrap();
            prop_assert!(rel(area, PI * r_max * r_max) < 1e-10);
        }

        #[test]
        fn nodes_increasing_weights_positive(r_max in 0.1f64..100.0, n in 16usize..500, beta in 0.0f64..10.0) {
            let g = RadialGrid::new(r_max, n, beta).unwrap();
            prop_assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(g.nodes()[0] > 0.0 && *g.nodes().last().unwrap() <= r_max);
            prop_assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }
}
