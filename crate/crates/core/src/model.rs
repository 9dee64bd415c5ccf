//! Pointwise nonlinearity and the scalar functionals built on it.
//!
//! The nonlinearity is `f(u) = (e^{4π|u|²} − 1 − 4πμ|u|²) u`, written through
//! `g(z) = e^{4πz} − 1 − 4πμz` as `f(u) = g(u²) u`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Amplitudes above this are rejected as unphysical.
pub const U_MAX: f64 = 6.0;

const FOUR_PI: f64 = 4.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub mu: u8,
}

impl ModelParams {
    pub fn new(omega: f64, mu: u8) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::param(format!("omega must be positive, got {omega}")));
        }
        if mu > 1 {
            return Err(Error::param(format!("mu must be 0 or 1, got {mu}")));
        }
        Ok(ModelParams { omega, mu })
    }

    pub(crate) fn muf(&self) -> f64 {
        f64::from(self.mu)
    }
}

/// `e^x − Σ_{k<m} x^k/k!`, accurate for small `x`.
pub fn exp_tail(x: f64, m: u32) -> f64 {
    if x.abs() < 1.0 {
        let mut term = 1.0;
        for k in 1..=m {
            term *= x / f64::from(k);
        }
        let mut sum = 0.0;
        let mut k = m;
        loop {
            sum += term;
            k += 1;
            term *= x / f64::from(k);
            if term.abs() <= 1e-18 * sum.abs() || k > m + 60 {
                break;
            }
        }
        sum
    } else {
        let mut v = x.exp_m1();
        let mut term = 1.0;
        for k in 1..m {
            term *= x / f64::from(k);
            v -= term;
        }
        v
    }
}

fn check(u: f64) -> Result<()> {
    if u.is_finite() && u.abs() <= U_MAX {
        Ok(())
    } else {
        Err(Error::Saturation { amplitude: u, cap: U_MAX })
    }
}

fn check_z(z: f64) -> Result<()> {
    if !(z >= 0.0) {
        return Err(Error::param(format!("z must be nonnegative, got {z}")));
    }
    check(z.sqrt())
}

// Unchecked kernels for hot loops; callers validate amplitudes up front.

#[inline]
pub(crate) fn g_raw(z: f64, mu: f64) -> f64 {
    let x = FOUR_PI * z;
    if mu == 0.0 {
        x.exp_m1()
    } else {
        exp_tail(x, 2)
    }
}

#[inline]
pub(crate) fn gp_raw(z: f64, mu: f64) -> f64 {
    FOUR_PI * ((FOUR_PI * z).exp() - mu)
}

#[inline]
pub(crate) fn big_g_raw(z: f64, mu: f64) -> f64 {
    let x = FOUR_PI * z;
    if mu == 0.0 {
        exp_tail(x, 2) / FOUR_PI
    } else {
        exp_tail(x, 3) / FOUR_PI
    }
}

#[inline]
pub(crate) fn vplus_raw(z: f64, mu: f64) -> f64 {
    2.0 * z * gp_raw(z, mu) + g_raw(z, mu)
}

pub fn f_mu(u: f64, p: &ModelParams) -> Result<f64> {
    check(u)?;
    Ok(g_raw(u * u, p.muf()) * u)
}

/// Primitive of `f_mu` vanishing at the origin.
pub fn big_f_mu(u: f64, p: &ModelParams) -> Result<f64> {
    check(u)?;
    Ok(0.5 * big_g_raw(u * u, p.muf()))
}

pub fn g_fun(z: f64, p: &ModelParams) -> Result<f64> {
    check_z(z)?;
    Ok(g_raw(z, p.muf()))
}

pub fn g_prime(z: f64, p: &ModelParams) -> Result<f64> {
    check_z(z)?;
    Ok(gp_raw(z, p.muf()))
}

/// `G(z) = (e^{4πz} − 1 − 4πz − 8π²μz²)/(4π)`, so that `G′ = g` and `F(u) = G(u²)/2`.
pub fn big_g(z: f64, p: &ModelParams) -> Result<f64> {
    check_z(z)?;
    Ok(big_g_raw(z, p.muf()))
}

/// Potential subtracted from `−Δ + ω` in the real-part linearization.
pub fn lplus_potential(u: f64, p: &ModelParams) -> Result<f64> {
    check(u)?;
    Ok(vplus_raw(u * u, p.muf()))
}

/// `χ(x) = 8πx² + 1/π − 4x − e^{−4πx}/π`.
pub fn chi(x: f64) -> f64 {
    -exp_tail(-FOUR_PI * x, 3) / PI
}

/// Pointwise modulus access shared by real and complex fields.
pub trait Amplitude: Copy + Send + Sync {
    fn abs2(self) -> f64;
}

impl Amplitude for f64 {
    #[inline]
    fn abs2(self) -> f64 {
        self * self
    }
}

impl Amplitude for Complex64 {
    #[inline]
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
}

pub(crate) fn check_amplitudes<T: Amplitude>(values: &[T]) -> Result<()> {
    for v in values {
        let a = v.abs2();
        if !(a <= U_MAX * U_MAX) {
            return Err(Error::Saturation { amplitude: a.sqrt(), cap: U_MAX });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KSet {
    KMinus,
    KPlus,
    Neither,
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub mass: f64,
    pub grad_norm_sq: f64,
    pub energy: f64,
    pub action: f64,
    pub p_constraint: f64,
    pub virial_i: f64,
    pub kset: KSet,
}

/// Mass, energy, action, constraint and virial functionals of a radial field.
///
/// `s_ref` is the ground-state action used for the K± classification.
pub fn functionals<T: crate::grid::FieldValue>(
    values: &[T],
    grid: &RadialGrid,
    p: &ModelParams,
    s_ref: Option<f64>,
) -> Result<FunctionalReport> {
    grid.check_len(values.len())?;
    check_amplitudes(values)?;
    let mu = p.muf();
    let mut mass = 0.0;
    let mut int_f = 0.0;
    let mut int_uf = 0.0;
    for (v, w) in values.iter().zip(grid.weights()) {
        let z = v.abs2();
        mass += w * z;
        int_f += w * 0.5 * big_g_raw(z, mu);
        int_uf += w * g_raw(z, mu) * z;
    }
    let a = grid.grad_norm_sq(values)?;
    let energy = 0.5 * a - int_f;
    let action = energy + 0.5 * p.omega * mass;
    let p_constraint = 0.5 * p.omega * mass - int_f;
    let virial_i = a - (int_uf - 2.0 * int_f);
    Ok(FunctionalReport {
        mass,
        grad_norm_sq: a,
        energy,
        action,
        p_constraint,
        virial_i,
        kset: classify(action, virial_i, s_ref),
    })
}

pub fn classify(action: f64, virial_i: f64, s_ref: Option<f64>) -> KSet {
    match s_ref {
        None => KSet::Undefined,
        Some(s) if action < s && virial_i < 0.0 => KSet::KMinus,
        Some(s) if action < s && virial_i > 0.0 => KSet::KPlus,
        Some(_) => KSet::Neither,
    }
}
