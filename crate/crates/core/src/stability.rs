//! The real growing mode of the linearized flow.
//!
//! Writing `u = e^{iωt}(φ + a + ib)` the linearization is `a_t = L₋b`,
//! `b_t = −L₊a`, so a mode `e^{λt}(v₁, v₂)` satisfies `λv₁ = L₋v₂` and
//! `λv₂ = −L₊v₁`, hence `L₋L₊v₁ = −λ²v₁`. The composed operator is handled
//! through the bordered block system `y = S₊x, S₋y − σx = b`, which never
//! forms the product and keeps the band width at three after interleaving.
//! The eigenvalue is then confirmed on the first-order system itself.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::banded::{Band, BandLu, SymTridiag};
use crate::dynamics::{evolve_observed, EvolveConfig};
use crate::error::{Error, Result};
use crate::grid::RadialField;
use crate::linop::{assemble, Which};
use crate::profile::ProfileSolution;
use crate::spectral::sector_count;

#[derive(Debug, Clone, PartialEq)]
pub struct GrowingMode {
    pub lambda: f64,
    /// Eigenvalue recovered independently from the first-order system.
    pub lambda_first_order: f64,
    pub v1: RadialField<f64>,
    pub v2: RadialField<f64>,
    pub residual: f64,
    pub sector: u32,
    /// Growing modes counted in sectors `1..=3`.
    pub higher_sectors: Vec<(u32, usize)>,
}

impl GrowingMode {
    pub fn route_agreement(&self) -> f64 {
        (self.lambda - self.lambda_first_order).abs() / self.lambda
    }
}

struct Pair {
    plus: SymTridiag,
    minus: SymTridiag,
}

impl Pair {
    /// Factors the bordered system whose `x` block solves `(S₋S₊ − σ)x = b`.
    fn composed(&self, sigma: f64) -> BandLu {
        let n = self.plus.n();
        let mut b = Band::zeros(2 * n, 3, 3);
        for j in 0..n {
            let (xr, yr) = (2 * j, 2 * j + 1);
            b.set(xr, xr, -sigma);
            b.set(yr, yr, 1.0);
            b.set(xr, yr, self.minus.diag[j]);
            b.set(yr, xr, -self.plus.diag[j]);
            if j + 1 < n {
                b.set(xr, yr + 2, self.minus.off[j]);
                b.set(xr + 2, yr, self.minus.off[j]);
                b.set(yr, xr + 2, -self.plus.off[j]);
                b.set(yr + 2, xr, -self.plus.off[j]);
            }
        }
        b.factor()
    }

    /// Factors `[[0, S₋], [−S₊, 0]] − σ` in interleaved ordering.
    fn first_order(&self, sigma: f64) -> BandLu {
        let n = self.plus.n();
        let mut b = Band::zeros(2 * n, 3, 3);
        for j in 0..n {
            let (ar, br) = (2 * j, 2 * j + 1);
            b.set(ar, ar, -sigma);
            b.set(br, br, -sigma);
            b.set(ar, br, self.minus.diag[j]);
            b.set(br, ar, -self.plus.diag[j]);
            if j + 1 < n {
                b.set(ar, br + 2, self.minus.off[j]);
                b.set(ar + 2, br, self.minus.off[j]);
                b.set(br, ar + 2, -self.plus.off[j]);
                b.set(br + 2, ar, -self.plus.off[j]);
            }
        }
        b.factor()
    }

    fn norm_bound(&self) -> f64 {
        let m = |s: &SymTridiag| {
            let (lo, hi) = s.bounds();
            lo.abs().max(hi.abs())
        };
        m(&self.plus) * m(&self.minus)
    }
}

fn solve_x(lu: &BandLu, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut rhs = vec![0.0; 2 * n];
    for j in 0..n {
        rhs[2 * j] = b[j];
    }
    let z = lu.solve(&rhs);
    (0..n).map(|j| z[2 * j]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: &mut [f64]) -> bool {
    let s = dot(v, v).sqrt();
    if s.is_finite() && s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

/// Rank-one deflation `M − θ x zᵀ / (zᵀx)` applied through Sherman–Morrison.
struct Deflation<'a> {
    x: &'a [f64],
    z: &'a [f64],
    theta: f64,
}

/// Inverse iteration on `S₋S₊` at shift `σ`; returns `(θ, x)`.
fn inverse_iteration(
    pair: &Pair,
    sigma: f64,
    start: &[f64],
    sweeps: usize,
    deflate: Option<&Deflation>,
) -> Option<(f64, Vec<f64>)> {
    let lu = pair.composed(sigma);
    let corr = deflate.map(|d| {
        let u: Vec<f64> = d.x.iter().map(|v| v * d.theta / dot(d.z, d.x)).collect();
        let au = solve_x(&lu, &u);
        let denom = 1.0 - dot(d.z, &au);
        (au, denom, d.z)
    });
    let apply = |b: &[f64]| -> Vec<f64> {
        let mut y = solve_x(&lu, b);
        if let Some((au, denom, z)) = &corr {
            let t = dot(z, &y) / denom;
            y.iter_mut().zip(au).for_each(|(a, b)| *a += t * b);
        }
        y
    };
    let mut x = start.to_vec();
    if !unit(&mut x) {
        return None;
    }
    let mut theta = sigma;
    for _ in 0..sweeps {
        let mut y = apply(&x);
        let nu = dot(&x, &y);
        if !(nu.is_finite() && nu != 0.0) {
            return None;
        }
        theta = sigma + 1.0 / nu;
        if !unit(&mut y) {
            return None;
        }
        if dot(&y, &x) < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        x = y;
    }
    Some((theta, x))
}

/// Shift-and-refine search for the negative eigenvalue of `S₋S₊`.
fn composed_search(pair: &Pair, omega: f64, start: &[f64], deflate: Option<&Deflation>, shifts: &[f64]) -> Option<(f64, Vec<f64>)> {
    let tau = 1e-3 * omega * omega;
    for &sigma in shifts {
        let Some((theta, x)) = inverse_iteration(pair, sigma, start, 12, deflate) else {
            continue;
        };
        if !(theta < -tau && theta < 0.25 * sigma) {
            continue;
        }
        let (mut theta, mut x) = (theta, x);
        for _ in 0..6 {
            let Some((t2, x2)) = inverse_iteration(pair, theta * (1.0 + 1e-12), &x, 3, deflate) else {
                break;
            };
            let done = ((t2 - theta) / theta).abs() < 1e-14;
            theta = t2;
            x = x2;
            if done {
                break;
            }
        }
        if theta < -tau {
            return Some((theta, x));
        }
    }
    None
}

/// Finds the real growing mode on the radial sector and certifies it is unique.
pub fn growing_mode(sol: &ProfileSolution) -> Result<GrowingMode> {
    let omega = sol.params.omega;
    let pair = Pair {
        plus: assemble(sol, Which::Plus, 0).symmetric(),
        minus: assemble(sol, Which::Minus, 0).symmetric(),
    };
    let g = sol.grid();
    let sw: Vec<f64> = g.weights().iter().map(|w| w.sqrt()).collect();
    let start: Vec<f64> = sol.values().iter().zip(&sw).map(|(p, s)| p * s).collect();

    let bound = pair.norm_bound();
    let mut shifts = Vec::new();
    let mut sigma = -omega * omega;
    while sigma.abs() <= bound {
        shifts.push(sigma);
        sigma *= 4.0;
    }
    let (theta, x) = composed_search(&pair, omega, &start, None, &shifts).ok_or(Error::StabilityDetected)?;
    let lambda = (-theta).sqrt();

    // First-order system at the same eigenvalue, started from (x, −S₊x/λ).
    let sx = pair.plus.matvec(&x);
    let mut z = vec![0.0; 2 * x.len()];
    for j in 0..x.len() {
        z[2 * j] = x[j];
        z[2 * j + 1] = -sx[j] / lambda;
    }
    unit(&mut z);
    let mut lambda2 = lambda;
    let mut shift = lambda * (1.0 + 1e-10);
    for _ in 0..3 {
        let lu = pair.first_order(shift);
        for _ in 0..3 {
            let mut y = lu.solve(&z);
            let nu = dot(&z, &y);
            lambda2 = shift + 1.0 / nu;
            if !unit(&mut y) {
                return Err(Error::IterationLimit { residual: f64::NAN });
            }
            if dot(&y, &z) < 0.0 {
                y.iter_mut().for_each(|v| *v = -*v);
            }
            z = y;
        }
        shift = lambda2 * (1.0 + 1e-12);
    }

    let n = x.len();
    let mut v1: Vec<f64> = (0..n).map(|j| z[2 * j] / sw[j]).collect();
    let mut v2: Vec<f64> = (0..n).map(|j| z[2 * j + 1] / sw[j]).collect();
    let s = g.norm(&v1);
    let sign = if v1[0] < 0.0 { -1.0 } else { 1.0 };
    v1.iter_mut().for_each(|v| *v *= sign / s);
    v2.iter_mut().for_each(|v| *v *= sign / s);

    let residual = mode_residual(sol, lambda2, &v1, &v2);

    // Uniqueness: deflate with the left eigenvector S₊x and search again.
    let left: Vec<f64> = (0..n).map(|j| z[2 * j + 1]).collect();
    let x_sym: Vec<f64> = (0..n).map(|j| z[2 * j]).collect();
    let d = Deflation { x: &x_sym, z: &left, theta };
    let again = [theta, 4.0 * theta, 16.0 * theta];
    if let Some((t, _)) = composed_search(&pair, omega, &start, Some(&d), &again) {
        return Err(Error::Multiplicity { second: (-t).sqrt() });
    }

    let mut higher = Vec::new();
    for l in 1..=3 {
        higher.push((l, sector_count(sol, Which::Plus, l)?.negatives));
    }

    Ok(GrowingMode {
        lambda,
        lambda_first_order: lambda2,
        v1: RadialField::new(g.clone(), v1)?,
        v2: RadialField::new(g.clone(), v2)?,
        residual,
        sector: 0,
        higher_sectors: higher,
    })
}

/// `max(‖L₋v₂ − λv₁‖, ‖L₊v₁ + λv₂‖) / (‖v₁‖ + ‖v₂‖)`.
pub fn mode_residual(sol: &ProfileSolution, lambda: f64, v1: &[f64], v2: &[f64]) -> f64 {
    let g = sol.grid();
    let lm = assemble(sol, Which::Minus, 0).apply(v2).expect("length matches");
    let lp = assemble(sol, Which::Plus, 0).apply(v1).expect("length matches");
    let r1: Vec<f64> = lm.iter().zip(v1).map(|(a, b)| a - lambda * b).collect();
    let r2: Vec<f64> = lp.iter().zip(v2).map(|(a, b)| a + lambda * b).collect();
    g.norm(&r1).max(g.norm(&r2)) / (g.norm(v1) + g.norm(v2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub lambda: f64,
    pub samples: Vec<(f64, f64)>,
    pub window: (f64, f64),
}

/// Fits the growth rate of `‖|u(t)| − φ‖` after seeding `ε(v₁ + iv₂)`.
///
/// The fit window is `10ε < d < 100ε`; `dt` is the time step.
pub fn growth_rate_from_dynamics(
    sol: &ProfileSolution,
    direction: (&[f64], &[f64]),
    perturbation_scale: f64,
    horizon: f64,
    dt: f64,
) -> Result<GrowthFit> {
    let g = sol.grid();
    let phi_norm = g.norm(sol.values());
    if !(perturbation_scale > 0.0 && perturbation_scale <= 1e-4 * phi_norm * (1.0 + 1e-12)) {
        return Err(Error::param(format!(
            "perturbation scale {perturbation_scale:e} must lie in (0, 1e-4·‖φ‖]"
        )));
    }
    let (a, b) = direction;
    let u0: Vec<Complex64> = sol
        .values()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(p, (x, y))| Complex64::new(p + perturbation_scale * x, perturbation_scale * y))
        .collect();
    let u0 = RadialField::new(g.clone(), u0)?;
    let cfg = EvolveConfig { dt, t_end: horizon, sample_every: horizon, ..EvolveConfig::default_for(sol.params.omega) };
    let eps = perturbation_scale * g.norm(a);
    let (lo, hi) = (10.0 * eps, 100.0 * eps);
    let mut samples = Vec::new();
    let mut stop = false;
    let phi = sol.values();
    evolve_observed(&u0, &sol.params, &cfg, |t, u| {
        let diff: Vec<f64> = u.iter().zip(phi).map(|(z, p)| z.norm() - p).collect();
        let d = g.norm(&diff);
        if d > lo && d < hi {
            samples.push((t, d.ln()));
        }
        if d >= hi {
            stop = true;
        }
        !stop
    })?;
    if samples.len() < 8 {
        return Err(Error::Horizon { horizon });
    }
    let m = samples.len() as f64;
    let mt = samples.iter().map(|s| s.0).sum::<f64>() / m;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / m;
    let sxy: f64 = samples.iter().map(|s| (s.0 - mt) * (s.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - mt).powi(2)).sum();
    let window = (samples[0].0, samples[samples.len() - 1].0);
    Ok(GrowthFit { lambda: sxy / sxx, samples, window })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub omega: f64,
    pub mu: u8,
    pub lambda: f64,
    pub residual: f64,
    pub lambda_dynamics_fit: Option<f64>,
    pub agreement_pct: Option<f64>,
}

impl StabilityReport {
    pub fn new(sol: &ProfileSolution, mode: &GrowingMode, fit: Option<f64>) -> Self {
        StabilityReport {
            omega: sol.params.omega,
            mu: sol.params.mu,
            lambda: mode.lambda,
            residual: mode.residual,
            lambda_dynamics_fit: fit,
            agreement_pct: fit.map(|f| 100.0 * (f - mode.lambda).abs() / mode.lambda),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::io::to_json_string(self)
    }
}

/// Seed size of the default fit, relative to `‖φ‖`.
pub const DEFAULT_SEED: f64 = 1e-6;

pub fn default_fit(sol: &ProfileSolution, mode: &GrowingMode) -> Result<GrowthFit> {
    let eps = DEFAULT_SEED * sol.grid().norm(sol.values());
    growth_rate_from_dynamics(
        sol,
        (mode.v1.values(), mode.v2.values()),
        eps,
        8.0 / mode.lambda,
        0.005 / mode.lambda,
    )
}
