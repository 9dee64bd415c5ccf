//! Ground-state profile `−Δφ + ωφ = f(φ)`.
//!
//! The discrete equation is marched outward from a trial amplitude `φ(0)`;
//! trajectories that cross zero overshoot, trajectories that turn upward
//! undershoot, and bisection between the two pins the ground state to
//! roundoff. The bisected trajectory is continued by its exponential tail
//! and polished by damped Newton on the full discrete boundary value problem.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::SymTridiag;
use crate::error::{Error, Result};
use crate::grid::{Parity, RadialField, RadialGrid};
use crate::model::{self, big_g_raw, g_raw, vplus_raw, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub a_lo: f64,
    pub a_hi: f64,
    /// Relative residual accepted by the Newton polish.
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { a_lo: 1e-3, a_hi: 2.0, tol: 1e-12, max_newton: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSolution {
    pub params: ModelParams,
    pub field: RadialField<f64>,
    pub amplitude: f64,
    pub grad_norm_sq: f64,
    pub mass: f64,
    pub action: f64,
    pub pohozaev_42_residual: f64,
    pub pohozaev_45_residual: f64,
    pub decay_rate_fit: Option<f64>,
    pub newton_iterations: usize,
    pub relative_residual: f64,
}

impl ProfileSolution {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// Radial derivative `φ′`.
    pub fn derivative(&self) -> Vec<f64> {
        self.grid().derivative(self.values(), Parity::Even).expect("field matches its grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum March {
    Overshoot,
    Undershoot,
    Reached,
}

struct Problem<'a> {
    grid: &'a RadialGrid,
    omega: f64,
    mu: f64,
    kappa: f64,
}

impl Problem<'_> {
    fn f(&self, u: f64) -> f64 {
        self.kappa * g_raw(u * u, self.mu) * u
    }

    /// Marches the discrete equation from `a`; returns the verdict and the
    /// index at which marching stopped.
    fn march(&self, a: f64, out: &mut [f64]) -> (March, usize) {
        let c = self.grid.flux();
        let w = self.grid.weights();
        let n = self.grid.n();
        out[0] = a;
        for j in 0..n - 1 {
            let left = if j > 0 { c[j] * (out[j] - out[j - 1]) } else { 0.0 };
            let next = out[j] + (left - w[j] * (self.f(out[j]) - self.omega * out[j])) / c[j + 1];
            if !(next >= 0.0) {
                return (March::Overshoot, j);
            }
            if next > out[j] {
                return (March::Undershoot, j);
            }
            out[j + 1] = next;
        }
        (March::Reached, n)
    }

    fn shoot(&self, cfg: &SolverConfig) -> Result<Vec<f64>> {
        let n = self.grid.n();
        let mut buf = vec![0.0; n];
        let (lo_state, _) = self.march(cfg.a_lo, &mut buf);
        let (hi_state, _) = self.march(cfg.a_hi, &mut buf);
        if lo_state != March::Undershoot || hi_state != March::Overshoot {
            return Err(Error::Bracket {
                lo: cfg.a_lo,
                hi: cfg.a_hi,
                detail: format!("endpoint trajectories are {lo_state:?} and {hi_state:?}"),
            });
        }
        let (mut lo, mut hi) = (cfg.a_lo, cfg.a_hi);
        let mut best = (0usize, lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (state, stop) = self.march(mid, &mut buf);
            if stop > best.0 {
                best = (stop, mid);
            }
            match state {
                March::Overshoot => hi = mid,
                March::Undershoot => lo = mid,
                March::Reached => return Ok(buf),
            }
        }
        let (_, stop) = self.march(best.1, &mut buf);
        self.patch_tail(&mut buf, stop);
        Ok(buf)
    }

    /// Replaces the unreliable end of a marched trajectory by `c e^{−√ω r}/√r`.
    fn patch_tail(&self, phi: &mut [f64], stop: usize) {
        let n = phi.len();
        if stop >= n {
            return;
        }
        let r = self.grid.nodes();
        let floor = phi[stop] * 1e3;
        let cut = phi[..=stop].iter().position(|&v| v < floor).unwrap_or(stop).clamp(1, stop.max(1));
        let (rc, pc) = (r[cut - 1], phi[cut - 1]);
        let k = self.omega.sqrt();
        for j in cut..n {
            phi[j] = pc * (rc / r[j]).sqrt() * (-k * (r[j] - rc)).exp();
        }
    }

    /// Residual and its worst componentwise relative size.
    fn residual(&self, phi: &[f64]) -> (Vec<f64>, f64) {
        let kphi = self.grid.stiffness_apply(phi);
        let (kd, ko) = self.grid.stiffness();
        let w = self.grid.weights();
        let n = phi.len();
        let mut res = Vec::with_capacity(n);
        let mut rel = 0.0f64;
        for j in 0..n {
            let fj = self.f(phi[j]);
            let r = kphi[j] / w[j] + self.omega * phi[j] - fj;
            let mut k = kd[j].abs() * phi[j].abs();
            if j > 0 {
                k += ko[j - 1].abs() * phi[j - 1].abs();
            }
            if j + 1 < n {
                k += ko[j].abs() * phi[j + 1].abs();
            }
            let scale = k / w[j] + self.omega * phi[j].abs() + fj.abs();
            if scale > 0.0 {
                rel = rel.max(r.abs() / scale);
            } else if r != 0.0 {
                rel = f64::INFINITY;
            }
            res.push(r);
        }
        (res, rel)
    }

    fn newton(&self, phi: &mut Vec<f64>, cfg: &SolverConfig) -> Result<(usize, f64)> {
        let w = self.grid.weights();
        let (kd, ko) = self.grid.stiffness();
        let (mut res, mut rel) = self.residual(phi);
        let mut it = 0;
        while it < cfg.max_newton {
            if rel <= cfg.tol {
                return Ok((it, rel));
            }
            it += 1;
            let diag: Vec<f64> = (0..phi.len())
                .map(|j| {
                    let z = phi[j] * phi[j];
                    kd[j] + w[j] * (self.omega - self.kappa * vplus_raw(z, self.mu))
                })
                .collect();
            let jac = SymTridiag::new(diag, ko.clone())?;
            let rhs: Vec<f64> = res.iter().zip(w).map(|(r, w)| r * w).collect();
            let step = jac.shifted_lu(0.0).solve(&rhs);
            let mut t = 1.0;
            let mut accepted = false;
            let mut trial = phi.clone();
            for _ in 0..40 {
                for j in 0..phi.len() {
                    trial[j] = phi[j] - t * step[j];
                }
                let (r2, rel2) = self.residual(&trial);
                if rel2 < rel || rel2 <= cfg.tol {
                    *phi = trial.clone();
                    res = r2;
                    rel = rel2;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let size = step.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !accepted || size <= 8.0 * f64::EPSILON * phi[0].abs() {
                // Roundoff floor: no further decrease is representable.
                return if rel <= cfg.tol.max(1e-10) {
                    Ok((it, rel))
                } else {
                    Err(Error::NotConverged { iterations: it, residual: rel })
                };
            }
        }
        if rel <= cfg.tol {
            Ok((it, rel))
        } else {
            Err(Error::NotConverged { iterations: it, residual: rel })
        }
    }

    fn solve(&self, cfg: &SolverConfig) -> Result<(Vec<f64>, usize, f64)> {
        let mut phi = self.shoot(cfg)?;
        let (it, rel) = self.newton(&mut phi, cfg)?;
        check_bell_shape(&phi)?;
        Ok((phi, it, rel))
    }
}

fn check_bell_shape(phi: &[f64]) -> Result<()> {
    if let Some(j) = phi.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::GroundState(format!("profile is not positive at node {j}")));
    }
    if let Some(j) = phi.windows(2).position(|p| !(p[1] < p[0])) {
        return Err(Error::GroundState(format!("profile is not decreasing at node {j}")));
    }
    Ok(())
}

fn validate(grid: &RadialGrid, p: &ModelParams, cfg: &SolverConfig) -> Result<()> {
    if grid.r_max() * p.omega.sqrt() < 20.0 {
        return Err(Error::param(format!(
            "r_max·√ω = {:.3} is below 20; the tail is not resolved",
            grid.r_max() * p.omega.sqrt()
        )));
    }
    if !(cfg.a_lo > 0.0 && cfg.a_lo < cfg.a_hi && cfg.a_hi <= model::U_MAX) {
        return Err(Error::param(format!("bad amplitude bracket [{}, {}]", cfg.a_lo, cfg.a_hi)));
    }
    if !(cfg.tol > 0.0) || cfg.max_newton == 0 {
        return Err(Error::param("tolerance and iteration budget must be positive"));
    }
    Ok(())
}

/// Value at the origin from the two innermost (even) samples.
fn origin_value(grid: &RadialGrid, phi: &[f64]) -> f64 {
    let (r0, r1) = (grid.nodes()[0], grid.nodes()[1]);
    (r1 * r1 * phi[0] - r0 * r0 * phi[1]) / (r1 * r1 - r0 * r0)
}

/// Solves `−Δφ + ωφ = κ f(φ)`; `κ = 1` is the physical problem.
#[cfg(test)]
pub(crate) fn solve_scaled(
    p: &ModelParams,
    grid: &RadialGrid,
    cfg: &SolverConfig,
    kappa: f64,
) -> Result<Vec<f64>> {
    let prob = Problem { grid, omega: p.omega, mu: p.muf(), kappa };
    prob.solve(cfg).map(|(phi, _, _)| phi)
}

pub fn shoot_profile(p: &ModelParams, grid: Arc<RadialGrid>, cfg: &SolverConfig) -> Result<ProfileSolution> {
    validate(&grid, p, cfg)?;
    let prob = Problem { grid: &grid, omega: p.omega, mu: p.muf(), kappa: 1.0 };
    let (phi, iterations, rel) = prob.solve(cfg)?;
    let amplitude = origin_value(&grid, &phi);
    let field = RadialField::new(grid, phi)?;
    let report = model::functionals(field.values(), field.grid(), p, None)?;
    let (r42, r45) = pohozaev_residuals(field.values(), field.grid(), p)?;
    let decay = fit_decay_values(field.grid(), field.values()).ok();
    Ok(ProfileSolution {
        params: *p,
        amplitude,
        grad_norm_sq: report.grad_norm_sq,
        mass: report.mass,
        action: report.action,
        pohozaev_42_residual: r42,
        pohozaev_45_residual: r45,
        decay_rate_fit: decay,
        newton_iterations: iterations,
        relative_residual: rel,
        field,
    })
}

/// Solves on the default stretched grid for `p.omega`.
pub fn solve_default(p: &ModelParams, n: usize) -> Result<ProfileSolution> {
    let grid = RadialGrid::for_frequency(p.omega, n)?;
    shoot_profile(p, Arc::new(grid), &SolverConfig::default())
}

/// Pointwise residual `−Δφ + ωφ − f(φ)`.
pub fn residual_vector(values: &[f64], p: &ModelParams, grid: &RadialGrid) -> Result<Vec<f64>> {
    grid.check_len(values.len())?;
    model::check_amplitudes(values)?;
    let lap = grid.radial_laplacian_apply(values, 0)?;
    let mu = p.muf();
    Ok(values
        .iter()
        .zip(lap)
        .map(|(&u, l)| l + p.omega * u - g_raw(u * u, mu) * u)
        .collect())
}

/// Max-norm residual of the profile equation.
pub fn residual_eq20(values: &[f64], p: &ModelParams, grid: &RadialGrid) -> Result<f64> {
    Ok(residual_vector(values, p, grid)?.iter().fold(0.0, |m, x| m.max(x.abs())))
}

/// Relative residuals of `(ω/2)‖φ‖² = ∫F(φ)` and `‖∇φ‖² + ω‖φ‖² = ∫f(φ)φ`.
pub fn pohozaev_residuals(values: &[f64], grid: &RadialGrid, p: &ModelParams) -> Result<(f64, f64)> {
    grid.check_len(values.len())?;
    model::check_amplitudes(values)?;
    let mu = p.muf();
    let (mut mass, mut int_f, mut int_fu) = (0.0, 0.0, 0.0);
    for (&u, &w) in values.iter().zip(grid.weights()) {
        let z = u * u;
        mass += w * z;
        int_f += w * 0.5 * big_g_raw(z, mu);
        int_fu += w * g_raw(z, mu) * z;
    }
    let a = grid.grad_norm_sq(values)?;
    let r42 = (0.5 * p.omega * mass - int_f) / int_f;
    let r45 = (a + p.omega * mass - int_fu) / int_fu;
    Ok((r42, r45))
}

pub fn pohozaev_check(sol: &ProfileSolution) -> (f64, f64) {
    (sol.pohozaev_42_residual, sol.pohozaev_45_residual)
}

/// Decay rate from a least-squares fit of `log(φ√r)` on `[0.5, 0.9]·r_max`.
pub fn fit_decay_values(grid: &RadialGrid, values: &[f64]) -> Result<f64> {
    grid.check_len(values.len())?;
    let peak = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-15 * peak;
    let (lo, hi) = (0.5 * grid.r_max(), 0.9 * grid.r_max());
    let mut pts = Vec::new();
    for (&r, &v) in grid.nodes().iter().zip(values) {
        if r < lo || r > hi {
            continue;
        }
        if !(v > floor) {
            return Err(Error::DecayWindow(format!(
                "value {v:e} at r = {r:.4} is below the noise floor {floor:e}"
            )));
        }
        pts.push((r, (v * r.sqrt()).ln()));
    }
    if pts.len() < 8 {
        return Err(Error::DecayWindow(format!("only {} nodes in the fit window", pts.len())));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

pub fn fit_decay(sol: &ProfileSolution) -> Result<f64> {
    fit_decay_values(sol.grid(), sol.values())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub lambda: f64,
    pub field: RadialField<f64>,
    pub grad_norm_sq: f64,
    /// `‖∇Φ_λ‖² < 1`, the small-data threshold of the evolution.
    pub below_threshold: bool,
}

/// `Φ_λ(r) = λ Φ(λr)` sampled on the original grid.
pub fn rescale(sol: &ProfileSolution, lambda: f64) -> Result<Rescaled> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    let grid = sol.grid().clone();
    let values: Vec<f64> = if lambda == 1.0 {
        sol.values().to_vec()
    } else {
        grid.nodes()
            .iter()
            .map(|&r| lambda * grid.interpolate(sol.values(), Parity::Even, lambda * r))
            .collect()
    };
    let field = RadialField::new(grid, values)?;
    let a = field.grad_norm_sq();
    Ok(Rescaled { lambda, grad_norm_sq: a, below_threshold: a < 1.0, field })
}

#[derive(Serialize, Deserialize)]
struct GridJson {
    r_max: f64,
    n: usize,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    omega: f64,
    mu: u8,
    amplitude: f64,
    grad_norm_sq: f64,
    mass: f64,
    action: f64,
    pohozaev: [f64; 2],
    decay_rate: Option<f64>,
    newton_iterations: usize,
    relative_residual: f64,
    grid: GridJson,
    values: Vec<f64>,
}

impl ProfileSolution {
    pub fn to_json(&self) -> Result<String> {
        let g = self.grid();
        crate::io::to_json_string(&ProfileJson {
            omega: self.params.omega,
            mu: self.params.mu,
            amplitude: self.amplitude,
            grad_norm_sq: self.grad_norm_sq,
            mass: self.mass,
            action: self.action,
            pohozaev: [self.pohozaev_42_residual, self.pohozaev_45_residual],
            decay_rate: self.decay_rate_fit,
            newton_iterations: self.newton_iterations,
            relative_residual: self.relative_residual,
            grid: GridJson { r_max: g.r_max(), n: g.n(), beta: g.beta() },
            values: self.values().to_vec(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: ProfileJson = serde_json::from_str(text)?;
        let params = ModelParams::new(j.omega, j.mu)?;
        let grid = Arc::new(RadialGrid::new(j.grid.r_max, j.grid.n, j.grid.beta)?);
        Ok(ProfileSolution {
            params,
            field: RadialField::new(grid, j.values)?,
            amplitude: j.amplitude,
            grad_norm_sq: j.grad_norm_sq,
            mass: j.mass,
            action: j.action,
            pohozaev_42_residual: j.pohozaev[0],
            pohozaev_45_residual: j.pohozaev[1],
            decay_rate_fit: j.decay_rate,
            newton_iterations: j.newton_iterations,
            relative_residual: j.relative_residual,
        })
    }
}

/// `∫ e^{4πφ²} χ(φ²)`; the negative of this is the closed form of `⟨L₊Ψ, Ψ⟩`.
pub(crate) fn chi_integral(values: &[f64], grid: &RadialGrid) -> f64 {
    values
        .iter()
        .zip(grid.weights())
        .map(|(&u, &w)| {
            let z = u * u;
            w * (4.0 * PI * z).exp() * model::chi(z)
        })
        .sum()
}
