//! Radial time integration of `i u_t + Δu + f(u) = 0`.
//!
//! Crank–Nicolson with the nonlinearity replaced by the difference quotient
//! `Q(a, b) = (G(a) − G(b)) / (a − b)` of `G` at the old and new densities.
//! Each step is a Cayley transform of a Hermitian (in the weighted inner
//! product) tridiagonal operator, so mass is conserved exactly for any
//! iterate of the potential, and energy is conserved up to the fixed-point
//! tolerance. The discrete ground state is a fixed point up to its phase.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::thomas;
use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::model::{self, big_g_raw, KSet, ModelParams};
use crate::profile::{rescale, ProfileSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: f64,
    pub delta_blowup: f64,
    /// Switches the nonlinearity off.
    pub linear: bool,
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive halvings allowed on one step.
    pub max_halvings: u32,
    /// Keep the field at every sample.
    pub keep_fields: bool,
}

impl EvolveConfig {
    pub fn default_for(omega: f64) -> Self {
        EvolveConfig {
            dt: 1e-3 / omega,
            t_end: 20.0 / omega,
            sample_every: 0.05 / omega,
            delta_blowup: 0.05,
            linear: false,
            tol: 1e-12,
            max_iter: 50,
            max_halvings: 6,
            keep_fields: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.dt.is_finite()
            && self.t_end >= 0.0
            && self.t_end.is_finite()
            && self.sample_every > 0.0
            && (0.0..1.0).contains(&self.delta_blowup)
            && self.tol > 0.0
            && self.max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid evolution settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub grad_norm_sq: f64,
    pub virial_moment: f64,
    pub virial_i: f64,
    #[serde(skip)]
    pub field: Option<RadialField<Complex64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    BlowupDetected,
    StepFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub states: Vec<EvolutionState>,
    pub outcome: Outcome,
    pub blowup_time_estimate: Option<f64>,
    pub virial_identity_residual: Option<f64>,
    pub final_field: RadialField<Complex64>,
    pub t_final: f64,
    pub steps: usize,
    /// Total step halvings; the step size is never increased again.
    pub halvings: u32,
    /// Largest relative mass change seen at any step.
    pub max_mass_drift: f64,
    /// Largest energy change seen at any step, relative to `max(|E₀|, ‖∇u₀‖²)`.
    pub max_energy_drift: f64,
}

struct Stepper<'a> {
    grid: &'a RadialGrid,
    kd: Vec<f64>,
    ko: Vec<f64>,
    mu: f64,
    linear: bool,
    tol: f64,
    max_iter: usize,
}

/// `(G(a) − G(b)) / (a − b)`, continuous across `a = b`.
#[inline]
fn quotient(a: f64, b: f64, mu: f64) -> f64 {
    let x = 4.0 * PI * (a - b);
    let ratio = if x == 0.0 { 1.0 } else { x.exp_m1() / x };
    (4.0 * PI * b).exp() * ratio - 1.0 - 2.0 * PI * mu * (a + b)
}

impl Stepper<'_> {
    fn step(&self, u: &[Complex64], h: f64) -> Option<Vec<Complex64>> {
        let n = u.len();
        let w = self.grid.weights();
        let half = Complex64::new(0.0, 0.5 * h);
        let old: Vec<f64> = u.iter().map(|z| z.norm_sqr()).collect();
        let off: Vec<Complex64> = self.ko.iter().map(|&k| half * k).collect();
        let mut next = u.to_vec();
        for _ in 0..self.max_iter {
            let mut diag = Vec::with_capacity(n);
            let mut rhs = Vec::with_capacity(n);
            for j in 0..n {
                let q = if self.linear { 0.0 } else { quotient(next[j].norm_sqr(), old[j], self.mu) };
                let h_j = half * (self.kd[j] - w[j] * q);
                diag.push(Complex64::new(w[j], 0.0) + h_j);
                let mut r = (Complex64::new(w[j], 0.0) - h_j) * u[j];
                if j > 0 {
                    r -= off[j - 1] * u[j - 1];
                }
                if j + 1 < n {
                    r -= off[j] * u[j + 1];
                }
                rhs.push(r);
            }
            let sol = thomas(&off, &diag, &off, &rhs);
            let mut change = 0.0f64;
            let mut size = 0.0f64;
            for (a, b) in sol.iter().zip(&next) {
                let m = a.norm();
                if !(m <= model::U_MAX) {
                    return None;
                }
                change = change.max((a - b).norm());
                size = size.max(m);
            }
            next = sol;
            if change <= self.tol * size.max(f64::MIN_POSITIVE) || self.linear {
                return Some(next);
            }
        }
        None
    }
}

fn energy(grid: &RadialGrid, u: &[Complex64], mu: f64, linear: bool, a: f64) -> f64 {
    if linear {
        return 0.5 * a;
    }
    let nl: f64 = u.iter().zip(grid.weights()).map(|(z, w)| w * big_g_raw(z.norm_sqr(), mu)).sum();
    0.5 * a - 0.5 * nl
}

fn snapshot(grid: &Arc<RadialGrid>, u: &[Complex64], p: &ModelParams, t: f64, cfg: &EvolveConfig) -> EvolutionState {
    let a = grid.grad_norm_sq(u).expect("length matches");
    let mass: f64 = u.iter().zip(grid.weights()).map(|(z, w)| w * z.norm_sqr()).sum();
    let virial_moment: f64 = u
        .iter()
        .zip(grid.weights().iter().zip(grid.nodes()))
        .map(|(z, (w, r))| w * r * r * z.norm_sqr())
        .sum();
    let virial_i = if cfg.linear {
        a
    } else {
        model::functionals(u, grid, p, None).map(|f| f.virial_i).unwrap_or(f64::NAN)
    };
    EvolutionState {
        t,
        mass,
        energy: energy(grid, u, p.muf(), cfg.linear, a),
        grad_norm_sq: a,
        virial_moment,
        virial_i,
        field: cfg.keep_fields.then(|| RadialField::new(grid.clone(), u.to_vec()).expect("finite field")),
    }
}

pub fn evolve(u0: &RadialField<Complex64>, p: &ModelParams, cfg: &EvolveConfig) -> Result<TrajectoryReport> {
    evolve_observed(u0, p, cfg, |_, _| true)
}

/// Like [`evolve`], calling `observer(t, u)` after every step; returning
/// `false` ends the run early.
pub fn evolve_observed(
    u0: &RadialField<Complex64>,
    p: &ModelParams,
    cfg: &EvolveConfig,
    mut observer: impl FnMut(f64, &[Complex64]) -> bool,
) -> Result<TrajectoryReport> {
    cfg.validate()?;
    let grid = u0.grid().clone();
    model::check_amplitudes(u0.values())?;
    let a0 = u0.grad_norm_sq();
    if !cfg.linear && !(a0 < 1.0) {
        return Err(Error::Threshold(a0));
    }
    let (kd, ko) = grid.stiffness();
    let stepper = Stepper { grid: &grid, kd, ko, mu: p.muf(), linear: cfg.linear, tol: cfg.tol, max_iter: cfg.max_iter };

    let mut u = u0.values().to_vec();
    let mut t = 0.0;
    let first = snapshot(&grid, &u, p, 0.0, cfg);
    let (m0, e0) = (first.mass, first.energy);
    let e_scale = e0.abs().max(a0).max(f64::MIN_POSITIVE);
    let mut states = vec![first];
    let mut h = cfg.dt;
    let mut halvings = 0;
    let mut failures = 0;
    let mut steps = 0;
    let mut next_sample = cfg.sample_every;
    let mut outcome = Outcome::Completed;
    let mut blowup_time = None;
    let (mut mass_drift, mut energy_drift) = (0.0f64, 0.0f64);
    let mut grads = vec![a0];
    let mut keep_going = observer(0.0, &u);

    while keep_going && t < cfg.t_end * (1.0 - 1e-14) {
        let target = next_sample.min(cfg.t_end);
        let hs = h.min(target - t);
        let Some(next) = stepper.step(&u, hs) else {
            halvings += 1;
            failures += 1;
            if failures > cfg.max_halvings || h < 1e-12 * cfg.dt {
                let n = grads.len();
                let rising = n >= 3 && grads[n - 1] > grads[n - 2] && grads[n - 2] > grads[n - 3];
                if rising {
                    outcome = Outcome::BlowupDetected;
                    blowup_time = Some(t);
                } else {
                    outcome = Outcome::StepFailure;
                }
                break;
            }
            h *= 0.5;
            continue;
        };
        let t_prev = t;
        t = if target - t <= h { target } else { t + hs };
        u = next;
        steps += 1;
        failures = 0;

        let a = grid.grad_norm_sq(&u)?;
        let mass: f64 = u.iter().zip(grid.weights()).map(|(z, w)| w * z.norm_sqr()).sum();
        mass_drift = mass_drift.max(((mass - m0) / m0.max(f64::MIN_POSITIVE)).abs());
        energy_drift = energy_drift.max((energy(&grid, &u, p.muf(), cfg.linear, a) - e0).abs() / e_scale);
        let a_prev = *grads.last().unwrap_or(&a0);
        grads.push(a);
        keep_going = observer(t, &u);

        if !cfg.linear && a >= 1.0 - cfg.delta_blowup {
            let level = 1.0 - cfg.delta_blowup;
            let frac = if a > a_prev { (level - a_prev) / (a - a_prev) } else { 1.0 };
            blowup_time = Some(t_prev + frac.clamp(0.0, 1.0) * (t - t_prev));
            outcome = Outcome::BlowupDetected;
            states.push(snapshot(&grid, &u, p, t, cfg));
            break;
        }
        if t >= target * (1.0 - 1e-14) && target == next_sample {
            states.push(snapshot(&grid, &u, p, t, cfg));
            next_sample += cfg.sample_every;
        }
    }
    if states.last().map_or(true, |s| s.t < t) {
        states.push(snapshot(&grid, &u, p, t, cfg));
    }
    let mut report = TrajectoryReport {
        states,
        outcome,
        blowup_time_estimate: blowup_time,
        virial_identity_residual: None,
        final_field: RadialField::new(grid, u)?,
        t_final: t,
        steps,
        halvings,
        max_mass_drift: mass_drift,
        max_energy_drift: energy_drift,
    };
    report.virial_identity_residual = virial_check(&report).ok();
    Ok(report)
}

/// Worst mismatch between the second difference of `‖xu‖²` and `8 I(u)`,
/// relative to `8 max ‖∇u‖²`, over interior samples.
///
/// Runs that end in blow-up drop the last tenth of their duration.
pub fn virial_check(report: &TrajectoryReport) -> Result<f64> {
    let s = &report.states;
    if s.len() < 5 {
        return Err(Error::Sampling { needed: 5, got: s.len() });
    }
    let t0 = s[0].t;
    let t_last = s[s.len() - 1].t;
    let cutoff = if report.outcome == Outcome::BlowupDetected { t0 + 0.9 * (t_last - t0) } else { f64::INFINITY };
    let used: Vec<&EvolutionState> = s.iter().filter(|x| x.t <= cutoff).collect();
    if used.len() < 5 {
        return Err(Error::Sampling { needed: 5, got: used.len() });
    }
    let scale = 8.0 * used.iter().map(|x| x.grad_norm_sq).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for k in 1..used.len() - 1 {
        let (a, b, c) = (used[k - 1], used[k], used[k + 1]);
        let d2 = 2.0 * ((c.virial_moment - b.virial_moment) / (c.t - b.t) - (b.virial_moment - a.virial_moment) / (b.t - a.t))
            / (c.t - a.t);
        worst = worst.max((d2 - 8.0 * b.virial_i).abs() / scale);
    }
    Ok(worst)
}

impl TrajectoryReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        use crate::io::fmt_f64;
        writeln!(out, "t,mass,energy,grad_norm_sq,virial_moment,virial_i")?;
        for s in &self.states {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(s.t),
                fmt_f64(s.mass),
                fmt_f64(s.energy),
                fmt_f64(s.grad_norm_sq),
                fmt_f64(s.virial_moment),
                fmt_f64(s.virial_i)
            )?;
        }
        Ok(())
    }
}

/// Deviation of a soliton run from `e^{iωt}φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonRun {
    pub report: TrajectoryReport,
    /// `max_t ‖|u(t)| − φ‖_∞`.
    pub max_deviation: f64,
    /// Phase rotation rate at the innermost node.
    pub phase_rate: f64,
    /// First time the deviation exceeded `STATIONARITY_TOL`.
    pub departure: Option<f64>,
}

pub const STATIONARITY_TOL: f64 = 1e-5;

pub fn soliton_run(sol: &ProfileSolution, cfg: &EvolveConfig) -> Result<SolitonRun> {
    let phi = sol.values();
    let u0 = RadialField::new(sol.grid().clone(), phi.iter().map(|&p| Complex64::new(p, 0.0)).collect())?;
    let mut worst = 0.0f64;
    let mut phase = 0.0f64;
    let mut last = (0.0, 0.0f64);
    let mut departure = None;
    let report = evolve_observed(&u0, &sol.params, cfg, |t, u| {
        for (z, p) in u.iter().zip(phi) {
            worst = worst.max((z.norm() - p).abs());
        }
        if departure.is_none() && worst > STATIONARITY_TOL {
            departure = Some(t);
        }
        let arg = u[0].arg();
        let mut d = arg - last.1;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        phase += d;
        last = (t, arg);
        true
    })?;
    let phase_rate = if report.t_final > 0.0 { phase / report.t_final } else { 0.0 };
    Ok(SolitonRun { report, max_deviation: worst, phase_rate, departure })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupRow {
    pub lambda: f64,
    pub grad_norm_sq: f64,
    pub energy: f64,
    pub virial_i: f64,
    pub action: f64,
    pub reference_action: f64,
    pub energy_positive: bool,
    pub virial_negative: bool,
    pub action_below: bool,
    pub below_threshold: bool,
    pub finite_variance: bool,
    pub conditions_ok: bool,
    pub kset: KSet,
    pub outcome: Outcome,
    pub blowup_time_estimate: Option<f64>,
    pub t_final: f64,
    pub final_grad_norm_sq: f64,
}

/// Checks the rescaled data `λΦ(λx)` and evolves each row in parallel.
pub fn blowup_experiment(sol: &ProfileSolution, lambdas: &[f64], cfg: &EvolveConfig) -> Result<Vec<BlowupRow>> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let data = rescale(sol, lambda)?;
            let grid = sol.grid();
            let f = model::functionals(data.field.values(), grid, &sol.params, Some(sol.action))?;
            let variance: f64 = data
                .field
                .values()
                .iter()
                .zip(grid.weights().iter().zip(grid.nodes()))
                .map(|(v, (w, r))| w * r * r * v * v)
                .sum();
            let energy_positive = f.energy > 0.0;
            let virial_negative = f.virial_i < 0.0;
            let action_below = f.action < sol.action;
            let finite_variance = variance.is_finite();
            let conditions_ok =
                energy_positive && virial_negative && action_below && data.below_threshold && finite_variance;
            let u0 = RadialField::new(
                grid.clone(),
                data.field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            )?;
            let (outcome, time, t_final, final_grad) = match evolve(&u0, &sol.params, cfg) {
                Ok(r) => (r.outcome, r.blowup_time_estimate, r.t_final, r.final_field.grad_norm_sq()),
                Err(Error::Threshold(a)) => (Outcome::StepFailure, None, 0.0, a),
                Err(e) => return Err(e),
            };
            Ok(BlowupRow {
                lambda,
                grad_norm_sq: f.grad_norm_sq,
                energy: f.energy,
                virial_i: f.virial_i,
                action: f.action,
                reference_action: sol.action,
                energy_positive,
                virial_negative,
                action_below,
                below_threshold: data.below_threshold,
                finite_variance,
                conditions_ok,
                kset: f.kset,
                outcome,
                blowup_time_estimate: time,
                t_final,
                final_grad_norm_sq: final_grad,
            })
        })
        .collect()
}

/// Time scales tied to the growth rate `rate` of the unstable mode.
pub fn mode_scaled_config(omega: f64, rate: f64, horizon_units: f64) -> EvolveConfig {
    EvolveConfig {
        dt: 0.005 / rate,
        t_end: horizon_units / rate,
        sample_every: 0.05 / rate,
        ..EvolveConfig::default_for(omega)
    }
}
