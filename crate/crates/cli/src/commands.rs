use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use expnls_core::dynamics::{blowup_experiment, evolve, virial_check, BlowupRow, EvolveConfig, Outcome};
use expnls_core::grid::{RadialField, RadialGrid, DEFAULT_BETA, DEFAULT_N};
use expnls_core::io::{fmt_f64, to_json_string};
use expnls_core::linop::{assemble, Which};
use expnls_core::profile::{rescale, shoot_profile, ProfileSolution, SolverConfig};
use expnls_core::spectral::{
    krein_count, spectral_report, vk_slope, SpectralReport, Verdict, DEFAULT_L_MAX, KERNEL_ALIGNMENT, KERNEL_TOL,
};
use expnls_core::stability::{default_fit, growing_mode, StabilityReport};
use expnls_core::verify::{self, BLOWUP_LAMBDAS};
use expnls_core::{Complex64, ModelParams};

use crate::config::Settings;
use crate::Failure;

pub const POHOZAEV_TOL: f64 = 1e-6;
pub const DECAY_TOL: f64 = 0.02;
pub const MODE_RESIDUAL_TOL: f64 = 1e-6;
pub const FIT_TOL: f64 = 0.10;
pub const BLOWUP_GRAD: f64 = 0.95;

fn params(s: &Settings) -> Result<ModelParams, Failure> {
    let omega = s.omega.ok_or_else(|| Failure::Usage("--omega is required".into()))?;
    Ok(ModelParams::new(omega, s.mu.unwrap_or(0))?)
}

fn grid(s: &Settings, omega: f64, n: usize) -> Result<Arc<RadialGrid>, Failure> {
    let g = match s.rmax {
        Some(r) => RadialGrid::new(r, n, DEFAULT_BETA)?,
        None => RadialGrid::for_frequency(omega, n)?,
    };
    Ok(Arc::new(g))
}

/// The profile named by `--profile`, or a fresh solve.
pub fn obtain_profile(s: &Settings) -> Result<ProfileSolution, Failure> {
    match &s.profile {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            let sol = ProfileSolution::from_json(&text)?;
            if s.omega.is_some_and(|w| w != sol.params.omega) || s.mu.is_some_and(|m| m != sol.params.mu) {
                return Err(Failure::Usage(format!(
                    "{} holds omega = {}, mu = {}, which conflicts with the flags",
                    path.display(),
                    sol.params.omega,
                    sol.params.mu
                )));
            }
            Ok(sol)
        }
        None => {
            let p = params(s)?;
            let g = grid(s, p.omega, s.n.unwrap_or(DEFAULT_N))?;
            Ok(shoot_profile(&p, g, &SolverConfig::default())?)
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    let mut f = create(dir, name)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(dir.join(name))
}

fn finish(problems: Vec<String>) -> Result<(), Failure> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Identity(problems))
    }
}

pub fn profile_problems(sol: &ProfileSolution) -> Vec<String> {
    let mut out = Vec::new();
    let (r42, r45) = (sol.pohozaev_42_residual, sol.pohozaev_45_residual);
    if !(r42.abs() < POHOZAEV_TOL && r45.abs() < POHOZAEV_TOL) {
        out.push(format!("Pohozaev residuals {r42:.2e}, {r45:.2e} exceed {POHOZAEV_TOL:e}"));
    }
    if !(sol.grad_norm_sq > 0.0 && sol.grad_norm_sq < 1.0) {
        out.push(format!("|grad phi|^2 = {} is outside (0, 1)", sol.grad_norm_sq));
    }
    if let Some(rate) = sol.decay_rate_fit {
        let gap = (rate / sol.params.omega.sqrt() - 1.0).abs();
        if gap > DECAY_TOL {
            out.push(format!("tail decay {rate:.6} is {:.2}% off sqrt(omega)", 100.0 * gap));
        }
    }
    out
}

pub fn profile(s: &Settings) -> Result<(), Failure> {
    let sol = obtain_profile(s)?;
    let dir = s.out_dir();
    let json = write_text(&dir, "profile.json", &sol.to_json()?)?;
    let mut csv = create(&dir, "profile.csv")?;
    sol.field.write_csv(&mut csv)?;
    csv.flush()?;
    println!("omega            {}", sol.params.omega);
    println!("mu               {}", sol.params.mu);
    println!("amplitude        {:.12}", sol.amplitude);
    println!("grad_norm_sq     {:.12}", sol.grad_norm_sq);
    println!("mass             {:.12}", sol.mass);
    println!("action           {:.12}", sol.action);
    println!("pohozaev         {:.2e} {:.2e}", sol.pohozaev_42_residual, sol.pohozaev_45_residual);
    match sol.decay_rate_fit {
        Some(d) => println!("decay_rate       {d:.6}"),
        None => println!("decay_rate       unavailable"),
    }
    println!("newton           {} iterations, residual {:.2e}", sol.newton_iterations, sol.relative_residual);
    println!("wrote            {}", json.display());
    finish(profile_problems(&sol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub report: SpectralReport,
    pub verdict: Verdict,
}

pub fn spectrum_problems(r: &SpectralReport) -> Vec<String> {
    let mut out = Vec::new();
    let tau = KERNEL_TOL * r.omega;
    if r.morse_minus != 0 {
        out.push(format!("n(L-) = {}, expected 0", r.morse_minus));
    }
    if r.morse_plus != 1 {
        out.push(format!("n(L+) = {}, expected 1", r.morse_plus));
    }
    if !(r.lminus_ground_eig.abs() < tau && r.lminus_ground_alignment > KERNEL_ALIGNMENT) {
        out.push(format!(
            "L- ground eigenvalue {:.2e} (alignment {:.6}) is not the phase zero",
            r.lminus_ground_eig, r.lminus_ground_alignment
        ));
    }
    if !(r.lplus_kernel_eig_l1.abs() < tau && r.lplus_kernel_alignment > KERNEL_ALIGNMENT) {
        out.push(format!(
            "L+ l=1 eigenvalue {:.2e} (alignment {:.6}) is not the translation zero",
            r.lplus_kernel_eig_l1, r.lplus_kernel_alignment
        ));
    }
    if !(r.psi_form < 0.0) {
        out.push(format!("<L+ Psi, Psi> = {} is not negative", r.psi_form));
    }
    if !(r.psi_orth_residual < 1e-6) {
        out.push(format!("<Psi, phi> residual {:.2e}", r.psi_orth_residual));
    }
    if !(r.scaling_identity_residual < 1e-4) {
        out.push(format!("scaling identity residual {:.2e}", r.scaling_identity_residual));
    }
    out
}

pub fn spectrum(s: &Settings) -> Result<(), Failure> {
    let sol = obtain_profile(s)?;
    let report = spectral_report(&sol, DEFAULT_L_MAX)?;
    let verdict = krein_count(&report)?;
    let dir = s.out_dir();
    let json = write_text(&dir, "spectrum.json", &to_json_string(&SpectrumJson { report: report.clone(), verdict })?)?;
    for (which, name) in [(Which::Plus, "lplus_potential.csv"), (Which::Minus, "lminus_potential.csv")] {
        let mut f = create(&dir, name)?;
        assemble(&sol, which, 0).write_potential_csv(&mut f)?;
        f.flush()?;
    }
    println!("n(L+)            {}", report.morse_plus);
    println!("n(L-)            {}", report.morse_minus);
    println!("L- ground        {:.3e}", report.lminus_ground_eig);
    println!("L+ l=1 ground    {:.3e}", report.lplus_kernel_eig_l1);
    println!("L+ l=0 lowest    {:.9}", report.lplus_lowest_eig_l0);
    println!("vk_slope         {:.9}", report.vk_slope);
    println!("psi_form         {:.9} (closed form {:.9})", report.psi_form, report.psi_closed_form);
    println!("index n(L)-n(D)  {} -> {}", verdict.index, if verdict.predicts_instability() { "unstable" } else { "undecided" });
    println!("wrote            {}", json.display());
    finish(spectrum_problems(&report))
}

pub fn unstable_mode(s: &Settings) -> Result<(), Failure> {
    let sol = obtain_profile(s)?;
    let mode = growing_mode(&sol)?;
    let fit = default_fit(&sol, &mode);
    let report = StabilityReport::new(&sol, &mode, fit.as_ref().ok().map(|f| f.lambda));
    let dir = s.out_dir();
    let json = write_text(&dir, "unstable_mode.json", &report.to_json()?)?;
    let mut csv = create(&dir, "unstable_mode.csv")?;
    writeln!(csv, "r,v1,v2")?;
    for ((r, a), b) in sol.grid().nodes().iter().zip(mode.v1.values()).zip(mode.v2.values()) {
        writeln!(csv, "{},{},{}", fmt_f64(*r), fmt_f64(*a), fmt_f64(*b))?;
    }
    csv.flush()?;
    println!("lambda           {:.12}", mode.lambda);
    println!("first-order      {:.12}", mode.lambda_first_order);
    println!("residual         {:.2e}", mode.residual);
    match &fit {
        Ok(f) => println!("dynamics fit     {:.9} ({:.3}%)", f.lambda, report.agreement_pct.unwrap_or(f64::NAN)),
        Err(e) => println!("dynamics fit     unavailable: {e}"),
    }
    println!("wrote            {}", json.display());
    let mut problems = Vec::new();
    if !(mode.lambda > 0.0 && mode.residual < MODE_RESIDUAL_TOL) {
        problems.push(format!("lambda {} with residual {:.2e}", mode.lambda, mode.residual));
    }
    if let Some(pct) = report.agreement_pct {
        if pct > 100.0 * FIT_TOL {
            problems.push(format!("dynamics fit differs by {pct:.2}%"));
        }
    }
    finish(problems)
}

fn evolve_config(s: &Settings, omega: f64) -> EvolveConfig {
    let base = EvolveConfig::default_for(omega);
    let dt = s.dt.unwrap_or(base.dt);
    EvolveConfig { dt, t_end: s.t_end.unwrap_or(base.t_end), sample_every: base.sample_every.max(dt), ..base }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveJson {
    pub omega: f64,
    pub mu: u8,
    pub lambda: f64,
    pub config: EvolveConfig,
    pub initial_grad_norm_sq: f64,
    pub outcome: Outcome,
    pub t_final: f64,
    pub steps: usize,
    pub halvings: u32,
    pub blowup_time_estimate: Option<f64>,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    pub virial_identity_residual: Option<f64>,
}

pub fn evolve_cmd(s: &Settings) -> Result<(), Failure> {
    let sol = obtain_profile(s)?;
    let lambda = s.lambdas.as_ref().map_or(1.0, |l| l[0]);
    let data = rescale(&sol, lambda)?;
    let cfg = evolve_config(s, sol.params.omega);
    let u0 = RadialField::new(
        sol.grid().clone(),
        data.field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    )?;
    let report = evolve(&u0, &sol.params, &cfg)?;
    let summary = EvolveJson {
        omega: sol.params.omega,
        mu: sol.params.mu,
        lambda,
        config: cfg,
        initial_grad_norm_sq: data.grad_norm_sq,
        outcome: report.outcome,
        t_final: report.t_final,
        steps: report.steps,
        halvings: report.halvings,
        blowup_time_estimate: report.blowup_time_estimate,
        max_mass_drift: report.max_mass_drift,
        max_energy_drift: report.max_energy_drift,
        virial_identity_residual: virial_check(&report).ok(),
    };
    let dir = s.out_dir();
    let json = write_text(&dir, "evolve.json", &to_json_string(&summary)?)?;
    write_text(&dir, "final_field.json", &report.final_field.to_json()?)?;
    let mut csv = create(&dir, "trajectory.csv")?;
    report.write_csv(&mut csv)?;
    csv.flush()?;
    println!("lambda           {lambda}");
    println!("outcome          {:?}", report.outcome);
    println!("t_final          {:.9}", report.t_final);
    if let Some(t) = report.blowup_time_estimate {
        println!("blow-up time     {t:.9}");
    }
    println!("steps            {} ({} halvings)", report.steps, report.halvings);
    println!("mass drift       {:.2e}", report.max_mass_drift);
    println!("energy drift     {:.2e}", report.max_energy_drift);
    if let Some(v) = summary.virial_identity_residual {
        println!("virial residual  {v:.2e}");
    }
    println!("wrote            {}", json.display());
    if report.outcome == Outcome::StepFailure {
        return Err(Failure::Message(format!("time stepping failed at t = {}", report.t_final)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupJson {
    pub omega: f64,
    pub mu: u8,
    pub config: EvolveConfig,
    pub rows: Vec<BlowupRow>,
}

/// Rows that contradict the expected picture: blow-up above 1, none at 1.
pub fn blowup_problems(rows: &[BlowupRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        if r.lambda > 1.0 {
            if !r.conditions_ok {
                out.push(format!("lambda {}: data fails the blow-up conditions", r.lambda));
            }
            if r.outcome != Outcome::BlowupDetected || r.final_grad_norm_sq < BLOWUP_GRAD {
                out.push(format!(
                    "lambda {}: {:?} with final |grad u|^2 = {:.4}",
                    r.lambda, r.outcome, r.final_grad_norm_sq
                ));
            }
        } else if r.lambda == 1.0 && r.outcome != Outcome::Completed {
            out.push(format!("lambda 1: control run ended {:?}", r.outcome));
        }
    }
    out
}

pub fn blowup(s: &Settings) -> Result<(), Failure> {
    let sol = obtain_profile(s)?;
    let lambdas = s.lambdas.clone().unwrap_or_else(|| BLOWUP_LAMBDAS.to_vec());
    let cfg = evolve_config(s, sol.params.omega);
    let rows = blowup_experiment(&sol, &lambdas, &cfg)?;
    let dir = s.out_dir();
    let doc = BlowupJson { omega: sol.params.omega, mu: sol.params.mu, config: cfg, rows: rows.clone() };
    let json = write_text(&dir, "blowup.json", &to_json_string(&doc)?)?;
    let mut csv = create(&dir, "blowup.csv")?;
    writeln!(
        csv,
        "lambda,grad_norm_sq,energy,virial_i,action,conditions_ok,kset,outcome,blowup_time,t_final,final_grad_norm_sq"
    )?;
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{:?},{:?},{},{},{}",
            fmt_f64(r.lambda),
            fmt_f64(r.grad_norm_sq),
            fmt_f64(r.energy),
            fmt_f64(r.virial_i),
            fmt_f64(r.action),
            r.conditions_ok,
            r.kset,
            r.outcome,
            r.blowup_time_estimate.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.t_final),
            fmt_f64(r.final_grad_norm_sq)
        )?;
    }
    csv.flush()?;
    println!("{:>8} {:>10} {:>10} {:>11} {:>6} {:>7} {:>15} {:>11} {:>8}", "lambda", "|grad|^2", "E", "I", "cond", "set", "outcome", "T*", "final");
    for r in &rows {
        println!(
            "{:>8.4} {:>10.6} {:>10.6} {:>11.4e} {:>6} {:>7} {:>15} {:>11} {:>8.4}",
            r.lambda,
            r.grad_norm_sq,
            r.energy,
            r.virial_i,
            if r.conditions_ok { "yes" } else { "no" },
            format!("{:?}", r.kset),
            format!("{:?}", r.outcome),
            r.blowup_time_estimate.map_or("-".to_string(), |t| format!("{t:.6}")),
            r.final_grad_norm_sq
        );
    }
    println!("wrote {}", json.display());
    finish(blowup_problems(&rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega: f64,
    pub mu: u8,
    pub amplitude: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    pub mass: Option<f64>,
    pub action: Option<f64>,
    pub pohozaev_42: Option<f64>,
    pub pohozaev_45: Option<f64>,
    pub decay_rate: Option<f64>,
    pub vk_slope: Option<f64>,
    pub lambda: Option<f64>,
    pub mode_residual: Option<f64>,
    pub problems: Vec<String>,
    pub error: Option<String>,
}

fn sweep_row(s: &Settings, omega: f64, mu: u8, n: usize) -> SweepRow {
    let mut row = SweepRow {
        omega,
        mu,
        amplitude: None,
        grad_norm_sq: None,
        mass: None,
        action: None,
        pohozaev_42: None,
        pohozaev_45: None,
        decay_rate: None,
        vk_slope: None,
        lambda: None,
        mode_residual: None,
        problems: Vec::new(),
        error: None,
    };
    let mut run = || -> expnls_core::Result<()> {
        let p = ModelParams::new(omega, mu)?;
        let g = match s.rmax {
            Some(r) => RadialGrid::new(r, n, DEFAULT_BETA)?,
            None => RadialGrid::for_frequency(omega, n)?,
        };
        let sol = shoot_profile(&p, Arc::new(g), &SolverConfig::default())?;
        row.amplitude = Some(sol.amplitude);
        row.grad_norm_sq = Some(sol.grad_norm_sq);
        row.mass = Some(sol.mass);
        row.action = Some(sol.action);
        row.pohozaev_42 = Some(sol.pohozaev_42_residual);
        row.pohozaev_45 = Some(sol.pohozaev_45_residual);
        row.decay_rate = sol.decay_rate_fit;
        row.problems = profile_problems(&sol);
        row.vk_slope = Some(vk_slope(&sol)?);
        let mode = growing_mode(&sol)?;
        row.lambda = Some(mode.lambda);
        row.mode_residual = Some(mode.residual);
        if !(mode.residual < MODE_RESIDUAL_TOL) {
            row.problems.push(format!("mode residual {:.2e}", mode.residual));
        }
        Ok(())
    };
    if let Err(e) = run() {
        row.error = Some(e.to_string());
    }
    row
}

pub fn sweep(s: &Settings, omegas: Option<Vec<f64>>, mus: Option<Vec<u8>>) -> Result<(), Failure> {
    let omegas = match omegas.or_else(|| s.omega.map(|w| vec![w])) {
        Some(w) => w,
        None => return Err(Failure::Usage("sweep needs --omegas or --omega".into())),
    };
    let mus = mus.or_else(|| s.mu.map(|m| vec![m])).unwrap_or_else(|| vec![0, 1]);
    for &w in &omegas {
        if !(w.is_finite() && w > 0.0) {
            return Err(Failure::Usage(format!("--omegas entries must be positive, got {w}")));
        }
    }
    if let Some(m) = mus.iter().find(|&&m| m > 1) {
        return Err(Failure::Usage(format!("--mus entries must be 0 or 1, got {m}")));
    }
    let n = s.n.unwrap_or(DEFAULT_N);
    let jobs: Vec<(f64, u8)> = omegas.iter().flat_map(|&w| mus.iter().map(move |&m| (w, m))).collect();
    let rows: Vec<SweepRow> = jobs.par_iter().map(|&(w, m)| sweep_row(s, w, m, n)).collect();

    let dir = s.out_dir();
    let json = write_text(&dir, "sweep.json", &to_json_string(&rows)?)?;
    let mut csv = create(&dir, "sweep.csv")?;
    writeln!(
        csv,
        "omega,mu,amplitude,grad_norm_sq,mass,action,pohozaev_42,pohozaev_45,decay_rate,vk_slope,lambda,mode_residual,error"
    )?;
    let cell = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.omega),
            r.mu,
            cell(r.amplitude),
            cell(r.grad_norm_sq),
            cell(r.mass),
            cell(r.action),
            cell(r.pohozaev_42),
            cell(r.pohozaev_45),
            cell(r.decay_rate),
            cell(r.vk_slope),
            cell(r.lambda),
            cell(r.mode_residual),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    csv.flush()?;
    let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
    println!("{:>8} {:>3} {:>10} {:>10} {:>10} {:>10}", "omega", "mu", "amplitude", "|grad|^2", "action", "lambda");
    for r in &rows {
        println!(
            "{:>8} {:>3} {:>10} {:>10} {:>10} {:>10}{}",
            r.omega,
            r.mu,
            show(r.amplitude),
            show(r.grad_norm_sq),
            show(r.action),
            show(r.lambda),
            r.error.as_ref().map_or(String::new(), |e| format!("  error: {e}"))
        );
    }
    println!("wrote {}", json.display());
    if let Some(r) = rows.iter().find(|r| r.error.is_some()) {
        return Err(Failure::Message(format!(
            "omega {} mu {}: {}",
            r.omega,
            r.mu,
            r.error.as_deref().unwrap_or_default()
        )));
    }
    finish(
        rows.iter()
            .flat_map(|r| r.problems.iter().map(move |p| format!("omega {} mu {}: {p}", r.omega, r.mu)))
            .collect(),
    )
}

pub fn verify_cmd(s: &Settings) -> Result<(), Failure> {
    let p = params(s)?;
    let n = s.n.unwrap_or(verify::ACCEPTANCE_N);
    let checks = verify::run_case(p.omega, p.mu, n)?;
    for c in &checks {
        println!("{c}");
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} criteria passed", checks.len());
    finish(
        checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("criterion {} ({}) failed", c.id, c.title))
            .collect(),
    )
}
