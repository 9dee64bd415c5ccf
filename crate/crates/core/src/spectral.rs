//! Sector spectra, Morse indices and the instability witnesses.

use serde::{Deserialize, Serialize};

use crate::banded::SymTridiag;
use crate::error::{Error, Result};
use crate::linop::{assemble, SectorOperator, Which};
use crate::profile::{chi_integral, ProfileSolution};

/// An eigenvalue counts as a symmetry zero below `KERNEL_TOL · ω` ...
pub const KERNEL_TOL: f64 = 1e-5;
/// ... provided its eigenfield aligns this well with the symmetry direction.
pub const KERNEL_ALIGNMENT: f64 = 0.999;
pub const DEFAULT_L_MAX: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Physical eigenfield, unit norm in the weighted inner product.
    pub vector: Vec<f64>,
    /// `‖Av − λv‖ / ‖|A||v| + |λ||v|‖` in the weighted norm.
    pub residual: f64,
}

fn to_physical(op: &SectorOperator, y: &[f64]) -> Vec<f64> {
    let g = op.grid();
    let mut v: Vec<f64> = y.iter().zip(g.weights()).map(|(a, w)| a / w.sqrt()).collect();
    let s = g.norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    if v[0] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn residual(op: &SectorOperator, lambda: f64, v: &[f64]) -> f64 {
    let av = op.apply(v).expect("length matches");
    let r: Vec<f64> = av.iter().zip(v).map(|(a, b)| a - lambda * b).collect();
    let scale: Vec<f64> = op.apply_abs(v).iter().zip(v).map(|(a, b)| a + lambda.abs() * b.abs()).collect();
    op.grid().norm(&r) / op.grid().norm(&scale)
}

/// Eigenpair refined from a bisection estimate.
fn refine(op: &SectorOperator, s: &SymTridiag, guess: f64, previous: &[Vec<f64>]) -> Result<EigenPair> {
    let n = s.n();
    let start: Vec<f64> = (0..n).map(|j| 1.0 + 0.5 * (j as f64 * 0.7).sin()).collect();
    let mut shift = guess;
    let mut best: Option<EigenPair> = None;
    for _ in 0..4 {
        let lu = s.shifted_lu(shift);
        let mut y = start.clone();
        let mut broke = false;
        for _ in 0..4 {
            y = lu.solve(&y);
            for p in previous {
                let t: f64 = y.iter().zip(p).map(|(a, b)| a * b).sum();
                y.iter_mut().zip(p).for_each(|(a, b)| *a -= t * b);
            }
            crate::banded::normalize(&mut y);
            if !y.iter().all(|x| x.is_finite()) {
                broke = true;
                break;
            }
        }
        if broke {
            shift += 1e-12 * (1.0 + shift.abs());
            continue;
        }
        let v = to_physical(op, &y);
        let value = op.rayleigh(&v);
        let res = residual(op, value, &v);
        let better = best.as_ref().map_or(true, |b| res < b.residual);
        if better {
            best = Some(EigenPair { value, vector: v, residual: res });
        }
        if res < 1e-13 {
            break;
        }
        shift = value;
    }
    let pair = best.expect("at least one sweep");
    if pair.residual < 1e-8 {
        Ok(pair)
    } else {
        Err(Error::IterationLimit { residual: pair.residual })
    }
}

fn symmetric_vector(op: &SectorOperator, v: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = v.iter().zip(op.grid().weights()).map(|(a, w)| a * w.sqrt()).collect();
    crate::banded::normalize(&mut y);
    y
}

/// The `k` lowest eigenpairs in ascending order.
pub fn lowest_eigs(op: &SectorOperator, k: usize) -> Result<Vec<EigenPair>> {
    if k == 0 {
        return Err(Error::param("need at least one eigenpair"));
    }
    let s = op.symmetric();
    let mut out = Vec::with_capacity(k);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k.min(s.n()) {
        let pair = refine(op, &s, s.eigenvalue_bisect(i), &basis)?;
        basis.push(symmetric_vector(op, &pair.vector));
        out.push(pair);
    }
    Ok(out)
}

/// `|⟨u, v⟩| / (‖u‖‖v‖)` in the weighted inner product.
pub fn alignment(op: &SectorOperator, u: &[f64], v: &[f64]) -> f64 {
    let g = op.grid();
    g.dot(u, v).abs() / (g.norm(u) * g.norm(v))
}

/// Symmetry direction expected in the kernel of a sector, if any.
fn kernel_direction(sol: &ProfileSolution, which: Which, l: u32) -> Option<Vec<f64>> {
    match (which, l) {
        (Which::Minus, 0) => Some(sol.values().to_vec()),
        (Which::Plus, 1) => Some(sol.derivative()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorCount {
    pub l: u32,
    pub negatives: usize,
    pub lowest: f64,
    /// Eigenvalues excused as symmetry zeros.
    pub kernel: usize,
}

/// Negative eigenvalues of one sector, excluding aligned symmetry zeros.
pub fn sector_count(sol: &ProfileSolution, which: Which, l: u32) -> Result<SectorCount> {
    let op = assemble(sol, which, l);
    let s = op.symmetric();
    let tau = KERNEL_TOL * sol.params.omega;
    let clear = s.count_below(-tau);
    let near = s.count_below(tau);
    let mut negatives = clear;
    let mut kernel = 0;
    let mut lowest = None;
    if near > clear {
        let pairs = lowest_eigs(&op, near)?;
        let dir = kernel_direction(sol, which, l);
        for p in &pairs[clear..] {
            let aligned = dir.as_ref().map_or(false, |d| alignment(&op, &p.vector, d) > KERNEL_ALIGNMENT);
            if p.value.abs() < tau && aligned {
                kernel += 1;
            } else if p.value < 0.0 {
                negatives += 1;
            }
        }
        lowest = Some(pairs[0].value);
    }
    let lowest = match lowest {
        Some(v) => v,
        None => lowest_eigs(&op, 1)?[0].value,
    };
    Ok(SectorCount { l, negatives, lowest, kernel })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseCount {
    pub which: Which,
    pub total: usize,
    pub sectors: Vec<SectorCount>,
}

/// Negative directions summed over sectors `0..=l_max`, two harmonics per `l ≥ 1`.
pub fn morse_detail(sol: &ProfileSolution, which: Which, l_max: u32) -> Result<MorseCount> {
    if l_max < 2 {
        return Err(Error::param(format!("l_max must be at least 2, got {l_max}")));
    }
    let mut sectors = Vec::new();
    let mut total = 0;
    for l in 0..=l_max {
        let c = sector_count(sol, which, l)?;
        total += c.negatives * if l == 0 { 1 } else { 2 };
        let clear = c.negatives == 0 && c.kernel == 0 && c.lowest > 0.0;
        sectors.push(c);
        if clear {
            return Ok(MorseCount { which, total, sectors });
        }
    }
    Err(Error::Inconclusive { l_max })
}

pub fn morse_index(sol: &ProfileSolution, which: Which, l_max: u32) -> Result<usize> {
    morse_detail(sol, which, l_max).map(|m| m.total)
}

/// Smallest-magnitude eigenvalue of `L₊` on the radial sector.
pub fn lplus_gap_l0(sol: &ProfileSolution) -> Result<f64> {
    let op = assemble(sol, Which::Plus, 0);
    let s = op.symmetric();
    let below = s.count_below(0.0);
    let mut best = f64::INFINITY;
    let pairs = lowest_eigs(&op, below + 1)?;
    for p in pairs.iter().skip(below.saturating_sub(1)) {
        if p.value.abs() < best.abs() {
            best = p.value;
        }
    }
    Ok(best)
}

/// `⟨L₊⁻¹φ, φ⟩` on the radial sector.
pub fn vk_slope(sol: &ProfileSolution) -> Result<f64> {
    let gap = lplus_gap_l0(sol)?;
    if gap.abs() <= 1e-6 * sol.params.omega {
        return Err(Error::Conditioning { smallest: gap });
    }
    let op = assemble(sol, Which::Plus, 0);
    let w = op.solve(sol.values(), None)?;
    Ok(sol.grid().dot(&w, sol.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiWitness {
    pub psi_form: f64,
    pub psi_orth_residual: f64,
    pub closed_form_value: f64,
    /// Smallest nodal value of `e^{4πφ²} χ(φ²)`.
    pub integrand_min: f64,
}

/// `Ψ = rφ′ + φ`.
pub fn psi_field(sol: &ProfileSolution) -> Vec<f64> {
    let d = sol.derivative();
    sol.grid().nodes().iter().zip(&d).zip(sol.values()).map(|((r, dp), p)| r * dp + p).collect()
}

pub fn psi_witness(sol: &ProfileSolution) -> PsiWitness {
    let psi = psi_field(sol);
    let op = assemble(sol, Which::Plus, 0);
    let g = sol.grid();
    let integrand_min = sol
        .values()
        .iter()
        .map(|&u| {
            let z = u * u;
            (4.0 * std::f64::consts::PI * z).exp() * crate::model::chi(z)
        })
        .fold(f64::INFINITY, f64::min);
    PsiWitness {
        psi_form: op.bilinear(&psi, &psi),
        psi_orth_residual: g.dot(&psi, sol.values()).abs() / (g.norm(&psi) * g.norm(sol.values())),
        closed_form_value: -chi_integral(sol.values(), g),
        integrand_min,
    }
}

/// `‖L₊(rφ′) + 2Δφ‖ / ‖Δφ‖`.
pub fn scaling_identity_residual(sol: &ProfileSolution) -> f64 {
    let g = sol.grid();
    let d = sol.derivative();
    let x: Vec<f64> = g.nodes().iter().zip(&d).map(|(r, v)| r * v).collect();
    let lx = assemble(sol, Which::Plus, 0).apply(&x).expect("length matches");
    let minus_lap = g.radial_laplacian_apply(sol.values(), 0).expect("length matches");
    let diff: Vec<f64> = lx.iter().zip(&minus_lap).map(|(a, b)| a - 2.0 * b).collect();
    g.norm(&diff) / g.norm(&minus_lap)
}

/// `⟨L₊φ, φ⟩` and its closed form `−8π∫(e^{4πφ²} − μ)φ⁴`.
pub fn lplus_profile_form(sol: &ProfileSolution) -> (f64, f64) {
    let op = assemble(sol, Which::Plus, 0);
    let form = op.bilinear(sol.values(), sol.values());
    let mu = sol.params.muf();
    let pi = std::f64::consts::PI;
    let closed: f64 = sol
        .values()
        .iter()
        .zip(sol.grid().weights())
        .map(|(&u, &w)| {
            let z = u * u;
            -8.0 * pi * w * ((4.0 * pi * z).exp() - mu) * z * z
        })
        .sum();
    (form, closed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub omega: f64,
    pub mu: u8,
    pub morse_plus: usize,
    pub morse_minus: usize,
    pub lminus_ground_eig: f64,
    pub lminus_ground_alignment: f64,
    pub lplus_kernel_eig_l1: f64,
    pub lplus_kernel_alignment: f64,
    pub lplus_lowest_eig_l0: f64,
    pub lplus_gap_l0: f64,
    pub vk_slope: f64,
    pub psi_form: f64,
    pub psi_closed_form: f64,
    pub psi_orth_residual: f64,
    pub scaling_identity_residual: f64,
}

pub fn spectral_report(sol: &ProfileSolution, l_max: u32) -> Result<SpectralReport> {
    let (plus, minus) = rayon::join(
        || morse_index(sol, Which::Plus, l_max),
        || morse_index(sol, Which::Minus, l_max),
    );
    let lm = assemble(sol, Which::Minus, 0);
    let lm0 = lowest_eigs(&lm, 1)?.remove(0);
    let lp1 = assemble(sol, Which::Plus, 1);
    let kp1 = lowest_eigs(&lp1, 1)?.remove(0);
    let lp0 = lowest_eigs(&assemble(sol, Which::Plus, 0), 1)?.remove(0);
    let psi = psi_witness(sol);
    Ok(SpectralReport {
        omega: sol.params.omega,
        mu: sol.params.mu,
        morse_plus: plus?,
        morse_minus: minus?,
        lminus_ground_alignment: alignment(&lm, &lm0.vector, sol.values()),
        lminus_ground_eig: lm0.value,
        lplus_kernel_alignment: alignment(&lp1, &kp1.vector, &sol.derivative()),
        lplus_kernel_eig_l1: kp1.value,
        lplus_lowest_eig_l0: lp0.value,
        lplus_gap_l0: lplus_gap_l0(sol)?,
        vk_slope: vk_slope(sol)?,
        psi_form: psi.psi_form,
        psi_closed_form: psi.closed_form_value,
        psi_orth_residual: psi.psi_orth_residual,
        scaling_identity_residual: scaling_identity_residual(sol),
    })
}

impl SpectralReport {
    pub fn to_json(&self) -> Result<String> {
        crate::io::to_json_string(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub n_l: usize,
    pub n_d: usize,
    /// `n(L) − n(D) = k_r + 2k_c + 2k_0`.
    pub index: usize,
    /// Real growing modes when the count pins them down.
    pub k_r: Option<usize>,
}

impl Verdict {
    pub fn predicts_instability(&self) -> bool {
        self.index % 2 == 1
    }
}

/// Instability index `n(L) − n(D)` with `n(D)` from the sign of the slope.
pub fn krein_count(report: &SpectralReport) -> Result<Verdict> {
    if !report.vk_slope.is_finite() || report.vk_slope == 0.0 {
        return Err(Error::Verdict(format!("slope {} has no sign", report.vk_slope)));
    }
    let n_l = report.morse_plus + report.morse_minus;
    let n_d = usize::from(report.vk_slope < 0.0);
    if n_d > n_l {
        return Err(Error::Verdict(format!("n(D) = {n_d} exceeds n(L) = {n_l}")));
    }
    let index = n_l - n_d;
    let k_r = if index <= 1 { Some(index) } else { None };
    Ok(Verdict { n_l, n_d, index, k_r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;
    use crate::linop::SectorOperator;
    use crate::model::ModelParams;
    use crate::profile::solve_default;
    use std::sync::{Arc, OnceLock};

    fn profile() -> &'static ProfileSolution {
        static P: OnceLock<ProfileSolution> = OnceLock::new();
        P.get_or_init(|| solve_default(&ModelParams::new(1.0, 0).unwrap(), 2048).unwrap())
    }

    fn report(plus: usize, minus: usize, slope: f64) -> SpectralReport {
        SpectralReport {
            omega: 1.0,
            mu: 0,
            morse_plus: plus,
            morse_minus: minus,
            lminus_ground_eig: 0.0,
            lminus_ground_alignment: 1.0,
            lplus_kernel_eig_l1: 0.0,
            lplus_kernel_alignment: 1.0,
            lplus_lowest_eig_l0: -1.0,
            lplus_gap_l0: 1.0,
            vk_slope: slope,
            psi_form: -1.0,
            psi_closed_form: -1.0,
            psi_orth_residual: 0.0,
            scaling_identity_residual: 0.0,
        }
    }

    #[test]
    fn krein_bookkeeping() {
        assert_eq!(krein_count(&report(1, 0, 0.1)).unwrap().k_r, Some(1));
        let stable = krein_count(&report(1, 0, -0.1)).unwrap();
        assert_eq!(stable.k_r, Some(0));
        assert!(!stable.predicts_instability());
        assert_eq!(krein_count(&report(0, 0, 0.1)).unwrap().k_r, Some(0));
        assert!(matches!(krein_count(&report(0, 0, -0.1)), Err(Error::Verdict(_))));
        assert!(matches!(krein_count(&report(1, 0, f64::NAN)), Err(Error::Verdict(_))));
        assert_eq!(krein_count(&report(3, 0, 0.1)).unwrap().k_r, None);
    }

    #[test]
    fn phase_zero_mode() {
        let s = profile();
        let op = assemble(s, Which::Minus, 0);
        let pairs = lowest_eigs(&op, 2).unwrap();
        assert!(pairs[0].value.abs() < 1e-5);
        assert!(alignment(&op, &pairs[0].vector, s.values()) > 0.9999);
        assert!(pairs[1].value > 0.0);
        for p in &pairs {
            assert!(p.residual < 1e-8);
        }
    }

    #[test]
    fn one_negative_direction_radially() {
        let s = profile();
        let pairs = lowest_eigs(&assemble(s, Which::Plus, 0), 3).unwrap();
        assert!(pairs[0].value < 0.0 && pairs[1].value > 0.0);
        assert!(pairs.windows(2).all(|w| w[0].value < w[1].value));
    }

    #[test]
    fn free_operator_spectrum() {
        let g = Arc::new(RadialGrid::for_frequency(1.0, 1024).unwrap());
        let p = ModelParams::new(1.0, 0).unwrap();
        let op = SectorOperator::free(g, p, Which::Plus, 0);
        let pairs = lowest_eigs(&op, 2).unwrap();
        assert!(pairs[0].value >= 1.0);
    }

    #[test]
    fn morse_counts() {
        let s = profile();
        assert_eq!(morse_index(s, Which::Minus, DEFAULT_L_MAX).unwrap(), 0);
        assert_eq!(morse_index(s, Which::Plus, DEFAULT_L_MAX).unwrap(), 1);
        assert!(morse_index(s, Which::Plus, 1).is_err());
    }

    #[test]
    fn sectors_increase() {
        let s = profile();
        let low: Vec<f64> = (0..4).map(|l| lowest_eigs(&assemble(s, Which::Minus, l), 1).unwrap()[0].value).collect();
        assert!(low.windows(2).all(|w| w[0] < w[1]), "{low:?}");
    }

    #[test]
    fn slope_matches_spectral_expansion() {
        // Oracle: dense eigendecomposition of the symmetrized operator.
        let s = profile();
        let op = assemble(s, Which::Plus, 0);
        let sym = op.symmetric();
        let n = sym.n();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = sym.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = sym.off[i];
                m[(i + 1, i)] = sym.off[i];
            }
        }
        let eig = nalgebra::SymmetricEigen::new(m);
        let y: Vec<f64> = s.values().iter().zip(s.grid().weights()).map(|(p, w)| p * w.sqrt()).collect();
        let mut expansion = 0.0;
        for k in 0..n {
            let col = eig.eigenvectors.column(k);
            let c: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
            expansion += c * c / eig.eigenvalues[k];
        }
        let slope = vk_slope(s).unwrap();
        assert!(((slope - expansion) / expansion).abs() < 1e-4, "{slope} vs {expansion}");
    }

    #[test]
    fn slope_of_diagonal_operator() {
        let g = Arc::new(RadialGrid::for_frequency(1.0, 256).unwrap());
        let p = ModelParams::new(1.0, 0).unwrap();
        // With an eigenfunction as right-hand side the slope is ‖v‖²/λ.
        let op = SectorOperator::free(g.clone(), p, Which::Plus, 0);
        let pair = lowest_eigs(&op, 1).unwrap().remove(0);
        let w = op.solve(&pair.vector, None).unwrap();
        let slope = g.dot(&w, &pair.vector);
        assert!((slope - 1.0 / pair.value).abs() < 1e-9 / pair.value);
    }

    #[test]
    fn witness_consistent() {
        let s = profile();
        let w = psi_witness(s);
        assert!(w.psi_form < 0.0 && w.closed_form_value < 0.0);
        assert!(((w.psi_form - w.closed_form_value) / w.closed_form_value).abs() < 1e-3);
        assert!(w.psi_orth_residual < 1e-5);
        assert!(w.integrand_min >= 0.0);
    }

    #[test]
    fn closed_form_independent_of_mu() {
        // 4fφ − 8F − 2g′(φ²)φ⁴ per μ, compared with −e^{4πφ²}χ(φ²)·(4π)/(4π).
        for k in 1..=20 {
            let u = 0.05 * f64::from(k);
            let z = u * u;
            let vals: Vec<f64> = [0u8, 1]
                .iter()
                .map(|&mu| {
                    let p = ModelParams::new(1.0, mu).unwrap();
                    4.0 * crate::model::f_mu(u, &p).unwrap() * u
                        - 8.0 * crate::model::big_f_mu(u, &p).unwrap()
                        - 2.0 * crate::model::g_prime(z, &p).unwrap() * z * z
                })
                .collect();
            assert!((vals[0] - vals[1]).abs() <= 1e-12 * vals[0].abs().max(1e-12));
            let closed = -(4.0 * std::f64::consts::PI * z).exp() * crate::model::chi(z);
            assert!((vals[0] - closed).abs() <= 1e-10 * closed.abs().max(1e-12), "{u}");
        }
    }

    #[test]
    fn profile_form_closed() {
        let s = profile();
        let (form, closed) = lplus_profile_form(s);
        assert!(form < 0.0);
        assert!(((form - closed) / closed).abs() < 1e-5);
    }

    #[test]
    fn scaling_identity() {
        assert!(scaling_identity_residual(profile()) < 1e-4);
    }
}
