//! Linearized operators `L± = −Δ + ω − V±(φ)` on one angular sector.
//!
//! In physical variables the sector operator is `A u = K u / w + (l²/r² + q) u`
//! with `q = ω − V±`. It is self-adjoint in the weighted inner product, and
//! the similarity `S = W^{1/2} A W^{−1/2}` is an ordinary symmetric
//! tridiagonal matrix with off-diagonal `k_{i,i+1} / √(w_i w_{i+1})`. Spectral
//! work is done on `S`; quadratic forms are evaluated in flux form, which
//! avoids the cancellation in `K u / w` near the origin.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::{Band, SymTridiag};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::{g_raw, vplus_raw, ModelParams};
use crate::profile::ProfileSolution;

pub const GUARD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorOperator {
    pub which: Which,
    pub l: u32,
    pub params: ModelParams,
    grid: Arc<RadialGrid>,
    /// `ω − V±` at the nodes.
    potential: Vec<f64>,
    kd: Vec<f64>,
    ko: Vec<f64>,
}

/// Builds `L±` restricted to sector `l` around the computed profile.
pub fn assemble(sol: &ProfileSolution, which: Which, l: u32) -> SectorOperator {
    let mu = sol.params.muf();
    let omega = sol.params.omega;
    let potential = sol
        .values()
        .iter()
        .map(|&u| {
            let z = u * u;
            omega
                - match which {
                    Which::Minus => g_raw(z, mu),
                    Which::Plus => vplus_raw(z, mu),
                }
        })
        .collect();
    SectorOperator::with_potential(sol.grid().clone(), sol.params, which, l, potential)
        .expect("profile field matches its grid")
}

impl SectorOperator {
    /// Operator `−Δ_l + q` for an explicit diagonal `q`.
    pub fn with_potential(
        grid: Arc<RadialGrid>,
        params: ModelParams,
        which: Which,
        l: u32,
        potential: Vec<f64>,
    ) -> Result<Self> {
        grid.check_len(potential.len())?;
        if potential.iter().any(|q| !q.is_finite()) {
            return Err(Error::param("potential has non-finite entries"));
        }
        let (kd, ko) = grid.stiffness();
        Ok(SectorOperator { which, l, params, grid, potential, kd, ko })
    }

    /// `−Δ_l + ω`, the operator with the soliton switched off.
    pub fn free(grid: Arc<RadialGrid>, params: ModelParams, which: Which, l: u32) -> Self {
        let q = vec![params.omega; grid.n()];
        Self::with_potential(grid, params, which, l, q).expect("constant potential")
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.kd.len()
    }

    /// `ω − V±` at the nodes.
    pub fn potential_values(&self) -> &[f64] {
        &self.potential
    }

    /// Full diagonal term `l²/r² + ω − V±`.
    pub fn diagonal_potential(&self) -> Vec<f64> {
        let l2 = f64::from(self.l * self.l);
        self.grid
            .nodes()
            .iter()
            .zip(&self.potential)
            .map(|(r, q)| l2 / (r * r) + q)
            .collect()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_len(v.len())?;
        let mut out = self.grid.radial_laplacian_apply(v, self.l)?;
        for (o, (q, x)) in out.iter_mut().zip(self.potential.iter().zip(v)) {
            *o += q * x;
        }
        Ok(out)
    }

    /// `|A| |v|` entrywise, the scale of rounding errors in `apply`.
    pub fn apply_abs(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let w = self.grid.weights();
        let d = self.diagonal_potential();
        (0..n)
            .map(|j| {
                let mut k = self.kd[j].abs() * v[j].abs();
                if j > 0 {
                    k += self.ko[j - 1].abs() * v[j - 1].abs();
                }
                if j + 1 < n {
                    k += self.ko[j].abs() * v[j + 1].abs();
                }
                k / w[j] + d[j].abs() * v[j].abs()
            })
            .collect()
    }

    /// `⟨A u, v⟩` in the weighted inner product, evaluated in flux form.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n();
        let c = self.grid.flux();
        let w = self.grid.weights();
        let d = self.diagonal_potential();
        let mut s = 0.0;
        for f in 1..n {
            s += c[f] * (u[f] - u[f - 1]) * (v[f] - v[f - 1]);
        }
        s += 2.0 * c[n] * u[n - 1] * v[n - 1];
        for j in 0..n {
            s += w[j] * d[j] * u[j] * v[j];
        }
        s
    }

    pub fn rayleigh(&self, v: &[f64]) -> f64 {
        self.bilinear(v, v) / self.grid.dot(v, v)
    }

    /// The similar symmetric matrix `W^{1/2} A W^{−1/2}`.
    pub fn symmetric(&self) -> SymTridiag {
        let w = self.grid.weights();
        let d = self.diagonal_potential();
        let diag = (0..self.n()).map(|j| self.kd[j] / w[j] + d[j]).collect();
        let off = (0..self.n() - 1).map(|j| self.ko[j] / (w[j] * w[j + 1]).sqrt()).collect();
        SymTridiag { diag, off }
    }

    /// `W A`, symmetric in the plain sense.
    fn weighted(&self) -> SymTridiag {
        let w = self.grid.weights();
        let d = self.diagonal_potential();
        let diag = (0..self.n()).map(|j| self.kd[j] + w[j] * d[j]).collect();
        SymTridiag { diag, off: self.ko.clone() }
    }

    /// Eigenvalue of smallest magnitude, estimated by inverse iteration.
    pub fn smallest_magnitude_eig(&self) -> f64 {
        let lu = self.weighted().shifted_lu(0.0);
        let w = self.grid.weights();
        let mut x: Vec<f64> = self.grid.nodes().iter().map(|r| (-r).exp() + 0.1).collect();
        for _ in 0..12 {
            let wx: Vec<f64> = x.iter().zip(w).map(|(a, b)| a * b).collect();
            x = lu.solve(&wx);
            let s = self.grid.norm(&x);
            if !(s.is_finite() && s > 0.0) {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= s);
        }
        self.rayleigh(&x)
    }

    /// Solves `A x = rhs`.
    ///
    /// With a kernel guard `k` the right-hand side must be orthogonal to `k`;
    /// the solution is taken in the orthogonal complement of `k`. Without a
    /// guard a near-singular operator is rejected.
    pub fn solve(&self, rhs: &[f64], kernel_guard: Option<&[f64]>) -> Result<Vec<f64>> {
        self.grid.check_len(rhs.len())?;
        let w = self.grid.weights();
        match kernel_guard {
            None => {
                let smallest = self.smallest_magnitude_eig();
                if smallest.abs() < 1e-8 * self.params.omega {
                    return Err(Error::Conditioning { smallest });
                }
                let wb: Vec<f64> = rhs.iter().zip(w).map(|(a, b)| a * b).collect();
                Ok(self.weighted().shifted_lu(0.0).solve(&wb))
            }
            Some(k) => {
                self.grid.check_len(k.len())?;
                let kk = self.grid.dot(k, k);
                let overlap = self.grid.dot(rhs, k) / (self.grid.norm(rhs) * kk.sqrt()).max(f64::MIN_POSITIVE);
                if overlap.abs() > GUARD_TOL {
                    return Err(Error::NotOrthogonal { overlap });
                }
                let b = project_out(&self.grid, rhs, k);
                let p = k
                    .iter()
                    .enumerate()
                    .fold((0, 0.0f64), |best, (j, v)| if v.abs() > best.1 { (j, v.abs()) } else { best })
                    .0;
                let m = self.weighted();
                let n = self.n();
                let mut band = Band::zeros(n, 1, 1);
                let mut wb: Vec<f64> = b.iter().zip(w).map(|(a, c)| a * c).collect();
                for i in 0..n {
                    if i == p {
                        band.set(i, i, 1.0);
                        wb[i] = 0.0;
                        continue;
                    }
                    band.set(i, i, m.diag[i]);
                    if i > 0 {
                        band.set(i, i - 1, m.off[i - 1]);
                    }
                    if i + 1 < n {
                        band.set(i, i + 1, m.off[i]);
                    }
                }
                let x = band.factor().solve(&wb);
                Ok(project_out(&self.grid, &x, k))
            }
        }
    }

    /// Writes `(r, V)` with `V = ω − q` the subtracted potential.
    pub fn write_potential_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,V")?;
        for (r, q) in self.grid.nodes().iter().zip(&self.potential) {
            writeln!(
                out,
                "{},{}",
                crate::io::fmt_f64(*r),
                crate::io::fmt_f64(self.params.omega - q)
            )?;
        }
        Ok(())
    }
}

/// Removes the component along `k` in the weighted inner product.
pub fn project_out(grid: &RadialGrid, v: &[f64], k: &[f64]) -> Vec<f64> {
    let t = grid.dot(v, k) / grid.dot(k, k);
    v.iter().zip(k).map(|(a, b)| a - t * b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Parity;
    use crate::profile::solve_default;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn profile() -> &'static ProfileSolution {
        static P: OnceLock<ProfileSolution> = OnceLock::new();
        P.get_or_init(|| solve_default(&ModelParams::new(1.0, 0).unwrap(), 4096).unwrap())
    }

    fn wnorm(sol: &ProfileSolution, v: &[f64]) -> f64 {
        sol.grid().norm(v)
    }

    /// Euclidean norm of `W v`, the residual of the assembled system.
    fn sys_norm(g: &RadialGrid, v: &[f64]) -> f64 {
        v.iter().zip(g.weights()).map(|(a, w)| (a * w).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn phase_kernel() {
        let s = profile();
        let op = assemble(s, Which::Minus, 0);
        let r = op.apply(s.values()).unwrap();
        assert!(wnorm(s, &r) < 1e-6 * wnorm(s, s.values()));
    }

    #[test]
    fn translation_kernel() {
        let s = profile();
        let d = s.derivative();
        let r = assemble(s, Which::Plus, 1).apply(&d).unwrap();
        assert!(wnorm(s, &r) < 1e-4 * wnorm(s, &d), "{}", wnorm(s, &r) / wnorm(s, &d));
    }

    #[test]
    fn potentials_match_definitions() {
        let s = profile();
        let p = s.params;
        let plus = assemble(s, Which::Plus, 0);
        let minus = assemble(s, Which::Minus, 0);
        for (j, &u) in s.values().iter().enumerate().step_by(97) {
            let vp = crate::model::lplus_potential(u, &p).unwrap();
            let vm = crate::model::g_fun(u * u, &p).unwrap();
            assert!((plus.potential_values()[j] - (p.omega - vp)).abs() < 1e-12 * (1.0 + vp));
            assert!((minus.potential_values()[j] - (p.omega - vm)).abs() < 1e-12 * (1.0 + vm));
        }
    }

    #[test]
    fn apply_matches_direct_stencil() {
        let s = profile();
        let op = assemble(s, Which::Plus, 2);
        let g = s.grid();
        let v: Vec<f64> = g.nodes().iter().map(|r| r * r * (-r * r / 4.0).exp()).collect();
        let out = op.apply(&v).unwrap();
        let c = g.flux();
        let n = g.n();
        for j in (0..n).step_by(31) {
            let left = if j > 0 { v[j - 1] } else { -v[0] };
            let right = if j + 1 < n { v[j + 1] } else { -v[n - 1] };
            let k = c[j] * (v[j] - left) + c[j + 1] * (v[j] - right);
            let r = g.nodes()[j];
            let direct = k / g.weights()[j] + (4.0 / (r * r) + op.potential_values()[j]) * v[j];
            assert!((out[j] - direct).abs() <= 1e-12 * (direct.abs() + k.abs() / g.weights()[j]), "{j}");
        }
    }

    #[test]
    fn free_operator_bounded_below() {
        let g = Arc::new(RadialGrid::for_frequency(1.0, 512).unwrap());
        let p = ModelParams::new(1.0, 0).unwrap();
        let op = SectorOperator::free(g.clone(), p, Which::Plus, 0);
        for k in 1..20 {
            let v: Vec<f64> = g.nodes().iter().map(|r| (f64::from(k) * r).sin() * (-r / 5.0).exp() + 0.3).collect();
            assert!(op.bilinear(&v, &v) >= p.omega * g.dot(&v, &v) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn solve_generalized_kernel() {
        let s = profile();
        let d = s.derivative();
        let op = assemble(s, Which::Minus, 1);
        let psi = op.solve(&d, None).unwrap();
        let r: Vec<f64> = op.apply(&psi).unwrap().iter().zip(&d).map(|(a, b)| a - b).collect();
        assert!(wnorm(s, &r) < 1e-6 * wnorm(s, &d));
    }

    #[test]
    fn solve_lplus_on_profile() {
        let s = profile();
        let op = assemble(s, Which::Plus, 0);
        let x = op.solve(s.values(), None).unwrap();
        let r: Vec<f64> = op.apply(&x).unwrap().iter().zip(s.values()).map(|(a, b)| a - b).collect();
        let g = s.grid();
        assert!(sys_norm(g, &r) < 1e-9 * sys_norm(g, s.values()));
    }

    #[test]
    fn guarded_solve_in_phase_sector() {
        let s = profile();
        let op = assemble(s, Which::Minus, 0);
        assert!(matches!(op.solve(s.values(), None), Err(Error::Conditioning { .. })));
        assert!(matches!(op.solve(s.values(), Some(s.values())), Err(Error::NotOrthogonal { .. })));
        let g = s.grid();
        let raw: Vec<f64> = g.nodes().iter().map(|r| (1.0 - r * r) * (-r * r).exp()).collect();
        let b = project_out(g, &raw, s.values());
        let x = op.solve(&b, Some(s.values())).unwrap();
        assert!(g.dot(&x, s.values()).abs() < 1e-10 * g.norm(&x) * g.norm(s.values()));
        let r: Vec<f64> = op.apply(&x).unwrap().iter().zip(&b).map(|(a, c)| a - c).collect();
        assert!(wnorm(s, &r) < 1e-6 * wnorm(s, &b), "{}", wnorm(s, &r) / wnorm(s, &b));
    }

    #[test]
    fn potential_csv() {
        let s = profile();
        let mut buf = Vec::new();
        assemble(s, Which::Minus, 0).write_potential_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), s.grid().n() + 1);
        assert!(text.starts_with("r,V\n"));
    }

    #[test]
    fn derivative_parity_is_even() {
        let s = profile();
        let d = s.grid().derivative(s.values(), Parity::Even).unwrap();
        assert!(d[0] < 0.0 && d[0].abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn linear_and_symmetric(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
            alpha in -3.0f64..3.0,
            l in 0u32..3,
        ) {
            let s = profile();
            let g = s.grid();
            let op = assemble(s, Which::Plus, l);
            let mk = |c: &[f64]| -> Vec<f64> {
                g.nodes().iter().map(|&r| {
                    let e = (-r * r / 4.0).exp();
                    c.iter().enumerate().map(|(k, x)| x * r.powi(k as i32) * e).sum::<f64>() * r.powi(l as i32)
                }).collect()
            };
            let (u, v) = (mk(&a), mk(&b));
            let comb: Vec<f64> = u.iter().zip(&v).map(|(x, y)| x + alpha * y).collect();
            let au = op.apply(&u).unwrap();
            let av = op.apply(&v).unwrap();
            let ac = op.apply(&comb).unwrap();
            let scale = sys_norm(g, &au) + alpha.abs() * sys_norm(g, &av) + 1e-300;
            let lin: Vec<f64> = ac.iter().zip(au.iter().zip(&av)).map(|(c, (x, y))| c - x - alpha * y).collect();
            prop_assert!(sys_norm(g, &lin) <= 1e-9 * scale);
            let lhs = g.dot(&au, &v);
            let rhs = g.dot(&u, &av);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (g.norm(&au) * g.norm(&v) + g.norm(&u) * g.norm(&av)));
        }

        #[test]
        fn solve_then_apply(c in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let s = profile();
            let g = s.grid();
            let op = assemble(s, Which::Plus, 0);
            let b: Vec<f64> = g.nodes().iter().map(|&r| {
                c.iter().enumerate().map(|(k, x)| x * r.powi(k as i32)).sum::<f64>() * (-r * r / 2.0).exp()
            }).collect();
            prop_assume!(g.norm(&b) > 1e-3);
            let x = op.solve(&b, None).unwrap();
            let r: Vec<f64> = op.apply(&x).unwrap().iter().zip(&b).map(|(a, c)| a - c).collect();
            prop_assert!(sys_norm(g, &r) < 1e-9 * sys_norm(g, &b));
        }
    }
}
