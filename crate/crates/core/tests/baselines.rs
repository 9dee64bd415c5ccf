//! Frozen values at n = 8192 on the default stretched grid.

use expnls_core::profile::solve_default;
use expnls_core::spectral::{psi_witness, vk_slope};
use expnls_core::stability::growing_mode;
use expnls_core::ModelParams;

struct Baseline {
    omega: f64,
    mu: u8,
    amplitude: f64,
    grad_norm_sq: f64,
    mass: f64,
    action: f64,
    vk_slope: f64,
    psi_form: f64,
    lambda: f64,
}

const BASELINES: [Baseline; 4] = [
    Baseline {
        omega: 1.0,
        mu: 0,
        amplitude: 5.003153751377e-1,
        grad_norm_sq: 4.678476193586e-1,
        mass: 2.392478708374e-1,
        action: 2.339238094619e-1,
        vk_slope: 1.136008794626e-1,
        psi_form: -1.589373950510e0,
        lambda: 2.553736509394e1,
    },
    Baseline {
        omega: 1.0,
        mu: 1,
        amplitude: 6.036315786041e-1,
        grad_norm_sq: 5.696780533821e-1,
        mass: 1.688092421459e-1,
        action: 2.848390256823e-1,
        vk_slope: 8.148277032885e-2,
        psi_form: -3.478919247412e0,
        lambda: 1.656915215743e2,
    },
    Baseline {
        omega: 2.0,
        mu: 0,
        amplitude: 6.268579300644e-1,
        grad_norm_sq: 6.310339529553e-1,
        mass: 1.121011093677e-1,
        action: 3.155169756706e-1,
        vk_slope: 3.444130542922e-2,
        psi_form: -3.745883592616e0,
        lambda: 2.569343356174e2,
    },
    Baseline {
        omega: 2.0,
        mu: 1,
        amplitude: 6.994766728055e-1,
        grad_norm_sq: 6.861434658558e-1,
        mass: 8.216567131749e-2,
        action: 3.430717301616e-1,
        vk_slope: 2.293918108727e-2,
        psi_form: -5.685086399193e0,
        lambda: 1.104736788936e3,
    },
];

fn close(name: &str, got: f64, want: f64) {
    close_to(name, got, want, 1e-8);
}

fn close_to(name: &str, got: f64, want: f64, tol: f64) {
    let rel = ((got - want) / want).abs();
    assert!(rel < tol, "{name}: {got:.12e} vs {want:.12e} (rel {rel:.1e})");
}

#[test]
fn frozen_profiles_and_spectra() {
    for b in &BASELINES {
        let sol = solve_default(&ModelParams::new(b.omega, b.mu).unwrap(), 8192).unwrap();
        let tag = |q: &str| format!("({}, {}) {q}", b.omega, b.mu);
        close(&tag("amplitude"), sol.amplitude, b.amplitude);
        close(&tag("grad_norm_sq"), sol.grad_norm_sq, b.grad_norm_sq);
        close(&tag("mass"), sol.mass, b.mass);
        close(&tag("action"), sol.action, b.action);
        close(&tag("vk_slope"), vk_slope(&sol).unwrap(), b.vk_slope);
        close(&tag("psi_form"), psi_witness(&sol).psi_form, b.psi_form);
        close(&tag("lambda"), growing_mode(&sol).unwrap().lambda, b.lambda);
    }
}

#[test]
fn action_is_half_the_gradient_at_the_ground_state() {
    for b in &BASELINES {
        close_to("S = A/2", b.action, 0.5 * b.grad_norm_sq, 1e-7);
    }
}
