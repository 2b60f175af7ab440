//! Tanh-sinh (double exponential) quadrature on finite intervals, suited to
//! integrable endpoint singularities.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Half-width of the truncated `t` range; weights beyond it are below 1e-20.
const T_MAX: f64 = 3.5;

/// Nodes closer than this to an endpoint are skipped.
const ENDPOINT_GAP: f64 = 1e-14;

/// `∫_a^b f` with `2⌊nodes/2⌋ + 1` tanh-sinh nodes.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize) -> f64 {
    let k = (nodes / 2).max(1);
    let h = T_MAX / k as f64;
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for m in -(k as i64)..=(k as i64) {
        let t = m as f64 * h;
        let u = FRAC_PI_2 * t.sinh();
        // Distances to the endpoints as fractions of the interval, computed
        // without cancellation.
        let left = 1.0 / (1.0 + (-2.0 * u).exp());
        let right = 1.0 / (1.0 + (2.0 * u).exp());
        if left.min(right) < ENDPOINT_GAP {
            continue;
        }
        let x = if right < left { b - (b - a) * right } else { a + (b - a) * left };
        if !(x > a && x < b) {
            continue;
        }
        let cu = u.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cu * cu);
        sum += w * f(x);
    }
    sum * half * h
}

/// [`tanh_sinh`] at `nodes` and `2·nodes`; errors if the two disagree by more
/// than `rel_tol` relative to the finer value.
pub fn tanh_sinh_checked<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize, rel_tol: f64) -> Result<f64> {
    let coarse = tanh_sinh(&f, a, b, nodes);
    let fine = tanh_sinh(&f, a, b, 2 * nodes);
    if !fine.is_finite() || (fine - coarse).abs() > rel_tol * fine.abs() {
        return Err(Error::Quadrature(format!(
            "refinement from {nodes} to {} nodes moved the integral from {coarse} to {fine}",
            2 * nodes
        )));
    }
    Ok(fine)
}
