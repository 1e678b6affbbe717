//! Reference solutions and error metrics.
//!
//! A circle or sphere whose initial velocity is a constant normal speed
//! stays round, and its radius obeys `r̈ + βṙ = −k/r` with `k = 1` for
//! curves and `k = 2` for spheres. [`radial_rk4`] integrates that ODE;
//! [`radial_closed_form`] evaluates the closed forms for `β = 0`.

mod diagnostics;
mod radial;

pub use diagnostics::{
    compare_mean_radius, mean_radius_trajectory, normality_defect, periodicity_defect,
    pole_variance, time_grid, ParamGrid, TrajectoryComparison,
};
pub use radial::{
    closed_form_collapse_time, closed_form_discrepancy, radial_closed_form, radial_rk4,
    radial_rk4_with, reference_trajectory, ManufacturedCircle, ManufacturedSphere, RadialKind,
    RadialSolution, Rk4Options,
};

use crate::error::{Error, Result};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Inverse error function by Newton iteration on [`erf`], started from
/// Winitzki's closed-form approximation.
pub fn erf_inv(y: f64) -> Result<f64> {
    if !(y.abs() < 1.0) {
        return Err(Error::domain("erf_inv", "argument must lie in (-1, 1)", y));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    const A: f64 = 0.147;
    let ln = (1.0 - y * y).ln();
    let t = 2.0 / (std::f64::consts::PI * A) + 0.5 * ln;
    let mut x = y.signum() * ((t * t - ln / A).sqrt() - t).sqrt();
    let scale = 2.0 / std::f64::consts::PI.sqrt();
    for _ in 0..100 {
        let deriv = scale * (-x * x).exp();
        let step = (erf(x) - y) / deriv;
        // Halley correction: erf'' = -2x erf'.
        let x_new = x - step / (1.0 + x * step);
        let done = (x_new - x).abs() <= 1e-15 * x_new.abs().max(1e-300);
        x = x_new;
        if done {
            break;
        }
    }
    Ok(x)
}

/// `‖predicted − reference‖₂ / ‖reference‖₂`.
pub fn relative_l2(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "relative_l2 on lengths {} and {}",
            predicted.len(),
            reference.len()
        )));
    }
    let den = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::domain("relative_l2", "reference has zero norm", 0.0));
    }
    let num = predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}
