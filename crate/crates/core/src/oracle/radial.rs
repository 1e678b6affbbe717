use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use super::{erf, erf_inv};
use crate::autodiff::ScalarJet2;
use crate::error::{Error, Result};
use crate::network::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialKind {
    Curve,
    Sphere,
}

impl RadialKind {
    /// Force constant `k` in `r̈ = −k/r`.
    pub fn force(self) -> f64 {
        match self {
            RadialKind::Curve => 1.0,
            RadialKind::Sphere => 2.0,
        }
    }

    /// Collapse time of the zero-velocity solution per unit initial radius.
    fn rest_collapse_factor(self) -> f64 {
        match self {
            RadialKind::Curve => (PI / 2.0).sqrt(),
            RadialKind::Sphere => PI.sqrt() / 2.0,
        }
    }
}

/// Sampled radius trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSolution {
    pub kind: RadialKind,
    pub beta: f64,
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub velocities: Vec<f64>,
    /// Time at which the radius fell below the stopping radius; a lower
    /// bound on the true collapse time.
    pub collapse_time: Option<f64>,
    /// End of the expansion phase, when the velocity changes sign.
    pub peak_time: Option<f64>,
}

impl RadialSolution {
    fn accel(&self, r: f64, v: f64) -> f64 {
        -self.beta * v - self.kind.force() / r
    }

    /// Radius and velocity at `t` by cubic Hermite interpolation, using the
    /// ODE for the velocity slopes.
    pub fn interpolate(&self, t: f64) -> Option<(f64, f64)> {
        let n = self.times.len();
        if n == 0 || !(t >= self.times[0]) || t > self.times[n - 1] {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        if n == 1 {
            return Some((self.radii[0], self.velocities[0]));
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let (v0, v1) = (self.velocities[i], self.velocities[i + 1]);
        let (a0, a1) = (self.accel(r0, v0), self.accel(r1, v1));
        let r = h00 * r0 + h10 * h * v0 + h01 * r1 + h11 * h * v1;
        let v = h00 * v0 + h10 * h * a0 + h01 * v1 + h11 * h * a1;
        Some((r, v))
    }

    pub fn radius_at(&self, t: f64) -> Option<f64> {
        self.interpolate(t).map(|(r, _)| r)
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rk4Options {
    pub dt: f64,
    /// Integration halts once the radius drops below this value.
    pub r_stop: f64,
    /// Integration halts at this time even without collapse.
    pub t_max: f64,
}

impl Default for Rk4Options {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            r_stop: 1e-3,
            t_max: 100.0,
        }
    }
}

pub fn radial_rk4(kind: RadialKind, r0: f64, r1: f64, beta: f64, dt: f64) -> RadialSolution {
    radial_rk4_with(
        kind,
        r0,
        r1,
        beta,
        &Rk4Options {
            dt,
            ..Rk4Options::default()
        },
    )
}

/// Classical RK4 on `(r, v)' = (v, −βv − k/r)`.
pub fn radial_rk4_with(
    kind: RadialKind,
    r0: f64,
    r1: f64,
    beta: f64,
    opts: &Rk4Options,
) -> RadialSolution {
    let k = kind.force();
    let f = |r: f64, v: f64| (v, -beta * v - k / r);
    let dt = opts.dt;
    let mut sol = RadialSolution {
        kind,
        beta,
        times: vec![0.0],
        radii: vec![r0],
        velocities: vec![r1],
        collapse_time: None,
        peak_time: None,
    };
    let (mut r, mut v) = (r0, r1);
    let mut step: u64 = 0;
    loop {
        let t = step as f64 * dt;
        if t >= opts.t_max {
            break;
        }
        let (k1r, k1v) = f(r, v);
        let (k2r, k2v) = f(r + 0.5 * dt * k1r, v + 0.5 * dt * k1v);
        let (k3r, k3v) = f(r + 0.5 * dt * k2r, v + 0.5 * dt * k2v);
        let (k4r, k4v) = f(r + dt * k3r, v + dt * k3v);
        let r_new = r + dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        let v_new = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        step += 1;
        let t_new = step as f64 * dt;
        if !(r_new >= opts.r_stop) {
            sol.collapse_time = Some(t_new);
            break;
        }
        if sol.peak_time.is_none() && v > 0.0 && v_new <= 0.0 {
            sol.peak_time = Some(t + dt * v / (v - v_new));
        }
        r = r_new;
        v = v_new;
        sol.times.push(t_new);
        sol.radii.push(r);
        sol.velocities.push(v);
    }
    sol
}

/// Peak radius, expansion-phase length and the `erf` offset of the
/// closed forms, evaluated as written.
fn closed_form_branch(kind: RadialKind, r0: f64, r1: f64) -> (f64, f64, f64) {
    let offset = erf(r1 * FRAC_1_SQRT_2);
    match kind {
        RadialKind::Curve => {
            let peak = r0 * (r1 * r1 / 2.0).exp();
            (peak, (PI / 2.0).sqrt() * peak * offset, offset)
        }
        RadialKind::Sphere => {
            let peak = r0 * (r1 * r1 / 4.0).exp();
            (peak, (PI / 2.0).sqrt() * peak * offset, offset)
        }
    }
}

fn check_closed_form_args(r0: f64, r1: f64) -> Result<()> {
    if !(r0 > 0.0) {
        return Err(Error::domain("radial_closed_form", "r0 must be positive", r0));
    }
    if !(r1 >= 0.0) {
        return Err(Error::domain(
            "radial_closed_form",
            "closed forms cover r1 >= 0 only",
            r1,
        ));
    }
    Ok(())
}

pub fn closed_form_collapse_time(kind: RadialKind, r0: f64, r1: f64) -> Result<f64> {
    check_closed_form_args(r0, r1)?;
    let c = kind.rest_collapse_factor();
    if r1 == 0.0 {
        return Ok(c * r0);
    }
    let (peak, t_s, _) = closed_form_branch(kind, r0, r1);
    Ok(t_s + c * peak)
}

/// Radius from the closed forms (`β = 0`, `r1 ≥ 0`).
///
/// For `r1 > 0` the expansion branch runs until `T_s`, after which the
/// zero-velocity solution restarts from the peak radius.
pub fn radial_closed_form(kind: RadialKind, r0: f64, r1: f64, t: f64) -> Result<f64> {
    let collapse = closed_form_collapse_time(kind, r0, r1)?;
    if !(t >= 0.0) {
        return Err(Error::domain("radial_closed_form", "time must be non-negative", t));
    }
    if t >= collapse {
        return Err(Error::domain(
            "radial_closed_form",
            format!("time {t} is past the collapse time"),
            collapse,
        ));
    }
    let c = kind.rest_collapse_factor();
    let rest = |radius: f64, tau: f64| -> Result<f64> {
        let x = erf_inv(tau / (c * radius))?;
        Ok(radius * (-x * x).exp())
    };
    if r1 == 0.0 {
        return rest(r0, t);
    }
    let (peak, t_s, offset) = closed_form_branch(kind, r0, r1);
    if t <= t_s {
        let x = erf_inv(-t / (c * peak) + offset)?;
        Ok(peak * (-x * x).exp())
    } else {
        rest(peak, t - t_s)
    }
}

/// Largest `|closed form − RK4|` over RK4 samples in `[0, 0.9 T]`, with `T`
/// the closed-form collapse time.
pub fn closed_form_discrepancy(kind: RadialKind, r0: f64, r1: f64, dt: f64) -> Result<f64> {
    let horizon = 0.9 * closed_form_collapse_time(kind, r0, r1)?;
    let sol = radial_rk4(kind, r0, r1, 0.0, dt);
    let mut worst: f64 = 0.0;
    for (&t, &r) in sol.times.iter().zip(&sol.radii) {
        if t > horizon {
            break;
        }
        worst = worst.max((radial_closed_form(kind, r0, r1, t)? - r).abs());
    }
    if sol.end_time() < horizon {
        // RK4 collapsed first; the closed form is not even defined on the
        // same interval.
        worst = f64::INFINITY;
    }
    Ok(worst)
}

pub(crate) fn uses_closed_form(kind: RadialKind, r1: f64, beta: f64) -> bool {
    beta == 0.0
        && match kind {
            RadialKind::Curve => r1 >= 0.0,
            RadialKind::Sphere => r1 == 0.0,
        }
}

/// Reference radii at `times`: the closed form where it is known to solve
/// the ODE (curves with `r1 ≥ 0`, spheres with `r1 = 0`, both at `β = 0`),
/// RK4 with `dt = 1e-5` otherwise.
pub fn reference_trajectory(
    kind: RadialKind,
    r0: f64,
    r1: f64,
    beta: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    if uses_closed_form(kind, r1, beta) {
        return times
            .iter()
            .map(|&t| radial_closed_form(kind, r0, r1, t))
            .collect();
    }
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let sol = radial_rk4_with(
        kind,
        r0,
        r1,
        beta,
        &Rk4Options {
            dt: 1e-5,
            t_max: t_end + 1e-3,
            ..Rk4Options::default()
        },
    );
    times
        .iter()
        .map(|&t| {
            sol.radius_at(t).ok_or_else(|| {
                Error::domain("reference_trajectory", "time is past the collapse time", t)
            })
        })
        .collect()
}

fn radial_state(sol: &RadialSolution, t: f64) -> Result<(f64, f64, f64)> {
    let (r, v) = sol
        .interpolate(t)
        .ok_or_else(|| Error::domain("manufactured solution", "time outside the trajectory", t))?;
    Ok((r, v, sol.accel(r, v)))
}

/// `γ(u, t) = r(t)(cos u, sin u)` with `r` from an RK4 trajectory and `r̈`
/// from the ODE itself.
#[derive(Clone, Debug)]
pub struct ManufacturedCircle {
    pub solution: RadialSolution,
}

impl ManufacturedCircle {
    pub fn new(r0: f64, r1: f64, beta: f64, dt: f64) -> Self {
        Self {
            solution: radial_rk4(RadialKind::Curve, r0, r1, beta, dt),
        }
    }
}

impl Field<2> for ManufacturedCircle {
    fn jets(&self, [u, t]: [f64; 2]) -> Result<[ScalarJet2<2>; 2]> {
        let (r, rd, rdd) = radial_state(&self.solution, t)?;
        let (s, c) = u.sin_cos();
        // f is a component of (cos u, sin u), fu its u-derivative.
        let jet = |f: f64, fu: f64| ScalarJet2 {
            value: r * f,
            grad: [r * fu, rd * f],
            hess: [[-r * f, rd * fu], [rd * fu, rdd * f]],
        };
        Ok([jet(c, -s), jet(s, c)])
    }
}

/// `X(u1, u2, t) = r(t)(sin u1 cos u2, sin u1 sin u2, cos u1)`.
#[derive(Clone, Debug)]
pub struct ManufacturedSphere {
    pub solution: RadialSolution,
}

impl ManufacturedSphere {
    pub fn new(r0: f64, r1: f64, beta: f64, dt: f64) -> Self {
        Self {
            solution: radial_rk4(RadialKind::Sphere, r0, r1, beta, dt),
        }
    }
}

impl Field<3> for ManufacturedSphere {
    fn jets(&self, [u1, u2, t]: [f64; 3]) -> Result<[ScalarJet2<3>; 3]> {
        let (r, rd, rdd) = radial_state(&self.solution, t)?;
        let (s1, c1) = u1.sin_cos();
        let (s2, c2) = u2.sin_cos();
        // Unit direction n and its parameter derivatives, per component.
        let n = [s1 * c2, s1 * s2, c1];
        let n1 = [c1 * c2, c1 * s2, -s1];
        let n2 = [-s1 * s2, s1 * c2, 0.0];
        let n11 = [-s1 * c2, -s1 * s2, -c1];
        let n12 = [-c1 * s2, c1 * c2, 0.0];
        let n22 = [-s1 * c2, -s1 * s2, 0.0];
        Ok(std::array::from_fn(|k| ScalarJet2 {
            value: r * n[k],
            grad: [r * n1[k], r * n2[k], rd * n[k]],
            hess: [
                [r * n11[k], r * n12[k], rd * n1[k]],
                [r * n12[k], r * n22[k], rd * n2[k]],
                [rd * n1[k], rd * n2[k], rdd * n[k]],
            ],
        }))
    }
}
