//! Initial curves and surfaces, initial velocity fields, and the flow
//! residual operators.

mod curve;
mod surface;

pub use curve::{curve_residual, curve_residual_generic, CurvePartials, EPS_TANGENT};
pub use surface::{
    laplace_beltrami, surface_metric, surface_residual, surface_residual_generic, Metric,
    SurfacePartials, EPS_METRIC,
};

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Collar excluded from interior sampling near the poles of sphere-like
/// surfaces.
pub const DELTA_POLE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurveShape {
    Circle { r0: f64 },
    Ellipse { a: f64, b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfaceShape {
    Sphere { r0: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    Torus { major_radius: f64, minor_radius: f64 },
}

/// Any supported initial shape, as written in a config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Circle { r0: f64 },
    Ellipse { a: f64, b: f64 },
    Sphere { r0: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    Torus { major_radius: f64, minor_radius: f64 },
}

/// How a surface parameter box closes up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceMode {
    /// `u1 ∈ [0, π]` with poles, periodic in `u2`.
    Polar,
    /// Periodic in both parameters.
    Toroidal,
}

impl Shape {
    pub fn curve(&self) -> Option<CurveShape> {
        match *self {
            Shape::Circle { r0 } => Some(CurveShape::Circle { r0 }),
            Shape::Ellipse { a, b } => Some(CurveShape::Ellipse { a, b }),
            _ => None,
        }
    }

    pub fn surface(&self) -> Option<SurfaceShape> {
        match *self {
            Shape::Sphere { r0 } => Some(SurfaceShape::Sphere { r0 }),
            Shape::Ellipsoid { a, b, c } => Some(SurfaceShape::Ellipsoid { a, b, c }),
            Shape::Torus {
                major_radius,
                minor_radius,
            } => Some(SurfaceShape::Torus {
                major_radius,
                minor_radius,
            }),
            _ => None,
        }
    }

    pub fn is_curve(&self) -> bool {
        self.curve().is_some()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Circle { .. } => "circle",
            Shape::Ellipse { .. } => "ellipse",
            Shape::Sphere { .. } => "sphere",
            Shape::Ellipsoid { .. } => "ellipsoid",
            Shape::Torus { .. } => "torus",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    format!("geometry.{name}"),
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        match *self {
            Shape::Circle { r0 } | Shape::Sphere { r0 } => positive("r0", r0),
            Shape::Ellipse { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            Shape::Ellipsoid { a, b, c } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("c", c)
            }
            Shape::Torus {
                major_radius,
                minor_radius,
            } => {
                positive("major_radius", major_radius)?;
                positive("minor_radius", minor_radius)?;
                if major_radius <= minor_radius {
                    return Err(Error::config(
                        "geometry.major_radius",
                        "torus needs major_radius > minor_radius",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Parameter intervals, one per spatial parameter.
    pub fn parameter_box(&self) -> Vec<(f64, f64)> {
        match self {
            Shape::Circle { .. } | Shape::Ellipse { .. } => vec![(0.0, TAU)],
            Shape::Sphere { .. } | Shape::Ellipsoid { .. } => vec![(0.0, PI), (0.0, TAU)],
            Shape::Torus { .. } => vec![(0.0, TAU), (0.0, TAU)],
        }
    }
}

impl SurfaceShape {
    pub fn mode(&self) -> SurfaceMode {
        match self {
            SurfaceShape::Torus { .. } => SurfaceMode::Toroidal,
            _ => SurfaceMode::Polar,
        }
    }
}

/// Initial normal speed `r1(u)`; positive values point outward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityProfile {
    Constant { r1: f64 },
    SinU,
    CosU,
}

impl VelocityProfile {
    /// Speed at curve parameter `u`, or polar angle `u1` for surfaces.
    pub fn speed(&self, u: f64) -> f64 {
        match *self {
            VelocityProfile::Constant { r1 } => r1,
            VelocityProfile::SinU => u.sin(),
            VelocityProfile::CosU => u.cos(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            VelocityProfile::Constant { r1 } if !r1.is_finite() => {
                Err(Error::config("velocity.r1", "must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// Damping of the flow: `X_tt + β X_t = ...`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams {
    pub beta: f64,
    /// Multiplies the tangential term; `+1` subtracts it from the residual.
    pub tangential_sign: f64,
}

impl FlowParams {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            tangential_sign: 1.0,
        }
    }
}

impl Default for FlowParams {
    fn default() -> Self {
        Self::new(0.0)
    }
}

pub fn curve_initial(shape: CurveShape, u: f64) -> [f64; 2] {
    match shape {
        CurveShape::Circle { r0 } => [r0 * u.cos(), r0 * u.sin()],
        CurveShape::Ellipse { a, b } => [a * u.cos(), b * u.sin()],
    }
}

fn curve_tangent(shape: CurveShape, u: f64) -> [f64; 2] {
    match shape {
        CurveShape::Circle { r0 } => [-r0 * u.sin(), r0 * u.cos()],
        CurveShape::Ellipse { a, b } => [-a * u.sin(), b * u.cos()],
    }
}

/// Inner unit normal of the initial curve: the tangent rotated a quarter
/// turn anticlockwise, flipped if needed so it points at the centroid.
pub fn curve_inner_normal(shape: CurveShape, u: f64) -> Result<[f64; 2]> {
    let [tx, ty] = curve_tangent(shape, u);
    let norm = tx.hypot(ty);
    if norm <= EPS_TANGENT {
        return Err(Error::Geometry(format!("zero tangent at u = {u}")));
    }
    let mut n = [-ty / norm, tx / norm];
    // Both shapes are centred at the origin.
    let p = curve_initial(shape, u);
    if n[0] * -p[0] + n[1] * -p[1] < 0.0 {
        n = [-n[0], -n[1]];
    }
    Ok(n)
}

/// `γ1(u) = −r1(u) N0(u)`.
pub fn curve_initial_velocity(
    shape: CurveShape,
    profile: VelocityProfile,
    u: f64,
) -> Result<[f64; 2]> {
    let n = curve_inner_normal(shape, u)?;
    let r1 = profile.speed(u);
    Ok([-r1 * n[0], -r1 * n[1]])
}

pub fn surface_initial(shape: SurfaceShape, u1: f64, u2: f64) -> [f64; 3] {
    match shape {
        SurfaceShape::Sphere { r0 } => [
            r0 * u1.sin() * u2.cos(),
            r0 * u1.sin() * u2.sin(),
            r0 * u1.cos(),
        ],
        SurfaceShape::Ellipsoid { a, b, c } => [
            a * u1.sin() * u2.cos(),
            b * u1.sin() * u2.sin(),
            c * u1.cos(),
        ],
        SurfaceShape::Torus {
            major_radius,
            minor_radius,
        } => {
            let ring = major_radius + minor_radius * u2.cos();
            [ring * u1.cos(), ring * u1.sin(), minor_radius * u2.sin()]
        }
    }
}

/// Outward unit normal of the initial surface (the direction of
/// `X_u1 × X_u2`). For sphere and ellipsoid the common factor `sin u1` is
/// divided out, which makes the poles regular with limit `(0, 0, ±1)`.
pub fn surface_outer_normal(shape: SurfaceShape, u1: f64, u2: f64) -> [f64; 3] {
    let v = match shape {
        SurfaceShape::Sphere { .. } => [u1.sin() * u2.cos(), u1.sin() * u2.sin(), u1.cos()],
        SurfaceShape::Ellipsoid { a, b, c } => [
            b * c * u1.sin() * u2.cos(),
            a * c * u1.sin() * u2.sin(),
            a * b * u1.cos(),
        ],
        SurfaceShape::Torus { .. } => [u1.cos() * u2.cos(), u1.sin() * u2.cos(), u2.sin()],
    };
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// `X1(u1, u2) = −r1(u1) N0`, with `N0` the inner unit normal.
pub fn surface_initial_velocity(
    shape: SurfaceShape,
    profile: VelocityProfile,
    u1: f64,
    u2: f64,
) -> [f64; 3] {
    let r1 = profile.speed(u1);
    surface_outer_normal(shape, u1, u2).map(|x| r1 * x)
}
