use crate::autodiff::{vec, Real, ScalarJet2};
use crate::error::{Error, Result};

use super::FlowParams;

/// Points where `|γ_u|` falls to this value are left out of the residual.
pub const EPS_TANGENT: f64 = 1e-8;

/// Partial derivatives of `γ(u, t)` needed by the curve residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePartials<T> {
    pub x_u: [T; 2],
    pub x_t: [T; 2],
    pub x_uu: [T; 2],
    pub x_ut: [T; 2],
    pub x_tt: [T; 2],
}

impl<T: Copy> CurvePartials<T> {
    /// Builds the partials from a lookup `get(output, component)` in the
    /// jet component order `value, ∂u, ∂t, ∂uu, ∂ut, ∂tt`.
    pub fn from_components(get: impl Fn(usize, usize) -> T) -> Self {
        let pick = |c: usize| [get(0, c), get(1, c)];
        Self {
            x_u: pick(1),
            x_t: pick(2),
            x_uu: pick(3),
            x_ut: pick(4),
            x_tt: pick(5),
        }
    }
}

impl CurvePartials<f64> {
    pub fn from_jets(jets: &[ScalarJet2<2>; 2]) -> Self {
        Self::from_components(|o, c| jets[o].component(c))
    }
}

/// `f_c = γ_tt + βγ_t − κ⃗ + (γ_ut·γ_t)γ_u/|γ_u|²` with the curvature vector
/// `κ⃗ = γ_uu/|γ_u|² − (γ_u·γ_uu)γ_u/|γ_u|⁴`.
///
/// Returns `None` when `|γ_u| ≤ EPS_TANGENT`.
pub fn curve_residual_generic<T: Real>(p: &CurvePartials<T>, flow: &FlowParams) -> Option<[T; 2]> {
    let n2 = vec::dot(&p.x_u, &p.x_u);
    if !(n2.value().sqrt() > EPS_TANGENT) {
        return None;
    }
    let inv = T::cst(1.0) / n2;
    let along = vec::dot(&p.x_u, &p.x_uu) * inv * inv;
    let tangential = vec::dot(&p.x_ut, &p.x_t) * inv;
    Some(std::array::from_fn(|i| {
        p.x_tt[i] + p.x_t[i].scale(flow.beta) - p.x_uu[i] * inv
            + (along + tangential) * p.x_u[i]
    }))
}

/// Curve residual from the output jets of `γ` over `(u, t)`.
pub fn curve_residual(jets: &[ScalarJet2<2>; 2], flow: &FlowParams) -> Result<[f64; 2]> {
    let p = CurvePartials::from_jets(jets);
    curve_residual_generic(&p, flow).ok_or_else(|| {
        Error::Geometry(format!(
            "singular parametrization: |γ_u| = {:e}",
            vec::dot(&p.x_u, &p.x_u).sqrt()
        ))
    })
}
