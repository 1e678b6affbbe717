use crate::autodiff::{vec, Real, ScalarJet2};
use crate::error::{Error, Result};

use super::FlowParams;

/// Points where `det g` falls to this value are left out of the residual.
pub const EPS_METRIC: f64 = 1e-12;

/// Partial derivatives of `X(u1, u2, t)` needed by the surface residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePartials<T> {
    pub x1: [T; 3],
    pub x2: [T; 3],
    pub xt: [T; 3],
    pub x11: [T; 3],
    pub x12: [T; 3],
    pub x22: [T; 3],
    pub x1t: [T; 3],
    pub x2t: [T; 3],
    pub xtt: [T; 3],
}

impl<T: Copy> SurfacePartials<T> {
    /// Builds the partials from a lookup `get(output, component)` in the jet
    /// component order `value, ∂1, ∂2, ∂t, ∂11, ∂12, ∂1t, ∂22, ∂2t, ∂tt`.
    pub fn from_components(get: impl Fn(usize, usize) -> T) -> Self {
        let pick = |c: usize| [get(0, c), get(1, c), get(2, c)];
        Self {
            x1: pick(1),
            x2: pick(2),
            xt: pick(3),
            x11: pick(4),
            x12: pick(5),
            x1t: pick(6),
            x22: pick(7),
            x2t: pick(8),
            xtt: pick(9),
        }
    }
}

impl SurfacePartials<f64> {
    pub fn from_jets(jets: &[ScalarJet2<3>; 3]) -> Self {
        Self::from_components(|o, c| jets[o].component(c))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric {
    pub g: [[f64; 2]; 2],
    pub g_inv: [[f64; 2]; 2],
    pub det: f64,
}

/// First fundamental form `g_ij = X_ui·X_uj` with its inverse.
pub fn surface_metric(x1: &[f64; 3], x2: &[f64; 3]) -> Result<Metric> {
    let (g11, g12, g22) = (vec::dot(x1, x1), vec::dot(x1, x2), vec::dot(x2, x2));
    let det = g11 * g22 - g12 * g12;
    if !(det > EPS_METRIC) {
        return Err(Error::Geometry(format!("degenerate metric: det g = {det:e}")));
    }
    Ok(Metric {
        g: [[g11, g12], [g12, g22]],
        g_inv: [[g22 / det, -g12 / det], [-g12 / det, g11 / det]],
        det,
    })
}

type Sym<T> = [[T; 2]; 2];

fn mat_mul<T: Real>(a: &Sym<T>, b: &Sym<T>) -> Sym<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

/// Inverse metric and `ΔX` (Laplace–Beltrami of the embedding), both from
/// the divergence form `(1/√g) ∂_i(g^{ij} √g X_j)` expanded by the product
/// rule:
///
/// `ΔX = g^{ij} X_ij + (∂_i g^{ij}) X_j + g^{ij} (∂_i ln√g) X_j`,
///
/// with `∂_k g_ij = X_ik·X_j + X_i·X_jk`, `∂_k g^{-1} = −g^{-1}(∂_k g)g^{-1}`
/// and `∂_k ln√g = ½ g^{ij} ∂_k g_ij`.
fn metric_and_laplacian<T: Real>(p: &SurfacePartials<T>) -> Option<(Sym<T>, [T; 3])> {
    let x = [&p.x1, &p.x2];
    let xx = [[&p.x11, &p.x12], [&p.x12, &p.x22]];
    let g: Sym<T> = std::array::from_fn(|i| std::array::from_fn(|j| vec::dot(x[i], x[j])));
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if !(det.value() > EPS_METRIC) {
        return None;
    }
    let inv_det = T::cst(1.0) / det;
    let gi: Sym<T> = [
        [g[1][1] * inv_det, -(g[0][1] * inv_det)],
        [-(g[1][0] * inv_det), g[0][0] * inv_det],
    ];

    let dg: [Sym<T>; 2] = std::array::from_fn(|k| {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| vec::dot(xx[i][k], x[j]) + vec::dot(x[i], xx[j][k]))
        })
    });
    let dgi: [Sym<T>; 2] = std::array::from_fn(|k| {
        let m = mat_mul(&mat_mul(&gi, &dg[k]), &gi);
        std::array::from_fn(|i| std::array::from_fn(|j| -m[i][j]))
    });
    let dlog: [T; 2] = std::array::from_fn(|k| {
        let mut s = gi[0][0] * dg[k][0][0];
        for (i, j) in [(0, 1), (1, 0), (1, 1)] {
            s = s + gi[i][j] * dg[k][i][j];
        }
        s.scale(0.5)
    });

    let mut lap = [T::cst(0.0); 3];
    for i in 0..2 {
        for j in 0..2 {
            let coef = dgi[i][i][j] + gi[i][j] * dlog[i];
            lap = vec::axpy(gi[i][j], xx[i][j], &lap);
            lap = vec::axpy(coef, x[j], &lap);
        }
    }
    Some((gi, lap))
}

/// `ΔX` for reporting; `None` when the metric degenerates.
pub fn laplace_beltrami<T: Real>(p: &SurfacePartials<T>) -> Option<[T; 3]> {
    metric_and_laplacian(p).map(|(_, lap)| lap)
}

/// `f_s = X_tt + βX_t − ΔX − s Σ g^{ij}(X_t·X_{t,ui}) X_uj` with `s` the
/// configured tangential sign.
///
/// Returns `None` when `det g ≤ EPS_METRIC`.
pub fn surface_residual_generic<T: Real>(
    p: &SurfacePartials<T>,
    flow: &FlowParams,
) -> Option<[T; 3]> {
    let (gi, lap) = metric_and_laplacian(p)?;
    let x = [&p.x1, &p.x2];
    let speed_grad = [vec::dot(&p.xt, &p.x1t), vec::dot(&p.xt, &p.x2t)];
    let mut tangential = [T::cst(0.0); 3];
    for i in 0..2 {
        for j in 0..2 {
            tangential = vec::axpy(gi[i][j] * speed_grad[i], x[j], &tangential);
        }
    }
    Some(std::array::from_fn(|k| {
        p.xtt[k] + p.xt[k].scale(flow.beta) - lap[k] - tangential[k].scale(flow.tangential_sign)
    }))
}

/// Surface residual from the output jets of `X` over `(u1, u2, t)`.
pub fn surface_residual(jets: &[ScalarJet2<3>; 3], flow: &FlowParams) -> Result<[f64; 3]> {
    let p = SurfacePartials::from_jets(jets);
    surface_residual_generic(&p, flow).ok_or_else(|| {
        let det = surface_metric(&p.x1, &p.x2).err();
        Error::Geometry(det.map_or_else(|| "degenerate metric".into(), |e| e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual;
    use std::f64::consts::PI;

    /// Partials of `r(t) (sin u1 cos u2, sin u1 sin u2, cos u1)`.
    fn sphere_partials(r: f64, rd: f64, rdd: f64, u1: f64, u2: f64) -> SurfacePartials<f64> {
        let (s1, c1, s2, c2) = (u1.sin(), u1.cos(), u2.sin(), u2.cos());
        let n = [s1 * c2, s1 * s2, c1];
        let n1 = [c1 * c2, c1 * s2, -s1];
        let n2 = [-s1 * s2, s1 * c2, 0.0];
        let n11 = [-s1 * c2, -s1 * s2, -c1];
        let n12 = [-c1 * s2, c1 * c2, 0.0];
        let n22 = [-s1 * c2, -s1 * s2, 0.0];
        let k = |a: f64, v: [f64; 3]| v.map(|x| a * x);
        SurfacePartials {
            x1: k(r, n1),
            x2: k(r, n2),
            xt: k(rd, n),
            x11: k(r, n11),
            x12: k(r, n12),
            x22: k(r, n22),
            x1t: k(rd, n1),
            x2t: k(rd, n2),
            xtt: k(rdd, n),
        }
    }

    fn torus_partials(big: f64, small: f64, u1: f64, u2: f64) -> SurfacePartials<f64> {
        let (s1, c1, s2, c2) = (u1.sin(), u1.cos(), u2.sin(), u2.cos());
        let ring = big + small * c2;
        SurfacePartials {
            x1: [-ring * s1, ring * c1, 0.0],
            x2: [-small * s2 * c1, -small * s2 * s1, small * c2],
            xt: [0.0; 3],
            x11: [-ring * c1, -ring * s1, 0.0],
            x12: [small * s2 * s1, -small * s2 * c1, 0.0],
            x22: [-small * c2 * c1, -small * c2 * s1, -small * s2],
            x1t: [0.0; 3],
            x2t: [0.0; 3],
            xtt: [0.0; 3],
        }
    }

    /// Independent form: `ΔX = g^{ij}(X_ij − Γ^k_ij X_k)`, the normal
    /// component of `g^{ij} X_ij`.
    fn laplacian_by_projection(p: &SurfacePartials<f64>) -> [f64; 3] {
        let m = surface_metric(&p.x1, &p.x2).unwrap();
        let x = [p.x1, p.x2];
        let xx = [[p.x11, p.x12], [p.x12, p.x22]];
        let mut out = [0.0; 3];
        for i in 0..2 {
            for j in 0..2 {
                let mut v = xx[i][j];
                for k in 0..2 {
                    let gamma: f64 = (0..2).map(|l| m.g_inv[k][l] * vec::dot(&xx[i][j], &x[l])).sum();
                    v = vec::axpy(-gamma, &x[k], &v);
                }
                out = vec::axpy(m.g_inv[i][j], &v, &out);
            }
        }
        out
    }

    #[test]
    fn sphere_metric() {
        let (r, u1, u2) = (1.7, 0.9, 2.3);
        let p = sphere_partials(r, 0.0, 0.0, u1, u2);
        let m = surface_metric(&p.x1, &p.x2).unwrap();
        assert!((m.g[0][0] - r * r).abs() < 1e-14);
        assert!((m.g[1][1] - (r * u1.sin()).powi(2)).abs() < 1e-14);
        assert!(m.g[0][1].abs() < 1e-15);
        assert!((m.det.sqrt() - r * r * u1.sin()).abs() < 1e-14);
    }

    #[test]
    fn torus_metric() {
        let p = torus_partials(2.0, 1.0, 0.4, 1.2);
        let m = surface_metric(&p.x1, &p.x2).unwrap();
        let ring = 2.0 + 1.2f64.cos();
        assert!((m.g[0][0] - ring * ring).abs() < 1e-14);
        assert!((m.g[1][1] - 1.0).abs() < 1e-14);
        assert!((m.det.sqrt() - ring).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_metric() {
        let m = surface_metric(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.g, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.det, 1.0);
        assert!(surface_metric(&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn static_unit_sphere() {
        let p = sphere_partials(1.0, 0.0, 0.0, 1.1, 0.3);
        let f = surface_residual_generic(&p, &FlowParams::new(3.0)).unwrap();
        let n = [1.1f64.sin() * 0.3f64.cos(), 1.1f64.sin() * 0.3f64.sin(), 1.1f64.cos()];
        for k in 0..3 {
            assert!((f[k] - 2.0 * n[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn radial_sphere_ode_makes_residual_vanish() {
        let (r, rd, beta) = (0.6, -0.9, 2.0);
        let rdd = -beta * rd - 2.0 / r;
        for (u1, u2) in [(0.2, 0.0), (1.5, 4.0), (PI - 0.2, 6.0)] {
            let f = surface_residual_generic(&sphere_partials(r, rd, rdd, u1, u2), &FlowParams::new(beta)).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-13), "{f:?}");
        }
    }

    #[test]
    fn divergence_form_matches_projection_form() {
        let p = SurfacePartials {
            x1: [1.0, 0.2, -0.3],
            x2: [0.1, 0.9, 0.4],
            xt: [0.3, -0.2, 0.5],
            x11: [0.4, -0.7, 0.2],
            x12: [-0.3, 0.5, 0.8],
            x22: [0.6, 0.1, -0.9],
            x1t: [0.2, 0.2, -0.1],
            x2t: [-0.4, 0.3, 0.6],
            xtt: [0.0; 3],
        };
        let a = laplace_beltrami(&p).unwrap();
        let b = laplacian_by_projection(&p);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-13, "{a:?} vs {b:?}");
        }
        let t = torus_partials(2.0, 1.0, 0.7, 2.5);
        let (a, b) = (laplace_beltrami(&t).unwrap(), laplacian_by_projection(&t));
        assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-13));
    }

    #[test]
    fn tangential_sign_flips_term() {
        let mut p = sphere_partials(1.0, 0.0, 0.0, 1.0, 1.0);
        p.xt = [0.3, 0.1, -0.2];
        p.x1t = [0.5, 0.0, 0.1];
        p.x2t = [0.0, -0.4, 0.2];
        let plus = surface_residual_generic(&p, &FlowParams::new(0.0)).unwrap();
        let minus = surface_residual_generic(
            &p,
            &FlowParams {
                beta: 0.0,
                tangential_sign: -1.0,
            },
        )
        .unwrap();
        let base = {
            let lap = laplace_beltrami(&p).unwrap();
            [-lap[0], -lap[1], -lap[2]]
        };
        for k in 0..3 {
            assert!(((plus[k] - base[k]) + (minus[k] - base[k])).abs() < 1e-14);
        }
        assert!((plus[0] - base[0]).abs() > 1e-3);
    }

    #[test]
    fn dual_gradient_of_squared_residual() {
        let p = sphere_partials(0.9, 0.3, 0.1, 1.2, 0.5);
        let flow = FlowParams::new(1.0);
        let sq = |p: &SurfacePartials<f64>| {
            let f = surface_residual_generic(p, &flow).unwrap();
            vec::dot(&f, &f)
        };
        let lift = |v: [f64; 3]| v.map(Dual::<1>::cst);
        let mut d = SurfacePartials {
            x1: lift(p.x1),
            x2: lift(p.x2),
            xt: lift(p.xt),
            x11: lift(p.x11),
            x12: lift(p.x12),
            x22: lift(p.x22),
            x1t: lift(p.x1t),
            x2t: lift(p.x2t),
            xtt: lift(p.xtt),
        };
        d.x12[2] = Dual::var(p.x12[2], 0);
        let f = surface_residual_generic(&d, &flow).unwrap();
        let g = vec::dot(&f, &f).d[0];
        let h = 1e-6;
        let (mut up, mut dn) = (p, p);
        up.x12[2] += h;
        dn.x12[2] -= h;
        assert!((g - (sq(&up) - sq(&dn)) / (2.0 * h)).abs() < 1e-7);
    }
}
