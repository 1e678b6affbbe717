//! Per-term sums of squared errors over one block of points.
//!
//! Each function reads output jet components from an [`OutputBlock`] and,
//! when adjoints are requested, adds the derivative of its summed loss with
//! respect to every component it read. The same code serves the batched
//! training path and the point-by-point report path.

use crate::autodiff::Dual;
use crate::geometry::{
    curve_residual_generic, surface_residual_generic, CurvePartials, FlowParams, SurfacePartials,
};
use crate::network::{AdjointBlock, OutputBlock, TermStats};

/// `Σ|f_c|²` over curve interior points.
pub fn curve_pde<O: OutputBlock, A: AdjointBlock>(
    out: &O,
    adj: Option<&mut A>,
    flow: &FlowParams,
) -> TermStats {
    let mut s = TermStats::default();
    match adj {
        None => {
            for p in 0..out.len() {
                let part = CurvePartials::from_components(|o, c| out.get(p, o, c));
                match curve_residual_generic(&part, flow) {
                    Some(r) => {
                        s.sum += r[0] * r[0] + r[1] * r[1];
                        s.count += 1;
                    }
                    None => s.skipped += 1,
                }
            }
        }
        Some(adj) => {
            for p in 0..out.len() {
                let part = CurvePartials::from_components(|o, c| {
                    Dual::<10>::var(out.get(p, o, c), o * 5 + c - 1)
                });
                let Some(r) = curve_residual_generic(&part, flow) else {
                    s.skipped += 1;
                    continue;
                };
                s.sum += r.iter().map(|x| x.v * x.v).sum::<f64>();
                s.count += 1;
                for o in 0..2 {
                    for c in 1..6 {
                        let k = o * 5 + c - 1;
                        let g: f64 = r.iter().map(|x| 2.0 * x.v * x.d[k]).sum();
                        adj.add(p, o, c, g);
                    }
                }
            }
        }
    }
    s
}

/// `Σ|f_s|²` over surface interior points.
pub fn surface_pde<O: OutputBlock, A: AdjointBlock>(
    out: &O,
    adj: Option<&mut A>,
    flow: &FlowParams,
) -> TermStats {
    let mut s = TermStats::default();
    match adj {
        None => {
            for p in 0..out.len() {
                let part = SurfacePartials::from_components(|o, c| out.get(p, o, c));
                match surface_residual_generic(&part, flow) {
                    Some(r) => {
                        s.sum += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                        s.count += 1;
                    }
                    None => s.skipped += 1,
                }
            }
        }
        Some(adj) => {
            for p in 0..out.len() {
                let part = SurfacePartials::from_components(|o, c| {
                    Dual::<27>::var(out.get(p, o, c), o * 9 + c - 1)
                });
                let Some(r) = surface_residual_generic(&part, flow) else {
                    s.skipped += 1;
                    continue;
                };
                s.sum += r.iter().map(|x| x.v * x.v).sum::<f64>();
                s.count += 1;
                for o in 0..3 {
                    for c in 1..10 {
                        let k = o * 9 + c - 1;
                        let g: f64 = r.iter().map(|x| 2.0 * x.v * x.d[k]).sum();
                        adj.add(p, o, c, g);
                    }
                }
            }
        }
    }
    s
}

/// `Σ|X − X0|² + |X_t − X1|²` at `t = 0`. `start` is the global index of the
/// block's first point; targets are stored `[point][output]`.
pub fn initial<O: OutputBlock, A: AdjointBlock>(
    out: &O,
    mut adj: Option<&mut A>,
    dim: usize,
    start: usize,
    position: &[f64],
    velocity: &[f64],
) -> TermStats {
    let mut s = TermStats::default();
    let tc = dim;
    for p in 0..out.len() {
        let row = (start + p) * dim;
        for o in 0..dim {
            let dx = out.get(p, o, 0) - position[row + o];
            let dv = out.get(p, o, tc) - velocity[row + o];
            s.sum += dx * dx + dv * dv;
            if let Some(adj) = adj.as_deref_mut() {
                adj.add(p, o, 0, 2.0 * dx);
                adj.add(p, o, tc, 2.0 * dv);
            }
        }
        s.count += 1;
    }
    s
}

/// `Σ|X(lo) − X(hi)|² + |∂X(lo) − ∂X(hi)|²` over interleaved pairs, with
/// `∂` the derivative along the periodic coordinate `coord`.
pub fn periodic<O: OutputBlock, A: AdjointBlock>(
    out: &O,
    mut adj: Option<&mut A>,
    dim: usize,
    coord: usize,
) -> TermStats {
    let mut s = TermStats::default();
    let dc = 1 + coord;
    for lo in (0..out.len()).step_by(2) {
        let hi = lo + 1;
        for o in 0..dim {
            for c in [0, dc] {
                let d = out.get(lo, o, c) - out.get(hi, o, c);
                s.sum += d * d;
                if let Some(adj) = adj.as_deref_mut() {
                    adj.add(lo, o, c, 2.0 * d);
                    adj.add(hi, o, c, -2.0 * d);
                }
            }
        }
        s.count += 1;
    }
    s
}

/// Pole penalty over groups of `k` north points followed by `k` south
/// points sharing one time. The anchor is the group mean at each pole, or
/// with `antipodal` the single point `r = (m_N − m_S)/2` taken as `+r` at
/// the north pole and `−r` at the south pole. Adds `|X_u2|²` at both poles,
/// and `|X_u1|²` when `u1_terms` is set. `count` is the number of samples
/// per pole.
pub fn pole<O: OutputBlock, A: AdjointBlock>(
    out: &O,
    mut adj: Option<&mut A>,
    k: usize,
    antipodal: bool,
    u1_terms: bool,
) -> TermStats {
    let mut s = TermStats::default();
    let deriv: &[usize] = if u1_terms { &[1, 2] } else { &[2] };
    for g in (0..out.len()).step_by(2 * k) {
        let mean = |base: usize| -> [f64; 3] {
            std::array::from_fn(|o| (0..k).map(|j| out.get(base + j, o, 0)).sum::<f64>() / k as f64)
        };
        let (m_n, m_s) = (mean(g), mean(g + k));
        let (a_n, a_s, shift) = if antipodal {
            let r: [f64; 3] = std::array::from_fn(|o| 0.5 * (m_n[o] - m_s[o]));
            let shift: [f64; 3] = std::array::from_fn(|o| m_n[o] + m_s[o]);
            (r, r.map(|x| -x), shift)
        } else {
            (m_n, m_s, [0.0; 3])
        };
        for (base, anchor, mean) in [(g, a_n, m_n), (g + k, a_s, m_s)] {
            for p in base..base + k {
                for o in 0..3 {
                    let x = out.get(p, o, 0);
                    let d = x - anchor[o];
                    s.sum += d * d;
                    if let Some(adj) = adj.as_deref_mut() {
                        adj.add(p, o, 0, 2.0 * (x - mean[o]) + shift[o]);
                    }
                    for &c in deriv {
                        let v = out.get(p, o, c);
                        s.sum += v * v;
                        if let Some(adj) = adj.as_deref_mut() {
                            adj.add(p, o, c, 2.0 * v);
                        }
                    }
                }
            }
        }
        s.count += k;
    }
    s
}
