use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::autodiff::{loss_gradient, Objective};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub history: usize,
    pub g_tol: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
    /// Trial step of the first line search, before any curvature pairs
    /// exist; later searches start from the unit quasi-Newton step.
    pub initial_step: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 10,
            g_tol: 1e-9,
            max_line_search: 20,
            initial_step: 0.1,
            c1: 1e-4,
            c2: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStop {
    GradientTolerance,
    MaxIterations,
    /// Neither the line search nor the steepest-descent fallback decreased
    /// the loss.
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub stop: LbfgsStop,
    /// Iterations that fell back to a halving steepest-descent step.
    pub fallbacks: usize,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Evaluator<'a, O: ?Sized> {
    objective: &'a mut O,
    count: usize,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    /// Loss and gradient; a diverging trial point reads as `+∞` so that the
    /// line search backs away from it.
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.count += 1;
        match loss_gradient(x, self.objective) {
            Ok((f, g)) => Ok((f, g.values)),
            Err(Error::Divergence { .. }) | Err(Error::NumericOverflow { .. }) => {
                Ok((f64::INFINITY, vec![f64::NAN; x.len()]))
            }
            Err(e) => Err(e),
        }
    }
}

struct Trial {
    a: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

fn step_point(x: &[f64], d: &[f64], a: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

/// Minimizer of the cubic through two trials, kept inside the bracket.
fn cubic_step(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.a, hi.a);
    let (left, right) = (a.min(b), a.max(b));
    let width = right - left;
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    let mid = 0.5 * (a + b);
    if !(disc >= 0.0) || !hi.f.is_finite() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
    if t.is_finite() {
        t.clamp(left + 0.1 * width, right - 0.1 * width)
    } else {
        mid
    }
}

/// Line search for a step satisfying the strong Wolfe conditions. Falls back
/// to the best sufficient-decrease point seen when the evaluation budget
/// runs out.
fn strong_wolfe<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
    f0: f64,
    dphi0: f64,
    d: &[f64],
    a1: f64,
    cfg: &LbfgsConfig,
) -> Result<Option<Trial>> {
    let armijo = |t: &Trial| t.f <= f0 + cfg.c1 * t.a * dphi0;
    let curvature = |t: &Trial| t.dphi.abs() <= -cfg.c2 * dphi0;
    let trial = |ev: &mut Evaluator<'_, O>, a: f64| -> Result<Trial> {
        let (f, g) = ev.eval(&step_point(x, d, a))?;
        let dphi = dot(&g, d);
        Ok(Trial { a, f, g, dphi })
    };

    let mut prev = Trial {
        a: 0.0,
        f: f0,
        g: Vec::new(),
        dphi: dphi0,
    };
    let mut a = a1;
    let mut used = 0;
    let (mut lo, mut hi) = loop {
        let t = trial(ev, a)?;
        used += 1;
        if !armijo(&t) || (used > 1 && t.f >= prev.f) {
            break (prev, t);
        }
        if curvature(&t) {
            return Ok(Some(t));
        }
        if t.dphi >= 0.0 {
            break (t, prev);
        }
        if used >= cfg.max_line_search {
            return Ok(Some(t));
        }
        a *= 2.0;
        prev = t;
    };

    while used < cfg.max_line_search {
        if (hi.a - lo.a).abs() <= 1e-16 * lo.a.abs().max(1.0) {
            break;
        }
        let t = trial(ev, cubic_step(&lo, &hi))?;
        used += 1;
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Ok(Some(t));
            }
            if t.dphi * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    Ok((lo.a > 0.0).then_some(lo))
}

/// Two-loop recursion: `−H·g` from the stored curvature pairs.
fn direction(pairs: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(p) = pairs.back() {
        let gamma = dot(&p.s, &p.y) / dot(&p.y, &p.y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for (p, a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Minimizes `objective` from `params` in place with L-BFGS. `on_iter`
/// receives the 1-based iteration number and the loss after it.
pub fn lbfgs_run<O: Objective + ?Sized>(
    params: &mut [f64],
    objective: &mut O,
    max_iters: usize,
    cfg: &LbfgsConfig,
    mut on_iter: impl FnMut(usize, f64),
) -> Result<LbfgsReport> {
    let mut ev = Evaluator {
        objective,
        count: 0,
    };
    let (mut f, mut g) = ev.eval(params)?;
    if !f.is_finite() {
        return Err(Error::Divergence {
            what: "loss",
            index: 0,
        });
    }
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(cfg.history);
    let mut report = LbfgsReport {
        iterations: 0,
        evaluations: 0,
        loss: f,
        grad_norm: norm(&g),
        stop: LbfgsStop::MaxIterations,
        fallbacks: 0,
    };
    if report.grad_norm < cfg.g_tol {
        report.stop = LbfgsStop::GradientTolerance;
        report.evaluations = ev.count;
        return Ok(report);
    }

    for k in 0..max_iters {
        let mut d = direction(&pairs, &g);
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            pairs.clear();
            d = g.iter().map(|x| -x).collect();
            dphi0 = dot(&g, &d);
        }
        let first_step = || {
            let l1: f64 = g.iter().map(|x| x.abs()).sum();
            cfg.initial_step * (1.0 / l1).min(1.0)
        };
        let a1 = if pairs.is_empty() { first_step() } else { 1.0 };
        let accepted = match strong_wolfe(&mut ev, params, f, dphi0, &d, a1, cfg)? {
            Some(t) if t.f < f => Some((t, d)),
            _ => {
                // Steepest descent with halving.
                pairs.clear();
                report.fallbacks += 1;
                let sd: Vec<f64> = g.iter().map(|x| -x).collect();
                let mut a = first_step();
                let mut found = None;
                for _ in 0..cfg.max_line_search {
                    let (fa, ga) = ev.eval(&step_point(params, &sd, a))?;
                    if fa < f {
                        let dphi = dot(&ga, &sd);
                        found = Some(Trial {
                            a,
                            f: fa,
                            g: ga,
                            dphi,
                        });
                        break;
                    }
                    a *= 0.5;
                }
                found.map(|t| (t, sd))
            }
        };
        let Some((t, d)) = accepted else {
            report.stop = LbfgsStop::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = d.iter().map(|di| t.a * di).collect();
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 && sy.is_finite() {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back(Pair { s: s.clone(), y, rho: 1.0 / sy });
        }
        params.iter_mut().zip(&s).for_each(|(p, si)| *p += si);
        f = t.f;
        g = t.g;
        report.iterations = k + 1;
        report.loss = f;
        report.grad_norm = norm(&g);
        on_iter(k + 1, f);
        if report.grad_norm < cfg.g_tol {
            report.stop = LbfgsStop::GradientTolerance;
            break;
        }
    }
    report.evaluations = ev.count;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>()
                            + if i == j { 0.5 } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn solves_spd_quadratic() {
        let a = spd(10, 3);
        let mut quad = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            let mut f = 0.0;
            for i in 0..10 {
                g[i] = dot(&a[i], x);
                f += 0.5 * x[i] * g[i];
            }
            Ok(f)
        };
        let mut x = vec![1.0; 10];
        let cfg = LbfgsConfig {
            g_tol: 1e-10,
            ..LbfgsConfig::default()
        };
        let r = lbfgs_run(&mut x, &mut quad, 30, &cfg, |_, _| {}).unwrap();
        assert_eq!(r.stop, LbfgsStop::GradientTolerance, "{r:?}");
        assert!(r.grad_norm < 1e-10 && r.iterations <= 30);
    }

    #[test]
    fn rosenbrock() {
        let mut rosen = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Ok((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        let mut x = vec![-1.2, 1.0];
        let r = lbfgs_run(&mut x, &mut rosen, 200, &LbfgsConfig::default(), |_, _| {}).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?} {r:?}");
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let mut calls = 0;
        let mut flat = |_: &[f64], g: &mut [f64]| -> Result<f64> {
            calls += 1;
            g.fill(0.0);
            Ok(2.0)
        };
        let mut x = vec![0.25, -3.0];
        let r = lbfgs_run(&mut x, &mut flat, 50, &LbfgsConfig::default(), |_, _| {}).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(x, vec![0.25, -3.0]);
        assert_eq!(calls, 1);
    }

    #[test]
    fn nonconvex_start_converges() {
        let mut f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            g[0] = x[0].cos() + 0.2 * x[0];
            g[1] = 2.0 * x[1];
            Ok(x[0].sin() + 0.1 * x[0] * x[0] + x[1] * x[1])
        };
        let mut x = vec![0.5, 1.0];
        let r = lbfgs_run(&mut x, &mut f, 100, &LbfgsConfig::default(), |_, _| {}).unwrap();
        assert!(r.grad_norm < 1e-6, "{r:?}");
    }
}
