//! First-order and quasi-Newton optimizers over a flat parameter vector.

mod lbfgs;

pub use lbfgs::{lbfgs_run, LbfgsConfig, LbfgsReport, LbfgsStop};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; the learning rate is supplied per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "Adam state holds {} entries, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                what: "gradient entry",
                index,
            });
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step_count += 1;
        let c1 = 1.0 - beta1.powf(self.step_count as f64);
        let c2 = 1.0 - beta2.powf(self.step_count as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let update = lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
            params[i] -= update;
            if !params[i].is_finite() {
                return Err(Error::Divergence {
                    what: "parameter",
                    index: i,
                });
            }
        }
        Ok(())
    }
}

/// Rescales `grad` to L2 norm `threshold` when its norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradient(grad: &mut [f64], threshold: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > threshold {
        let k = threshold / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        lr: f64,
    },
    /// Cosine warm-up from `max_lr / div_factor` to `max_lr` over the first
    /// `warmup_fraction` of `total_steps`, then cosine decay to
    /// `max_lr / (div_factor · final_div_factor)`.
    OneCycle {
        max_lr: f64,
        total_steps: u64,
        #[serde(default = "default_warmup_fraction")]
        warmup_fraction: f64,
        #[serde(default = "default_div_factor")]
        div_factor: f64,
        #[serde(default = "default_final_div_factor")]
        final_div_factor: f64,
    },
}

fn default_warmup_fraction() -> f64 {
    0.3
}

fn default_div_factor() -> f64 {
    25.0
}

fn default_final_div_factor() -> f64 {
    1e4
}

impl LrSchedule {
    pub fn one_cycle(max_lr: f64, total_steps: u64) -> Self {
        LrSchedule::OneCycle {
            max_lr,
            total_steps,
            warmup_fraction: default_warmup_fraction(),
            div_factor: default_div_factor(),
            final_div_factor: default_final_div_factor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::Constant { lr } if !(lr > 0.0 && lr.is_finite()) => {
                Err(Error::config("lr", "must be positive"))
            }
            LrSchedule::OneCycle {
                max_lr,
                warmup_fraction,
                div_factor,
                final_div_factor,
                ..
            } => {
                if !(max_lr > 0.0 && max_lr.is_finite()) {
                    return Err(Error::config("max_lr", "must be positive"));
                }
                if !(warmup_fraction > 0.0 && warmup_fraction < 1.0) {
                    return Err(Error::config("warmup_fraction", "must lie in (0, 1)"));
                }
                if !(div_factor >= 1.0 && final_div_factor >= 1.0) {
                    return Err(Error::config("div_factor", "division factors must be >= 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Learning rate for the 0-based step `step`.
    pub fn lr(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::OneCycle {
                max_lr,
                total_steps,
                warmup_fraction,
                div_factor,
                final_div_factor,
            } => {
                let initial = max_lr / div_factor;
                let min = initial / final_div_factor;
                let last = total_steps.saturating_sub(1) as f64;
                let peak = (warmup_fraction * total_steps as f64 - 1.0).max(0.0);
                let s = (step as f64).min(last);
                let cos = |from: f64, to: f64, frac: f64| {
                    to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
                };
                if s <= peak {
                    let frac = if peak > 0.0 { s / peak } else { 1.0 };
                    cos(initial, max_lr, frac)
                } else {
                    let span = last - peak;
                    cos(max_lr, min, if span > 0.0 { (s - peak) / span } else { 1.0 })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adam_first_step_is_about_lr() {
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut p = [0.0, 0.0, 0.0];
        adam.step(&mut p, &[2.0, -0.5, 1e-3], 1e-2).unwrap();
        for (x, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - s * 1e-2).abs() < 1e-7, "{x}");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut p = [0.3, -0.7];
        for _ in 0..5 {
            adam.step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        }
        assert_eq!(p, [0.3, -0.7]);
    }

    #[test]
    fn adam_minimizes_norm_squared() {
        let mut adam = Adam::new(AdamConfig::default(), 4);
        let mut p = [0.5, -0.5, 0.5, -0.5];
        for _ in 0..200 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            adam.step(&mut p, &g, 1e-1).unwrap();
        }
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "{norm}");
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let err = adam.step(&mut [0.0, 0.0], &[1.0, f64::NAN], 0.1).unwrap_err();
        assert!(matches!(err, Error::Divergence { index: 1, .. }));
    }

    #[test]
    fn clipping_examples() {
        let mut g = [6.0, 8.0];
        assert_eq!(clip_gradient(&mut g, 1.0), 10.0);
        assert_eq!(g, [6.0 * 0.1, 8.0 * 0.1]);
        let mut h = [0.3, 0.4];
        clip_gradient(&mut h, 1.0);
        assert_eq!(h, [0.3, 0.4]);
    }

    #[test]
    fn one_cycle_shape() {
        let s = LrSchedule::one_cycle(1e-3, 1000);
        let (first, last) = (s.lr(0), s.lr(999));
        assert!((first - 4e-5).abs() < 1e-18);
        assert!(first < 1e-3 && last < 1e-3);
        assert!((last - 4e-9).abs() < 1e-18);
        assert!((s.lr(299) - 1e-3).abs() < 1e-15);
        let lrs: Vec<f64> = (0..1000).map(|i| s.lr(i)).collect();
        assert!(lrs[..300].windows(2).all(|w| w[1] >= w[0]));
        assert!(lrs[299..].windows(2).all(|w| w[1] <= w[0]));
        assert!(lrs.iter().all(|&x| x > 0.0));
    }

    proptest! {
        #[test]
        fn clip_norm_contract(g in proptest::collection::vec(-10.0f64..10.0, 1..1000), t in 0.01f64..50.0) {
            let mut v = g.clone();
            let before = clip_gradient(&mut v, t);
            let after = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((after - before.min(t)).abs() <= 1e-12 * before.max(1.0));
        }

        #[test]
        fn adam_is_permutation_equivariant(g in proptest::collection::vec(-3.0f64..3.0, 5)) {
            let mut a = Adam::new(AdamConfig::default(), 5);
            let mut b = Adam::new(AdamConfig::default(), 5);
            let mut p = [0.1, 0.2, 0.3, 0.4, 0.5];
            let mut q = p;
            q.reverse();
            let mut rg = g.clone();
            rg.reverse();
            for _ in 0..3 {
                a.step(&mut p, &g, 0.05).unwrap();
                b.step(&mut q, &rg, 0.05).unwrap();
            }
            q.reverse();
            prop_assert_eq!(p, q);
        }
    }
}
