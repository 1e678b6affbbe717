//! Browser bindings: radial reference trajectories, initial curves and a
//! small curve trainer that runs in the page.

use hmcf::config::{presets, ProblemSpec};
use hmcf::geometry::{curve_initial, curve_initial_velocity, CurveShape, Shape, VelocityProfile};
use hmcf::loss::{loss_and_gradient, LossOptions, LossWeights};
use hmcf::network::{init_xavier, Network};
use hmcf::optim::{Adam, AdamConfig};
use hmcf::oracle::{mean_radius_trajectory, radial_rk4, reference_trajectory, time_grid, ParamGrid, RadialKind};
use hmcf::sampling::{build_batch, SampleBatch};
use wasm_bindgen::prelude::*;

fn js_err(e: hmcf::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn radial_kind(kind: &str) -> Result<RadialKind, JsError> {
    match kind {
        "curve" => Ok(RadialKind::Curve),
        "sphere" => Ok(RadialKind::Sphere),
        _ => Err(JsError::new(&format!("unknown kind `{kind}`, expected curve or sphere"))),
    }
}

fn profile(name: &str, r1: f64) -> Result<VelocityProfile, JsError> {
    match name {
        "constant" => Ok(VelocityProfile::Constant { r1 }),
        "sin" => Ok(VelocityProfile::SinU),
        "cos" => Ok(VelocityProfile::CosU),
        _ => Err(JsError::new(&format!("unknown velocity profile `{name}`"))),
    }
}

/// Radius of a shrinking circle (`"curve"`) or sphere (`"sphere"`) until
/// collapse, as interleaved `[t0, r0, t1, r1, ...]` with at most `samples`
/// pairs.
#[wasm_bindgen]
pub fn radial_oracle(kind: &str, r0: f64, r1: f64, beta: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(JsError::new("r0 must be positive"));
    }
    let sol = radial_rk4(radial_kind(kind)?, r0, r1, beta, 1e-4);
    let n = sol.times.len();
    let every = (n / samples.max(2)).max(1);
    let mut out = Vec::new();
    for i in (0..n).filter(|&i| i % every == 0 || i + 1 == n) {
        out.extend([sol.times[i], sol.radii[i]]);
    }
    Ok(out)
}

/// Initial ellipse `(a cos u, b sin u)` and its initial velocity on `n`
/// samples, as interleaved `[x, y, vx, vy, ...]`.
#[wasm_bindgen]
pub fn initial_curve(a: f64, b: f64, velocity: &str, r1: f64, n: usize) -> Result<Vec<f64>, JsError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(JsError::new("semi-axes must be positive"));
    }
    let shape = CurveShape::Ellipse { a, b };
    let profile = profile(velocity, r1)?;
    let mut out = Vec::with_capacity(4 * n);
    for k in 0..n {
        let u = std::f64::consts::TAU * k as f64 / n as f64;
        let x = curve_initial(shape, u);
        let v = curve_initial_velocity(shape, profile, u).map_err(js_err)?;
        out.extend([x[0], x[1], v[0], v[1]]);
    }
    Ok(out)
}

/// Trains a small network on a unit circle with constant initial speed.
#[wasm_bindgen]
pub struct CurveTrainer {
    problem: ProblemSpec,
    net: Network,
    batch: SampleBatch,
    adam: Adam,
    grad: Vec<f64>,
    steps: u64,
}

#[wasm_bindgen]
impl CurveTrainer {
    /// `hidden_layers × width` tanh network, `n_f` interior points.
    #[wasm_bindgen(constructor)]
    pub fn new(r1: f64, beta: f64, hidden_layers: usize, width: usize, n_f: usize, seed: u64) -> Result<CurveTrainer, JsError> {
        let mut problem = presets::by_name("circle-r0-b0-desk").expect("shipped preset");
        problem.velocity = VelocityProfile::Constant { r1 };
        problem.beta = beta;
        problem.geometry = Shape::Circle { r0: 1.0 };
        if r1 > 0.0 {
            problem.domain.t_train = 3.3;
            problem.domain.t_display = Some(3.4);
        }
        problem.network.hidden_layers = hidden_layers;
        problem.network.hidden_width = width;
        problem.sampling.n_f = n_f;
        problem.sampling.n_0 = 64;
        problem.sampling.n_b = 64;
        problem.seeds.init = seed;
        problem.seeds.sample = seed;
        problem.validate().map_err(js_err)?;
        let net = Network::with_input_map(init_xavier(problem.network_shape(), seed), problem.input_map())
            .map_err(js_err)?;
        let batch = build_batch(&problem, seed).map_err(js_err)?;
        let len = net.params.len();
        Ok(CurveTrainer {
            problem,
            net,
            batch,
            adam: Adam::new(AdamConfig::default(), len),
            grad: vec![0.0; len],
            steps: 0,
        })
    }

    /// Runs `n` Adam steps at `lr` and returns the unit-weight loss
    /// `[total, pde, ic, bc]` before the last update.
    pub fn train(&mut self, n: u32, lr: f64) -> Result<Vec<f64>, JsError> {
        let opts = LossOptions::new(self.problem.flow());
        let mut last = vec![f64::NAN; 4];
        for _ in 0..n {
            let r = loss_and_gradient(&self.net, &self.batch, &opts, LossWeights::UNIT, Some(&mut self.grad))
                .map_err(js_err)?;
            last = vec![r.total, r.pde, r.ic, r.bc];
            self.adam
                .step(self.net.params.values_mut(), &self.grad, lr)
                .map_err(js_err)?;
            self.steps += 1;
        }
        Ok(last)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn t_train(&self) -> f64 {
        self.problem.domain.t_train
    }

    /// Predicted and reference mean radius on `n` times over the training
    /// horizon, as interleaved `[t, predicted, reference, ...]`.
    pub fn radius(&self, n: usize) -> Result<Vec<f64>, JsError> {
        let times = time_grid(self.problem.domain.t_train, n);
        let grid = ParamGrid::curve(128);
        let predicted = mean_radius_trajectory(&self.net, &grid, &times).map_err(js_err)?;
        let r1 = match self.problem.velocity {
            VelocityProfile::Constant { r1 } => r1,
            _ => 0.0,
        };
        let reference =
            reference_trajectory(RadialKind::Curve, 1.0, r1, self.problem.beta, &times).map_err(js_err)?;
        let mut out = Vec::with_capacity(3 * n);
        for k in 0..times.len() {
            out.extend([times[k], predicted[k], reference[k]]);
        }
        Ok(out)
    }

    /// Predicted curve at time `t` on `n` samples, as `[x, y, ...]`.
    pub fn curve_at(&self, t: f64, n: usize) -> Result<Vec<f64>, JsError> {
        let pts: Vec<f64> = (0..=n)
            .flat_map(|k| [std::f64::consts::TAU * k as f64 / n as f64, t])
            .collect();
        self.net.forward_values(&pts).map_err(js_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_ends_at_collapse() {
        let v = radial_oracle("curve", 1.0, 0.0, 0.0, 100).unwrap();
        let t_end = v[v.len() - 2];
        assert!((t_end - 1.2533).abs() < 1e-3);
        assert!(v.len() / 2 <= 102);
    }

    #[test]
    fn initial_circle_velocity_points_outward() {
        let v = initial_curve(1.0, 1.0, "constant", 1.0, 8).unwrap();
        for p in v.chunks_exact(4) {
            let dot = p[0] * p[2] + p[1] * p[3];
            assert!((dot - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trainer_reduces_loss() {
        let mut t = CurveTrainer::new(0.0, 0.0, 2, 8, 128, 1).unwrap();
        let first = t.train(1, 1e-2).unwrap()[0];
        let last = t.train(200, 1e-2).unwrap()[0];
        assert!(last < first, "{first} -> {last}");
        assert_eq!(t.steps(), 201);
        assert_eq!(t.radius(5).unwrap().len(), 15);
        assert_eq!(t.curve_at(0.0, 16).unwrap().len(), 34);
    }
}
