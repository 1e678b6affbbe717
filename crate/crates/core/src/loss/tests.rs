use proptest::prelude::*;

use super::*;
use crate::config::{presets, ProblemSpec};
use crate::network::{init_xavier, FieldEvaluator, ParameterVector};
use crate::oracle::{ManufacturedCircle, ManufacturedSphere};
use crate::sampling::{build_batch_sized, BatchCounts};

fn problem(name: &str) -> ProblemSpec {
    presets::by_name(name).unwrap()
}

fn small_batch(p: &ProblemSpec, n: usize, seed: u64) -> SampleBatch {
    let counts = BatchCounts {
        n_f: n,
        n_0: n,
        n_b: n,
        n_p: 8,
    };
    build_batch_sized(p, counts, seed).unwrap()
}

fn network(p: &ProblemSpec, seed: u64) -> Network {
    let mut params = init_xavier(p.network_shape(), seed);
    // Nonzero biases so that every layer's bias gradient is exercised.
    let layout = params.layout();
    for (i, layer) in layout.iter().enumerate() {
        for (j, b) in params.values_mut()[layer.bias_offset..layer.end()].iter_mut().enumerate() {
            *b = 0.1 * ((i + j) as f64).sin();
        }
    }
    Network::with_input_map(params, p.input_map()).unwrap()
}

fn opts(p: &ProblemSpec) -> LossOptions {
    LossOptions::new(p.flow())
}

#[test]
fn manufactured_circle_is_exact() {
    for beta in [0.0, 1.0, 5.0] {
        let mut p = problem("circle-r0-b0-desk");
        p.beta = beta;
        let batch = small_batch(&p, 200, 3);
        let field = ManufacturedCircle::new(1.0, 0.0, beta, 1e-4);
        let r = loss_report(&FieldEvaluator(&field), &batch, &opts(&p), LossWeights::UNIT).unwrap();
        assert!(r.pde < 1e-10 && r.ic < 1e-10 && r.bc < 1e-10, "{r:?}");
        assert_eq!(r.pole, None);
        assert_eq!(r.skipped, 0);
    }
}

#[test]
fn manufactured_expanding_circle_is_exact() {
    let p = problem("circle-r1-b0-desk");
    let batch = small_batch(&p, 200, 3);
    let field = ManufacturedCircle::new(1.0, 1.0, 0.0, 1e-4);
    let r = loss_report(&FieldEvaluator(&field), &batch, &opts(&p), LossWeights::UNIT).unwrap();
    assert!(r.pde < 1e-10 && r.ic < 1e-10 && r.bc < 1e-10, "{r:?}");
}

#[test]
fn manufactured_sphere_is_exact() {
    let p = problem("sphere-r0-b0-desk");
    let batch = small_batch(&p, 200, 4);
    let field = ManufacturedSphere::new(1.0, 0.0, 0.0, 1e-4);
    let r = loss_report(&FieldEvaluator(&field), &batch, &opts(&p), LossWeights::UNIT).unwrap();
    assert!(r.pde < 1e-8 && r.ic < 1e-8 && r.bc < 1e-8, "{r:?}");
    assert!(r.pole.unwrap() < 1e-8);
}

#[test]
fn manufactured_sphere_pole_loss_at_start() {
    let mut p = problem("sphere-r0-b0-desk");
    p.domain.t_train = 1e-9;
    let batch = small_batch(&p, 16, 9);
    let field = ManufacturedSphere::new(1.0, 0.0, 0.0, 1e-4);
    let r = loss_report(&FieldEvaluator(&field), &batch, &opts(&p), LossWeights::UNIT).unwrap();
    assert!(r.pole.unwrap() < 1e-10);
}

#[test]
fn unit_weights_sum_components() {
    let p = problem("circle-r0-b0-desk");
    let batch = small_batch(&p, 32, 1);
    let r = loss_and_gradient(&network(&p, 2), &batch, &opts(&p), LossWeights::UNIT, None).unwrap();
    assert_eq!(r.total, r.pde + r.ic + r.bc);
}

#[test]
fn zero_network_initial_loss_is_one() {
    for name in ["circle-r0-b0-desk", "sphere-r0-b0-desk"] {
        let p = problem(name);
        let batch = small_batch(&p, 50, 5);
        let net = Network::new(ParameterVector::zeros(p.network_shape()));
        let r = loss_and_gradient(&net, &batch, &opts(&p), LossWeights::UNIT, None).unwrap();
        assert!((r.ic - 1.0).abs() < 1e-12, "{name}: {}", r.ic);
        assert_eq!(r.skipped, 50);
        assert_eq!(r.pde, 0.0);
    }
}

#[test]
fn torus_has_no_pole_component() {
    let p = problem("torus-r0-b0-desk");
    let batch = small_batch(&p, 20, 5);
    let r = loss_and_gradient(&network(&p, 1), &batch, &opts(&p), LossWeights::UNIT, None).unwrap();
    assert_eq!(r.pole, None);
    assert!(r.bc > 0.0);
}

#[test]
fn pole_anchor_examples() {
    let north = [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
    let south = [[0.0, 0.0, -1.0]];
    let a = anchor_from_outputs(0.0, &north, &south, true);
    assert_eq!(a.south, a.north.map(|x| -x));
    assert_eq!(pole_position_penalty(&a, &north, &south), 0.0);

    let constant = [[0.2, -0.1, 0.7]; 4];
    let b = anchor_from_outputs(0.0, &constant, &constant, false);
    assert_eq!(pole_position_penalty(&b, &constant, &constant), 0.0);
}

#[test]
fn pole_anchors_follow_groups() {
    let p = problem("sphere-r0-b0-desk");
    let batch = small_batch(&p, 16, 2);
    let field = ManufacturedSphere::new(1.0, 0.0, 0.0, 1e-4);
    let anchors = pole_anchors(&FieldEvaluator(&field), &batch, true).unwrap();
    assert_eq!(anchors.len(), 2);
    for a in anchors {
        let r = field.solution.radius_at(a.t).unwrap();
        assert!((a.north[2] - r).abs() < 1e-12 && (a.south[2] + r).abs() < 1e-12);
    }
}

#[test]
fn report_paths_agree() {
    for name in ["ellipse-r1-b1-desk", "sphere-r0-b0-desk", "torus-r1-b0-desk"] {
        let p = problem(name);
        let batch = small_batch(&p, 300, 8);
        let net = network(&p, 4);
        let a = loss_and_gradient(&net, &batch, &opts(&p), LossWeights::conditions(3.0), None).unwrap();
        let b = loss_report(&net, &batch, &opts(&p), LossWeights::conditions(3.0)).unwrap();
        for (x, y) in [(a.pde, b.pde), (a.ic, b.ic), (a.bc, b.bc), (a.total, b.total)] {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{name}: {x} vs {y}");
        }
    }
}

fn check_gradient(name: &str, antipodal: bool, u1_terms: bool) {
    let mut p = problem(name);
    p.network.hidden_layers = 3;
    p.network.hidden_width = 12;
    let batch = small_batch(&p, 10, 6);
    let mut o = opts(&p);
    o.antipodal = antipodal;
    o.pole_u1_terms = u1_terms;
    let w = LossWeights {
        pde: 1.0,
        ic: 2.0,
        bc: 3.0,
        pole: 4.0,
    };
    let mut net = network(&p, 7);
    let mut g = vec![0.0; net.params.len()];
    loss_and_gradient(&net, &batch, &o, w, Some(&mut g)).unwrap();
    let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let h = 1e-6;
    for i in 0..g.len() {
        let x0 = net.params.values()[i];
        net.params.values_mut()[i] = x0 + h;
        let fp = loss_and_gradient(&net, &batch, &o, w, None).unwrap().total;
        net.params.values_mut()[i] = x0 - h;
        let fm = loss_and_gradient(&net, &batch, &o, w, None).unwrap().total;
        net.params.values_mut()[i] = x0;
        let fd = (fp - fm) / (2.0 * h);
        let scale = g[i].abs().max(1e-2 * gmax);
        assert!((fd - g[i]).abs() <= 1e-4 * scale, "{name} param {i}: fd {fd} vs {}", g[i]);
    }
}

#[test]
fn curve_gradient_matches_finite_differences() {
    check_gradient("ellipse-r1-b1-desk", true, false);
}

#[test]
fn surface_gradient_matches_finite_differences() {
    check_gradient("sphere-r0-b0-desk", true, true);
    check_gradient("ellipsoid-r1-b0-desk", false, false);
}

#[test]
fn torus_gradient_matches_finite_differences() {
    check_gradient("torus-r0-b0-desk", true, false);
}

/// Outputs of `inner` multiplied by `k`, then shifted by `shift`.
struct Affine<'a> {
    inner: &'a Network,
    k: f64,
    shift: Vec<f64>,
}

impl Evaluator for Affine<'_> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn evaluate(&self, points: &[f64], order: JetOrder) -> Result<Vec<f64>> {
        let comps = order.components(self.input_dim());
        let d = self.output_dim();
        let mut v = self.inner.evaluate(points, order)?;
        for (i, x) in v.iter_mut().enumerate() {
            *x *= self.k;
            if i % comps == 0 {
                *x += self.shift[(i / comps) % d];
            }
        }
        Ok(v)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn total_is_the_weighted_sum(w in prop::array::uniform4(0.0f64..1e3), seed in 0u64..1000) {
        let p = problem("sphere-r1-b0-desk");
        let batch = small_batch(&p, 16, seed);
        let weights = LossWeights { pde: w[0], ic: w[1], bc: w[2], pole: w[3] };
        let r = loss_and_gradient(&network(&p, seed), &batch, &opts(&p), weights, None).unwrap();
        let expected = w[0] * r.pde + w[1] * r.ic + w[2] * r.bc + w[3] * r.pole.unwrap();
        prop_assert_eq!(r.total, expected);
        prop_assert!(r.pde >= 0.0 && r.ic >= 0.0 && r.bc >= 0.0 && r.pole.unwrap() >= 0.0);
    }

    #[test]
    fn translation_leaves_pde_and_bc(shift in prop::array::uniform3(-2.0f64..2.0), seed in 0u64..100) {
        for name in ["ellipse-r0-b1-desk", "sphere-r0-b0-desk"] {
            let p = problem(name);
            let batch = small_batch(&p, 16, seed);
            let net = network(&p, seed);
            let d = net.output_dim();
            let base = loss_report(&net, &batch, &opts(&p), LossWeights::UNIT).unwrap();
            let moved = Affine { inner: &net, k: 1.0, shift: shift[..d].to_vec() };
            let r = loss_report(&moved, &batch, &opts(&p), LossWeights::UNIT).unwrap();
            prop_assert!((r.pde - base.pde).abs() <= 1e-10 * base.pde.max(1.0));
            prop_assert!((r.bc - base.bc).abs() <= 1e-10 * base.bc.max(1.0));
        }
    }

    #[test]
    fn scaling_errors_scales_condition_terms(k in 0.25f64..4.0, seed in 0u64..100) {
        let p = problem("sphere-r0-b0-desk");
        let mut batch = small_batch(&p, 16, seed);
        let net = network(&p, seed);
        let base = loss_report(&net, &batch, &opts(&p), LossWeights::UNIT).unwrap();
        batch.initial_position.iter_mut().for_each(|x| *x *= k);
        batch.initial_velocity.iter_mut().for_each(|x| *x *= k);
        let scaled = Affine { inner: &net, k, shift: vec![0.0; 3] };
        let r = loss_report(&scaled, &batch, &opts(&p), LossWeights::UNIT).unwrap();
        let k2 = k * k;
        prop_assert!((r.ic - k2 * base.ic).abs() <= 1e-10 * r.ic.max(1e-12));
        prop_assert!((r.bc - k2 * base.bc).abs() <= 1e-10 * r.bc.max(1e-12));
        prop_assert!((r.pole.unwrap() - k2 * base.pole.unwrap()).abs() <= 1e-10 * r.pole.unwrap().max(1e-12));
    }
}
