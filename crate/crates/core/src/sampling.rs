//! Latin hypercube sampling and training batches.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ProblemSpec;
use crate::error::Result;
use crate::geometry::{
    curve_initial, curve_initial_velocity, surface_initial, surface_initial_velocity, Shape,
    SurfaceMode, DELTA_POLE,
};

/// `n` points in the box `bounds`, row-major `n × bounds.len()`. Each
/// coordinate puts exactly one sample in each of its `n` equal strata.
pub fn lhs<R: Rng + ?Sized>(n: usize, bounds: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    let d = bounds.len();
    let mut out = vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        perm.shuffle(rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            out[i * d + k] = lo + (hi - lo) * (stratum as f64 + u) / n as f64;
        }
    }
    out
}

pub fn lhs_seeded(n: usize, bounds: &[(f64, f64)], seed: u64) -> Vec<f64> {
    lhs(n, bounds, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Pairs of points that differ only in one periodic coordinate, stored
/// interleaved: `(…, 0, …)` then `(…, 2π, …)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSet {
    pub coord: usize,
    pub points: Vec<f64>,
}

impl PeriodicSet {
    pub fn pairs(&self, dim: usize) -> usize {
        self.points.len() / (2 * dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchCounts {
    pub n_f: usize,
    pub n_0: usize,
    pub n_b: usize,
    pub n_p: usize,
}

impl BatchCounts {
    pub fn of(problem: &ProblemSpec) -> Self {
        let s = &problem.sampling;
        Self {
            n_f: s.n_f,
            n_0: s.n_0,
            n_b: s.n_b,
            n_p: s.n_p(),
        }
    }

    /// Counts scaled by `fraction`, keeping at least one point per set and
    /// whole pole groups.
    pub fn scaled(&self, fraction: f64, pole_group: usize) -> Self {
        let f = |n: usize| ((n as f64 * fraction).round() as usize).max(1);
        let groups = ((self.n_p / pole_group) as f64 * fraction).round() as usize;
        Self {
            n_f: f(self.n_f),
            n_0: f(self.n_0),
            n_b: f(self.n_b),
            n_p: groups.max(1) * pole_group,
        }
    }
}

/// Every point set of one training step. Points are row-major with the
/// time coordinate last.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    /// Number of coordinates per point, time included.
    pub dim: usize,
    pub interior: Vec<f64>,
    /// Points at `t = 0`.
    pub initial: Vec<f64>,
    pub initial_position: Vec<f64>,
    pub initial_velocity: Vec<f64>,
    /// One set for curves and polar surfaces, two for the torus.
    pub boundary: Vec<PeriodicSet>,
    /// Groups of `pole_group` north points `(0, u2, t)` followed by the
    /// matching south points `(π, u2, t)`, all sharing one `t`. Empty
    /// unless the surface has poles.
    pub pole: Vec<f64>,
    pub pole_group: usize,
}

impl SampleBatch {
    pub fn n_interior(&self) -> usize {
        self.interior.len() / self.dim
    }

    pub fn n_initial(&self) -> usize {
        self.initial.len() / self.dim
    }

    /// Pole samples per pole.
    pub fn n_pole(&self) -> usize {
        self.pole.len() / (2 * self.dim)
    }

    /// One CSV row per sample: interior point, initial point, boundary pair
    /// (at its `0` end) and pole sample (at its north end).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: &[&str] = if self.dim == 2 {
            &["set", "u", "t"]
        } else {
            &["set", "u1", "u2", "t"]
        };
        out.push_str(&header.join(","));
        out.push('\n');
        let mut rows = |name: &str, pts: &[f64], stride: usize| {
            for p in pts.chunks_exact(self.dim).step_by(stride) {
                let _ = write!(out, "{name}");
                for x in p {
                    let _ = write!(out, ",{x}");
                }
                out.push('\n');
            }
        };
        rows("interior", &self.interior, 1);
        rows("initial", &self.initial, 1);
        for (k, set) in self.boundary.iter().enumerate() {
            let name = if self.boundary.len() == 1 {
                "boundary".to_string()
            } else {
                format!("boundary{}", k + 1)
            };
            rows(&name, &set.points, 2);
        }
        let g = self.pole_group.max(1);
        for group in self.pole.chunks_exact(2 * g * self.dim) {
            rows("pole", &group[..g * self.dim], 1);
        }
        out
    }
}

fn time_box(problem: &ProblemSpec) -> (f64, f64) {
    (0.0, problem.domain.t_train)
}

/// Batch for `problem` with its configured counts.
pub fn build_batch(problem: &ProblemSpec, seed: u64) -> Result<SampleBatch> {
    build_batch_sized(problem, BatchCounts::of(problem), seed)
}

pub fn build_batch_sized(
    problem: &ProblemSpec,
    counts: BatchCounts,
    seed: u64,
) -> Result<SampleBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = problem.geometry;
    let tb = time_box(problem);
    let params = shape.parameter_box();
    let dim = params.len() + 1;

    let mut interior_box = params.clone();
    if matches!(shape, Shape::Sphere { .. } | Shape::Ellipsoid { .. }) {
        interior_box[0] = (DELTA_POLE, PI - DELTA_POLE);
    }
    interior_box.push(tb);
    let interior = lhs(counts.n_f, &interior_box, &mut rng);

    let initial_params = lhs(counts.n_0, &params, &mut rng);
    let mut initial = Vec::with_capacity(counts.n_0 * dim);
    let mut initial_position = Vec::new();
    let mut initial_velocity = Vec::new();
    for p in initial_params.chunks_exact(params.len()) {
        initial.extend_from_slice(p);
        initial.push(0.0);
        if let Some(c) = shape.curve() {
            initial_position.extend(curve_initial(c, p[0]));
            initial_velocity.extend(curve_initial_velocity(c, problem.velocity, p[0])?);
        } else if let Some(s) = shape.surface() {
            initial_position.extend(surface_initial(s, p[0], p[1]));
            initial_velocity.extend(surface_initial_velocity(s, problem.velocity, p[0], p[1]));
        }
    }

    let periodic = |coord: usize, rng: &mut ChaCha8Rng| {
        // Sample the remaining coordinates, then pin `coord` to 0 and 2π.
        let mut free: Vec<(f64, f64)> = params.clone();
        free.remove(coord);
        free.push(tb);
        let samples = lhs(counts.n_b, &free, rng);
        let mut points = Vec::with_capacity(2 * counts.n_b * dim);
        for s in samples.chunks_exact(dim - 1) {
            for end in [0.0, TAU] {
                let mut p = s.to_vec();
                p.insert(coord, end);
                points.extend(p);
            }
        }
        PeriodicSet { coord, points }
    };
    let mode = shape.surface().map(|s| s.mode());
    let boundary = match mode {
        None => vec![periodic(0, &mut rng)],
        Some(SurfaceMode::Polar) => vec![periodic(1, &mut rng)],
        Some(SurfaceMode::Toroidal) => vec![periodic(0, &mut rng), periodic(1, &mut rng)],
    };

    let g = problem.sampling.pole_group;
    let pole = if mode == Some(SurfaceMode::Polar) {
        let groups = counts.n_p / g;
        let u2s = lhs(groups * g, &[(0.0, TAU)], &mut rng);
        let ts = lhs(groups, &[tb], &mut rng);
        let mut pts = Vec::with_capacity(2 * groups * g * 3);
        for (k, &t) in ts.iter().enumerate() {
            for u1 in [0.0, PI] {
                for &u2 in &u2s[k * g..(k + 1) * g] {
                    pts.extend([u1, u2, t]);
                }
            }
        }
        pts
    } else {
        Vec::new()
    };

    Ok(SampleBatch {
        dim,
        interior,
        initial,
        initial_position,
        initial_velocity,
        boundary,
        pole,
        pole_group: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::presets;
    use proptest::prelude::*;

    fn stratified(points: &[f64], dim: usize, k: usize, (lo, hi): (f64, f64)) -> bool {
        let n = points.len() / dim;
        let mut seen = vec![false; n];
        for p in points.chunks_exact(dim) {
            let s = (((p[k] - lo) / (hi - lo) * n as f64).floor() as usize).min(n - 1);
            if seen[s] {
                return false;
            }
            seen[s] = true;
        }
        true
    }

    #[test]
    fn four_points_one_per_stratum() {
        let mut x = lhs_seeded(4, &[(0.0, 1.0)], 7);
        x.sort_by(f64::total_cmp);
        for (i, v) in x.iter().enumerate() {
            assert!(*v >= i as f64 * 0.25 && *v <= (i + 1) as f64 * 0.25);
        }
        assert_eq!(lhs_seeded(4, &[(0.0, 1.0)], 7), lhs_seeded(4, &[(0.0, 1.0)], 7));
    }

    #[test]
    fn empirical_cdf_at_stratum_edges() {
        let n = 10_000;
        let pts = lhs_seeded(n, &[(0.0, TAU), (0.0, 1.0)], 3);
        for (k, hi) in [(0, TAU), (1, 1.0)] {
            let mut col: Vec<f64> = pts.chunks_exact(2).map(|p| p[k] / hi).collect();
            col.sort_by(f64::total_cmp);
            for j in (0..=n).step_by(97) {
                let edge = j as f64 / n as f64;
                let below = col.partition_point(|&v| v < edge) as f64 / n as f64;
                assert!((below - edge).abs() <= 1.5 / n as f64);
            }
        }
    }

    #[test]
    fn curve_batch_targets() {
        let p = presets::by_name("circle-r0-b0-desk").unwrap();
        let b = build_batch(&p, 11).unwrap();
        assert_eq!(b.n_interior(), 5_000);
        assert_eq!(b.n_initial(), 100);
        assert_eq!(b.boundary.len(), 1);
        assert_eq!(b.boundary[0].pairs(2), 100);
        assert!(b.pole.is_empty());
        assert!(b.interior.chunks_exact(2).all(|x| x[1] >= 0.0 && x[1] <= 1.1));
        for (i, x) in b.initial.chunks_exact(2).enumerate() {
            let (c, s) = (x[0].cos(), x[0].sin());
            assert!((b.initial_position[2 * i] - c).abs() < 1e-15);
            assert!((b.initial_position[2 * i + 1] - s).abs() < 1e-15);
            assert_eq!(&b.initial_velocity[2 * i..2 * i + 2], &[0.0, 0.0]);
        }
        for pair in b.boundary[0].points.chunks_exact(4) {
            assert_eq!((pair[0], pair[2]), (0.0, TAU));
            assert_eq!(pair[1], pair[3]);
        }
        let csv = b.to_csv();
        assert_eq!(csv.lines().count(), 1 + 5_000 + 100 + 100);
    }

    #[test]
    fn sphere_batch_has_pole_groups() {
        let p = presets::by_name("sphere-r0-b0-desk").unwrap();
        let b = build_batch(&p, 5).unwrap();
        assert_eq!(b.n_pole(), 100);
        let g = b.pole_group;
        for group in b.pole.chunks_exact(2 * g * 3) {
            let t = group[2];
            for (k, x) in group.chunks_exact(3).enumerate() {
                assert_eq!(x[0], if k < g { 0.0 } else { PI });
                assert_eq!(x[2], t);
            }
            for k in 0..g {
                assert_eq!(group[3 * k + 1], group[3 * (g + k) + 1]);
            }
        }
        assert!(b.interior.chunks_exact(3).all(|x| x[0] >= DELTA_POLE && x[0] <= PI - DELTA_POLE));
        assert_eq!(b.to_csv().lines().count(), 1 + 4_000 + 100 + 100 + 100);
    }

    #[test]
    fn torus_batch_has_two_boundaries_and_no_pole() {
        let p = presets::by_name("torus-r0-b0-desk").unwrap();
        let b = build_batch(&p, 5).unwrap();
        assert!(b.pole.is_empty());
        assert_eq!(b.boundary.iter().map(|s| s.coord).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn scaled_counts_keep_whole_groups() {
        let c = BatchCounts { n_f: 4000, n_0: 100, n_b: 100, n_p: 100 };
        assert_eq!(c.scaled(0.25, 4), BatchCounts { n_f: 1000, n_0: 25, n_b: 25, n_p: 24 });
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn every_set_is_stratified(seed in any::<u64>(), name in 0usize..3) {
            let preset = ["circle-r0-b0-desk", "sphere-r0-b0-desk", "torus-r1-b0-desk"][name];
            let p = presets::by_name(preset).unwrap();
            let b = build_batch(&p, seed).unwrap();
            let bounds = {
                let mut v = p.geometry.parameter_box();
                if name == 1 {
                    v[0] = (DELTA_POLE, PI - DELTA_POLE);
                }
                v.push((0.0, p.domain.t_train));
                v
            };
            for (k, &bk) in bounds.iter().enumerate() {
                prop_assert!(stratified(&b.interior, b.dim, k, bk));
            }
            let params = p.geometry.parameter_box();
            for (k, &bk) in params.iter().enumerate() {
                prop_assert!(stratified(&b.initial, b.dim, k, bk));
            }
            for set in &b.boundary {
                let lo: Vec<f64> = set.points.chunks_exact(b.dim).step_by(2).flatten().copied().collect();
                for k in 0..b.dim {
                    if k == set.coord {
                        continue;
                    }
                    let bk = if k == b.dim - 1 { (0.0, p.domain.t_train) } else { params[k] };
                    prop_assert!(stratified(&lo, b.dim, k, bk));
                }
            }
        }
    }
}
