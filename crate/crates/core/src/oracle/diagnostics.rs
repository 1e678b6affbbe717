use std::f64::consts::{PI, TAU};

use super::{radial::uses_closed_form, reference_trajectory, relative_l2, RadialKind};
use crate::error::{Error, Result};
use crate::geometry::{Shape, SurfaceMode};
use crate::network::{Evaluator, JetOrder};

/// Parameter samples at which a model is probed, without the time
/// coordinate. `points` is row-major with `dim` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    pub dim: usize,
    pub points: Vec<f64>,
}

impl ParamGrid {
    /// `n` equally spaced angles in `[0, 2π)`.
    pub fn curve(n: usize) -> Self {
        Self {
            dim: 1,
            points: (0..n).map(|k| TAU * k as f64 / n as f64).collect(),
        }
    }

    /// `n1` cell midpoints in `(0, π)` times `n2` angles in `[0, 2π)`.
    pub fn polar(n1: usize, n2: usize) -> Self {
        let mut points = Vec::with_capacity(2 * n1 * n2);
        for i in 0..n1 {
            let u1 = PI * (i as f64 + 0.5) / n1 as f64;
            for j in 0..n2 {
                points.extend([u1, TAU * j as f64 / n2 as f64]);
            }
        }
        Self { dim: 2, points }
    }

    /// `n1 × n2` angles covering `[0, 2π)²`.
    pub fn toroidal(n1: usize, n2: usize) -> Self {
        let mut points = Vec::with_capacity(2 * n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                points.extend([TAU * i as f64 / n1 as f64, TAU * j as f64 / n2 as f64]);
            }
        }
        Self { dim: 2, points }
    }

    /// Default 200-sample grid for a shape.
    pub fn for_shape(shape: &Shape) -> Self {
        match shape.surface().map(|s| s.mode()) {
            None => Self::curve(200),
            Some(SurfaceMode::Polar) => Self::polar(10, 20),
            Some(SurfaceMode::Toroidal) => Self::toroidal(20, 10),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Space-time points `(params, t)` for every grid sample at time `t`.
    pub fn at_time(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * (self.dim + 1));
        for p in self.points.chunks_exact(self.dim) {
            out.extend_from_slice(p);
            out.push(t);
        }
        out
    }
}

/// `n` equally spaced times covering `[0, t_end]`.
pub fn time_grid(t_end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect(),
    }
}

fn check_dims<E: Evaluator + ?Sized>(eval: &E, grid: &ParamGrid) -> Result<()> {
    if eval.input_dim() != grid.dim + 1 {
        return Err(Error::ShapeMismatch(format!(
            "model takes {} inputs, grid has {} parameters plus time",
            eval.input_dim(),
            grid.dim
        )));
    }
    Ok(())
}

/// Mean distance of the model's points to their centroid at each time.
pub fn mean_radius_trajectory<E: Evaluator + ?Sized>(
    eval: &E,
    grid: &ParamGrid,
    times: &[f64],
) -> Result<Vec<f64>> {
    check_dims(eval, grid)?;
    let out_dim = eval.output_dim();
    times
        .iter()
        .map(|&t| {
            let values = eval.evaluate(&grid.at_time(t), JetOrder::Value)?;
            let n = (values.len() / out_dim) as f64;
            let mut centroid = vec![0.0; out_dim];
            for x in values.chunks_exact(out_dim) {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= n);
            let total: f64 = values
                .chunks_exact(out_dim)
                .map(|x| {
                    x.iter()
                        .zip(&centroid)
                        .map(|(v, c)| (v - c) * (v - c))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            Ok(total / n)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryComparison {
    pub times: Vec<f64>,
    pub predicted: Vec<f64>,
    pub reference: Vec<f64>,
    pub relative_l2: f64,
    /// Whether the reference came from a closed form rather than RK4.
    pub closed_form: bool,
}

/// Mean-radius trajectory of a model against the radial reference.
pub fn compare_mean_radius<E: Evaluator + ?Sized>(
    eval: &E,
    kind: RadialKind,
    (r0, r1, beta): (f64, f64, f64),
    grid: &ParamGrid,
    times: &[f64],
) -> Result<TrajectoryComparison> {
    let predicted = mean_radius_trajectory(eval, grid, times)?;
    let reference = reference_trajectory(kind, r0, r1, beta, times)?;
    Ok(TrajectoryComparison {
        relative_l2: relative_l2(&predicted, &reference)?,
        times: times.to_vec(),
        predicted,
        reference,
        closed_form: uses_closed_form(kind, r1, beta),
    })
}

/// Largest `|X_t·X_u|/(|X_t||X_u| + 1e-12)` over the grid, the times and
/// every parameter direction `u`.
pub fn normality_defect<E: Evaluator + ?Sized>(
    eval: &E,
    grid: &ParamGrid,
    times: &[f64],
) -> Result<f64> {
    check_dims(eval, grid)?;
    let d_in = eval.input_dim();
    let d_out = eval.output_dim();
    let comps = JetOrder::First.components(d_in);
    let t_comp = d_in;
    let mut worst: f64 = 0.0;
    for &t in times {
        let values = eval.evaluate(&grid.at_time(t), JetOrder::First)?;
        for point in values.chunks_exact(d_out * comps) {
            let comp = |c: usize| (0..d_out).map(move |o| point[o * comps + c]);
            let xt: Vec<f64> = comp(t_comp).collect();
            let nt = xt.iter().map(|v| v * v).sum::<f64>().sqrt();
            for c in 1..t_comp {
                let xu: Vec<f64> = comp(c).collect();
                let nu = xu.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = xt.iter().zip(&xu).map(|(a, b)| a * b).sum();
                worst = worst.max(dot.abs() / (nt * nu + 1e-12));
            }
        }
    }
    Ok(worst)
}

fn max_gap(a: &[f64], b: &[f64], dim: usize) -> f64 {
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Largest `|X(…, 0, …) − X(…, 2π, …)|` across every periodic parameter,
/// with the other parameter on `n` samples and `t` on `times`.
pub fn periodicity_defect<E: Evaluator + ?Sized>(
    eval: &E,
    shape: &Shape,
    n: usize,
    times: &[f64],
) -> Result<f64> {
    let d_out = eval.output_dim();
    // (periodic coordinate, free coordinate range) pairs.
    let pairs: Vec<(usize, Option<(f64, f64)>)> = match shape.surface().map(|s| s.mode()) {
        None => vec![(0, None)],
        Some(SurfaceMode::Polar) => vec![(1, Some((0.0, PI)))],
        Some(SurfaceMode::Toroidal) => vec![(0, Some((0.0, TAU))), (1, Some((0.0, TAU)))],
    };
    let dim = if shape.is_curve() { 2 } else { 3 };
    if eval.input_dim() != dim {
        return Err(Error::ShapeMismatch(format!(
            "model takes {} inputs, shape needs {dim}",
            eval.input_dim()
        )));
    }
    let mut worst: f64 = 0.0;
    for (periodic, free) in pairs {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for &t in times {
            let free_samples: Vec<f64> = match free {
                None => vec![0.0],
                Some((a, b)) => time_grid(b - a, n).into_iter().map(|s| a + s).collect(),
            };
            for s in free_samples {
                let mut p = vec![0.0; dim];
                p[dim - 1] = t;
                if dim == 3 {
                    p[1 - periodic] = s;
                }
                p[periodic] = 0.0;
                lo.extend_from_slice(&p);
                p[periodic] = TAU;
                hi.extend_from_slice(&p);
            }
        }
        let a = eval.evaluate(&lo, JetOrder::Value)?;
        let b = eval.evaluate(&hi, JetOrder::Value)?;
        worst = worst.max(max_gap(&a, &b, d_out));
    }
    Ok(worst)
}

/// Largest variance over `u2` of `X(u1, u2, t)` at `u1 ∈ {0, π}`, with `u2`
/// on `n` samples and `t` on `times`.
pub fn pole_variance<E: Evaluator + ?Sized>(eval: &E, n: usize, times: &[f64]) -> Result<f64> {
    if eval.input_dim() != 3 {
        return Err(Error::ShapeMismatch(
            "pole variance needs a surface model".into(),
        ));
    }
    let d_out = eval.output_dim();
    let u2s: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
    let mut worst: f64 = 0.0;
    for u1 in [0.0, PI] {
        for &t in times {
            let pts: Vec<f64> = u2s.iter().flat_map(|&u2| [u1, u2, t]).collect();
            let values = eval.evaluate(&pts, JetOrder::Value)?;
            let mut mean = vec![0.0; d_out];
            for x in values.chunks_exact(d_out) {
                for (m, v) in mean.iter_mut().zip(x) {
                    *m += v / n as f64;
                }
            }
            let var = values
                .chunks_exact(d_out)
                .map(|x| x.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
                .sum::<f64>()
                / n as f64;
            worst = worst.max(var);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FieldEvaluator, Network, NetworkShape, ParameterVector};
    use crate::oracle::{ManufacturedCircle, ManufacturedSphere};

    #[test]
    fn grids() {
        let g = ParamGrid::curve(4);
        assert_eq!(g.points, vec![0.0, PI / 2.0, PI, 1.5 * PI]);
        assert_eq!(g.at_time(0.5), vec![0.0, 0.5, PI / 2.0, 0.5, PI, 0.5, 1.5 * PI, 0.5]);
        let s = ParamGrid::polar(2, 3);
        assert_eq!(s.len(), 6);
        assert_eq!(&s.points[..2], &[PI / 4.0, 0.0]);
        assert_eq!(time_grid(1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn manufactured_circle_matches_reference() {
        let field = ManufacturedCircle::new(1.0, 0.0, 0.0, 1e-4);
        let eval = FieldEvaluator(&field);
        let times = time_grid(1.1, 100);
        let cmp = compare_mean_radius(
            &eval,
            RadialKind::Curve,
            (1.0, 0.0, 0.0),
            &ParamGrid::curve(200),
            &times,
        )
        .unwrap();
        assert!(cmp.closed_form);
        assert!(cmp.relative_l2 < 1e-10, "{}", cmp.relative_l2);
        assert!(normality_defect(&eval, &ParamGrid::curve(50), &times).unwrap() < 1e-12);
        let shape = Shape::Circle { r0: 1.0 };
        assert!(periodicity_defect(&eval, &shape, 10, &times).unwrap() < 1e-12);
    }

    #[test]
    fn manufactured_sphere_diagnostics() {
        let field = ManufacturedSphere::new(1.0, 0.0, 0.0, 1e-4);
        let eval = FieldEvaluator(&field);
        let times = time_grid(0.8, 20);
        let grid = ParamGrid::polar(10, 20);
        let cmp = compare_mean_radius(&eval, RadialKind::Sphere, (1.0, 0.0, 0.0), &grid, &times).unwrap();
        assert!(cmp.relative_l2 < 1e-10);
        assert!(pole_variance(&eval, 16, &times).unwrap() < 1e-20);
        let shape = Shape::Sphere { r0: 1.0 };
        assert!(periodicity_defect(&eval, &shape, 10, &times).unwrap() < 1e-12);
        assert!(normality_defect(&eval, &grid, &times).unwrap() < 1e-12);
    }

    #[test]
    fn constant_network_has_zero_radius() {
        let net = Network::new(ParameterVector::zeros(NetworkShape::curve(1, 3)));
        let r = mean_radius_trajectory(&net, &ParamGrid::curve(8), &[0.0, 1.0]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
        assert!(mean_radius_trajectory(&net, &ParamGrid::polar(2, 2), &[0.0]).is_err());
    }
}
