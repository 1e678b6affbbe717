//! The work behind each subcommand, free of argument parsing.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ProblemSpec;
use crate::error::{Error, Result};
use crate::geometry::{Shape, SurfaceMode, VelocityProfile};
use crate::network::{read_checkpoint, Checkpoint, Evaluator, JetOrder};
use crate::oracle::{
    compare_mean_radius, mean_radius_trajectory, normality_defect, periodicity_defect,
    pole_variance, radial_rk4, reference_trajectory, time_grid, ParamGrid, RadialKind,
    RadialSolution,
};
use crate::sampling::build_batch;
use crate::trainer::{train, write_run, RowSink, RunFiles, RunRecord, TrainOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGENCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Divergence maps to 1; every other failure to 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::NumericOverflow { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

pub const NO_ORACLE: &str = "no oracle for this geometry";

/// The radial reference for circles and spheres moving with a constant
/// normal speed: `(kind, r0, r1, beta)`.
pub fn radial_case(problem: &ProblemSpec) -> Option<(RadialKind, f64, f64, f64)> {
    let VelocityProfile::Constant { r1 } = problem.velocity else {
        return None;
    };
    match problem.geometry {
        Shape::Circle { r0 } => Some((RadialKind::Curve, r0, r1, problem.beta)),
        Shape::Sphere { r0 } => Some((RadialKind::Sphere, r0, r1, problem.beta)),
        _ => None,
    }
}

/// Trains `problem` and writes its run directory. A diverged run still
/// writes its files and is returned as `Ok`; check `record.divergence`.
pub fn cmd_train<'a>(
    problem: &ProblemSpec,
    dir: &Path,
    resume: Option<&'a Checkpoint>,
    on_row: Option<RowSink<'a>>,
) -> Result<(RunRecord, RunFiles)> {
    problem.validate()?;
    let record = train(problem, TrainOptions { resume, on_row })?;
    let files = write_run(dir, problem, &record)?;
    Ok((record, files))
}

/// Closed parameter grid for plots: endpoints included.
pub fn display_grid(shape: &Shape, eval: &crate::config::EvaluationSpec) -> ParamGrid {
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        let n = n.max(2);
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    };
    match shape.surface().map(|s| s.mode()) {
        None => ParamGrid {
            dim: 1,
            points: lin(0.0, TAU, eval.u_samples),
        },
        Some(mode) => {
            let u1_hi = if mode == SurfaceMode::Polar { PI } else { TAU };
            let mut points = Vec::new();
            for u1 in lin(0.0, u1_hi, eval.u1_samples) {
                for u2 in lin(0.0, TAU, eval.u2_samples) {
                    points.extend([u1, u2]);
                }
            }
            ParamGrid { dim: 2, points }
        }
    }
}

/// Model positions on the display grid at each time, one row per
/// `(t, parameters)`: `t,u,x,y` for curves and `t,u1,u2,x,y,z` for
/// surfaces.
pub fn snapshot_csv<E: Evaluator + ?Sized>(model: &E, grid: &ParamGrid, times: &[f64]) -> Result<String> {
    let d = model.output_dim();
    let mut out = String::from(if grid.dim == 1 { "t,u,x,y\n" } else { "t,u1,u2,x,y,z\n" });
    for &t in times {
        let values = model.evaluate(&grid.at_time(t), JetOrder::Value)?;
        for (u, x) in grid.points.chunks_exact(grid.dim).zip(values.chunks_exact(d)) {
            let _ = write!(out, "{t}");
            for v in u.iter().chain(x) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    /// Relative L2 error of the mean radius over `[0, T_train]`; `None`
    /// without an oracle.
    pub relative_l2: Option<f64>,
    pub closed_form: bool,
    /// Peak of the predicted mean radius over `[0, T_train]`.
    pub peak_radius: f64,
    /// Over `t ∈ [0.1 T_train, 0.8 T_train]`.
    pub normality_defect: f64,
    pub periodicity_defect: f64,
    pub pole_variance: Option<f64>,
    pub note: Option<String>,
    pub files: Vec<PathBuf>,
}

impl EvalSummary {
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        match self.relative_l2 {
            Some(e) => {
                let _ = writeln!(out, "relative_l2 = {e}");
                let source = if self.closed_form { "closed_form" } else { "rk4" };
                let _ = writeln!(out, "reference = \"{source}\"");
            }
            None => {
                let _ = writeln!(out, "reference = \"none\"");
            }
        }
        let _ = writeln!(out, "peak_radius = {}", self.peak_radius);
        let _ = writeln!(out, "normality_defect = {}", self.normality_defect);
        let _ = writeln!(out, "periodicity_defect = {}", self.periodicity_defect);
        if let Some(v) = self.pole_variance {
            let _ = writeln!(out, "pole_variance = {v}");
        }
        if let Some(n) = &self.note {
            let _ = writeln!(out, "note = {n:?}");
        }
        out
    }
}

fn write_file(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Diagnostics of `model` for `problem`; writes the trajectory, snapshot
/// and diagnostics files into `out_dir` when given.
pub fn eval_model<E: Evaluator + ?Sized>(
    problem: &ProblemSpec,
    model: &E,
    out_dir: Option<&Path>,
) -> Result<EvalSummary> {
    let ev = &problem.evaluation;
    let t_train = problem.domain.t_train;
    let t_display = problem.domain.t_display();
    let grid = ParamGrid::for_shape(&problem.geometry);
    let train_times = time_grid(t_train, ev.time_samples);

    let (comparison, note) = match radial_case(problem) {
        Some((kind, r0, r1, beta)) => (
            Some(compare_mean_radius(model, kind, (r0, r1, beta), &grid, &train_times)?),
            None,
        ),
        None => (None, Some(NO_ORACLE.to_string())),
    };
    let peak_radius = match &comparison {
        Some(c) => c.predicted.iter().cloned().fold(f64::MIN, f64::max),
        None => mean_radius_trajectory(model, &grid, &train_times)?
            .into_iter()
            .fold(f64::MIN, f64::max),
    };

    let window: Vec<f64> = time_grid(0.7 * t_train, 50)
        .into_iter()
        .map(|t| t + 0.1 * t_train)
        .collect();
    let periodic_n = if problem.geometry.is_curve() { ev.u_samples } else { ev.u1_samples };
    let polar = problem.geometry.surface().map(|s| s.mode()) == Some(SurfaceMode::Polar);
    let summary_base = EvalSummary {
        relative_l2: comparison.as_ref().map(|c| c.relative_l2),
        closed_form: comparison.as_ref().is_some_and(|c| c.closed_form),
        peak_radius,
        normality_defect: normality_defect(model, &grid, &window)?,
        periodicity_defect: periodicity_defect(model, &problem.geometry, periodic_n, &train_times)?,
        pole_variance: if polar {
            Some(pole_variance(model, ev.u2_samples, &train_times)?)
        } else {
            None
        },
        note,
        files: Vec::new(),
    };
    let Some(dir) = out_dir else {
        return Ok(summary_base);
    };

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut summary = summary_base;
    let mut files = Vec::new();

    // Mean radius over the display horizon, with the reference where it
    // exists.
    let display_times = time_grid(t_display, ev.time_samples);
    let predicted = mean_radius_trajectory(model, &grid, &display_times)?;
    let reference = radial_case(problem)
        .and_then(|(kind, r0, r1, beta)| reference_trajectory(kind, r0, r1, beta, &display_times).ok());
    let mut traj = String::from(if reference.is_some() {
        "t,mean_radius,reference\n"
    } else {
        "t,mean_radius\n"
    });
    for (k, (t, r)) in display_times.iter().zip(&predicted).enumerate() {
        match &reference {
            Some(reference) => {
                let _ = writeln!(traj, "{t},{r},{}", reference[k]);
            }
            None => {
                let _ = writeln!(traj, "{t},{r}");
            }
        }
    }
    write_file(dir.join("trajectory.csv"), &traj, &mut files)?;

    let snapshot_times: Vec<f64> = ev.snapshot_fractions.iter().map(|f| f * t_display).collect();
    let name = if problem.geometry.is_curve() {
        "curve_snapshots.csv"
    } else {
        "surface_snapshots.csv"
    };
    let snap = snapshot_csv(model, &display_grid(&problem.geometry, ev), &snapshot_times)?;
    write_file(dir.join(name), &snap, &mut files)?;

    summary.files = files.clone();
    let report = summary.to_toml();
    write_file(dir.join("diagnostics.toml"), &report, &mut files)?;
    summary.files = files;
    Ok(summary)
}

/// Loads `checkpoint`, checks it against `problem`, and evaluates it.
pub fn cmd_eval(checkpoint: &Path, problem: &ProblemSpec, out_dir: Option<&Path>) -> Result<EvalSummary> {
    let net = read_checkpoint(checkpoint)?.to_network()?;
    if net.shape() != problem.network_shape() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint network {:?} does not match config {:?}",
            net.shape(),
            problem.network_shape()
        )));
    }
    eval_model(problem, &net, out_dir)
}

/// RK4 radial trajectory as `t,r,v` rows, every `every`-th step plus the
/// last one.
pub fn oracle_csv(kind: RadialKind, r0: f64, r1: f64, beta: f64, dt: f64, every: usize) -> (String, RadialSolution) {
    let sol = radial_rk4(kind, r0, r1, beta, dt);
    let mut out = String::from("t,r,v\n");
    let n = sol.times.len();
    for i in (0..n).filter(|&i| i % every.max(1) == 0 || i + 1 == n) {
        let _ = writeln!(out, "{},{},{}", sol.times[i], sol.radii[i], sol.velocities[i]);
    }
    (out, sol)
}

/// LHS batch of `problem` as CSV, one row per sample.
pub fn sample_preview(problem: &ProblemSpec, seed: u64) -> Result<String> {
    problem.validate()?;
    Ok(build_batch(problem, seed)?.to_csv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::presets;
    use crate::network::FieldEvaluator;
    use crate::oracle::{ManufacturedCircle, ManufacturedSphere};

    #[test]
    fn manufactured_models_evaluate_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = presets::by_name("circle-r0-b0-desk").unwrap();
        let field = ManufacturedCircle::new(1.0, 0.0, 0.0, 1e-4);
        let s = eval_model(&p, &FieldEvaluator(&field), Some(dir.path())).unwrap();
        assert!(s.relative_l2.unwrap() < 1e-6);
        assert!(s.closed_form);
        assert!(s.normality_defect < 1e-12);
        assert!(s.periodicity_defect < 1e-12);
        let snap = std::fs::read_to_string(dir.path().join("curve_snapshots.csv")).unwrap();
        assert_eq!(snap.lines().count(), 1 + p.evaluation.u_samples * 5);

        let p = presets::by_name("sphere-r0-b0-desk").unwrap();
        let field = ManufacturedSphere::new(1.0, 0.0, 0.0, 1e-4);
        let s = eval_model(&p, &FieldEvaluator(&field), Some(dir.path())).unwrap();
        assert!(s.relative_l2.unwrap() < 1e-6);
        assert!(s.pole_variance.unwrap() < 1e-20);
        let snap = std::fs::read_to_string(dir.path().join("surface_snapshots.csv")).unwrap();
        let grid = p.evaluation.u1_samples * p.evaluation.u2_samples;
        assert_eq!(snap.lines().count(), 1 + grid * 5);
    }

    #[test]
    fn torus_declines_the_oracle() {
        let mut p = presets::by_name("torus-r0-b0-desk").unwrap();
        p.network.hidden_layers = 1;
        p.network.hidden_width = 4;
        let net = crate::network::Network::with_input_map(
            crate::network::init_xavier(p.network_shape(), 0),
            p.input_map(),
        )
        .unwrap();
        let s = eval_model(&p, &net, None).unwrap();
        assert_eq!(s.relative_l2, None);
        assert_eq!(s.note.as_deref(), Some(NO_ORACLE));
        assert_eq!(s.pole_variance, None);
    }

    #[test]
    fn oracle_final_times() {
        let (_, c) = oracle_csv(RadialKind::Curve, 1.0, 0.0, 0.0, 1e-4, 100);
        assert!((c.end_time() - 1.2533).abs() < 1e-3);
        let (csv, s) = oracle_csv(RadialKind::Sphere, 1.0, 0.0, 0.0, 1e-4, 100);
        assert!((s.end_time() - 0.8862).abs() < 1e-3);
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with(&s.end_time().to_string()));
    }

    #[test]
    fn preview_row_counts() {
        let p = presets::by_name("sphere-r0-b0-desk").unwrap();
        let csv = sample_preview(&p, 3).unwrap();
        assert_eq!(csv.lines().count(), 1 + 4_000 + 100 + 100 + 100);
    }

    #[test]
    fn divergence_exit_code() {
        assert_eq!(exit_code(&Error::Divergence { what: "loss", index: 0 }), 1);
        assert_eq!(exit_code(&Error::config("geometry", "missing")), 2);
    }
}
