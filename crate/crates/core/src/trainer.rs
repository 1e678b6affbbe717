//! Training schedules for curves and surfaces, the loss history, and run
//! directories.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::config::{ProblemSpec, Seeds};
use crate::error::{Error, Result};
use crate::loss::{loss_and_gradient, LossOptions, LossReport, LossWeights};
use crate::network::{init_xavier, write_checkpoint, Checkpoint, Network};
use crate::optim::{clip_gradient, lbfgs_run, Adam, LbfgsReport};
use crate::sampling::{build_batch, build_batch_sized, BatchCounts, SampleBatch};

pub const LOSS_CSV: &str = "loss.csv";
pub const MANIFEST: &str = "manifest.toml";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.json";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";

pub const CSV_HEADER: &str = "step,lr,w_f,w_0,w_b,w_p,pde,ic,bc,pole,total";

/// One line of the loss history. `lr` is 0 for L-BFGS steps.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub step: u64,
    pub lr: f64,
    pub report: LossReport,
}

impl LossRow {
    pub fn csv_line(&self) -> String {
        let r = &self.report;
        let w = &r.weights;
        let (w_p, pole) = match r.pole {
            Some(p) => (w.pole.to_string(), p.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step, self.lr, w.pde, w.ic, w.bc, w_p, r.pde, r.ic, r.bc, pole, r.total
        )
    }
}

pub fn history_csv(rows: &[LossRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 120);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Lowest unit-weight total seen so far and the parameters that reached it.
#[derive(Clone, Debug, PartialEq)]
pub struct BestState {
    pub params: Vec<f64>,
    pub step: u64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub name: String,
    pub history: Vec<LossRow>,
    /// Parameters after the last completed step.
    pub network: Network,
    pub final_step: u64,
    pub best: BestState,
    pub lbfgs: Option<LbfgsReport>,
    pub wall_clock: Duration,
    /// Interior points skipped across all evaluations.
    pub skipped_points: u64,
    pub seeds: Seeds,
    /// Set when training stopped on a non-finite value; `network` then
    /// holds the last finite parameters.
    pub divergence: Option<String>,
}

impl RunRecord {
    pub fn best_network(&self) -> Network {
        let mut net = self.network.clone();
        net.params.values_mut().copy_from_slice(&self.best.params);
        net
    }
}

/// Receives each history row as it is recorded.
pub type RowSink<'a> = &'a mut (dyn FnMut(&LossRow) + Send);

/// Optional inputs to a training run.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Start from these parameters and skip the steps up to the
    /// checkpoint's step. Optimizer state starts fresh.
    pub resume: Option<&'a Checkpoint>,
    /// Called after each history row is recorded.
    pub on_row: Option<RowSink<'a>>,
}

/// Runs the schedule matching the problem's geometry. In reproducible mode
/// evaluation is confined to one thread.
pub fn train(problem: &ProblemSpec, opts: TrainOptions<'_>) -> Result<RunRecord> {
    problem.validate()?;
    #[cfg(feature = "parallel")]
    if problem.flags.reproducible {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::config("flags.reproducible", e.to_string()))?;
        return pool.install(|| dispatch(problem, opts));
    }
    dispatch(problem, opts)
}

fn dispatch(problem: &ProblemSpec, opts: TrainOptions<'_>) -> Result<RunRecord> {
    if problem.geometry.is_curve() {
        train_curve(problem, opts)
    } else {
        train_surface(problem, opts)
    }
}

fn initial_network(problem: &ProblemSpec, resume: Option<&Checkpoint>) -> Result<(Network, u64)> {
    match resume {
        Some(ckpt) => {
            let net = ckpt.to_network()?;
            if net.shape() != problem.network_shape() {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint network {:?} does not match config {:?}",
                    net.shape(),
                    problem.network_shape()
                )));
            }
            Ok((net, ckpt.step))
        }
        None => {
            let params = init_xavier(problem.network_shape(), problem.seeds.init);
            Ok((Network::with_input_map(params, problem.input_map())?, 0))
        }
    }
}

fn loss_options(problem: &ProblemSpec) -> LossOptions {
    LossOptions {
        flow: problem.flow(),
        antipodal: problem.flags.antipodal,
        pole_u1_terms: problem.flags.pole_u1_terms,
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence { .. } | Error::NumericOverflow { .. })
}

/// Shared bookkeeping of both schedules.
struct Run<'a> {
    net: Network,
    opts: LossOptions,
    history: Vec<LossRow>,
    best: BestState,
    skipped: u64,
    on_row: Option<RowSink<'a>>,
    step: u64,
}

impl<'a> Run<'a> {
    fn new(net: Network, opts: LossOptions, step: u64, on_row: Option<RowSink<'a>>) -> Self {
        let best = BestState {
            params: net.params.values().to_vec(),
            step,
            total: f64::INFINITY,
        };
        Self {
            net,
            opts,
            history: Vec::new(),
            best,
            skipped: 0,
            on_row,
            step,
        }
    }

    fn record(&mut self, row: LossRow) {
        self.skipped += row.report.skipped as u64;
        if let Some(f) = self.on_row.as_deref_mut() {
            f(&row);
        }
        self.history.push(row);
    }

    fn offer_best(&mut self, params: &[f64], step: u64, total: f64) {
        if total < self.best.total {
            self.best = BestState {
                params: params.to_vec(),
                step,
                total,
            };
        }
    }

    /// One Adam step on `batch`. The row reports the loss at the parameters
    /// before the update. Returns the report for the caller's bookkeeping.
    fn adam_step(
        &mut self,
        adam: &mut Adam,
        batch: &SampleBatch,
        weights: LossWeights,
        lr: f64,
        clip: Option<f64>,
        grad: &mut [f64],
    ) -> Result<LossReport> {
        self.step += 1;
        let report = loss_and_gradient(&self.net, batch, &self.opts, weights, Some(grad))?;
        if !report.total.is_finite() {
            return Err(Error::Divergence {
                what: "loss",
                index: 0,
            });
        }
        if let Some(c) = clip {
            clip_gradient(grad, c);
        }
        let before = self.net.params.values().to_vec();
        if let Err(e) = adam.step(self.net.params.values_mut(), grad, lr) {
            self.net.params.values_mut().copy_from_slice(&before);
            return Err(e);
        }
        self.record(LossRow {
            step: self.step,
            lr,
            report: report.clone(),
        });
        Ok(report)
    }

    /// L-BFGS with unit weights on `batch`, one row per iteration.
    fn lbfgs(&mut self, batch: &SampleBatch, iters: usize, cfg: &crate::optim::LbfgsConfig) -> Result<Option<LbfgsReport>> {
        if iters == 0 {
            return Ok(None);
        }
        let mut params = self.net.params.values().to_vec();
        let scratch = RefCell::new(self.net.clone());
        let seen: RefCell<Vec<LossReport>> = RefCell::new(Vec::new());
        let opts = self.opts;
        let mut objective = |x: &[f64], g: &mut [f64]| -> Result<f64> {
            let mut net = scratch.borrow_mut();
            net.params.values_mut().copy_from_slice(x);
            let r = loss_and_gradient(&net, batch, &opts, LossWeights::UNIT, Some(g))?;
            let total = r.total;
            let mut seen = seen.borrow_mut();
            if seen.len() > 64 {
                seen.remove(0);
            }
            seen.push(r);
            Ok(total)
        };
        let base = self.step;
        let mut rows = Vec::new();
        let report = lbfgs_run(&mut params, &mut objective, iters, cfg, |k, f| {
            let report = seen
                .borrow()
                .iter()
                .rev()
                .find(|r| r.total == f)
                .cloned();
            rows.push((base + k as u64, f, report));
        })?;
        self.net.params.values_mut().copy_from_slice(&params);
        for (step, f, report) in rows {
            let report = match report {
                Some(r) => r,
                None => LossReport {
                    total: f,
                    ..loss_and_gradient(&self.net, batch, &self.opts, LossWeights::UNIT, None)?
                },
            };
            self.record(LossRow {
                step,
                lr: 0.0,
                report,
            });
        }
        self.step = base + report.iterations as u64;
        Ok(Some(report))
    }

    fn finish(self, problem: &ProblemSpec, started: Instant, lbfgs: Option<LbfgsReport>, divergence: Option<String>) -> RunRecord {
        RunRecord {
            name: problem.name.clone(),
            history: self.history,
            network: self.net,
            final_step: self.step,
            best: self.best,
            lbfgs,
            wall_clock: started.elapsed(),
            skipped_points: self.skipped,
            seeds: problem.seeds,
            divergence,
        }
    }
}

/// Adam at the first rate with warm-up weights on the initial and boundary
/// terms, Adam at the second rate, then L-BFGS, all on one fixed batch.
/// Every step updates the parameters. The best state is the lowest total
/// under unit weights among the recorded steps and the final state.
pub fn train_curve(problem: &ProblemSpec, opts: TrainOptions<'_>) -> Result<RunRecord> {
    if !problem.geometry.is_curve() {
        return Err(Error::config("geometry", "curve schedule needs a curve"));
    }
    let started = Instant::now();
    let (net, start) = initial_network(problem, opts.resume)?;
    let s = problem.schedule.curve;
    let batch = build_batch(problem, problem.seeds.sample)?;
    let mut run = Run::new(net, loss_options(problem), start, opts.on_row);
    let mut grad = vec![0.0; run.net.params.len()];
    let adam_total = s.adam1_steps + s.adam2_steps;

    let outcome = (|| -> Result<Option<LbfgsReport>> {
        let mut adam = Adam::new(problem.optim.adam, grad.len());
        while run.step < adam_total {
            let i = run.step + 1;
            let (weights, lr) = if i <= s.adam1_steps {
                let w = if i < s.warmup_steps { s.warmup_weight } else { 1.0 };
                (LossWeights::conditions(w), s.adam1_lr)
            } else {
                (LossWeights::UNIT, s.adam2_lr)
            };
            let params = run.net.params.values().to_vec();
            let report = run.adam_step(&mut adam, &batch, weights, lr, None, &mut grad)?;
            if weights == LossWeights::UNIT {
                run.offer_best(&params, i - 1, report.total);
            }
        }
        let remaining = (adam_total + s.lbfgs_iters as u64).saturating_sub(run.step) as usize;
        let report = run.lbfgs(&batch, remaining, &problem.optim.lbfgs)?;
        Ok(report)
    })();

    finish_with_final(run, problem, &batch, started, outcome)
}

fn finish_with_final(
    mut run: Run<'_>,
    problem: &ProblemSpec,
    batch: &SampleBatch,
    started: Instant,
    outcome: Result<Option<LbfgsReport>>,
) -> Result<RunRecord> {
    match outcome {
        Ok(lbfgs) => {
            let last = loss_and_gradient(&run.net, batch, &run.opts, LossWeights::UNIT, None)?;
            let params = run.net.params.values().to_vec();
            run.offer_best(&params, run.step, last.total);
            Ok(run.finish(problem, started, lbfgs, None))
        }
        Err(e) if is_divergence(&e) => Ok(run.finish(problem, started, None, Some(e.to_string()))),
        Err(e) => Err(e),
    }
}

/// Seed of the held-out validation batch.
fn validation_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
}

/// Adam on a fresh batch every step with tiered constraint weights,
/// gradient clipping and a OneCycle rate; the best state by unit-weight
/// loss on a fixed validation batch; then L-BFGS from the best state on the
/// fixed batch.
pub fn train_surface(problem: &ProblemSpec, opts: TrainOptions<'_>) -> Result<RunRecord> {
    if problem.geometry.is_curve() {
        return Err(Error::config("geometry", "surface schedule needs a surface"));
    }
    let started = Instant::now();
    let (net, start) = initial_network(problem, opts.resume)?;
    let s = &problem.schedule.surface;
    let schedule = problem.surface_lr();
    schedule.validate()?;
    let seed = problem.seeds.sample;
    let fixed = build_batch(problem, seed)?;
    let counts = BatchCounts::of(problem).scaled(s.validation_fraction, problem.sampling.pole_group);
    let validation = build_batch_sized(problem, counts, validation_seed(seed))?;
    let mut run = Run::new(net, loss_options(problem), start, opts.on_row);
    let mut grad = vec![0.0; run.net.params.len()];

    let validate = |run: &mut Run<'_>| -> Result<()> {
        let r = loss_and_gradient(&run.net, &validation, &run.opts, LossWeights::UNIT, None)?;
        let params = run.net.params.values().to_vec();
        run.offer_best(&params, run.step, r.total);
        Ok(())
    };

    let outcome = (|| -> Result<Option<LbfgsReport>> {
        validate(&mut run)?;
        let mut adam = Adam::new(problem.optim.adam, grad.len());
        while run.step < s.adam_steps {
            let i = run.step + 1;
            let batch = build_batch(problem, seed ^ i)?;
            let weights = LossWeights::conditions(s.weight_at(i));
            run.adam_step(&mut adam, &batch, weights, schedule.lr(i - 1), Some(s.clip), &mut grad)?;
            if i.is_multiple_of(s.validation_every.max(1)) || i == s.adam_steps {
                validate(&mut run)?;
            }
        }
        let remaining = (s.adam_steps + s.lbfgs_iters as u64).saturating_sub(run.step) as usize;
        if remaining > 0 {
            let best = run.best.params.clone();
            run.net.params.values_mut().copy_from_slice(&best);
        }
        let report = run.lbfgs(&fixed, remaining, &problem.optim.lbfgs)?;
        if report.is_some() {
            validate(&mut run)?;
        }
        Ok(report)
    })();

    match outcome {
        Ok(lbfgs) => Ok(run.finish(problem, started, lbfgs, None)),
        Err(e) if is_divergence(&e) => Ok(run.finish(problem, started, None, Some(e.to_string()))),
        Err(e) => Err(e),
    }
}

/// Resolved config followed by a `[run]` table. The `[run]` table is
/// ignored when the manifest is read back as a config.
pub fn manifest_text(problem: &ProblemSpec, record: &RunRecord) -> String {
    let mut out = problem.to_toml();
    out.push_str("\n[run]\n");
    let _ = writeln!(out, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "seed_init = {}", record.seeds.init);
    let _ = writeln!(out, "seed_sample = {}", record.seeds.sample);
    let _ = writeln!(out, "wall_clock_seconds = {}", record.wall_clock.as_secs_f64());
    let _ = writeln!(out, "final_step = {}", record.final_step);
    let _ = writeln!(out, "best_step = {}", record.best.step);
    if record.best.total.is_finite() {
        let _ = writeln!(out, "best_total = {}", record.best.total);
    }
    let _ = writeln!(out, "skipped_points = {}", record.skipped_points);
    if let Some(l) = &record.lbfgs {
        let _ = writeln!(out, "lbfgs_iterations = {}", l.iterations);
        let _ = writeln!(out, "lbfgs_stop = \"{:?}\"", l.stop);
    }
    if let Some(d) = &record.divergence {
        let _ = writeln!(out, "divergence = {:?}", d);
    }
    out
}

/// Paths written by [`write_run`].
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub loss_csv: PathBuf,
    pub best: PathBuf,
    pub final_checkpoint: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            manifest: dir.join(MANIFEST),
            loss_csv: dir.join(LOSS_CSV),
            best: dir.join(BEST_CHECKPOINT),
            final_checkpoint: dir.join(FINAL_CHECKPOINT),
        }
    }
}

/// Writes the manifest, the loss history and the best and final
/// checkpoints into `dir`.
pub fn write_run(dir: &Path, problem: &ProblemSpec, record: &RunRecord) -> Result<RunFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = RunFiles::in_dir(dir);
    std::fs::write(&files.manifest, manifest_text(problem, record))
        .map_err(|e| Error::io(&files.manifest, e))?;
    std::fs::write(&files.loss_csv, history_csv(&record.history))
        .map_err(|e| Error::io(&files.loss_csv, e))?;
    let best_total = record.best.total.is_finite().then_some(record.best.total);
    write_checkpoint(
        &files.best,
        &Checkpoint::from_network(&record.best_network(), record.best.step, best_total),
    )?;
    let final_total = record.history.last().map(|r| r.report.total);
    write_checkpoint(
        &files.final_checkpoint,
        &Checkpoint::from_network(&record.network, record.final_step, final_total),
    )?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::presets;

    fn tiny(name: &str) -> ProblemSpec {
        let mut p = presets::by_name(name).unwrap();
        p.network.hidden_layers = 2;
        p.network.hidden_width = 8;
        p.sampling.n_f = 64;
        p.sampling.n_0 = 16;
        p.sampling.n_b = 16;
        if !p.geometry.is_curve() {
            p.sampling.n_p = Some(16);
        }
        p.flags.reproducible = true;
        p
    }

    fn zero_steps(p: &mut ProblemSpec) {
        p.schedule.curve.adam1_steps = 0;
        p.schedule.curve.adam2_steps = 0;
        p.schedule.curve.lbfgs_iters = 0;
        p.schedule.surface.adam_steps = 0;
        p.schedule.surface.lbfgs_iters = 0;
    }

    #[test]
    fn zero_step_schedules_return_initial_params() {
        for name in ["circle-r0-b0-desk", "sphere-r0-b0-desk"] {
            let mut p = tiny(name);
            zero_steps(&mut p);
            let rec = train(&p, TrainOptions::default()).unwrap();
            let init = init_xavier(p.network_shape(), p.seeds.init);
            assert!(rec.history.is_empty());
            assert_eq!(rec.network.params, init);
            assert_eq!(rec.best.params, init.values());
        }
    }

    #[test]
    fn curve_weight_trace() {
        let mut p = tiny("circle-r0-b0-desk");
        p.schedule.curve.adam1_steps = 30;
        p.schedule.curve.adam2_steps = 5;
        p.schedule.curve.warmup_steps = 20;
        p.schedule.curve.lbfgs_iters = 3;
        let rec = train(&p, TrainOptions::default()).unwrap();
        for row in &rec.history {
            let w = row.report.weights;
            let expected = if row.step < 20 { 100.0 } else { 1.0 };
            assert_eq!((w.pde, w.ic, w.bc), (1.0, expected, expected), "step {}", row.step);
            let lr = match row.step {
                1..=30 => 1e-3,
                31..=35 => 1e-4,
                _ => 0.0,
            };
            assert_eq!(row.lr, lr);
        }
        let steps: Vec<u64> = rec.history.iter().map(|r| r.step).collect();
        assert_eq!(steps, (1..=steps.len() as u64).collect::<Vec<_>>());
        assert!(rec.history.len() >= 36);
        let csv = history_csv(&rec.history);
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.lines().nth(1).unwrap().starts_with("1,0.001,1,100,100,,"));
    }

    #[test]
    fn surface_weight_trace_follows_tiers() {
        let mut p = tiny("sphere-r0-b0-desk");
        let s = &mut p.schedule.surface;
        s.adam_steps = 12;
        s.tiers = vec![
            crate::config::WeightTier { until: 4, weight: 1000.0 },
            crate::config::WeightTier { until: 8, weight: 100.0 },
        ];
        s.validation_every = 5;
        s.lbfgs_iters = 2;
        let rec = train(&p, TrainOptions::default()).unwrap();
        for row in rec.history.iter().filter(|r| r.step <= 12) {
            let w = match row.step {
                1..=3 => 1000.0,
                4..=7 => 100.0,
                _ => 1.0,
            };
            assert_eq!(row.report.weights, LossWeights::conditions(w));
            assert!(row.report.pole.is_some());
            assert!(row.lr > 0.0);
        }
        assert!(rec.best.total.is_finite());
    }

    #[test]
    fn default_tier_boundaries() {
        let s = crate::config::SurfaceSchedule::default();
        assert_eq!(s.weight_at(5_000), 1000.0);
        assert_eq!(s.weight_at(15_000), 100.0);
        assert_eq!(s.weight_at(25_000), 1.0);
    }

    #[test]
    fn reproducible_runs_match_bitwise() {
        let mut p = tiny("ellipse-r1-b1-desk");
        p.schedule.curve.adam1_steps = 15;
        p.schedule.curve.adam2_steps = 5;
        p.schedule.curve.lbfgs_iters = 5;
        let a = history_csv(&train(&p, TrainOptions::default()).unwrap().history);
        let b = history_csv(&train(&p, TrainOptions::default()).unwrap().history);
        assert_eq!(a, b);
    }

    #[test]
    fn curve_training_lowers_the_loss() {
        let mut p = tiny("circle-r0-b0-desk");
        p.schedule.curve.adam1_steps = 200;
        p.schedule.curve.adam2_steps = 0;
        p.schedule.curve.warmup_steps = 0;
        p.schedule.curve.lbfgs_iters = 20;
        let rec = train(&p, TrainOptions::default()).unwrap();
        let first = rec.history.first().unwrap().report.total;
        assert!(rec.best.total < 0.2 * first, "{first} -> {}", rec.best.total);
        for row in rec.history.iter().filter(|r| r.report.weights == LossWeights::UNIT) {
            assert!(rec.best.total <= row.report.total);
        }
    }

    #[test]
    fn resume_skips_completed_steps() {
        let mut p = tiny("circle-r0-b0-desk");
        p.schedule.curve.adam1_steps = 10;
        p.schedule.curve.adam2_steps = 0;
        p.schedule.curve.lbfgs_iters = 0;
        let first = train(&p, TrainOptions::default()).unwrap();
        let ckpt = Checkpoint::from_network(&first.network, first.final_step, None);
        p.schedule.curve.adam2_steps = 4;
        let rec = train(&p, TrainOptions { resume: Some(&ckpt), on_row: None }).unwrap();
        let steps: Vec<u64> = rec.history.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![11, 12, 13, 14]);
    }

    #[test]
    fn run_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = tiny("circle-r0-b0-desk");
        zero_steps(&mut p);
        p.schedule.curve.adam1_steps = 3;
        let rec = train(&p, TrainOptions::default()).unwrap();
        let files = write_run(dir.path(), &p, &rec).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, [BEST_CHECKPOINT, FINAL_CHECKPOINT, LOSS_CSV, MANIFEST]);
        let back = ProblemSpec::from_path(&files.manifest).unwrap();
        assert_eq!(back.to_toml(), p.to_toml());
        let csv = std::fs::read_to_string(&files.loss_csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
}
