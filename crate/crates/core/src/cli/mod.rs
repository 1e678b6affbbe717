//! Command-line front end.

pub mod commands;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{presets, ProblemSpec};
use crate::error::{Error, Result};
use crate::network::read_checkpoint;
use crate::oracle::RadialKind;

pub use commands::{exit_code, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "hmcf",
    version,
    about = "PINN solver for hyperbolic mean curvature flow",
    after_help = "Run directories default to runs/<name>; set HMCF_OUTPUT_ROOT to move that root."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ProblemSource {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Name of a shipped preset (see `hmcf presets`).
    #[arg(long)]
    pub preset: Option<String>,
}

impl ProblemSource {
    pub fn load(&self) -> Result<ProblemSpec> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ProblemSpec::from_path(path),
            (None, Some(name)) => presets::by_name(name)
                .ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`"))),
            (None, None) => Err(Error::config("config", "pass --config or --preset")),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OracleKind {
    Curve,
    Sphere,
}

impl From<OracleKind> for RadialKind {
    fn from(k: OracleKind) -> Self {
        match k {
            OracleKind::Curve => RadialKind::Curve,
            OracleKind::Sphere => RadialKind::Sphere,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its run directory.
    Train {
        #[command(flatten)]
        source: ProblemSource,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Run directory; overrides the config and the output root.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a loss line every N steps (0 for none).
        #[arg(long, default_value_t = 1000)]
        log_every: u64,
    },
    /// Evaluate a checkpoint: trajectory, snapshots and diagnostics.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        source: ProblemSource,
        /// Output directory; defaults to `<checkpoint dir>.eval`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the radial ODE and print `t,r,v` as CSV.
    Oracle {
        kind: OracleKind,
        r0: f64,
        r1: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Keep every N-th step.
        #[arg(long, default_value_t = 1)]
        every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one training batch as CSV.
    SamplePreview {
        #[command(flatten)]
        source: ProblemSource,
        /// Defaults to the config's sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped presets, or write them as TOML files.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn eval_dir(checkpoint: &Path) -> PathBuf {
    let parent = checkpoint.parent().unwrap_or(Path::new("."));
    let name = parent
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    parent.with_file_name(format!("{name}.eval"))
}

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Train {
            source,
            resume,
            out,
            log_every,
        } => {
            let problem = source.load()?;
            let dir = out.unwrap_or_else(|| problem.output_dir());
            let resume = resume.as_deref().map(read_checkpoint).transpose()?;
            let mut log = |row: &crate::trainer::LossRow| {
                if log_every > 0 && row.step.is_multiple_of(log_every) {
                    eprintln!("{}", row.csv_line());
                }
            };
            let (record, files) = commands::cmd_train(&problem, &dir, resume.as_ref(), Some(&mut log))?;
            eprintln!(
                "{}: {} steps in {:.1?}, run directory {}",
                record.name,
                record.final_step,
                record.wall_clock,
                files.dir.display()
            );
            match record.divergence {
                Some(msg) => {
                    eprintln!("error: {msg}");
                    Ok(EXIT_DIVERGENCE)
                }
                None => Ok(EXIT_OK),
            }
        }
        Command::Eval {
            checkpoint,
            source,
            out,
        } => {
            let problem = source.load()?;
            let dir = out.unwrap_or_else(|| eval_dir(&checkpoint));
            let summary = commands::cmd_eval(&checkpoint, &problem, Some(&dir))?;
            if let Some(note) = &summary.note {
                eprintln!("{note}");
            }
            emit(&summary.to_toml(), None)?;
            Ok(EXIT_OK)
        }
        Command::Oracle {
            kind,
            r0,
            r1,
            beta,
            dt,
            every,
            out,
        } => {
            if !(r0 > 0.0 && r0.is_finite()) {
                return Err(Error::config("r0", "must be positive"));
            }
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config("dt", "must be positive"));
            }
            let (csv, _) = commands::oracle_csv(kind.into(), r0, r1, beta, dt, every);
            emit(&csv, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::SamplePreview { source, seed, out } => {
            let problem = source.load()?;
            let csv = commands::sample_preview(&problem, seed.unwrap_or(problem.seeds.sample))?;
            emit(&csv, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Presets { write } => {
            match write {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    for p in presets::all() {
                        let path = dir.join(format!("{}.toml", p.name));
                        std::fs::write(&path, p.to_toml()).map_err(|e| Error::io(&path, e))?;
                    }
                }
                None => emit(&(presets::names().join("\n") + "\n"), None)?,
            }
            Ok(EXIT_OK)
        }
    }
}

