//! Experiment configuration (`ProblemSpec`) and the shipped presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FlowParams, Shape, VelocityProfile};
use crate::network::{InputMap, NetworkShape};
use crate::optim::{AdamConfig, LbfgsConfig};

/// Environment variable that overrides the output root directory.
pub const OUTPUT_ROOT_ENV: &str = "HMCF_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub geometry: Shape,
    #[serde(default = "default_velocity")]
    pub velocity: VelocityProfile,
    #[serde(default)]
    pub beta: f64,
    pub domain: Domain,
    pub network: NetworkSpec,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub optim: OptimSpec,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_name() -> String {
    "run".into()
}

fn default_velocity() -> VelocityProfile {
    VelocityProfile::Constant { r1: 0.0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub t_train: f64,
    /// Horizon for snapshots; times past `t_train` are extrapolation.
    #[serde(default)]
    pub t_display: Option<f64>,
}

impl Domain {
    pub fn t_display(&self) -> f64 {
        self.t_display.unwrap_or(self.t_train)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Map each input coordinate affinely onto `[-1, 1]`.
    #[serde(default)]
    pub normalize_inputs: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub n_f: usize,
    pub n_0: usize,
    pub n_b: usize,
    /// Pole samples per pole; defaults to `n_b`.
    #[serde(default)]
    pub n_p: Option<usize>,
    /// Pole samples sharing one time value; the pole anchor is their mean.
    #[serde(default = "default_pole_group")]
    pub pole_group: usize,
}

fn default_pole_group() -> usize {
    4
}

impl SamplingSpec {
    pub fn n_p(&self) -> usize {
        self.n_p.unwrap_or(self.n_b)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub curve: CurveSchedule,
    pub surface: SurfaceSchedule,
}

/// Three-phase curve training: Adam, Adam at a lower rate, L-BFGS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSchedule {
    pub adam1_steps: u64,
    pub adam1_lr: f64,
    pub adam2_steps: u64,
    pub adam2_lr: f64,
    pub lbfgs_iters: usize,
    /// Steps `i < warmup_steps` (1-based) of the first phase use
    /// `warmup_weight` for the initial and boundary terms.
    pub warmup_steps: u64,
    pub warmup_weight: f64,
}

impl Default for CurveSchedule {
    fn default() -> Self {
        Self {
            adam1_steps: 20_000,
            adam1_lr: 1e-3,
            adam2_steps: 60_000,
            adam2_lr: 1e-4,
            lbfgs_iters: 500,
            warmup_steps: 2_000,
            warmup_weight: 100.0,
        }
    }
}

/// Constraint weight used while the 1-based step is below `until`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightTier {
    pub until: u64,
    pub weight: f64,
}

/// Resampled Adam with tiered weights and OneCycle, then L-BFGS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSchedule {
    pub adam_steps: u64,
    pub max_lr: f64,
    pub warmup_fraction: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
    /// Ordered by `until`; weight 1 applies after the last tier.
    pub tiers: Vec<WeightTier>,
    pub clip: f64,
    pub lbfgs_iters: usize,
    pub validation_every: u64,
    /// Validation batch counts as a fraction of the training counts.
    pub validation_fraction: f64,
}

impl Default for SurfaceSchedule {
    fn default() -> Self {
        Self {
            adam_steps: 100_000,
            max_lr: 1e-3,
            warmup_fraction: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
            tiers: vec![
                WeightTier {
                    until: 10_000,
                    weight: 1000.0,
                },
                WeightTier {
                    until: 20_000,
                    weight: 100.0,
                },
            ],
            clip: 1.0,
            lbfgs_iters: 500,
            validation_every: 500,
            validation_fraction: 0.25,
        }
    }
}

impl SurfaceSchedule {
    /// Constraint weight at 1-based step `i`.
    pub fn weight_at(&self, i: u64) -> f64 {
        self.tiers
            .iter()
            .find(|t| i < t.until)
            .map_or(1.0, |t| t.weight)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSpec {
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// `+1` subtracts the tangential term of the surface residual, `-1`
    /// adds it.
    pub tangential_sign: f64,
    /// Couple the north and south pole anchors as antipodes.
    pub antipodal: bool,
    /// Also penalize `X_u1` at the poles.
    pub pole_u1_terms: bool,
    /// Single-threaded evaluation with a fixed reduction order.
    pub reproducible: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            tangential_sign: 1.0,
            antipodal: true,
            pole_u1_terms: false,
            reproducible: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub sample: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { init: 0, sample: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSpec {
    pub time_samples: usize,
    /// Curve parameter samples; surfaces use `u1_samples × u2_samples`.
    pub u_samples: usize,
    pub u1_samples: usize,
    pub u2_samples: usize,
    /// Times at which snapshot CSVs are written, as fractions of
    /// `t_display`.
    pub snapshot_fractions: [f64; 5],
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self {
            time_samples: 100,
            u_samples: 200,
            u1_samples: 10,
            u2_samples: 20,
            snapshot_fractions: [0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Run directory; defaults to `runs/<name>`.
    pub dir: Option<PathBuf>,
}

impl ProblemSpec {
    /// Parses a config. A top-level `[run]` table, as written into run
    /// manifests, is ignored.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)
            .map_err(|e| Error::config("config", e.to_string().trim().to_string()))?;
        table.remove("run");
        let spec: Self = table.try_into().map_err(|e: toml::de::Error| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("config")
                .to_string();
            Error::config(field, e.to_string().trim().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Fully resolved TOML, with every default written out.
    pub fn to_toml(&self) -> String {
        let mut resolved = self.clone();
        resolved.domain.t_display = Some(self.domain.t_display());
        resolved.sampling.n_p = Some(self.sampling.n_p());
        toml::to_string(&resolved).expect("problem spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.velocity.validate()?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be finite and >= 0"));
        }
        let t = self.domain.t_train;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::config("domain.t_train", "must be positive"));
        }
        if !(self.domain.t_display() >= t) {
            return Err(Error::config("domain.t_display", "must be >= t_train"));
        }
        self.network_shape().validate()?;
        let s = &self.sampling;
        for (name, n) in [("sampling.n_f", s.n_f), ("sampling.n_0", s.n_0), ("sampling.n_b", s.n_b)] {
            if n == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if s.pole_group == 0 {
            return Err(Error::config("sampling.pole_group", "must be at least 1"));
        }
        if !self.geometry.is_curve() && !s.n_p().is_multiple_of(s.pole_group) {
            return Err(Error::config(
                "sampling.n_p",
                format!("must be a multiple of pole_group ({})", s.pole_group),
            ));
        }
        if !(self.flags.tangential_sign == 1.0 || self.flags.tangential_sign == -1.0) {
            return Err(Error::config("flags.tangential_sign", "must be +1 or -1"));
        }
        let c = &self.schedule.curve;
        if !(c.adam1_lr > 0.0 && c.adam2_lr > 0.0) {
            return Err(Error::config("schedule.curve", "learning rates must be positive"));
        }
        let sf = &self.schedule.surface;
        if sf.tiers.windows(2).any(|w| w[0].until >= w[1].until) {
            return Err(Error::config("schedule.surface.tiers", "must be ordered by `until`"));
        }
        if !(sf.clip > 0.0) {
            return Err(Error::config("schedule.surface.clip", "must be positive"));
        }
        if !(sf.validation_fraction > 0.0 && sf.validation_fraction <= 1.0) {
            return Err(Error::config(
                "schedule.surface.validation_fraction",
                "must lie in (0, 1]",
            ));
        }
        self.surface_lr().validate()?;
        let lb = &self.optim.lbfgs;
        if lb.history == 0 || lb.max_line_search == 0 || !(lb.initial_step > 0.0) {
            return Err(Error::config("optim.lbfgs", "history, max_line_search and initial_step must be positive"));
        }
        if !(0.0 < lb.c1 && lb.c1 < lb.c2 && lb.c2 < 1.0) {
            return Err(Error::config("optim.lbfgs", "need 0 < c1 < c2 < 1"));
        }
        Ok(())
    }

    pub fn network_shape(&self) -> NetworkShape {
        let (l, m) = (self.network.hidden_layers, self.network.hidden_width);
        if self.geometry.is_curve() {
            NetworkShape::curve(l, m)
        } else {
            NetworkShape::surface(l, m)
        }
    }

    pub fn input_map(&self) -> InputMap {
        let mut bounds = self.geometry.parameter_box();
        bounds.push((0.0, self.domain.t_train));
        if self.network.normalize_inputs {
            InputMap::normalizing(&bounds)
        } else {
            InputMap::identity(bounds.len())
        }
    }

    pub fn flow(&self) -> FlowParams {
        FlowParams {
            beta: self.beta,
            tangential_sign: self.flags.tangential_sign,
        }
    }

    pub fn surface_lr(&self) -> crate::optim::LrSchedule {
        let s = &self.schedule.surface;
        crate::optim::LrSchedule::OneCycle {
            max_lr: s.max_lr,
            total_steps: s.adam_steps,
            warmup_fraction: s.warmup_fraction,
            div_factor: s.div_factor,
            final_div_factor: s.final_div_factor,
        }
    }

    /// Output directory after applying the [`OUTPUT_ROOT_ENV`] override.
    pub fn output_dir(&self) -> PathBuf {
        let dir = self
            .output
            .dir
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(&self.name));
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(
                dir.strip_prefix("runs").map(Path::to_path_buf).unwrap_or(dir),
            ),
            _ => dir,
        }
    }
}

/// Named experiment settings. Desk-scale presets cut the budgets so a run
/// fits on a workstation CPU.
pub mod presets {
    use super::*;

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum Scale {
        Full,
        Desk,
    }

    fn velocity_tag(v: VelocityProfile) -> String {
        match v {
            VelocityProfile::Constant { r1: 0.0 } => "r0".into(),
            VelocityProfile::Constant { r1 } if r1 > 0.0 => format!("r{r1}"),
            VelocityProfile::Constant { r1 } => format!("rm{}", -r1),
            VelocityProfile::SinU => "sin".into(),
            VelocityProfile::CosU => "cos".into(),
        }
    }

    fn base(name: String, geometry: Shape, velocity: VelocityProfile, beta: f64) -> ProblemSpec {
        ProblemSpec {
            name,
            geometry,
            velocity,
            beta,
            domain: Domain {
                t_train: 1.0,
                t_display: None,
            },
            network: NetworkSpec {
                hidden_layers: 7,
                hidden_width: 50,
                normalize_inputs: false,
            },
            sampling: SamplingSpec {
                n_f: 20_000,
                n_0: 200,
                n_b: 200,
                n_p: None,
                pole_group: default_pole_group(),
            },
            schedule: Schedule::default(),
            optim: OptimSpec::default(),
            flags: Flags::default(),
            seeds: Seeds::default(),
            evaluation: EvaluationSpec::default(),
            output: OutputSpec::default(),
        }
    }

    fn curve(geometry: Shape, velocity: VelocityProfile, beta: f64, scale: Scale) -> ProblemSpec {
        let scale_tag = match scale {
            Scale::Full => "full",
            Scale::Desk => "desk",
        };
        let name = format!(
            "{}-{}-b{beta}-{scale_tag}",
            geometry.name(),
            velocity_tag(velocity)
        );
        let mut p = base(name, geometry, velocity, beta);
        let circle_r1 = match velocity {
            VelocityProfile::Constant { r1 } => Some(r1),
            _ => None,
        };
        p.domain = match (geometry, circle_r1) {
            (Shape::Circle { .. }, Some(r1)) if r1 > 0.0 => Domain {
                t_train: 3.3,
                t_display: Some(3.4),
            },
            (Shape::Circle { .. }, _) => Domain {
                t_train: 1.1,
                t_display: Some(1.2),
            },
            _ => Domain {
                t_train: 1.0,
                t_display: Some(1.2),
            },
        };
        if scale == Scale::Desk {
            p.network.hidden_layers = 5;
            p.network.hidden_width = 25;
            p.sampling.n_f = 5_000;
            p.sampling.n_0 = 100;
            p.sampling.n_b = 100;
            p.schedule.curve.adam1_steps = 10_000;
            p.schedule.curve.adam2_steps = 5_000;
            p.schedule.curve.lbfgs_iters = 200;
        }
        p
    }

    fn surface(geometry: Shape, velocity: VelocityProfile, beta: f64, scale: Scale) -> ProblemSpec {
        let scale_tag = match scale {
            Scale::Full => "full",
            Scale::Desk => "desk",
        };
        let name = format!(
            "{}-{}-b{beta}-{scale_tag}",
            geometry.name(),
            velocity_tag(velocity)
        );
        let mut p = base(name, geometry, velocity, beta);
        p.network.hidden_layers = 6;
        p.network.hidden_width = 100;
        p.domain = match (geometry, velocity) {
            (Shape::Sphere { .. }, VelocityProfile::Constant { r1 }) if r1 > 0.0 => Domain {
                t_train: 1.5,
                t_display: Some(1.65),
            },
            (Shape::Sphere { .. }, _) => Domain {
                t_train: 0.7,
                t_display: Some(0.8),
            },
            _ => Domain {
                t_train: 1.5,
                t_display: Some(1.5),
            },
        };
        if scale == Scale::Desk {
            p.network.hidden_layers = 4;
            p.network.hidden_width = 50;
            p.sampling.n_f = 4_000;
            p.sampling.n_0 = 100;
            p.sampling.n_b = 100;
            p.sampling.n_p = Some(100);
            let s = &mut p.schedule.surface;
            s.adam_steps = 15_000;
            s.tiers = vec![
                WeightTier {
                    until: 1_500,
                    weight: 1000.0,
                },
                WeightTier {
                    until: 3_000,
                    weight: 100.0,
                },
            ];
            s.lbfgs_iters = 100;
        }
        p
    }

    /// Every shipped preset, full-scale and desk-scale.
    pub fn all() -> Vec<ProblemSpec> {
        let mut out = Vec::new();
        let constants = |values: &[f64]| -> Vec<VelocityProfile> {
            values
                .iter()
                .map(|&r1| VelocityProfile::Constant { r1 })
                .collect()
        };
        for scale in [Scale::Desk, Scale::Full] {
            for v in constants(&[0.0, 1.0]) {
                out.push(curve(Shape::Circle { r0: 1.0 }, v, 0.0, scale));
            }
            let ellipse = Shape::Ellipse { a: 1.5, b: 1.0 };
            let mut profiles = constants(&[0.0, 1.0, -1.0]);
            profiles.extend([VelocityProfile::SinU, VelocityProfile::CosU]);
            for &beta in &[0.0, 1.0, 3.0, 5.0] {
                for &v in &profiles {
                    out.push(curve(ellipse, v, beta, scale));
                }
            }
            for v in constants(&[0.0, 1.0]) {
                out.push(surface(Shape::Sphere { r0: 1.0 }, v, 0.0, scale));
            }
            for v in constants(&[0.0, 1.0, -1.0]) {
                out.push(surface(
                    Shape::Ellipsoid {
                        a: 1.5,
                        b: 1.0,
                        c: 0.5,
                    },
                    v,
                    0.0,
                    scale,
                ));
                out.push(surface(
                    Shape::Torus {
                        major_radius: 2.0,
                        minor_radius: 1.0,
                    },
                    v,
                    0.0,
                    scale,
                ));
            }
        }
        out
    }

    pub fn names() -> Vec<String> {
        all().into_iter().map(|p| p.name).collect()
    }

    pub fn by_name(name: &str) -> Option<ProblemSpec> {
        all().into_iter().find(|p| p.name == name)
    }
}
