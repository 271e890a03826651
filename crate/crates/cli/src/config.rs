//! Run configuration: one JSON document describing model, schedule, grid and tasks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nadbound_core::bounds::DEFAULT_CERT_EPS;
use nadbound_core::model::MAX_ISING_SPINS;
use nadbound_core::random::{random_spline_schedule, rng};
use nadbound_core::{
    DenseTabulated, Hamiltonian, Ising64, LandauZener, ModelFile, OptimizeOptions, Schedule64, ScheduleFile,
    TwoLevelField,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Smallest accepted number of grid steps.
pub const MIN_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Simulate,
    Bounds,
    Qsl,
    Apt,
    Optimize,
    Reduce2,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Simulate, Task::Bounds, Task::Qsl, Task::Apt, Task::Optimize, Task::Reduce2];

    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Bounds => "bounds",
            Task::Qsl => "qsl",
            Task::Apt => "apt",
            Task::Optimize => "optimize",
            Task::Reduce2 => "reduce2",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `H = h·σ/2`, parameters `(h_x, h_y, h_z)`.
    TwoLevelField,
    /// `H = (ε σ_z + Δ σ_x)/2`, parameters `(ε, Δ)`.
    LandauZener,
    /// Parameters `(J, Γ)`; optional fixed longitudinal fields per spin.
    TransverseFieldIsing {
        spins: usize,
        #[serde(default)]
        longitudinal: Option<Vec<f64>>,
    },
    DenseTabulated { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Linear {
        #[serde(rename = "T")]
        duration: f64,
        from: Vec<f64>,
        to: Vec<f64>,
    },
    TrigAnnealing {
        #[serde(rename = "T")]
        duration: f64,
        from: Vec<f64>,
        to: Vec<f64>,
    },
    PiecewiseCubic {
        #[serde(rename = "T")]
        duration: f64,
        knots: Vec<nadbound_core::schedule::Knot>,
    },
    Tabulated {
        #[serde(rename = "T")]
        duration: f64,
        knots: Vec<nadbound_core::schedule::Knot>,
    },
    /// Two-level annealing from `(h0x, 0, 0)` to `(0, 0, hTz)`.
    Annealing {
        #[serde(rename = "T")]
        duration: f64,
        #[serde(default = "minus_one")]
        h0x: f64,
        #[serde(default = "minus_one", rename = "hTz")]
        htz: f64,
        #[serde(default)]
        trig: bool,
    },
    /// Natural spline through knots drawn from the run seed.
    RandomSpline {
        #[serde(rename = "T")]
        duration: f64,
        center: Vec<f64>,
        spread: f64,
        #[serde(default = "default_random_knots")]
        knots: usize,
    },
    File { path: PathBuf },
}

fn minus_one() -> f64 {
    -1.0
}

fn default_random_knots() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub dt_max: Option<f64>,
}

fn default_steps() -> usize {
    nadbound_core::dynamics::DEFAULT_STEPS
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            dt_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QslState {
    /// Normalized level projector (pure for non-degenerate levels).
    Uniform,
    /// Random mixed state inside the level, drawn from the run seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QslSpec {
    #[serde(default = "uniform")]
    pub state: QslState,
    #[serde(default = "default_qsl_slack")]
    pub slack: f64,
}

fn uniform() -> QslState {
    QslState::Uniform
}

fn default_qsl_slack() -> f64 {
    1e-8
}

impl Default for QslSpec {
    fn default() -> Self {
        Self {
            state: QslState::Uniform,
            slack: default_qsl_slack(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AptSpec {
    /// Quench window; defaults to the largest grid step.
    #[serde(default)]
    pub delta_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    /// Level whose bound is minimized.
    #[serde(default)]
    pub level: usize,
    #[serde(default = "default_n_knots")]
    pub n_knots: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_steps_per_segment")]
    pub steps_per_segment: usize,
}

fn default_n_knots() -> usize {
    OptimizeOptions::default().n_knots
}

fn default_budget() -> usize {
    OptimizeOptions::default().budget
}

fn default_restarts() -> usize {
    OptimizeOptions::default().restarts
}

fn default_steps_per_segment() -> usize {
    OptimizeOptions::default().steps_per_segment
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        Self {
            level: 0,
            n_knots: default_n_knots(),
            budget: default_budget(),
            restarts: default_restarts(),
            steps_per_segment: default_steps_per_segment(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub grid: GridSpec,
    /// Initial levels `n` reported against every final level.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default)]
    pub delta_deg: Option<f64>,
    #[serde(default = "default_cert_eps")]
    pub certify_eps: f64,
    #[serde(default)]
    pub qsl: QslSpec,
    #[serde(default)]
    pub apt: AptSpec,
    #[serde(default)]
    pub optimize: OptimizeSpec,
}

fn default_levels() -> Vec<usize> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("nadbound-out")
}

fn default_checkpoints() -> usize {
    20
}

fn default_cert_eps() -> f64 {
    DEFAULT_CERT_EPS
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt_max: Option<f64>,
    pub steps: Option<usize>,
    pub tasks: Option<Vec<Task>>,
}

impl RunConfig {
    /// Parses a config document; errors name the line, column and field.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            let field = e.path().to_string();
            CliError::Config(format!(
                "{origin}:{}:{}: field '{}': {}",
                inner.line(),
                inner.column(),
                if field.is_empty() { "." } else { &field },
                inner
            ))
        })
    }

    /// Reads a config file, resolving relative data paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.model {
            ModelSpec::DenseTabulated { file } => resolve(file),
            _ => {}
        }
        if let ScheduleSpec::File { path } = &mut cfg.schedule {
            resolve(path);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(out) = o.out {
            self.output_dir = out;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dt) = o.dt_max {
            self.grid.dt_max = Some(dt);
        }
        if let Some(k) = o.steps {
            self.grid.steps = k;
        }
        if let Some(tasks) = o.tasks {
            self.tasks = tasks;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("field '{field}': {msg}")));
        if self.tasks.is_empty() {
            return bad("tasks", "at least one task is required".into());
        }
        if self.grid.steps < MIN_STEPS {
            return bad("grid.steps", format!("{} is below the minimum of {MIN_STEPS}", self.grid.steps));
        }
        if let Some(dt) = self.grid.dt_max {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("grid.dt_max", format!("{dt} is not a positive step"));
            }
        }
        if self.levels.is_empty() {
            return bad("levels", "at least one level is required".into());
        }
        if self.checkpoints < 2 {
            return bad("checkpoints", "need at least 2 checkpoints".into());
        }
        if !(self.certify_eps >= 0.0) {
            return bad("certify_eps", format!("{} is negative", self.certify_eps));
        }
        if let Some(d) = self.delta_deg {
            if !(d > 0.0) {
                return bad("delta_deg", format!("{d} is not positive"));
            }
        }
        if let ModelSpec::TransverseFieldIsing { spins, .. } = &self.model {
            if *spins == 0 || *spins > MAX_ISING_SPINS {
                return bad("model.spins", format!("{spins} outside 1..={MAX_ISING_SPINS}"));
            }
        }
        if let ModelSpec::DenseTabulated { file } = &self.model {
            if !file.is_file() {
                return bad("model.file", format!("{} does not exist", file.display()));
            }
        }
        if let ScheduleSpec::File { path } = &self.schedule {
            if !path.is_file() {
                return bad("schedule.path", format!("{} does not exist", path.display()));
            }
        }
        if let ScheduleSpec::Annealing { .. } = self.schedule {
            if !matches!(self.model, ModelSpec::TwoLevelField) {
                return bad("schedule.kind", "the annealing preset needs the two-level-field model".into());
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<Box<dyn Hamiltonian<f64>>, CliError> {
        let model: Box<dyn Hamiltonian<f64>> = match &self.model {
            ModelSpec::TwoLevelField => Box::new(TwoLevelField),
            ModelSpec::LandauZener => Box::new(LandauZener),
            ModelSpec::TransverseFieldIsing { spins, longitudinal } => Box::new(
                Ising64::new(*spins, longitudinal.clone().unwrap_or_else(|| vec![0.0; *spins]))
                    .map_err(|e| CliError::Config(format!("field 'model': {e}")))?,
            ),
            ModelSpec::DenseTabulated { file } => {
                let text = std::fs::read_to_string(file)
                    .map_err(|e| CliError::Config(format!("field 'model.file': {}: {e}", file.display())))?;
                let mf: ModelFile = serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!("{}:{}:{}: {e}", file.display(), e.line(), e.column()))
                })?;
                let m: DenseTabulated<f64> =
                    mf.into_model().map_err(|e| CliError::Config(format!("field 'model.file': {e}")))?;
                Box::new(m)
            }
        };
        Ok(model)
    }

    pub fn build_schedule(&self) -> Result<Schedule64, CliError> {
        let err = |e: nadbound_core::Error| CliError::Config(format!("field 'schedule': {e}"));
        let file = |duration: f64, kind: &str, knots: &[nadbound_core::schedule::Knot]| ScheduleFile {
            duration,
            kind: kind.into(),
            knots: knots.to_vec(),
        };
        match &self.schedule {
            ScheduleSpec::Linear { duration, from, to } => {
                Schedule64::linear(*duration, from.clone(), to.clone()).map_err(err)
            }
            ScheduleSpec::TrigAnnealing { duration, from, to } => {
                Schedule64::trig_annealing(*duration, from.clone(), to.clone()).map_err(err)
            }
            ScheduleSpec::PiecewiseCubic { duration, knots } => {
                file(*duration, "piecewise-cubic", knots).into_schedule().map_err(err)
            }
            ScheduleSpec::Tabulated { duration, knots } => {
                file(*duration, "tabulated", knots).into_schedule().map_err(err)
            }
            ScheduleSpec::Annealing { duration, h0x, htz, trig } => {
                Schedule64::two_level_annealing(*duration, *h0x, *htz, *trig).map_err(err)
            }
            ScheduleSpec::RandomSpline {
                duration,
                center,
                spread,
                knots,
            } => {
                if !(*duration > 0.0) || *knots < 2 || center.is_empty() || !(*spread >= 0.0) {
                    return Err(CliError::Config(
                        "field 'schedule': random-spline needs T > 0, spread ≥ 0, a center and at least 2 knots".into(),
                    ));
                }
                Ok(random_spline_schedule(&mut rng(self.seed), center, *spread, *knots, *duration))
            }
            ScheduleSpec::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("field 'schedule.path': {}: {e}", path.display())))?;
                let sf: ScheduleFile = serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
                })?;
                sf.into_schedule().map_err(err)
            }
        }
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            n_knots: self.optimize.n_knots,
            budget: self.optimize.budget,
            restarts: self.optimize.restarts,
            steps_per_segment: self.optimize.steps_per_segment,
            seed: self.seed,
            ..OptimizeOptions::default()
        }
    }
}
