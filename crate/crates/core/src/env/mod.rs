//! Episodic environment contract shared by all benchmarks, plus the
//! name-keyed registry used to construct them from configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{KinematicChain, KinematicsError, Pose3};

pub mod arm;
pub mod tasks;
pub mod wheeled;

pub use arm::{HlrConfig, HlrEnv, LlrConfig, LlrEnv};
pub use tasks::{TaskFile, TaskFileError};
pub use wheeled::{MlfConfig, MlfEnv, MpoConfig, MpoEnv};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("task for benchmark '{task}' given to a '{env}' environment")]
    BenchmarkMismatch { env: Benchmark, task: Benchmark },
    #[error("task setting {task:?} does not match environment setting {env}")]
    SettingMismatch { env: Setting, task: Option<Setting> },
    #[error("step called before reset")]
    NotReset,
    #[error("step called after the episode finished")]
    EpisodeFinished,
    #[error("action {action} out of range for {count} actions")]
    ActionOutOfRange { action: usize, count: usize },
    #[error("invalid task '{name}': {reason}")]
    InvalidTask { name: String, reason: String },
    #[error("unknown benchmark '{0}'")]
    UnknownBenchmark(String),
    #[error("unknown setting '{0}' (expected ss or sss)")]
    UnknownSetting(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Hlr,
    Llr,
    Mlf,
    Mpo,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [Benchmark::Hlr, Benchmark::Llr, Benchmark::Mlf, Benchmark::Mpo];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Hlr => "hlr",
            Benchmark::Llr => "llr",
            Benchmark::Mlf => "mlf",
            Benchmark::Mpo => "mpo",
        }
    }

    pub fn is_wheeled(self) -> bool {
        matches!(self, Benchmark::Mlf | Benchmark::Mpo)
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().trim_end_matches("-k") {
            "hlr" => Ok(Benchmark::Hlr),
            "llr" => Ok(Benchmark::Llr),
            "mlf" => Ok(Benchmark::Mlf),
            "mpo" => Ok(Benchmark::Mpo),
            _ => Err(EnvError::UnknownBenchmark(s.to_string())),
        }
    }
}

/// Wheeled-robot observation/action setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Population-coded ground truth, full steering action space.
    #[default]
    Ss,
    /// As `Ss`, with steering delegated to a fixed heading controller.
    Sss,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Ss => "ss",
            Setting::Sss => "sss",
        })
    }
}

impl FromStr for Setting {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(Setting::Ss),
            "sss" => Ok(Setting::Sss),
            _ => Err(EnvError::UnknownSetting(s.to_string())),
        }
    }
}

/// One population-code group inside a raster row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeGroup {
    pub row: usize,
    pub offset: usize,
    pub len: usize,
}

/// Encoding of an observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsLayout {
    /// Current and goal hand positions.
    ArmHlr,
    /// Current and goal hand positions, seven joint angles, active joint.
    ArmLlr,
    /// Population-coded raster `rows x width`, flattened row-major.
    PopCode { width: usize, groups: &'static [CodeGroup] },
}

pub const ROWS: usize = 3;

impl ObsLayout {
    pub fn len(&self) -> usize {
        match self {
            ObsLayout::ArmHlr => 6,
            ObsLayout::ArmLlr => 14,
            ObsLayout::PopCode { width, .. } => ROWS * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub layout: ObsLayout,
}

impl Observation {
    pub fn new(values: Vec<f64>, layout: ObsLayout) -> Self {
        debug_assert_eq!(values.len(), layout.len());
        Self { values, layout }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Checks the layout invariant: length, finiteness, and exactly one hot
    /// pixel per population-code group with zeros elsewhere.
    pub fn is_valid(&self) -> bool {
        if self.values.len() != self.layout.len() || !self.values.iter().all(|v| v.is_finite()) {
            return false;
        }
        match self.layout {
            ObsLayout::PopCode { width, groups } => {
                let mut covered = vec![false; self.values.len()];
                for g in groups {
                    let start = g.row * width + g.offset;
                    let cells = &self.values[start..start + g.len];
                    if cells.iter().filter(|&&v| v == 1.0).count() != 1 || cells.iter().any(|&v| v != 0.0 && v != 1.0) {
                        return false;
                    }
                    covered[start..start + g.len].iter_mut().for_each(|c| *c = true);
                }
                self.values.iter().zip(&covered).all(|(&v, &c)| c || v == 0.0)
            }
            _ => true,
        }
    }

    /// Hot index of each population-code group, in layout order.
    pub fn hot_indices(&self) -> Vec<usize> {
        match self.layout {
            ObsLayout::PopCode { width, groups } => groups
                .iter()
                .map(|g| {
                    let start = g.row * width + g.offset;
                    self.values[start..start + g.len].iter().position(|&v| v == 1.0).unwrap_or(usize::MAX)
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    /// The environment ended the episode (goal reached, line lost, contact).
    pub terminated: bool,
    /// The step budget ran out.
    pub truncated: bool,
    /// Ground-truth diagnostics for logging. Learners must not read this.
    pub info: BTreeMap<&'static str, f64>,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// What a task asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskGoal {
    Pose([f64; 3]),
    Tracks(Vec<usize>),
}

impl TaskGoal {
    pub fn pose(&self) -> Option<Pose3> {
        match self {
            TaskGoal::Pose([x, y, z]) => Some(Pose3::new(*x, *y, *z)),
            TaskGoal::Tracks(_) => None,
        }
    }

    pub fn tracks(&self) -> Option<&[usize]> {
        match self {
            TaskGoal::Tracks(t) => Some(t),
            TaskGoal::Pose(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub benchmark: Benchmark,
    pub goal: TaskGoal,
    pub step_budget: usize,
    pub episode_budget: Option<usize>,
    pub setting: Option<Setting>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |reason: &str| EnvError::InvalidTask { name: self.name.clone(), reason: reason.to_string() };
        if self.step_budget == 0 {
            return Err(bad("step budget must be at least 1"));
        }
        match (&self.goal, self.benchmark.is_wheeled()) {
            (TaskGoal::Pose(p), false) => {
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(bad("goal must be finite"));
                }
            }
            (TaskGoal::Tracks(tracks), true) => {
                if tracks.is_empty() {
                    return Err(bad("at least one track is required"));
                }
                if let Some(&t) = tracks.iter().find(|&&t| t >= wheeled::TRACK_COUNT) {
                    return Err(bad(&format!("track index {t} out of range")));
                }
            }
            (TaskGoal::Pose(_), true) => return Err(bad("wheeled tasks take a track list")),
            (TaskGoal::Tracks(_), false) => return Err(bad("arm tasks take a goal position")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<TaskSpec>,
    pub seed: u64,
}

impl TaskSequence {
    pub fn new(tasks: Vec<TaskSpec>, seed: u64) -> Result<Self, EnvError> {
        if tasks.is_empty() {
            return Err(EnvError::InvalidTask { name: "<sequence>".into(), reason: "no tasks".into() });
        }
        for t in &tasks {
            t.validate()?;
        }
        Ok(Self { tasks, seed })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Reset/step episodic interface implemented by every benchmark.
pub trait Environment: Send {
    fn benchmark(&self) -> Benchmark;

    fn observation_len(&self) -> usize;

    /// Number of actions the learner chooses from.
    fn action_count(&self) -> usize;

    /// Starts a new episode of `task`. Equal seeds give equal initial states.
    fn reset(&mut self, task: &TaskSpec, episode_seed: u64) -> Result<Observation, EnvError>;

    fn step(&mut self, action: Action) -> Result<StepResult, EnvError>;

    /// Whether the current (or just finished) episode counts as a success.
    fn succeeded(&self) -> bool;
}

/// Step counter shared by the environments.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct EpisodeClock {
    pub steps: usize,
    pub budget: usize,
    pub active: bool,
}

impl EpisodeClock {
    pub fn start(budget: usize) -> Self {
        Self { steps: 0, budget, active: true }
    }

    pub fn check(&self, action: Action, count: usize) -> Result<(), EnvError> {
        if self.budget == 0 {
            return Err(EnvError::NotReset);
        }
        if !self.active {
            return Err(EnvError::EpisodeFinished);
        }
        if action.0 >= count {
            return Err(EnvError::ActionOutOfRange { action: action.0, count });
        }
        Ok(())
    }

    /// Advances one step; returns `truncated` given whether the step terminated.
    pub fn tick(&mut self, terminated: bool) -> bool {
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.budget;
        if terminated || truncated {
            self.active = false;
        }
        truncated
    }
}

pub(crate) fn check_benchmark(env: Benchmark, task: &TaskSpec) -> Result<(), EnvError> {
    if env != task.benchmark {
        return Err(EnvError::BenchmarkMismatch { env, task: task.benchmark });
    }
    task.validate()
}

/// Per-benchmark environment options. Every field has a default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Chain description file; the bundled Panda-style chain when absent.
    pub chain: Option<std::path::PathBuf>,
    pub hlr: HlrConfig,
    pub llr: LlrConfig,
    pub mlf: MlfConfig,
    pub mpo: MpoConfig,
}

impl EnvConfig {
    pub fn load_chain(&self) -> Result<KinematicChain, EnvError> {
        Ok(match &self.chain {
            Some(path) => KinematicChain::from_file(Path::new(path))?,
            None => KinematicChain::panda(),
        })
    }
}

pub type EnvFactory = fn(&EnvConfig) -> Result<Box<dyn Environment>, EnvError>;

/// Environments registered by benchmark name.
pub struct EnvRegistry {
    entries: BTreeMap<String, EnvFactory>,
}

impl Default for EnvRegistry {
    fn default() -> Self {
        let mut reg = Self { entries: BTreeMap::new() };
        reg.register("hlr", |cfg| Ok(Box::new(HlrEnv::new(cfg.hlr.clone(), &cfg.load_chain()?))));
        reg.register("llr", |cfg| Ok(Box::new(LlrEnv::new(cfg.llr.clone(), cfg.load_chain()?)?)));
        reg.register("mlf", |cfg| Ok(Box::new(MlfEnv::new(cfg.mlf.clone()))));
        reg.register("mpo", |cfg| Ok(Box::new(MpoEnv::new(cfg.mpo.clone()))));
        reg
    }
}

impl EnvRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, factory: EnvFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, cfg: &EnvConfig) -> Result<Box<dyn Environment>, EnvError> {
        let factory = self.entries.get(name).ok_or_else(|| EnvError::UnknownBenchmark(name.to_string()))?;
        factory(cfg)
    }
}
