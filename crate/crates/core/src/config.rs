//! Experiment files: one TOML document per experiment.
//!
//! ```toml
//! name = "hlr-k-buffer5000"
//! benchmark = "hlr"
//! seeds = [0, 1, 2, 3]
//!
//! [train]
//! steps = 5000
//!
//! [learner]
//! buffer_capacity = 5000
//! ```
//!
//! Omitted learner keys take the benchmark's defaults. Relative paths resolve
//! against the directory holding the experiment file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::LearnerConfig;
use crate::env::arm::{hlr_default_tasks, llr_default_tasks};
use crate::env::wheeled::{wheeled_tasks, DEFAULT_WINDOW};
use crate::env::{Benchmark, EnvConfig, EnvError, TaskFile, TaskFileError, TaskSequence};
use crate::harness::{HarnessError, Protocol, RunConfig, TrainBudget};

/// Joint-grid resolution the default low-level goals are drawn on. The five
/// and nine action grids share these points, so both reach the same goals.
pub const LLR_GOAL_ACTIONS: usize = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Tasks(#[from] TaskFileError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSource {
    /// Task file; the built-in sequence for the benchmark when absent.
    pub file: Option<PathBuf>,
    /// Keep only the first `count` tasks (wheeled: number of windows).
    pub count: Option<usize>,
    /// Keep only these task indices, in this order.
    pub select: Option<Vec<usize>>,
    /// Tracks per wheeled task.
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub steps: Option<usize>,
    pub episodes: Option<usize>,
}

impl TrainSpec {
    pub fn budget(&self) -> Result<Option<TrainBudget>, ConfigError> {
        match (self.steps, self.episodes) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid("train: give steps or episodes, not both".into())),
            (Some(n), None) => Ok(Some(TrainBudget::Steps(n))),
            (None, Some(n)) => Ok(Some(TrainBudget::Episodes(n))),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub benchmark: Benchmark,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Results directory, relative to the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub tasks: TaskSource,
    #[serde(default)]
    pub train: TrainSpec,
    /// Greedy episodes per evaluated task; 20 for arm, 10 for wheeled when absent.
    #[serde(default)]
    pub eval_episodes: Option<usize>,
    #[serde(default)]
    pub env: EnvConfig,
    /// Overrides on top of the benchmark's learner defaults.
    #[serde(default)]
    pub learner: toml::Table,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3]
}

pub fn default_learner(benchmark: Benchmark) -> LearnerConfig {
    if benchmark.is_wheeled() {
        LearnerConfig::wheeled()
    } else {
        LearnerConfig::default()
    }
}

pub fn default_eval_episodes(benchmark: Benchmark) -> usize {
    if benchmark.is_wheeled() {
        10
    } else {
        20
    }
}

/// Overlays `over` onto `base`. A table carrying a `kind` key replaces the
/// base table outright, since its variant decides which keys are legal.
fn overlay(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => overlay(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// An experiment with every default filled in and every file loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub run: RunConfig,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Makes relative file references relative to `base`.
    pub fn rebase(&mut self, base: &Path) {
        if let Some(f) = self.tasks.file.as_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if let Some(c) = self.env.chain.as_mut() {
            if c.is_relative() {
                *c = base.join(&*c);
            }
        }
    }

    pub fn learner_config(&self) -> Result<LearnerConfig, ConfigError> {
        let base = default_learner(self.benchmark);
        let mut table = toml::Table::try_from(&base).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        overlay(&mut table, &self.learner);
        let cfg: LearnerConfig =
            table.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(format!("learner: {e}")))?;
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn task_sequence(&self) -> Result<TaskSequence, ConfigError> {
        let src = &self.tasks;
        let mut seq = match &src.file {
            Some(path) => {
                let file = TaskFile::load(path)?;
                if file.benchmark != self.benchmark {
                    return Err(EnvError::BenchmarkMismatch { env: self.benchmark, task: file.benchmark }.into());
                }
                file.into_sequence()?
            }
            None => match self.benchmark {
                Benchmark::Hlr => hlr_default_tasks(&self.env.load_chain()?, &self.env.hlr),
                Benchmark::Llr => llr_default_tasks(&self.env.load_chain()?, LLR_GOAL_ACTIONS)?,
                b => {
                    let setting = if b == Benchmark::Mlf { self.env.mlf.setting } else { self.env.mpo.setting };
                    wheeled_tasks(b, src.count, src.window.unwrap_or(DEFAULT_WINDOW), setting, 0)?
                }
            },
        };
        if src.window.is_some() && (src.file.is_some() || !self.benchmark.is_wheeled()) {
            return Err(ConfigError::Invalid("tasks.window applies to built-in wheeled sequences only".into()));
        }
        if let Some(n) = src.count {
            if n == 0 || n > seq.len() {
                return Err(ConfigError::Invalid(format!("tasks.count {n} outside 1..={}", seq.len())));
            }
            seq.tasks.truncate(n);
        }
        if let Some(sel) = &src.select {
            let picked = sel
                .iter()
                .map(|&i| {
                    seq.tasks
                        .get(i)
                        .cloned()
                        .ok_or_else(|| ConfigError::Invalid(format!("tasks.select index {i} out of range")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            seq = TaskSequence::new(picked, seq.seed)?;
        }
        Ok(seq)
    }

    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        if self.name.trim().is_empty() {
            return Err(ConfigError::Invalid("name must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(ConfigError::Invalid("seeds must be distinct".into()));
        }
        let learner = self.learner_config()?;
        let tasks = self.task_sequence()?;
        let chain = self.env.load_chain()?;
        let mut run = RunConfig {
            benchmark: self.benchmark,
            env: self.env.clone(),
            learner,
            train: self.train.budget()?,
            eval_episodes: self.eval_episodes.unwrap_or_else(|| default_eval_episodes(self.benchmark)),
            protocol: self.protocol,
            config_hash: String::new(),
            tasks,
        };
        run.config_hash = config_hash(&self.name, &run, &chain.to_toml_string());
        run.validate()?;
        Ok(Experiment { config: self.clone(), run, seeds: self.seeds.clone() })
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    name: &'a str,
    benchmark: Benchmark,
    protocol: Protocol,
    train: Option<TrainBudget>,
    eval_episodes: usize,
    learner: &'a LearnerConfig,
    env: &'a EnvConfig,
    chain: &'a str,
    tasks: String,
}

/// SHA-256 over everything that shapes a run's results. Seeds and the output
/// location are excluded so that runs of one experiment share a hash.
pub fn config_hash(name: &str, run: &RunConfig, chain_toml: &str) -> String {
    let mut env = run.env.clone();
    env.chain = None;
    let input = HashInput {
        name,
        benchmark: run.benchmark,
        protocol: run.protocol,
        train: run.train,
        eval_episodes: run.eval_episodes,
        learner: &run.learner,
        env: &env,
        chain: chain_toml,
        tasks: TaskFile::from_sequence(&run.tasks).to_toml(),
    };
    let json = serde_json::to_string(&input).expect("hash input serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
