//! Sequential task training with backward greedy evaluation.

mod matrix;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Learner, LearnerConfig, LearnerRegistry, Transition};
use crate::env::{Action, Benchmark, EnvConfig, EnvError, EnvRegistry, Environment, TaskSequence, TaskSpec};

pub use matrix::{
    aggregate_runs, compute_metrics, AggregateCell, AggregateMatrix, EpisodeTrace, EvalMatrix, EvalRecord, Metrics,
    Stat, MATRIX_COLUMNS,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("no evaluation episodes")]
    NoEpisodes,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("config hash mismatch: {expected} vs {got}")]
    ConfigMismatch { expected: String, got: String },
    #[error("matrix: {0}")]
    Matrix(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// How long each task is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainBudget {
    Steps(usize),
    Episodes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// One learner carried through the whole sequence.
    #[default]
    Sequential,
    /// A fresh learner per task, evaluated on that task only.
    Independent,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub tasks: TaskSequence,
    pub env: EnvConfig,
    pub learner: LearnerConfig,
    /// Per-task budget; tasks carrying their own episode budget use it when absent.
    pub train: Option<TrainBudget>,
    pub eval_episodes: usize,
    pub protocol: Protocol,
    pub config_hash: String,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.eval_episodes == 0 {
            return Err(HarnessError::Config("eval_episodes must be positive".into()));
        }
        if let Some(TrainBudget::Steps(0) | TrainBudget::Episodes(0)) = self.train {
            return Err(HarnessError::Config("training budget must be positive".into()));
        }
        for t in &self.tasks.tasks {
            if t.benchmark != self.benchmark {
                return Err(EnvError::BenchmarkMismatch { env: self.benchmark, task: t.benchmark }.into());
            }
            self.budget_for(t)?;
        }
        self.learner.validate()?;
        Ok(())
    }

    pub fn budget_for(&self, task: &TaskSpec) -> Result<TrainBudget, HarnessError> {
        match (self.train, task.episode_budget) {
            (Some(b), _) => Ok(b),
            (None, Some(n)) if n > 0 => Ok(TrainBudget::Episodes(n)),
            _ => Err(HarnessError::Config(format!("no training budget for task '{}'", task.name))),
        }
    }
}

pub struct RunOutput {
    pub matrix: EvalMatrix,
    /// The trained learner; one per task under the independent protocol.
    pub learners: Vec<Box<dyn Learner>>,
}

const TRAIN_STREAM: u64 = 0;
const LEARNER_STREAM: u64 = 1;
const EVAL_STREAM_BASE: u64 = 1 << 32;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Evaluation episode seeds for one task. They depend only on the run seed and
/// the task index, so every evaluation of a task replays the same episodes.
pub fn eval_seeds(run_seed: u64, task_index: usize, episodes: usize) -> Vec<u64> {
    let mut rng = stream(run_seed, EVAL_STREAM_BASE + task_index as u64);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

/// Greedy rollouts. The learner is borrowed immutably.
pub fn evaluate(
    env: &mut dyn Environment,
    learner: &dyn Learner,
    task: &TaskSpec,
    seeds: &[u64],
) -> Result<Vec<EpisodeTrace>, HarnessError> {
    let mut traces = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let mut obs = env.reset(task, s)?;
        let mut rewards = Vec::with_capacity(task.step_budget);
        loop {
            let a = learner.greedy_action(obs.as_slice())?;
            let r = env.step(Action(a))?;
            rewards.push(r.reward);
            obs = r.observation;
            if r.terminated || r.truncated {
                break;
            }
        }
        traces.push(EpisodeTrace { rewards, reached: env.succeeded() });
    }
    Ok(traces)
}

/// Trains `learner` on `task` for `budget`, drawing episode seeds from `seeds`.
pub fn train_task(
    env: &mut dyn Environment,
    learner: &mut dyn Learner,
    task: &TaskSpec,
    task_index: usize,
    budget: TrainBudget,
    seeds: &mut ChaCha8Rng,
) -> Result<(), HarnessError> {
    learner.begin_task(task_index);
    let (mut steps, mut episodes) = (0usize, 0usize);
    let progress = |steps: usize, episodes: usize| match budget {
        TrainBudget::Steps(n) => steps as f64 / n as f64,
        TrainBudget::Episodes(n) => episodes as f64 / n as f64,
    };
    let finished = |steps: usize, episodes: usize| match budget {
        TrainBudget::Steps(n) => steps >= n,
        TrainBudget::Episodes(n) => episodes >= n,
    };
    while !finished(steps, episodes) {
        let mut obs = env.reset(task, seeds.next_u64())?;
        loop {
            learner.set_task_progress(progress(steps, episodes));
            let a = learner.act(obs.as_slice())?;
            let r = env.step(Action(a))?;
            steps += 1;
            let done = r.terminated || r.truncated;
            learner.observe(Transition {
                obs: obs.values,
                action: a,
                reward: r.reward,
                next_obs: r.observation.values.clone(),
                terminal: r.terminated,
            })?;
            obs = r.observation;
            if done || matches!(budget, TrainBudget::Steps(n) if steps >= n) {
                break;
            }
        }
        learner.end_episode()?;
        episodes += 1;
    }
    Ok(())
}

fn eval_record(
    env: &mut dyn Environment,
    learner: &dyn Learner,
    cfg: &RunConfig,
    seed: u64,
    trained_upto: usize,
    evaluated: usize,
) -> Result<EvalRecord, HarnessError> {
    let seeds = eval_seeds(seed, evaluated, cfg.eval_episodes);
    let traces = evaluate(env, learner, &cfg.tasks.tasks[evaluated], &seeds)?;
    let m = compute_metrics(&traces)?;
    Ok(EvalRecord {
        trained_upto,
        evaluated,
        episodes: traces.len(),
        avg_step_reward: m.avg_step_reward,
        avg_episode_reward: m.avg_episode_reward,
        accuracy: m.accuracy,
    })
}

pub fn run_sequence(cfg: &RunConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    run_sequence_with(cfg, seed, &EnvRegistry::default(), &LearnerRegistry::default(), &mut |_, _| {})
}

/// Runs the configured protocol. `on_stage` sees each training stage's records as they land.
pub fn run_sequence_with(
    cfg: &RunConfig,
    seed: u64,
    envs: &EnvRegistry,
    learners: &LearnerRegistry,
    on_stage: &mut dyn FnMut(usize, &[EvalRecord]),
) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let mut env = envs.create(cfg.benchmark.name(), &cfg.env)?;
    let mut train_seeds = stream(seed, TRAIN_STREAM);
    let mut learner_seeds = stream(seed, LEARNER_STREAM);
    let (obs_len, n_actions) = (env.observation_len(), env.action_count());
    let mut new_learner = || learners.create(&cfg.learner, obs_len, n_actions, learner_seeds.next_u64());
    let mut matrix = EvalMatrix::new(seed, cfg.config_hash.clone());
    let mut out = Vec::new();
    match cfg.protocol {
        Protocol::Sequential => {
            let mut learner = new_learner()?;
            for (i, task) in cfg.tasks.tasks.iter().enumerate() {
                train_task(env.as_mut(), learner.as_mut(), task, i, cfg.budget_for(task)?, &mut train_seeds)?;
                let stage = (0..=i)
                    .map(|j| eval_record(env.as_mut(), learner.as_ref(), cfg, seed, i, j))
                    .collect::<Result<Vec<_>, _>>()?;
                for r in &stage {
                    matrix.push(*r)?;
                }
                on_stage(i, &stage);
            }
            out.push(learner);
        }
        Protocol::Independent => {
            for (i, task) in cfg.tasks.tasks.iter().enumerate() {
                let mut learner = new_learner()?;
                train_task(env.as_mut(), learner.as_mut(), task, 0, cfg.budget_for(task)?, &mut train_seeds)?;
                let r = eval_record(env.as_mut(), learner.as_ref(), cfg, seed, i, i)?;
                matrix.push(r)?;
                on_stage(i, &[r]);
                out.push(learner);
            }
        }
    }
    Ok(RunOutput { matrix, learners: out })
}
