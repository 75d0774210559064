//! Baseline learners and the registry that selects them by name.

pub mod adam;
pub mod dqn;
pub mod epsilon;
pub mod mlp;
pub mod reinforce;
pub mod replay;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use dqn::DqnLearner;
pub use epsilon::{Epsilon, EpsilonSchedule};
pub use mlp::Mlp;
pub use reinforce::ReinforceLearner;
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("incomplete trajectory: {0}")]
    IncompleteTrajectory(String),
    #[error("invalid learner config: {0}")]
    Config(String),
    #[error("unknown learner '{0}'")]
    UnknownLearner(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// A trainable policy. Evaluation goes through `greedy_action`, which takes
/// `&self` and so cannot change the learner.
pub trait Learner: Send {
    fn name(&self) -> &'static str;
    fn begin_task(&mut self, task: usize);
    fn set_task_progress(&mut self, fraction: f64);
    /// Exploratory action for training.
    fn act(&mut self, obs: &[f64]) -> Result<usize, AgentError>;
    fn greedy_action(&self, obs: &[f64]) -> Result<usize, AgentError>;
    /// Feeds one training transition; may update parameters.
    fn observe(&mut self, t: Transition) -> Result<(), AgentError>;
    /// Called after every training episode, terminated or truncated.
    fn end_episode(&mut self) -> Result<(), AgentError>;
    fn network(&self) -> &Mlp;
    fn epsilon(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub algorithm: String,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub train_every: usize,
    /// Buffer fill before updates start; defaults to the batch size.
    pub learning_starts: Option<usize>,
    /// Sync a target network every this many updates. Off when absent.
    pub target_sync: Option<usize>,
    /// DQN only: learn from undiscounted episode returns.
    pub monte_carlo: bool,
    /// REINFORCE only: subtract a running mean of final rewards.
    pub baseline_decay: Option<f64>,
    pub adam: AdamConfig,
    pub epsilon: EpsilonSchedule,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: "dqn".into(),
            hidden: vec![128, 64],
            learning_rate: 1e-4,
            gamma: 0.8,
            batch_size: 32,
            buffer_capacity: 5000,
            train_every: 1,
            learning_starts: None,
            target_sync: None,
            monte_carlo: false,
            baseline_decay: None,
            adam: AdamConfig::default(),
            epsilon: EpsilonSchedule::arm(),
        }
    }
}

impl LearnerConfig {
    pub fn wheeled() -> Self {
        Self {
            hidden: vec![100, 100, 100],
            buffer_capacity: 15000,
            epsilon: EpsilonSchedule::wheeled(),
            ..Self::default()
        }
    }

    pub fn layer_sizes(&self, obs_len: usize, n_actions: usize) -> Vec<usize> {
        let mut sizes = vec![obs_len];
        sizes.extend(&self.hidden);
        sizes.push(n_actions);
        sizes
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.train_every == 0 {
            return bad("batch_size, buffer_capacity and train_every must be positive".into());
        }
        if self.batch_size > self.buffer_capacity {
            return bad(format!("batch_size {} exceeds buffer_capacity {}", self.batch_size, self.buffer_capacity));
        }
        if self.target_sync == Some(0) {
            return bad("target_sync must be positive".into());
        }
        if let Some(d) = self.baseline_decay {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("baseline_decay {d} outside [0, 1)"));
            }
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps.is_nan() || a.eps <= 0.0 {
            return bad("adam constants out of range".into());
        }
        self.epsilon.validate().map_err(AgentError::Config)
    }
}

pub type LearnerFactory = fn(&LearnerConfig, usize, usize, u64) -> Result<Box<dyn Learner>, AgentError>;

/// Learners keyed by the `algorithm` name in the config.
#[derive(Clone)]
pub struct LearnerRegistry {
    factories: BTreeMap<String, LearnerFactory>,
}

impl Default for LearnerRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("dqn", |c, o, a, s| Ok(Box::new(DqnLearner::new(c, o, a, s)?)));
        r.register("reinforce", |c, o, a, s| Ok(Box::new(ReinforceLearner::new(c, o, a, s)?)));
        r
    }
}

impl LearnerRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, factory: LearnerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(
        &self,
        cfg: &LearnerConfig,
        obs_len: usize,
        n_actions: usize,
        seed: u64,
    ) -> Result<Box<dyn Learner>, AgentError> {
        let f = self.factories.get(&cfg.algorithm).ok_or_else(|| AgentError::UnknownLearner(cfg.algorithm.clone()))?;
        f(cfg, obs_len, n_actions, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_both_learners() {
        let reg = LearnerRegistry::default();
        assert_eq!(reg.names(), vec!["dqn", "reinforce"]);
        let mut cfg = LearnerConfig::default();
        assert_eq!(reg.create(&cfg, 6, 6, 0).unwrap().name(), "dqn");
        cfg.algorithm = "reinforce".into();
        let l = reg.create(&cfg, 14, 5, 0).unwrap();
        assert_eq!(l.network().sizes(), &[14, 128, 64, 5]);
        cfg.algorithm = "ppo".into();
        assert!(matches!(reg.create(&cfg, 1, 1, 0), Err(AgentError::UnknownLearner(_))));
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<LearnerConfig>("gama = 0.9").is_err());
        let cfg: LearnerConfig = toml::from_str("gamma = 1.5").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: LearnerConfig = toml::from_str("batch_size = 64\nbuffer_capacity = 32").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn epsilon_schedule_parses_from_toml() {
        let cfg: LearnerConfig =
            toml::from_str("[epsilon]\nkind = \"task_ramp\"\nfirst_start = 1.0\nlater_start = 0.5\nmin = 0.2").unwrap();
        assert_eq!(cfg.epsilon, EpsilonSchedule::wheeled());
    }

    #[test]
    fn same_seed_same_initial_network() {
        let cfg = LearnerConfig::default();
        let a = DqnLearner::new(&cfg, 6, 6, 42).unwrap();
        let b = DqnLearner::new(&cfg, 6, 6, 42).unwrap();
        let c = DqnLearner::new(&cfg, 6, 6, 43).unwrap();
        assert_eq!(a.network(), b.network());
        assert_ne!(a.network(), c.network());
    }
}
