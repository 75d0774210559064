//! Task files: a TOML list of named tasks for one benchmark.
//!
//! ```toml
//! benchmark = "hlr"
//! seed = 0
//!
//! [[task]]
//! name = "hammer"
//! goal = [0.48, 0.1, 0.55]   # arm benchmarks
//! step_budget = 30
//!
//! [[task]]
//! name = "task-0"
//! tracks = [0, 1, 2, 3]       # wheeled benchmarks
//! step_budget = 30
//! episodes = 100
//! setting = "ss"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Benchmark, EnvError, Setting, TaskGoal, TaskSequence, TaskSpec};

#[derive(Debug, Error)]
pub enum TaskFileError {
    #[error("reading task file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing task file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("task '{0}' must give exactly one of `goal` or `tracks`")]
    Goal(String),
    #[error(transparent)]
    Invalid(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub benchmark: Benchmark,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracks: Option<Vec<usize>>,
    pub step_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
}

impl TaskFile {
    pub fn parse(text: &str) -> Result<Self, TaskFileError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, TaskFileError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TaskFileError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task file serializes")
    }

    pub fn from_sequence(seq: &TaskSequence) -> Self {
        let benchmark = seq.tasks[0].benchmark;
        let tasks = seq
            .tasks
            .iter()
            .map(|t| TaskEntry {
                name: t.name.clone(),
                goal: match &t.goal {
                    TaskGoal::Pose(p) => Some(*p),
                    TaskGoal::Tracks(_) => None,
                },
                tracks: t.goal.tracks().map(<[usize]>::to_vec),
                step_budget: t.step_budget,
                episodes: t.episode_budget,
                setting: t.setting,
            })
            .collect();
        Self { benchmark, seed: seq.seed, tasks }
    }

    pub fn into_sequence(self) -> Result<TaskSequence, TaskFileError> {
        let benchmark = self.benchmark;
        let tasks = self
            .tasks
            .into_iter()
            .map(|e| {
                let goal = match (e.goal, e.tracks) {
                    (Some(g), None) => TaskGoal::Pose(g),
                    (None, Some(t)) => TaskGoal::Tracks(t),
                    _ => return Err(TaskFileError::Goal(e.name)),
                };
                Ok(TaskSpec {
                    name: e.name,
                    benchmark,
                    goal,
                    step_budget: e.step_budget,
                    episode_budget: e.episodes,
                    setting: e.setting,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TaskSequence::new(tasks, self.seed)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_arm_and_wheeled_entries() {
        let text = r#"
benchmark = "mpo"
[[task]]
name = "a"
tracks = [0, 1, 2, 3]
step_budget = 30
setting = "sss"
"#;
        let seq = TaskFile::parse(text).unwrap().into_sequence().unwrap();
        assert_eq!(seq.tasks[0].goal, TaskGoal::Tracks(vec![0, 1, 2, 3]));
        assert_eq!(seq.tasks[0].setting, Some(Setting::Sss));
    }

    #[test]
    fn rejects_goal_and_tracks_together() {
        let text =
            "benchmark = \"hlr\"\n[[task]]\nname = \"x\"\ngoal = [0.0, 0.0, 0.5]\ntracks = [1]\nstep_budget = 30\n";
        assert!(matches!(TaskFile::parse(text).unwrap().into_sequence(), Err(TaskFileError::Goal(_))));
    }

    #[test]
    fn rejects_unknown_keys_and_empty_lists() {
        assert!(TaskFile::parse("benchmark = \"hlr\"\nfoo = 1\ntask = []\n").is_err());
        assert!(TaskFile::parse("benchmark = \"hlr\"\ntask = []\n").unwrap().into_sequence().is_err());
    }

    #[test]
    fn wheeled_track_ids_are_range_checked() {
        let text = "benchmark = \"mlf\"\n[[task]]\nname = \"x\"\ntracks = [150]\nstep_budget = 30\n";
        assert!(TaskFile::parse(text).unwrap().into_sequence().is_err());
    }
}
