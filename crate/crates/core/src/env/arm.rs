//! Kinematic reaching environments for the 7-joint arm.
//!
//! * HLR-K moves a free-floating hand point by fixed Cartesian offsets.
//! * LLR-K sets one joint per step, in order, and scores only the final pose.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_benchmark, Action, Benchmark, EnvError, Environment, EpisodeClock, ObsLayout, Observation, StepResult,
    TaskGoal, TaskSequence, TaskSpec,
};
use crate::kinematics::{discretize_joint, JointAngles, KinematicChain, Pose3, Workspace, JOINT_COUNT};

pub const HLR_ACTIONS: usize = 6;
pub const HLR_STEP_BUDGET: usize = 30;

/// Unit directions of the six Cartesian actions: forward, backward, left,
/// right, up, down.
pub const HLR_DIRECTIONS: [[i32; 3]; HLR_ACTIONS] =
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

pub const HLR_TASK_NAMES: [&str; 10] = [
    "hammer",
    "push wall",
    "faucet close",
    "push back",
    "stick pull",
    "handle press",
    "push ball",
    "shelf place",
    "window close",
    "peg unplug",
];

const HLR_GOAL_SEED: u64 = 0x5EED_0001;
const LLR_GOAL_SEED: u64 = 0x5EED_1000;
pub const LLR_TASK_COUNT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HlrConfig {
    pub step_size: f64,
    pub goal_tolerance: f64,
    pub illegal_move_penalty: f64,
    pub workspace: Workspace,
}

impl Default for HlrConfig {
    fn default() -> Self {
        Self { step_size: 0.1, goal_tolerance: 0.1, illegal_move_penalty: -0.1, workspace: Workspace::default() }
    }
}

/// Hand position on the lattice `start + step_size * offset`.
///
/// Positions are recomputed from the integer offset rather than accumulated,
/// so revisiting a lattice point reproduces the same coordinates bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct HlrState {
    pub start: Pose3,
    pub offset: [i32; 3],
    pub current: Pose3,
    pub goal: Pose3,
    pub steps_taken: usize,
    pub reached: bool,
}

impl HlrState {
    pub fn new(start: Pose3, goal: Pose3) -> Self {
        Self { start, offset: [0; 3], current: start, goal, steps_taken: 0, reached: false }
    }

    fn position(&self, offset: [i32; 3], step: f64) -> Pose3 {
        self.start + Pose3::new(offset[0] as f64, offset[1] as f64, offset[2] as f64) * step
    }

    /// Applies one Cartesian move and returns `(reward, terminated)`.
    ///
    /// Legal moves earn 1.0 when the hand ends closer than the tolerance to
    /// the goal (ending the episode) and `1 - distance` otherwise. Moves that
    /// leave the workspace keep the hand in place and earn the penalty.
    pub fn apply(&mut self, action: usize, cfg: &HlrConfig) -> (f64, bool) {
        self.steps_taken += 1;
        let dir = HLR_DIRECTIONS[action];
        let offset = [self.offset[0] + dir[0], self.offset[1] + dir[1], self.offset[2] + dir[2]];
        let candidate = self.position(offset, cfg.step_size);
        if !cfg.workspace.contains(candidate) {
            return (cfg.illegal_move_penalty, false);
        }
        self.offset = offset;
        self.current = candidate;
        hlr_reward(self.current, self.goal, cfg.goal_tolerance)
    }

    pub fn observation(&self) -> Observation {
        let [cx, cy, cz] = self.current.to_array();
        let [gx, gy, gz] = self.goal.to_array();
        Observation::new(vec![cx, cy, cz, gx, gy, gz], ObsLayout::ArmHlr)
    }
}

/// Distances within this of the tolerance count as equal to it, so a lattice
/// neighbour exactly one step from the goal is never inside it by rounding.
const TOLERANCE_SLACK: f64 = 1e-9;

/// Distance-based reaching reward: `(1.0, true)` strictly inside the
/// tolerance, else `(1 - distance, false)`.
pub fn hlr_reward(current: Pose3, goal: Pose3, tolerance: f64) -> (f64, bool) {
    let dist = current.distance(goal);
    if dist < tolerance - TOLERANCE_SLACK {
        (1.0, true)
    } else {
        (1.0 - dist, false)
    }
}

/// Final reward of a joint-space reach: `1 - distance`.
pub fn llr_reward(final_pose: Pose3, goal: Pose3) -> f64 {
    1.0 - final_pose.distance(goal)
}

pub struct HlrEnv {
    cfg: HlrConfig,
    start: Pose3,
    state: Option<HlrState>,
    clock: EpisodeClock,
}

impl HlrEnv {
    pub fn new(cfg: HlrConfig, chain: &KinematicChain) -> Self {
        Self { cfg, start: hlr_start(chain), state: None, clock: EpisodeClock::default() }
    }

    pub fn start(&self) -> Pose3 {
        self.start
    }

    pub fn state(&self) -> Option<&HlrState> {
        self.state.as_ref()
    }
}

/// Start pose of every reaching episode: the hand at the joint-range midpoints.
pub fn hlr_start(chain: &KinematicChain) -> Pose3 {
    chain.forward_kinematics(&chain.limits().midpoints())
}

impl Environment for HlrEnv {
    fn benchmark(&self) -> Benchmark {
        Benchmark::Hlr
    }

    fn observation_len(&self) -> usize {
        ObsLayout::ArmHlr.len()
    }

    fn action_count(&self) -> usize {
        HLR_ACTIONS
    }

    fn reset(&mut self, task: &TaskSpec, _episode_seed: u64) -> Result<Observation, EnvError> {
        check_benchmark(Benchmark::Hlr, task)?;
        let goal = task.goal.pose().expect("validated arm task");
        let state = HlrState::new(self.start, goal);
        let obs = state.observation();
        self.state = Some(state);
        self.clock = EpisodeClock::start(task.step_budget);
        Ok(obs)
    }

    fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        self.clock.check(action, HLR_ACTIONS)?;
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        let (reward, terminated) = state.apply(action.0, &self.cfg);
        state.reached |= terminated;
        let truncated = self.clock.tick(terminated);
        let mut info = BTreeMap::new();
        info.insert("distance", state.current.distance(state.goal));
        info.insert("step", self.clock.steps as f64);
        Ok(StepResult { observation: state.observation(), reward, terminated, truncated, info })
    }

    fn succeeded(&self) -> bool {
        self.state.as_ref().is_some_and(|s| s.reached)
    }
}

/// The ten default reaching tasks.
///
/// Goals are lattice points `start + 0.1 * (dx, dy, dz)` drawn from a fixed
/// seed, so each is exactly reachable. A candidate is kept when it lies 0.2 to
/// 0.6 m from the start, inside the workspace together with the straight
/// axis-by-axis path leading to it, and at least 0.2 m away from the goals
/// already chosen.
pub fn hlr_default_tasks(chain: &KinematicChain, cfg: &HlrConfig) -> TaskSequence {
    let start = hlr_start(chain);
    let mut rng = ChaCha8Rng::seed_from_u64(HLR_GOAL_SEED);
    let mut goals: Vec<Pose3> = Vec::new();
    while goals.len() < HLR_TASK_NAMES.len() {
        let offset = [rng.random_range(-3..=2), rng.random_range(-4..=4), rng.random_range(-4..=2)];
        let goal = start + Pose3::new(offset[0] as f64, offset[1] as f64, offset[2] as f64) * cfg.step_size;
        let dist = goal.distance(start);
        if !(0.2..=0.6).contains(&dist) || goals.iter().any(|g| g.distance(goal) < 0.2) {
            continue;
        }
        if axis_path(offset).iter().all(|o| {
            let p = start + Pose3::new(o[0] as f64, o[1] as f64, o[2] as f64) * cfg.step_size;
            cfg.workspace.contains(p)
        }) {
            goals.push(goal);
        }
    }
    let tasks = HLR_TASK_NAMES
        .iter()
        .zip(goals)
        .map(|(name, g)| TaskSpec {
            name: name.to_string(),
            benchmark: Benchmark::Hlr,
            goal: TaskGoal::Pose(g.to_array()),
            step_budget: HLR_STEP_BUDGET,
            episode_budget: None,
            setting: None,
        })
        .collect();
    TaskSequence::new(tasks, HLR_GOAL_SEED).expect("default tasks are valid")
}

/// Lattice points visited moving along x, then y, then z.
fn axis_path(target: [i32; 3]) -> Vec<[i32; 3]> {
    let mut cur = [0i32; 3];
    let mut path = vec![cur];
    for axis in 0..3 {
        while cur[axis] != target[axis] {
            cur[axis] += target[axis].signum();
            path.push(cur);
        }
    }
    path
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlrConfig {
    /// Discrete target angles per joint.
    pub n_actions: usize,
    /// Final distance below which an episode counts as a success.
    pub goal_tolerance: f64,
}

impl Default for LlrConfig {
    fn default() -> Self {
        Self { n_actions: 5, goal_tolerance: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlrState {
    pub joints: JointAngles,
    pub goal: Pose3,
    pub current: Pose3,
    /// Joint controlled by the next action; equals the steps taken so far.
    pub active_joint: usize,
}

impl LlrState {
    pub fn observation(&self) -> Observation {
        let mut v = Vec::with_capacity(14);
        v.extend_from_slice(&self.current.to_array());
        v.extend_from_slice(&self.goal.to_array());
        v.extend_from_slice(&self.joints.0);
        v.push(self.active_joint as f64);
        Observation::new(v, ObsLayout::ArmLlr)
    }

    /// Sets the active joint to target angle `action`; returns `(reward, terminated)`.
    pub fn apply(&mut self, action: usize, chain: &KinematicChain, n_actions: usize) -> Result<(f64, bool), EnvError> {
        let angle = discretize_joint(chain.limits(), self.active_joint, n_actions, action)?;
        self.joints.0[self.active_joint] = angle;
        self.current = chain.forward_kinematics(&self.joints);
        self.active_joint += 1;
        if self.active_joint == JOINT_COUNT {
            Ok((llr_reward(self.current, self.goal), true))
        } else {
            Ok((0.0, false))
        }
    }
}

pub struct LlrEnv {
    cfg: LlrConfig,
    chain: KinematicChain,
    initial: JointAngles,
    state: Option<LlrState>,
    clock: EpisodeClock,
}

impl LlrEnv {
    pub fn new(cfg: LlrConfig, chain: KinematicChain) -> Result<Self, EnvError> {
        if cfg.n_actions < 2 {
            return Err(crate::kinematics::KinematicsError::TooFewActions(cfg.n_actions).into());
        }
        let initial = chain.limits().midpoints();
        Ok(Self { cfg, chain, initial, state: None, clock: EpisodeClock::default() })
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn state(&self) -> Option<&LlrState> {
        self.state.as_ref()
    }
}

impl Environment for LlrEnv {
    fn benchmark(&self) -> Benchmark {
        Benchmark::Llr
    }

    fn observation_len(&self) -> usize {
        ObsLayout::ArmLlr.len()
    }

    fn action_count(&self) -> usize {
        self.cfg.n_actions
    }

    fn reset(&mut self, task: &TaskSpec, _episode_seed: u64) -> Result<Observation, EnvError> {
        check_benchmark(Benchmark::Llr, task)?;
        if task.step_budget != JOINT_COUNT {
            return Err(EnvError::InvalidTask {
                name: task.name.clone(),
                reason: format!("low-level reaching episodes last exactly {JOINT_COUNT} steps"),
            });
        }
        let goal = task.goal.pose().expect("validated arm task");
        let state = LlrState {
            joints: self.initial,
            goal,
            current: self.chain.forward_kinematics(&self.initial),
            active_joint: 0,
        };
        let obs = state.observation();
        self.state = Some(state);
        self.clock = EpisodeClock::start(JOINT_COUNT);
        Ok(obs)
    }

    fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        self.clock.check(action, self.cfg.n_actions)?;
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        let (reward, terminated) = state.apply(action.0, &self.chain, self.cfg.n_actions)?;
        let truncated = self.clock.tick(terminated);
        let mut info = BTreeMap::new();
        info.insert("distance", state.current.distance(state.goal));
        info.insert("active_joint", state.active_joint as f64);
        Ok(StepResult { observation: state.observation(), reward, terminated, truncated, info })
    }

    fn succeeded(&self) -> bool {
        self.state
            .as_ref()
            .is_some_and(|s| s.active_joint == JOINT_COUNT && s.current.distance(s.goal) < self.cfg.goal_tolerance)
    }
}

/// Goal for a low-level reaching task: the hand position of a uniformly drawn
/// discrete joint configuration, so at least one action sequence hits it
/// exactly. Draws landing outside the default workspace or below 5 cm are
/// redrawn.
pub fn llr_make_goal(chain: &KinematicChain, n_actions: usize, seed: u64) -> Result<Pose3, EnvError> {
    let ws = Workspace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let actions: [usize; JOINT_COUNT] = std::array::from_fn(|_| rng.random_range(0..n_actions));
        let goal = chain.forward_kinematics(&discrete_configuration(chain, n_actions, &actions)?);
        if ws.contains(goal) && goal.z >= 0.05 {
            return Ok(goal);
        }
    }
}

/// Joint angles selected by one discrete action per joint.
pub fn discrete_configuration(
    chain: &KinematicChain,
    n_actions: usize,
    actions: &[usize; JOINT_COUNT],
) -> Result<JointAngles, EnvError> {
    let mut q = [0.0; JOINT_COUNT];
    for (j, (v, &k)) in q.iter_mut().zip(actions).enumerate() {
        *v = discretize_joint(chain.limits(), j, n_actions, k)?;
    }
    Ok(JointAngles(q))
}

/// The eight default low-level reaching tasks.
pub fn llr_default_tasks(chain: &KinematicChain, n_actions: usize) -> Result<TaskSequence, EnvError> {
    let tasks = (0..LLR_TASK_COUNT)
        .map(|i| {
            let goal = llr_make_goal(chain, n_actions, LLR_GOAL_SEED + i as u64)?;
            Ok(TaskSpec {
                name: format!("reach-{}", i + 1),
                benchmark: Benchmark::Llr,
                goal: TaskGoal::Pose(goal.to_array()),
                step_budget: JOINT_COUNT,
                episode_budget: None,
                setting: None,
            })
        })
        .collect::<Result<Vec<_>, EnvError>>()?;
    TaskSequence::new(tasks, LLR_GOAL_SEED)
}
