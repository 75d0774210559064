//! Multi-task object pushing.
//!
//! The object sits at the origin. Each episode spawns the robot
//! `spawn_distance` meters away on the -x axis, facing the object up to a
//! random heading offset of `spawn_heading_deg`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_setting, diff_drive_step, episode_rng, mpo_tracks, pick_track, rasterize, wrap_angle, DiffDriveParams,
    MpoTrack, PopulationCode, WheeledPose, MPO_COLORS, MPO_SHAPES, MPO_SYMBOLS,
};
use crate::env::{
    check_benchmark, Action, Benchmark, CodeGroup, EnvError, Environment, EpisodeClock, ObsLayout, Observation,
    Setting, StepResult, TaskSpec,
};

pub const MPO_WIDTH: usize = MPO_COLORS + MPO_SHAPES + MPO_SYMBOLS;

/// Wheel speeds `(left, right)` in m/s for straight, left, right, stop.
pub const MPO_SPEEDS: [(f64, f64); 4] = [(0.4, 0.4), (0.3, 0.5), (0.5, 0.3), (0.0, 0.0)];

pub static MPO_GROUPS: [CodeGroup; 5] = [
    CodeGroup { row: 0, offset: 0, len: MPO_COLORS },
    CodeGroup { row: 0, offset: MPO_COLORS, len: MPO_SHAPES },
    CodeGroup { row: 0, offset: MPO_COLORS + MPO_SHAPES, len: MPO_SYMBOLS },
    CodeGroup { row: 1, offset: 0, len: MPO_WIDTH },
    CodeGroup { row: 2, offset: 0, len: MPO_WIDTH },
];

const LAYOUT: ObsLayout = ObsLayout::PopCode { width: MPO_WIDTH, groups: &MPO_GROUPS };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpoMove {
    Straight = 0,
    Left = 1,
    Right = 2,
    Stop = 3,
}

impl MpoMove {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => MpoMove::Straight,
            1 => MpoMove::Left,
            2 => MpoMove::Right,
            _ => MpoMove::Stop,
        }
    }

    pub fn speeds(self) -> (f64, f64) {
        MPO_SPEEDS[self as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpoConfig {
    pub setting: Setting,
    pub drive: DiffDriveParams,
    pub spawn_distance: f64,
    pub spawn_heading_deg: f64,
    pub bumper_radius: f64,
    /// Bounding radius of the objects.
    pub object_radius: f64,
    /// Bearing (degrees) at which the approach reward reaches zero.
    pub sight_limit_deg: f64,
    pub controller_threshold_deg: f64,
}

impl Default for MpoConfig {
    fn default() -> Self {
        Self {
            setting: Setting::Ss,
            drive: DiffDriveParams::default(),
            spawn_distance: 0.45,
            spawn_heading_deg: 18.0,
            bumper_radius: 0.01,
            object_radius: 0.05,
            sight_limit_deg: 25.0,
            controller_threshold_deg: 5.0,
        }
    }
}

impl MpoConfig {
    pub fn contact_radius(&self) -> f64 {
        self.bumper_radius + self.object_radius
    }
}

/// Angle in degrees from the robot's heading to the object, positive when
/// the object is to the left.
pub fn bearing_deg(pose: &WheeledPose) -> f64 {
    wrap_angle((-pose.y).atan2(-pose.x) - pose.heading).to_degrees()
}

pub fn object_distance(pose: &WheeledPose) -> f64 {
    pose.x.hypot(pose.y)
}

/// Reward at `pose` after `mv`: approach term `(1 - |phi/25|) * (0.1 if stop
/// else 1)`, replaced by -1 with termination once it turns negative, plus
/// +10 / -10 on contact with a pushable / non-pushable object, which also
/// ends the episode.
pub fn mpo_reward(pose: &WheeledPose, track: &MpoTrack, mv: MpoMove, cfg: &MpoConfig) -> (f64, bool) {
    let scale = if mv == MpoMove::Stop { 0.1 } else { 1.0 };
    let approach = (1.0 - (bearing_deg(pose) / cfg.sight_limit_deg).abs()) * scale;
    let (mut reward, mut terminated) = if approach < 0.0 { (-1.0, true) } else { (approach, false) };
    if object_distance(pose) <= cfg.contact_radius() {
        reward += if track.pushable { 10.0 } else { -10.0 };
        terminated = true;
    }
    (reward, terminated)
}

/// Fixed steering used in the SSS setting when the learner says "go".
pub fn mpo_controller(bearing: f64, cfg: &MpoConfig) -> MpoMove {
    if bearing.abs() < cfg.controller_threshold_deg {
        MpoMove::Straight
    } else if bearing > 0.0 {
        MpoMove::Left
    } else {
        MpoMove::Right
    }
}

/// Three-row population code: object color/shape/symbol, distance, bearing.
pub fn mpo_observation(track: &MpoTrack, pose: &WheeledPose, cfg: &MpoConfig) -> Observation {
    let limit = cfg.sight_limit_deg;
    let codes = [
        PopulationCode::new(MPO_COLORS, track.color),
        PopulationCode::new(MPO_SHAPES, track.shape),
        PopulationCode::new(MPO_SYMBOLS, track.symbol),
        PopulationCode::from_value(object_distance(pose), 0.0, cfg.spawn_distance, MPO_WIDTH),
        PopulationCode::from_value(bearing_deg(pose), -limit, limit, MPO_WIDTH),
    ];
    Observation::new(rasterize(MPO_WIDTH, &MPO_GROUPS, &codes), LAYOUT)
}

#[derive(Debug, Clone)]
struct Episode {
    track: MpoTrack,
    pose: WheeledPose,
    touched: bool,
    lost_sight: bool,
}

pub struct MpoEnv {
    cfg: MpoConfig,
    tracks: Vec<MpoTrack>,
    episode: Option<Episode>,
    clock: EpisodeClock,
}

impl MpoEnv {
    pub fn new(cfg: MpoConfig) -> Self {
        Self { cfg, tracks: mpo_tracks(), episode: None, clock: EpisodeClock::default() }
    }

    pub fn pose(&self) -> Option<WheeledPose> {
        self.episode.as_ref().map(|e| e.pose)
    }

    pub fn current_track(&self) -> Option<&MpoTrack> {
        self.episode.as_ref().map(|e| &e.track)
    }

    fn decode(&self, action: usize, pose: &WheeledPose) -> MpoMove {
        match (self.cfg.setting, action) {
            (Setting::Ss, a) => MpoMove::from_index(a),
            (Setting::Sss, 0) => MpoMove::Stop,
            (Setting::Sss, _) => mpo_controller(bearing_deg(pose), &self.cfg),
        }
    }
}

impl Environment for MpoEnv {
    fn benchmark(&self) -> Benchmark {
        Benchmark::Mpo
    }

    fn observation_len(&self) -> usize {
        LAYOUT.len()
    }

    fn action_count(&self) -> usize {
        match self.cfg.setting {
            Setting::Ss => 4,
            Setting::Sss => 2,
        }
    }

    fn reset(&mut self, task: &TaskSpec, episode_seed: u64) -> Result<Observation, EnvError> {
        check_benchmark(Benchmark::Mpo, task)?;
        check_setting(self.cfg.setting, task)?;
        let mut rng = episode_rng(episode_seed);
        let track = self.tracks[pick_track(task, &mut rng)];
        let spread = self.cfg.spawn_heading_deg;
        let offset = if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
        let pose = WheeledPose::new(-self.cfg.spawn_distance, 0.0, offset.to_radians());
        self.episode = Some(Episode { track, pose, touched: false, lost_sight: false });
        self.clock = EpisodeClock::start(task.step_budget);
        Ok(mpo_observation(&track, &pose, &self.cfg))
    }

    fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        self.clock.check(action, self.action_count())?;
        let ep = self.episode.as_ref().ok_or(EnvError::NotReset)?;
        let mv = self.decode(action.0, &ep.pose);
        let (vl, vr) = mv.speeds();
        let pose = diff_drive_step(ep.pose, vl, vr, &self.cfg.drive);
        let track = ep.track;
        let (reward, terminated) = mpo_reward(&pose, &track, mv, &self.cfg);
        let truncated = self.clock.tick(terminated);
        let touched = object_distance(&pose) <= self.cfg.contact_radius();
        let ep = self.episode.as_mut().expect("checked above");
        ep.pose = pose;
        ep.touched |= touched;
        ep.lost_sight |= terminated && !touched;

        let mut info = BTreeMap::new();
        info.insert("track_id", track.track_id as f64);
        info.insert("distance", object_distance(&pose));
        info.insert("bearing_deg", bearing_deg(&pose));
        info.insert("contact", f64::from(u8::from(touched)));
        Ok(StepResult { observation: mpo_observation(&track, &pose, &self.cfg), reward, terminated, truncated, info })
    }

    /// Pushable objects must be touched; the others approached without
    /// contact and without losing sight of them.
    fn succeeded(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| {
            if e.track.pushable {
                e.touched
            } else {
                !e.touched && !e.lost_sight && !self.clock.active
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::wheeled::make_task_window;

    fn track(pushable: bool) -> MpoTrack {
        MpoTrack { shape: 0, color: 0, symbol: 0, track_id: if pushable { 0 } else { 1 }, pushable }
    }

    #[test]
    fn facing_object_scores_full_approach() {
        let cfg = MpoConfig::default();
        let pose = WheeledPose::new(-0.3, 0.0, 0.0);
        assert_eq!(bearing_deg(&pose), 0.0);
        assert_eq!(mpo_reward(&pose, &track(true), MpoMove::Straight, &cfg), (1.0, false));
        assert_eq!(mpo_reward(&pose, &track(true), MpoMove::Stop, &cfg), (0.1, false));
    }

    #[test]
    fn contact_adds_push_reward_and_terminates() {
        let cfg = MpoConfig::default();
        let pose = WheeledPose::new(-0.05, 0.0, 0.0);
        assert_eq!(mpo_reward(&pose, &track(true), MpoMove::Straight, &cfg), (11.0, true));
        assert_eq!(mpo_reward(&pose, &track(false), MpoMove::Straight, &cfg), (-9.0, true));
    }

    #[test]
    fn losing_sight_is_punished() {
        let cfg = MpoConfig::default();
        let pose = WheeledPose::new(-0.3, 0.0, 30f64.to_radians());
        assert!((bearing_deg(&pose) + 30.0).abs() < 1e-9);
        assert_eq!(mpo_reward(&pose, &track(true), MpoMove::Straight, &cfg), (-1.0, true));
    }

    #[test]
    fn controller_turns_toward_object() {
        let cfg = MpoConfig::default();
        assert_eq!(mpo_controller(10.0, &cfg), MpoMove::Left);
        assert_eq!(mpo_controller(-10.0, &cfg), MpoMove::Right);
        assert_eq!(mpo_controller(0.0, &cfg), MpoMove::Straight);
    }

    #[test]
    fn spawn_distance_is_the_highest_bin() {
        let cfg = MpoConfig::default();
        let obs = mpo_observation(&track(true), &WheeledPose::new(-0.45, 0.0, 0.1), &cfg);
        assert!(obs.is_valid());
        assert_eq!(obs.hot_indices()[3], MPO_WIDTH - 1);
    }

    #[test]
    fn spawn_heading_stays_within_eighteen_degrees() {
        let mut env = MpoEnv::new(MpoConfig::default());
        let task = make_task_window(Benchmark::Mpo, 150, 0, 4, Setting::Ss).unwrap();
        let mut extremes = (0.0f64, 0.0f64);
        for seed in 0..500 {
            env.reset(&task, seed).unwrap();
            let h = env.pose().unwrap().heading.to_degrees();
            assert!(h.abs() <= 18.0 + 1e-9);
            extremes = (extremes.0.min(h), extremes.1.max(h));
        }
        assert!(extremes.0 < -15.0 && extremes.1 > 15.0);
    }

    #[test]
    fn sss_go_reaches_the_object() {
        let cfg = MpoConfig { setting: Setting::Sss, ..MpoConfig::default() };
        let mut env = MpoEnv::new(cfg);
        let task = make_task_window(Benchmark::Mpo, 150, 0, 1, Setting::Sss).unwrap();
        for seed in 0..20 {
            env.reset(&task, seed).unwrap();
            let mut total = 0.0;
            let mut steps = 0;
            loop {
                let r = env.step(Action(1)).unwrap();
                total += r.reward;
                steps += 1;
                if r.done() {
                    assert!(r.terminated, "seed {seed} timed out");
                    break;
                }
            }
            assert!(env.succeeded());
            assert!(total > 10.0 && steps <= 30);
        }
    }
}
