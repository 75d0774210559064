//! Multi-task line following.
//!
//! Track frame: the robot starts at the origin heading along +x, the left
//! edge of the middle line is the x axis, and the wall stands at
//! `x = MLF_TRACK_LENGTH`. A virtual down-looking line camera sits
//! `camera_offset` ahead of the axle and images `camera_fov` meters of floor
//! across `image_width` pixels, pixel 0 on the robot's left.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_setting, diff_drive_step, episode_rng, mlf_tracks, pick_track, rasterize, DiffDriveParams, MlfTrack,
    PopulationCode, WheeledPose, LED_COUNT, MLF_COLORS,
};
use crate::env::{
    check_benchmark, Action, Benchmark, CodeGroup, EnvError, Environment, EpisodeClock, ObsLayout, Observation,
    Setting, StepResult, TaskSpec,
};

pub const MLF_TRACK_LENGTH: f64 = 0.75;
pub const MLF_WIDTH: usize = 18;

/// Wheel speeds `(left, right)` in m/s for straight, left curve, right curve.
pub const MLF_SPEEDS: [(f64, f64); 3] = [(0.2, 0.2), (0.15, 0.25), (0.25, 0.15)];

pub static MLF_GROUPS: [CodeGroup; 5] = [
    CodeGroup { row: 0, offset: 0, len: MLF_COLORS },
    CodeGroup { row: 0, offset: MLF_COLORS, len: MLF_COLORS },
    CodeGroup { row: 0, offset: 2 * MLF_COLORS, len: MLF_COLORS },
    CodeGroup { row: 1, offset: 0, len: MLF_WIDTH },
    CodeGroup { row: 2, offset: 0, len: MLF_WIDTH },
];

const LAYOUT: ObsLayout = ObsLayout::PopCode { width: MLF_WIDTH, groups: &MLF_GROUPS };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlfSteer {
    Straight = 0,
    Left = 1,
    Right = 2,
}

impl MlfSteer {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => MlfSteer::Straight,
            1 => MlfSteer::Left,
            _ => MlfSteer::Right,
        }
    }

    pub fn speeds(self) -> (f64, f64) {
        MLF_SPEEDS[self as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlfConfig {
    pub setting: Setting,
    pub drive: DiffDriveParams,
    pub image_width: f64,
    /// Floor width covered by the line camera, meters.
    pub camera_fov: f64,
    /// Distance of the camera's scan line ahead of the axle, meters.
    pub camera_offset: f64,
    /// Seed of the per-track LED assignment.
    pub led_seed: u64,
    /// Spawn heading is uniform in +/- this many degrees.
    pub spawn_heading_jitter_deg: f64,
    /// SSS controller drives straight while the edge is this close to center.
    pub controller_threshold_px: f64,
}

impl Default for MlfConfig {
    fn default() -> Self {
        Self {
            setting: Setting::Ss,
            drive: DiffDriveParams::default(),
            image_width: 100.0,
            camera_fov: 0.10,
            camera_offset: 0.03,
            led_seed: 0,
            spawn_heading_jitter_deg: 5.0,
            controller_threshold_px: 5.0,
        }
    }
}

/// Pixel column of the middle line's left edge, possibly outside the image.
/// `None` when the camera faces away from the track direction.
fn raw_edge_pixel(pose: &WheeledPose, cfg: &MlfConfig) -> Option<f64> {
    let (s, c) = pose.heading.sin_cos();
    if c <= 1e-9 {
        return None;
    }
    let cam_y = pose.y + cfg.camera_offset * s;
    // Edge position along the camera's left axis.
    let lateral = -cam_y / c;
    Some(0.5 * cfg.image_width - lateral * cfg.image_width / cfg.camera_fov)
}

/// Detected edge pixel `d_t`, or `None` once the edge has left the image.
pub fn edge_pixel(pose: &WheeledPose, cfg: &MlfConfig) -> Option<f64> {
    raw_edge_pixel(pose, cfg).filter(|d| (0.0..=cfg.image_width).contains(d))
}

/// LED required at `pose`: the first-half LED before the track midpoint.
pub fn required_led(track: &MlfTrack, pose: &WheeledPose) -> usize {
    if pose.x < 0.5 * MLF_TRACK_LENGTH {
        track.led_first
    } else {
        track.led_second
    }
}

/// Line-following reward at `pose` with LED `led` switched on.
///
/// `1 - |d - W/2| / (W/2)` for the edge pixel `d`, or -1 and termination
/// once the edge is lost, plus +1 / -1 for the correct / wrong LED.
pub fn mlf_reward(pose: &WheeledPose, track: &MlfTrack, led: usize, cfg: &MlfConfig) -> (f64, bool) {
    let r_led = if led == required_led(track, pose) { 1.0 } else { -1.0 };
    let half = 0.5 * cfg.image_width;
    match edge_pixel(pose, cfg) {
        Some(d) => (1.0 - ((d - half) / half).abs() + r_led, false),
        None => (-1.0 + r_led, true),
    }
}

/// Fixed steering used in the SSS setting.
pub fn mlf_controller(edge: Option<f64>, cfg: &MlfConfig) -> MlfSteer {
    let center = 0.5 * cfg.image_width;
    match edge {
        Some(d) if (d - center).abs() < cfg.controller_threshold_px => MlfSteer::Straight,
        // The edge drifting right means the robot sits left of it.
        Some(d) if d > center => MlfSteer::Right,
        Some(_) => MlfSteer::Left,
        None => MlfSteer::Straight,
    }
}

pub fn wall_distance(pose: &WheeledPose) -> f64 {
    (MLF_TRACK_LENGTH - pose.x).clamp(0.0, MLF_TRACK_LENGTH)
}

/// Three-row population code: line colors, wall distance, edge position.
pub fn mlf_observation(track: &MlfTrack, pose: &WheeledPose, cfg: &MlfConfig) -> Observation {
    let edge = raw_edge_pixel(pose, cfg).unwrap_or(0.0);
    let codes = [
        PopulationCode::new(MLF_COLORS, track.left),
        PopulationCode::new(MLF_COLORS, track.middle),
        PopulationCode::new(MLF_COLORS, track.right),
        PopulationCode::from_value(wall_distance(pose), 0.0, MLF_TRACK_LENGTH, MLF_WIDTH),
        PopulationCode::from_value(edge, 0.0, cfg.image_width, MLF_WIDTH),
    ];
    Observation::new(rasterize(MLF_WIDTH, &MLF_GROUPS, &codes), LAYOUT)
}

#[derive(Debug, Clone)]
struct Episode {
    track: MlfTrack,
    pose: WheeledPose,
    lost: bool,
    wrong_leds: usize,
}

pub struct MlfEnv {
    cfg: MlfConfig,
    tracks: Vec<MlfTrack>,
    episode: Option<Episode>,
    clock: EpisodeClock,
}

impl MlfEnv {
    pub fn new(cfg: MlfConfig) -> Self {
        let tracks = mlf_tracks(cfg.led_seed);
        Self { cfg, tracks, episode: None, clock: EpisodeClock::default() }
    }

    pub fn tracks(&self) -> &[MlfTrack] {
        &self.tracks
    }

    pub fn pose(&self) -> Option<WheeledPose> {
        self.episode.as_ref().map(|e| e.pose)
    }

    pub fn current_track(&self) -> Option<&MlfTrack> {
        self.episode.as_ref().map(|e| &e.track)
    }

    /// `(led, steer)` selected by a learner action in the current setting.
    fn decode(&self, action: usize, pose: &WheeledPose) -> (usize, MlfSteer) {
        match self.cfg.setting {
            Setting::Ss => (action / 3, MlfSteer::from_index(action % 3)),
            Setting::Sss => (action, mlf_controller(edge_pixel(pose, &self.cfg), &self.cfg)),
        }
    }
}

impl Environment for MlfEnv {
    fn benchmark(&self) -> Benchmark {
        Benchmark::Mlf
    }

    fn observation_len(&self) -> usize {
        LAYOUT.len()
    }

    fn action_count(&self) -> usize {
        match self.cfg.setting {
            Setting::Ss => 3 * LED_COUNT,
            Setting::Sss => LED_COUNT,
        }
    }

    fn reset(&mut self, task: &TaskSpec, episode_seed: u64) -> Result<Observation, EnvError> {
        check_benchmark(Benchmark::Mlf, task)?;
        check_setting(self.cfg.setting, task)?;
        let mut rng = episode_rng(episode_seed);
        let track = self.tracks[pick_track(task, &mut rng)];
        let jitter = self.cfg.spawn_heading_jitter_deg;
        let heading = if jitter > 0.0 { rng.random_range(-jitter..=jitter).to_radians() } else { 0.0 };
        let pose = WheeledPose::new(0.0, 0.0, heading);
        self.episode = Some(Episode { track, pose, lost: false, wrong_leds: 0 });
        self.clock = EpisodeClock::start(task.step_budget);
        Ok(mlf_observation(&track, &pose, &self.cfg))
    }

    fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        self.clock.check(action, self.action_count())?;
        let ep = self.episode.as_ref().ok_or(EnvError::NotReset)?;
        let (led, steer) = self.decode(action.0, &ep.pose);
        let (vl, vr) = steer.speeds();
        let pose = diff_drive_step(ep.pose, vl, vr, &self.cfg.drive);
        let track = ep.track;
        let (reward, terminated) = mlf_reward(&pose, &track, led, &self.cfg);
        let correct = led == required_led(&track, &pose);
        let truncated = self.clock.tick(terminated);
        let ep = self.episode.as_mut().expect("checked above");
        ep.pose = pose;
        ep.lost |= terminated;
        ep.wrong_leds += usize::from(!correct);

        let mut info = BTreeMap::new();
        info.insert("track_id", track.track_id as f64);
        info.insert("edge_pixel", raw_edge_pixel(&pose, &self.cfg).unwrap_or(f64::NAN));
        info.insert("wall_distance", wall_distance(&pose));
        info.insert("led_correct", f64::from(u8::from(correct)));
        Ok(StepResult { observation: mlf_observation(&track, &pose, &self.cfg), reward, terminated, truncated, info })
    }

    /// The line was kept for the whole episode and every LED was right.
    fn succeeded(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| !e.lost && e.wrong_leds == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::wheeled::make_task_window;

    fn track() -> MlfTrack {
        MlfTrack { left: 0, middle: 1, right: 0, led_first: 2, led_second: 4, track_id: 6 }
    }

    #[test]
    fn centered_edge_with_correct_led_scores_two() {
        let cfg = MlfConfig::default();
        let pose = WheeledPose::new(0.1, 0.0, 0.0);
        assert_eq!(edge_pixel(&pose, &cfg), Some(50.0));
        assert_eq!(mlf_reward(&pose, &track(), 2, &cfg), (2.0, false));
        assert_eq!(mlf_reward(&pose, &track(), 3, &cfg), (0.0, false));
    }

    #[test]
    fn edge_at_image_border_scores_led_only() {
        let cfg = MlfConfig::default();
        // Robot 5 cm right of the edge puts it at pixel 0.
        let pose = WheeledPose::new(0.1, -0.05, 0.0);
        assert!((edge_pixel(&pose, &cfg).unwrap() - 0.0).abs() < 1e-9);
        let (r, done) = mlf_reward(&pose, &track(), 2, &cfg);
        assert!((r - 1.0).abs() < 1e-9 && !done);
    }

    #[test]
    fn lost_edge_terminates_with_penalty() {
        let cfg = MlfConfig::default();
        let pose = WheeledPose::new(0.1, 0.2, 0.0);
        assert_eq!(edge_pixel(&pose, &cfg), None);
        assert_eq!(mlf_reward(&pose, &track(), 2, &cfg), (0.0, true));
        assert_eq!(mlf_reward(&pose, &track(), 0, &cfg), (-2.0, true));
    }

    #[test]
    fn second_half_requires_second_led() {
        let cfg = MlfConfig::default();
        let pose = WheeledPose::new(0.5, 0.0, 0.0);
        assert_eq!(mlf_reward(&pose, &track(), 4, &cfg), (2.0, false));
    }

    #[test]
    fn observation_codes_track_colors() {
        let cfg = MlfConfig::default();
        let obs = mlf_observation(&track(), &WheeledPose::new(0.0, 0.0, 0.0), &cfg);
        assert!(obs.is_valid());
        let hot = obs.hot_indices();
        assert_eq!(&hot[..3], &[0, 1, 0]);
        let row0: Vec<usize> = (0..MLF_WIDTH).filter(|&i| obs.values[i] == 1.0).collect();
        assert_eq!(row0, vec![0, 7, 12]);
        assert_eq!(hot[3], MLF_WIDTH - 1);
    }

    #[test]
    fn controller_steers_toward_center() {
        let cfg = MlfConfig::default();
        assert_eq!(mlf_controller(Some(50.0), &cfg), MlfSteer::Straight);
        assert_eq!(mlf_controller(Some(70.0), &cfg), MlfSteer::Right);
        assert_eq!(mlf_controller(Some(20.0), &cfg), MlfSteer::Left);
    }

    #[test]
    fn sss_episode_keeps_the_line() {
        let cfg = MlfConfig { setting: Setting::Sss, ..MlfConfig::default() };
        let mut env = MlfEnv::new(cfg);
        let task = make_task_window(Benchmark::Mlf, 150, 0, 4, Setting::Sss).unwrap();
        for seed in 0..20 {
            env.reset(&task, seed).unwrap();
            let mut steps = 0;
            loop {
                let t = *env.current_track().unwrap();
                let pose = env.pose().unwrap();
                let r = env.step(Action(required_led(&t, &pose))).unwrap();
                steps += 1;
                assert!(!r.terminated, "line lost at step {steps} (seed {seed})");
                if r.done() {
                    break;
                }
            }
            assert_eq!(steps, 30);
        }
    }

    #[test]
    fn ss_action_space_has_eighteen_entries() {
        let env = MlfEnv::new(MlfConfig::default());
        assert_eq!(env.action_count(), 18);
        assert_eq!(env.observation_len(), 54);
    }
}
