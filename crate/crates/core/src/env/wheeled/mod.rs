//! Kinematic two-wheeled robot benchmarks (line following and object
//! pushing) in the population-coded SS / SSS settings.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Benchmark, CodeGroup, EnvError, Setting, TaskGoal, TaskSequence, TaskSpec};

mod mlf;
mod mpo;

pub use mlf::{
    edge_pixel, mlf_controller, mlf_observation, mlf_reward, MlfConfig, MlfEnv, MlfSteer, MLF_GROUPS, MLF_SPEEDS,
    MLF_TRACK_LENGTH, MLF_WIDTH,
};
pub use mpo::{
    bearing_deg, mpo_controller, mpo_observation, mpo_reward, object_distance, MpoConfig, MpoEnv, MpoMove, MPO_GROUPS,
    MPO_SPEEDS, MPO_WIDTH,
};

/// Tracks per wheeled benchmark.
pub const TRACK_COUNT: usize = 150;
pub const MLF_COLORS: usize = 6;
pub const LED_COUNT: usize = 6;
pub const MPO_SHAPES: usize = 5;
pub const MPO_COLORS: usize = 5;
pub const MPO_SYMBOLS: usize = 6;
pub const DEFAULT_WINDOW: usize = 4;
pub const WHEELED_STEP_BUDGET: usize = 30;

/// Planar pose; heading in radians wrapped to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheeledPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl WheeledPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffDriveParams {
    pub wheel_separation: f64,
    /// Duration of one control step in seconds.
    pub step_duration: f64,
}

impl Default for DiffDriveParams {
    fn default() -> Self {
        Self { wheel_separation: 0.10, step_duration: 0.1 }
    }
}

/// Advances a differential-drive pose by one control step, following the
/// exact circular arc when the wheel speeds differ.
pub fn diff_drive_step(pose: WheeledPose, v_left: f64, v_right: f64, params: &DiffDriveParams) -> WheeledPose {
    let v = 0.5 * (v_left + v_right);
    let omega = (v_right - v_left) / params.wheel_separation;
    let dt = params.step_duration;
    let theta = pose.heading;
    if omega.abs() < 1e-12 {
        return WheeledPose::new(pose.x + v * dt * theta.cos(), pose.y + v * dt * theta.sin(), theta);
    }
    let radius = v / omega;
    let next = theta + omega * dt;
    WheeledPose::new(pose.x + radius * (next.sin() - theta.sin()), pose.y - radius * (next.cos() - theta.cos()), next)
}

/// One-hot code: `hot_index` of `width` cells is lit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopulationCode {
    pub width: usize,
    pub hot_index: usize,
}

impl PopulationCode {
    pub fn new(width: usize, hot_index: usize) -> Self {
        assert!(hot_index < width, "hot index {hot_index} outside width {width}");
        Self { width, hot_index }
    }

    /// Codes `value` on `[lo, hi]` into `width` bins, rounding to the nearest
    /// bin and clamping out-of-range values to the end bins.
    pub fn from_value(value: f64, lo: f64, hi: f64, width: usize) -> Self {
        let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
        let bin = (t * (width - 1) as f64).round() as usize;
        Self::new(width, bin.min(width - 1))
    }

    pub fn write(&self, cells: &mut [f64]) {
        debug_assert_eq!(cells.len(), self.width);
        cells.iter_mut().for_each(|c| *c = 0.0);
        cells[self.hot_index] = 1.0;
    }
}

/// Writes `codes` into a zeroed `rows x width` raster following `groups`.
pub(crate) fn rasterize(width: usize, groups: &[CodeGroup], codes: &[PopulationCode]) -> Vec<f64> {
    let mut out = vec![0.0; super::ROWS * width];
    for (g, c) in groups.iter().zip(codes) {
        let start = g.row * width + g.offset;
        c.write(&mut out[start..start + g.len]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MlfTrack {
    pub left: usize,
    pub middle: usize,
    pub right: usize,
    /// LED required on the first half of the track.
    pub led_first: usize,
    /// LED required on the second half.
    pub led_second: usize,
    pub track_id: usize,
}

impl MlfTrack {
    pub fn id_of(left: usize, middle: usize, right: usize) -> usize {
        36 * left + 6 * middle + right
    }

    /// Colors `(l, m, r)` encoded by a track id.
    pub fn decode(track_id: usize) -> (usize, usize, usize) {
        (track_id / 36, (track_id / 6) % 6, track_id % 6)
    }

    pub fn is_feasible(left: usize, middle: usize, right: usize) -> bool {
        left < MLF_COLORS && middle < MLF_COLORS && right < MLF_COLORS && middle != left && middle != right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MpoTrack {
    pub shape: usize,
    pub color: usize,
    pub symbol: usize,
    pub track_id: usize,
    pub pushable: bool,
}

impl MpoTrack {
    pub fn id_of(shape: usize, color: usize, symbol: usize) -> usize {
        30 * shape + 6 * color + symbol
    }

    pub fn decode(track_id: usize) -> (usize, usize, usize) {
        (track_id / 30, (track_id / 6) % 5, track_id % 6)
    }
}

/// LEDs required on the two halves of a line-following track. Depends only
/// on the track id and the seed.
pub fn led_assignment(track_id: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(track_id as u64);
    (rng.random_range(0..LED_COUNT), rng.random_range(0..LED_COUNT))
}

/// All feasible line-following tracks ordered by id.
pub fn mlf_tracks(led_seed: u64) -> Vec<MlfTrack> {
    let mut out = Vec::with_capacity(TRACK_COUNT);
    for left in 0..MLF_COLORS {
        for middle in 0..MLF_COLORS {
            for right in 0..MLF_COLORS {
                if MlfTrack::is_feasible(left, middle, right) {
                    let track_id = MlfTrack::id_of(left, middle, right);
                    let (led_first, led_second) = led_assignment(track_id, led_seed);
                    out.push(MlfTrack { left, middle, right, led_first, led_second, track_id });
                }
            }
        }
    }
    out
}

/// All object-pushing tracks ordered by id.
pub fn mpo_tracks() -> Vec<MpoTrack> {
    let mut out = Vec::with_capacity(TRACK_COUNT);
    for shape in 0..MPO_SHAPES {
        for color in 0..MPO_COLORS {
            for symbol in 0..MPO_SYMBOLS {
                let track_id = MpoTrack::id_of(shape, color, symbol);
                out.push(MpoTrack { shape, color, symbol, track_id, pushable: track_id.is_multiple_of(2) });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Track {
    Mlf(MlfTrack),
    Mpo(MpoTrack),
}

impl Track {
    pub fn track_id(&self) -> usize {
        match self {
            Track::Mlf(t) => t.track_id,
            Track::Mpo(t) => t.track_id,
        }
    }
}

pub fn enumerate_tracks(benchmark: Benchmark, led_seed: u64) -> Result<Vec<Track>, EnvError> {
    match benchmark {
        Benchmark::Mlf => Ok(mlf_tracks(led_seed).into_iter().map(Track::Mlf).collect()),
        Benchmark::Mpo => Ok(mpo_tracks().into_iter().map(Track::Mpo).collect()),
        other => Err(EnvError::UnknownBenchmark(format!("{other} has no tracks"))),
    }
}

/// Task `task_index` of a sliding window over the track list: tracks
/// `task_index .. task_index + window`.
pub fn make_task_window(
    benchmark: Benchmark,
    track_count: usize,
    task_index: usize,
    window: usize,
    setting: Setting,
) -> Result<TaskSpec, EnvError> {
    if window == 0 || task_index + window > track_count {
        return Err(EnvError::InvalidTask {
            name: format!("task-{task_index}"),
            reason: format!("window {window} at {task_index} exceeds {track_count} tracks"),
        });
    }
    Ok(TaskSpec {
        name: format!("task-{task_index}"),
        benchmark,
        goal: TaskGoal::Tracks((task_index..task_index + window).collect()),
        step_budget: WHEELED_STEP_BUDGET,
        episode_budget: None,
        setting: Some(setting),
    })
}

/// Sliding-window task sequence. `count` defaults to every window position
/// (147 tasks for a window of four).
pub fn wheeled_tasks(
    benchmark: Benchmark,
    count: Option<usize>,
    window: usize,
    setting: Setting,
    seed: u64,
) -> Result<TaskSequence, EnvError> {
    let max = (TRACK_COUNT + 1).saturating_sub(window);
    let count = count.unwrap_or(max);
    let tasks = (0..count)
        .map(|i| make_task_window(benchmark, TRACK_COUNT, i, window, setting))
        .collect::<Result<Vec<_>, _>>()?;
    TaskSequence::new(tasks, seed)
}

/// Delimited listing of every track and its attributes.
pub fn track_table(benchmark: Benchmark, led_seed: u64) -> Result<String, EnvError> {
    let mut out = String::new();
    match benchmark {
        Benchmark::Mlf => {
            out.push_str("index,track_id,left,middle,right,led_first,led_second\n");
            for (i, t) in mlf_tracks(led_seed).iter().enumerate() {
                out.push_str(&format!(
                    "{i},{},{},{},{},{},{}\n",
                    t.track_id, t.left, t.middle, t.right, t.led_first, t.led_second
                ));
            }
        }
        Benchmark::Mpo => {
            out.push_str("index,track_id,shape,color,symbol,pushable\n");
            for (i, t) in mpo_tracks().iter().enumerate() {
                out.push_str(&format!("{i},{},{},{},{},{}\n", t.track_id, t.shape, t.color, t.symbol, t.pushable));
            }
        }
        other => return Err(EnvError::UnknownBenchmark(format!("{other} has no tracks"))),
    }
    Ok(out)
}

/// Picks the track and spawn perturbation of an episode from its seed.
pub(crate) fn episode_rng(episode_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(episode_seed)
}

pub(crate) fn pick_track(task: &TaskSpec, rng: &mut ChaCha8Rng) -> usize {
    let tracks = task.goal.tracks().expect("validated wheeled task");
    tracks[rng.random_range(0..tracks.len())]
}

pub(crate) fn check_setting(env: Setting, task: &TaskSpec) -> Result<(), EnvError> {
    match task.setting {
        None => Ok(()),
        Some(s) if s == env => Ok(()),
        other => Err(EnvError::SettingMismatch { env, task: other }),
    }
}
