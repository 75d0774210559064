//! Forward kinematics for the 7-joint arm.
//!
//! The chain is described by seven modified-DH rows. Each row contributes
//! `RotX(alpha) * TransX(a) * RotZ(q + theta_offset) * TransZ(d)`, and a fixed
//! flange offset along the last joint axis places the end-effector point.
//! Positions are expressed in the base frame at the arm mount (z up).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of revolute joints in the arm.
pub const JOINT_COUNT: usize = 7;

const PANDA_CHAIN: &str = include_str!("../../../configs/chains/panda.toml");

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint index {0} out of range (expected < {JOINT_COUNT})")]
    JointIndex(usize),
    #[error("action index {k} out of range for {n} discrete actions")]
    ActionIndex { k: usize, n: usize },
    #[error("at least two discrete actions are required, got {0}")]
    TooFewActions(usize),
    #[error("chain must have exactly {JOINT_COUNT} joints, found {0}")]
    JointCount(usize),
    #[error("joint {joint}: min {min} must be below max {max}")]
    InvalidLimits { joint: usize, min: f64, max: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("reading chain file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing chain file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose3 {
    pub const ORIGIN: Pose3 = Pose3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(self, other: Pose3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Pose3 {
    type Output = Pose3;
    fn add(self, o: Pose3) -> Pose3 {
        Pose3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Pose3 {
    type Output = Pose3;
    fn sub(self, o: Pose3) -> Pose3 {
        Pose3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Pose3 {
    type Output = Pose3;
    fn mul(self, s: f64) -> Pose3 {
        Pose3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Seven joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAngles(pub [f64; JOINT_COUNT]);

impl JointAngles {
    pub fn new(angles: [f64; JOINT_COUNT]) -> Result<Self, KinematicsError> {
        if angles.iter().all(|a| a.is_finite()) {
            Ok(Self(angles))
        } else {
            Err(KinematicsError::NonFinite("joint angles"))
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    pub min: [f64; JOINT_COUNT],
    pub max: [f64; JOINT_COUNT],
}

impl JointLimits {
    pub fn new(min: [f64; JOINT_COUNT], max: [f64; JOINT_COUNT]) -> Result<Self, KinematicsError> {
        for j in 0..JOINT_COUNT {
            if !(min[j].is_finite() && max[j].is_finite()) {
                return Err(KinematicsError::NonFinite("joint limits"));
            }
            if min[j] >= max[j] {
                return Err(KinematicsError::InvalidLimits { joint: j, min: min[j], max: max[j] });
            }
        }
        Ok(Self { min, max })
    }

    /// Per-joint range midpoints.
    pub fn midpoints(&self) -> JointAngles {
        let mut q = [0.0; JOINT_COUNT];
        for (j, v) in q.iter_mut().enumerate() {
            *v = 0.5 * (self.min[j] + self.max[j]);
        }
        JointAngles(q)
    }

    pub fn clamp(&self, q: JointAngles) -> JointAngles {
        let mut out = q.0;
        for (j, v) in out.iter_mut().enumerate() {
            *v = v.clamp(self.min[j], self.max[j]);
        }
        JointAngles(out)
    }

    pub fn contains(&self, q: &JointAngles) -> bool {
        q.0.iter().enumerate().all(|(j, v)| *v >= self.min[j] && *v <= self.max[j])
    }
}

/// One modified-DH row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    links: [LinkParams; JOINT_COUNT],
    flange: f64,
    limits: JointLimits,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    #[serde(default)]
    flange: f64,
    joint: Vec<JointRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRow {
    a: f64,
    d: f64,
    alpha: f64,
    #[serde(default)]
    theta_offset: f64,
    min: f64,
    max: f64,
}

impl KinematicChain {
    pub fn new(links: [LinkParams; JOINT_COUNT], flange: f64, limits: JointLimits) -> Result<Self, KinematicsError> {
        let finite = links
            .iter()
            .all(|l| l.a.is_finite() && l.d.is_finite() && l.alpha.is_finite() && l.theta_offset.is_finite());
        if !finite || !flange.is_finite() {
            return Err(KinematicsError::NonFinite("link parameters"));
        }
        Ok(Self { links, flange, limits })
    }

    /// The Panda-style chain shipped in `configs/chains/panda.toml`.
    pub fn panda() -> Self {
        Self::from_toml_str(PANDA_CHAIN).expect("bundled chain file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, KinematicsError> {
        let file: ChainFile = toml::from_str(text)?;
        if file.joint.len() != JOINT_COUNT {
            return Err(KinematicsError::JointCount(file.joint.len()));
        }
        let mut links = [LinkParams { a: 0.0, d: 0.0, alpha: 0.0, theta_offset: 0.0 }; JOINT_COUNT];
        let mut min = [0.0; JOINT_COUNT];
        let mut max = [0.0; JOINT_COUNT];
        for (j, row) in file.joint.iter().enumerate() {
            links[j] = LinkParams { a: row.a, d: row.d, alpha: row.alpha, theta_offset: row.theta_offset };
            min[j] = row.min;
            max[j] = row.max;
        }
        Self::new(links, file.flange, JointLimits::new(min, max)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, KinematicsError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ChainFile {
            flange: self.flange,
            joint: (0..JOINT_COUNT)
                .map(|j| JointRow {
                    a: self.links[j].a,
                    d: self.links[j].d,
                    alpha: self.links[j].alpha,
                    theta_offset: self.links[j].theta_offset,
                    min: self.limits.min[j],
                    max: self.limits.max[j],
                })
                .collect(),
        };
        toml::to_string(&file).expect("chain serializes")
    }

    pub fn links(&self) -> &[LinkParams; JOINT_COUNT] {
        &self.links
    }

    pub fn flange(&self) -> f64 {
        self.flange
    }

    pub fn limits(&self) -> &JointLimits {
        &self.limits
    }

    /// Upper bound on the distance of any reachable point from the base.
    pub fn reach_bound(&self) -> f64 {
        self.links.iter().map(|l| l.a.abs() + l.d.abs()).sum::<f64>() + self.flange.abs()
    }

    /// End-effector position for joint angles `q`. Limits are not enforced.
    pub fn forward_kinematics(&self, q: &JointAngles) -> Pose3 {
        let mut rot = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut pos = [0.0; 3];
        for (link, angle) in self.links.iter().zip(q.0.iter()) {
            let (sa, ca) = link.alpha.sin_cos();
            let (st, ct) = (angle + link.theta_offset).sin_cos();
            // Local frame: RotX(alpha) * RotZ(theta); translation (a, 0, 0) + local * (0, 0, d).
            let local = [[ct, -st, 0.0], [st * ca, ct * ca, -sa], [st * sa, ct * sa, ca]];
            let offset = [link.a, -sa * link.d, ca * link.d];
            for (p, row) in pos.iter_mut().zip(rot.iter()) {
                *p += row[0] * offset[0] + row[1] * offset[1] + row[2] * offset[2];
            }
            rot = mat3_mul(&rot, &local);
        }
        for (p, row) in pos.iter_mut().zip(rot.iter()) {
            *p += row[2] * self.flange;
        }
        Pose3::new(pos[0], pos[1], pos[2])
    }
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// Target angle of action `k` out of `n_actions` evenly spaced angles across
/// the joint's range. The endpoints are returned exactly.
pub fn discretize_joint(
    limits: &JointLimits,
    joint: usize,
    n_actions: usize,
    k: usize,
) -> Result<f64, KinematicsError> {
    if joint >= JOINT_COUNT {
        return Err(KinematicsError::JointIndex(joint));
    }
    if n_actions < 2 {
        return Err(KinematicsError::TooFewActions(n_actions));
    }
    if k >= n_actions {
        return Err(KinematicsError::ActionIndex { k, n: n_actions });
    }
    let (lo, hi) = (limits.min[joint], limits.max[joint]);
    if k == n_actions - 1 {
        return Ok(hi);
    }
    Ok(lo + k as f64 * (hi - lo) / (n_actions - 1) as f64)
}

/// Reachable region used for legality checks of Cartesian moves: a ball
/// intersected with the half-space above the floor.
///
/// The ball is centered on the shoulder (the second joint axis, 0.333 m above
/// the mount), which is where the arm's nominal 0.855 m reach is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workspace {
    pub center: [f64; 3],
    pub radius: f64,
    pub min_z: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { center: [0.0, 0.0, 0.333], radius: 0.855, min_z: 0.0 }
    }
}

impl Workspace {
    pub fn contains(&self, p: Pose3) -> bool {
        let [cx, cy, cz] = self.center;
        p.distance(Pose3::new(cx, cy, cz)) <= self.radius && p.z >= self.min_z
    }
}

/// [`Workspace::contains`] for the default region.
pub fn workspace_contains(p: Pose3) -> bool {
    Workspace::default().contains(p)
}
