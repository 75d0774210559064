//! Kinematic continual reinforcement-learning benchmarks.
//!
//! Four physics-free environments (Cartesian and joint-space reaching with a
//! 7-joint arm, line following and object pushing with a two-wheeled robot),
//! baseline learners, and a harness that trains on task sequences and records
//! the lower-triangular evaluation matrix.

pub mod agents;
pub mod config;
pub mod env;
pub mod harness;
pub mod kinematics;
pub mod runner;
