//! Indoor localization toolkit for a small single-track vehicle.
//!
//! Global pose measurements come from fiducial markers with known map poses
//! ([`pose_geometry`]). They are fused with gyro yaw rate and wheel-encoder
//! speed through a kinematic single-track model ([`vehicle_dynamics`]) by an
//! EKF, an adaptive-noise EKF, or a chi-square gated EKF ([`fusion_filters`]).
//!
//! The remaining modules exist to evaluate those filters: a seeded sensor
//! simulator, an offline LiDAR ground-truth extractor, RMSE evaluation with an
//! forgetting-factor sweep, and the experiment configuration consumed by the
//! `indoorloc` binary.

pub mod angle;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fuse;
pub mod fusion_filters;
pub mod ground_truth_pipeline;
pub mod pose_geometry;
pub mod sensor_simulator;
pub mod spline;
pub mod vehicle_dynamics;

pub use error::{Error, Result};
