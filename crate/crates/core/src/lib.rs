//! Localization from egocentric cost-map observations against a schematic
//! track map, and sampling-based driving on top of the estimate.
//!
//! * [`map`]: schematic cost map built from a track centerline, local patch
//!   extraction.
//! * [`sensor`]: egocentric cost-map frames, synthetic, replayed or streamed
//!   from an external predictor.
//! * [`filter`]: importance-resampling particle filter over
//!   `(p_x, p_y, ψ, v_x, v_y)`.
//! * [`mppi`]: sampling-based predictive controller over the track cost.
//! * [`sim`]: planar vehicle plant and synthetic IMU and wheel-speed sensors.
//! * [`harness`]: scenario files, the closed loop, binary run logs, replay,
//!   metrics and sweeps.

pub mod filter;
pub mod geometry;
pub mod harness;
pub mod map;
pub mod mppi;
pub mod rng;
pub mod sensor;
pub mod sim;

pub use geometry::{wrap_angle, Pose2D};
