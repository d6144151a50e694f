//! Egocentric cost-map observations.
//!
//! A [`CostmapFrame`] is the top-down traversal-cost image in front of the
//! vehicle. Frames come from a synthetic degradation model over the schematic
//! map, from a recorded run log, or from an external predictor process over
//! the framed `CMAP` wire format.

mod degrade;
mod frame;
mod source;

pub use degrade::{
    calibrate_degradation, frame_accuracy, frames_accuracy, pixel_accuracy, synth_observe, CalibrationSpec,
    DegradationParams,
};
pub use frame::{
    decode_frame, encode_frame, read_framed, write_framed, CostmapFrame, FRAME_FORMAT_VERSION, FRAME_MAGIC,
};
pub use source::{ExternalSource, FramePoll, ReplaySource, SensorSource, SyntheticSource};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("calibration failed: target accuracy {target} not reachable (achievable range {lo:.4}..={hi:.4})")]
    CalibrationFailed { target: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
