//! Planar vehicle plant and synthetic IMU and wheel-speed sensors.

mod sensors;
mod vehicle;

pub use sensors::{emit_imu, emit_wheelspeed, SensorNoiseParams, GRAVITY};
pub use vehicle::{step, BicycleModel, SimState, VehicleParams, VehicleState};
