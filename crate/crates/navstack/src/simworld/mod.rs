//! Synthetic environment and sensor simulation: camera frames with ground
//! truth label maps, lidar sweeps, IMU/GPS streams and the true skid-steer
//! dynamics the rest of the stack is tested against.

mod dynamics;
mod lidar;
mod record;
mod render;
mod scene;

pub use dynamics::{gps_due, step_dynamics, synth_imu, synth_gps, NoiseParams, SimState};
pub use lidar::{synth_lidar, LidarParams};
pub use record::{record_dataset, Driver, RecordedDataset};
pub use render::synth_render;
pub use scene::{Footprint, Obstacle, Scene, SceneConfig, ScenePoint};

/// Toy semantic taxonomy of the synthetic world, mapped into the [1, N]
/// class range used by the metrics.
pub const CLASS_GROUND: u16 = 1;
pub const CLASS_PEDESTRIAN: u16 = 2;
pub const CLASS_VEGETATION: u16 = 3;
/// Sky is the reserved last toy class; it never occurs as an instance.
pub const CLASS_SKY: u16 = 4;
/// Number of toy classes (metrics may still run with larger N).
pub const TOY_CLASS_COUNT: u16 = 4;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("camera center is below the ground plane")]
    CameraBelowGround,
    #[error("scene geometry is invalid: {0}")]
    BadScene(String),
    #[error("dataset write failed: {0}")]
    Io(#[from] std::io::Error),
}
