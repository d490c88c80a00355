//! One configuration document for every stage of the stack. All fields have
//! defaults, so a TOML file only needs the values it overrides; CLI flags
//! override the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::NmpcConfig;
use crate::features::{FastParams, LkParams};
use crate::geometry::{CameraIntrinsics, CameraRig};
use crate::odometry::EstimatorConfig;
use crate::planning::DwaConfig;
use crate::simworld::{LidarParams, NoiseParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub fast_threshold: u8,
    pub fast_arc_length: usize,
    pub nms_radius: f64,
    pub pyramid_levels: usize,
    pub window_half: usize,
    pub lk_max_iters: usize,
    pub lk_eps: f64,
    /// Active tracks maintained per camera.
    pub target_tracks: usize,
    /// Minimum pixel separation between tracks.
    pub min_separation: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            fast_arc_length: 9,
            nms_radius: 5.0,
            pyramid_levels: 3,
            window_half: 10,
            lk_max_iters: 30,
            lk_eps: 0.01,
            target_tracks: 100,
            min_separation: 8.0,
        }
    }
}

impl FeatureConfig {
    pub fn fast_params(&self) -> FastParams {
        FastParams {
            threshold: self.fast_threshold,
            arc_length: self.fast_arc_length,
            nms_radius: self.nms_radius,
        }
    }

    pub fn lk_params(&self) -> LkParams {
        LkParams {
            window_half: self.window_half,
            max_iters: self.lk_max_iters,
            eps: self.lk_eps,
        }
    }
}

/// Default rig intrinsics (one entry shared by all four cameras); a dataset
/// calib.json overrides this wholesale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            fx: 240.0,
            fy: 240.0,
            cx: 159.5,
            cy: 119.5,
            width: 320,
            height: 240,
        }
    }
}

impl RigConfig {
    pub fn build_rig(&self) -> Result<CameraRig, ConfigError> {
        let intr = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(CameraRig::default_rig(intr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    pub resolution: f64,
    pub width_cells: usize,
    pub height_cells: usize,
    /// Semantic classes treated as traversable ground. There is no sensible
    /// default taxonomy; runs refuse to start without it.
    pub traversable_classes: Vec<u16>,
    pub max_ground_range: f64,
    pub min_box_area: usize,
    /// Metric class count of the label maps.
    pub num_classes: u16,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            width_cells: 400,
            height_cells: 400,
            traversable_classes: Vec::new(),
            max_ground_range: 20.0,
            min_box_area: 20,
            num_classes: 37,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub camera_hz: f64,
    /// Dynamics/IMU substeps per camera frame.
    pub substeps_per_frame: usize,
    pub gps_period_s: f64,
    pub slip_long: f64,
    pub slip_lat: f64,
    pub noise: NoiseParams,
    pub lidar: LidarParams,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            camera_hz: 10.0,
            substeps_per_frame: 10,
            gps_period_s: 1.0,
            slip_long: 0.05,
            slip_lat: 0.05,
            noise: NoiseParams::default(),
            lidar: LidarParams::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOutputConfig {
    /// Write an annotated frame every N frames (0 disables).
    pub annotate_every: usize,
    /// Write a grid snapshot every N frames (0 disables).
    pub grid_snapshot_every: usize,
    /// Dump the full planner lattice per cycle.
    pub planner_dump: bool,
    /// Use GPS fixes during runs.
    pub use_gps: bool,
}

impl Default for RunOutputConfig {
    fn default() -> Self {
        Self {
            annotate_every: 10,
            grid_snapshot_every: 50,
            planner_dump: true,
            use_gps: true,
        }
    }
}

/// The whole stack's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub features: FeatureConfig,
    pub rig: RigConfig,
    pub odometry: EstimatorConfig,
    pub mapping: MappingConfig,
    pub planning: DwaConfig,
    pub control: NmpcConfig,
    pub sim: SimConfig,
    pub run: RunOutputConfig,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
