//! Analytic lidar: per-ray casting against the ground plane and obstacle
//! volumes.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose3, Vec3};
use crate::mapping::PointCloud;

use super::render::ray_obstacle;
use super::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarParams {
    pub channels: usize,
    /// Azimuth step, degrees.
    pub horizontal_step_deg: f64,
    /// Elevation span, degrees (lowest and highest channel).
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub max_range: f64,
    /// Sensor mount height above the body origin, meters.
    pub mount_height: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            channels: 40,
            horizontal_step_deg: 0.5,
            elevation_min_deg: -25.0,
            elevation_max_deg: 15.0,
            max_range: 25.0,
            mount_height: 0.8,
        }
    }
}

impl LidarParams {
    /// Body-from-sensor translation of the mount.
    pub fn sensor_from_body(&self) -> Pose3 {
        Pose3::from_yaw_pitch_roll(0.0, 0.0, 0.0, Vec3::new(0.0, 0.0, -self.mount_height))
    }
}

/// Sweeps a full revolution, casting each (channel, azimuth) ray against the
/// scene and keeping the nearest hit within range. Points come back in the
/// sensor frame, channel-major then azimuth, deterministic.
pub fn synth_lidar(scene: &Scene, body_pose: &Pose3, params: &LidarParams, timestamp: f64) -> PointCloud {
    let sensor_origin_body = Vec3::new(0.0, 0.0, params.mount_height);
    let origin = body_pose.transform_point(&sensor_origin_body);
    let steps = (360.0 / params.horizontal_step_deg).round() as usize;
    let mut points = Vec::new();
    for ch in 0..params.channels {
        let frac = if params.channels > 1 {
            ch as f64 / (params.channels - 1) as f64
        } else {
            0.5
        };
        let elevation =
            (params.elevation_min_deg + frac * (params.elevation_max_deg - params.elevation_min_deg))
                .to_radians();
        let (se, ce) = elevation.sin_cos();
        for az_step in 0..steps {
            let azimuth = (az_step as f64 * params.horizontal_step_deg).to_radians();
            let (sa, ca) = azimuth.sin_cos();
            let dir_sensor = Vec3::new(ce * ca, ce * sa, se);
            let dir_world = body_pose.transform_vector(&dir_sensor);
            let mut best = f64::INFINITY;
            for ob in &scene.obstacles {
                if let Some(t) = ray_obstacle(&origin, &dir_world, ob) {
                    best = best.min(t);
                }
            }
            if let Ok(p) = crate::geometry::ray_ground_intersection(&origin, &dir_world, &scene.ground)
            {
                best = best.min((p - origin).norm());
            }
            if best <= params.max_range {
                points.push(dir_sensor * best);
            }
        }
    }
    PointCloud::new(points, timestamp)
}
