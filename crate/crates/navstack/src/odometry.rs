//! Robot pose estimation: landmark triangulation from tracks, joint
//! Perspective-n-Point refinement across the rig, IMU dead reckoning and
//! fixed-gain measurement fusion.

pub mod estimator;
mod pnp;
#[cfg(test)]
mod tests;

pub use estimator::{Estimator, EstimatorConfig, TrackObservation};
pub use pnp::{
    pnp_estimate, reprojection_jacobian_at, reprojection_residual_at, PnpCorrespondence,
    PnpResult,
};

use crate::geometry::{project_point, unproject_ray, wrap_angle, CameraIntrinsics, Pose3, Vec2, Vec3};

/// Minimum stereo baseline for triangulation, in meters.
pub const MIN_BASELINE: f64 = 0.01;
/// Rays closer to parallel than this angle cannot triangulate, in radians.
pub const MIN_RAY_ANGLE: f64 = 0.5 * std::f64::consts::PI / 180.0;
/// Triangulations reprojecting worse than this are rejected, in pixels.
pub const MAX_TRIANGULATION_REPROJ: f64 = 2.0;
/// Reprojection error above which a PnP correspondence is an outlier, px.
pub const PNP_OUTLIER_PX: f64 = 3.0;
/// Inlier count at which the PnP pose correction gain saturates.
pub const PNP_FULL_CONFIDENCE_INLIERS: f64 = 30.0;
/// Pose correction gain applied at full PnP confidence.
pub const PNP_MAX_GAIN: f64 = 0.8;
/// Process noise scale for the GPS blending gain, in meters.
pub const GPS_SIGMA_PROC: f64 = 0.5;
/// Measurements older or newer than this relative to the predicted state
/// are stale, in seconds.
pub const MAX_MEASUREMENT_AGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdometryError {
    #[error("camera baseline {0:.4} m is too small to triangulate")]
    DegenerateBaseline(f64),
    #[error("triangulated point is behind a camera")]
    BehindCamera,
    #[error("triangulation reprojects {0:.2} px off its observations")]
    HighReprojection(f64),
    #[error("PnP needs at least 4 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("PnP solve diverged after {0} damping retreats")]
    DivergedSolve(usize),
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("measurement is {0:.3} s away from the predicted state epoch")]
    StaleMeasurement(f64),
}

/// Planar robot state: world-from-body pose, forward speed, yaw rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub pose: Pose3,
    pub v: f64,
    pub omega: f64,
    pub timestamp: f64,
}

impl RobotState {
    pub fn at_rest(x: f64, y: f64, yaw: f64, timestamp: f64) -> Self {
        Self {
            pose: Pose3::planar(x, y, yaw),
            v: 0.0,
            omega: 0.0,
            timestamp,
        }
    }

    pub fn planar(&self) -> (f64, f64, f64) {
        (
            self.pose.translation().x,
            self.pose.translation().y,
            self.pose.yaw(),
        )
    }
}

/// A triangulated world point tied to a track ID.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Vec3,
    pub observation_count: u32,
}

/// One inertial sample in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub linear_acceleration: Vec3,
    pub angular_velocity: Vec3,
    pub timestamp: f64,
}

/// A planar GPS fix already converted to world meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub position: Vec2,
    pub horizontal_accuracy: f64,
    pub timestamp: f64,
}

/// Triangulates a world point from two observations of the same feature.
///
/// Each observation pairs a pixel with the camera's world-from-camera pose;
/// both views share the intrinsics. Returns the midpoint of the shortest
/// segment between the two viewing rays. Rejected when the baseline is
/// under 1 cm, the rays are within half a degree of parallel, the point
/// falls behind a camera, or it reprojects more than 2 px off either
/// observation.
pub fn triangulate_landmark(
    obs_a: (&Vec2, &Pose3),
    obs_b: (&Vec2, &Pose3),
    intr: &CameraIntrinsics,
) -> Result<Vec3, OdometryError> {
    let (px_a, pose_a) = obs_a;
    let (px_b, pose_b) = obs_b;
    let o_a = *pose_a.translation();
    let o_b = *pose_b.translation();
    let baseline = (o_a - o_b).norm();
    if baseline < MIN_BASELINE {
        return Err(OdometryError::DegenerateBaseline(baseline));
    }
    let d_a = pose_a.transform_vector(&unproject_ray(intr, px_a));
    let d_b = pose_b.transform_vector(&unproject_ray(intr, px_b));
    let cos_angle = d_a.dot(&d_b).clamp(-1.0, 1.0);
    if cos_angle.acos() < MIN_RAY_ANGLE {
        return Err(OdometryError::DegenerateBaseline(baseline));
    }

    // Closest points on the two rays: solve the 2x2 normal equations for
    // o_a + t_a d_a closest to o_b + t_b d_b.
    let w0 = o_a - o_b;
    let a = d_a.dot(&d_a);
    let b = d_a.dot(&d_b);
    let c = d_b.dot(&d_b);
    let d = d_a.dot(&w0);
    let e = d_b.dot(&w0);
    let denom = a * c - b * b;
    if denom.abs() < 1e-12 {
        return Err(OdometryError::DegenerateBaseline(baseline));
    }
    let t_a = (b * e - c * d) / denom;
    let t_b = (a * e - b * d) / denom;
    if t_a <= 0.0 || t_b <= 0.0 {
        return Err(OdometryError::BehindCamera);
    }
    let point = ((o_a + d_a * t_a) + (o_b + d_b * t_b)) / 2.0;

    let mut worst = 0.0f64;
    for (px, pose) in [(px_a, pose_a), (px_b, pose_b)] {
        let reproj = project_point(intr, &pose.invert(), &point)
            .map_err(|_| OdometryError::BehindCamera)?;
        worst = worst.max((reproj - *px).norm());
    }
    if worst > MAX_TRIANGULATION_REPROJ {
        return Err(OdometryError::HighReprojection(worst));
    }
    Ok(point)
}

/// Planar dead reckoning over one IMU step: the forward speed integrates
/// body-x acceleration, the heading integrates the z gyro, and the position
/// advances by v*dt along the updated heading.
pub fn imu_predict(state: &RobotState, imu: &ImuSample, dt: f64) -> Result<RobotState, OdometryError> {
    if dt <= 0.0 {
        return Err(OdometryError::NonPositiveDt(dt));
    }
    debug_assert!(dt <= 0.1 + 1e-9, "IMU steps are expected at 10 Hz or faster");
    let (x, y, yaw) = state.planar();
    let v_new = state.v + imu.linear_acceleration.x * dt;
    let yaw_new = wrap_angle(yaw + imu.angular_velocity.z * dt);
    let x_new = x + state.v * dt * yaw_new.cos();
    let y_new = y + state.v * dt * yaw_new.sin();
    Ok(RobotState {
        pose: Pose3::planar(x_new, y_new, yaw_new),
        v: v_new,
        omega: imu.angular_velocity.z,
        timestamp: state.timestamp + dt,
    })
}

/// Fixed-gain complementary fusion of the predicted state with an optional
/// PnP pose (gain `min(1, inliers/30) * 0.8` on planar translation and
/// heading) and an optional GPS fix (gain
/// `clamp(sigma / (sigma + accuracy), 0, 0.5)` on planar position, with
/// sigma = 0.5 m). Absent measurements contribute nothing. The PnP pose is
/// same-frame by construction; the GPS timestamp must match the predicted
/// epoch within 50 ms.
pub fn fuse_state(
    predicted: &RobotState,
    pnp: Option<(&Pose3, usize)>,
    gps: Option<&GpsFix>,
) -> Result<RobotState, OdometryError> {
    if let Some(fix) = gps {
        let age = (fix.timestamp - predicted.timestamp).abs();
        if age > MAX_MEASUREMENT_AGE {
            return Err(OdometryError::StaleMeasurement(age));
        }
    }
    let (mut x, mut y, mut yaw) = predicted.planar();
    if let Some((pose, inliers)) = pnp {
        let gain = (inliers as f64 / PNP_FULL_CONFIDENCE_INLIERS).min(1.0) * PNP_MAX_GAIN;
        let (px, py, pyaw) = (
            pose.translation().x,
            pose.translation().y,
            pose.yaw(),
        );
        x += gain * (px - x);
        y += gain * (py - y);
        yaw = wrap_angle(yaw + gain * wrap_angle(pyaw - yaw));
    }
    if let Some(fix) = gps {
        let gain = (GPS_SIGMA_PROC / (GPS_SIGMA_PROC + fix.horizontal_accuracy)).clamp(0.0, 0.5);
        x += gain * (fix.position.x - x);
        y += gain * (fix.position.y - y);
    }
    Ok(RobotState {
        pose: Pose3::planar(x, y, yaw),
        v: predicted.v,
        omega: predicted.omega,
        timestamp: predicted.timestamp,
    })
}
