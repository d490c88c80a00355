//! Rigid-body poses, pinhole cameras, the multi-camera rig and ray/plane
//! projections.
//!
//! Conventions used across the crate: the world frame is z-up with the
//! ground plane defaulting to z = 0; the robot body frame is x forward,
//! y left, z up; camera frames are x right, y down, z forward (optical
//! axis). Rotations are stored as 3x3 matrices and built from yaw/pitch/roll
//! helpers (Rz * Ry * Rx).

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Depth below which a point counts as behind the camera, in meters.
pub const MIN_DEPTH: f64 = 1e-6;
/// Tolerance used by the orthonormality and plane-intersection checks.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("rotation matrix is not orthonormal with determinant +1")]
    InvalidRotation,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("plane normal must have unit length")]
    InvalidPlane,
    #[error("point is behind the camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },
    #[error("ray does not intersect the ground plane ahead of its origin")]
    NoIntersection,
    #[error("camera rig must contain at least one camera")]
    EmptyRig,
}

/// A rigid transform: `p_out = rotation * p_in + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose3 {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates orthonormality (det +1 within 1e-9) before accepting.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, GeometryError> {
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Mat3::identity()).abs().max();
        let det_err = (rotation.determinant() - 1.0).abs();
        if ortho_err > 1e-9 || det_err > 1e-9 || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Rotation about +z by `yaw`, then +y by `pitch`, then +x by `roll`
    /// (R = Rz * Ry * Rx), with the given translation.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64, translation: Vec3) -> Self {
        let r = rot_z(yaw) * rot_y(pitch) * rot_x(roll);
        Self {
            rotation: r,
            translation,
        }
    }

    /// Planar pose on the ground plane: position (x, y, 0), heading `yaw`.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            rotation: rot_z(yaw),
            translation: Vec3::new(x, y, 0.0),
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Pose3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Pose3 {
        let rt = self.rotation.transpose();
        Pose3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Heading of the body x axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.translation.x, self.translation.y)
    }

    /// Re-orthonormalizes the rotation (Gram-Schmidt); long composition
    /// chains in the estimator call this to keep the invariant tight.
    pub fn orthonormalized(&self) -> Pose3 {
        let c0 = self.rotation.column(0).normalize();
        let mut c1 = self.rotation.column(1).into_owned();
        c1 -= c0 * c0.dot(&c1);
        let c1 = c1.normalize();
        let c2 = c0.cross(&c1);
        Pose3 {
            rotation: Mat3::from_columns(&[c0, c1, c2]),
            translation: self.translation,
        }
    }

    /// ZYX Euler angles (yaw, pitch, roll) such that
    /// `from_yaw_pitch_roll(yaw, pitch, roll, t)` reproduces the rotation.
    pub fn euler_zyx(&self) -> (f64, f64, f64) {
        let r = &self.rotation;
        let pitch = (-r[(2, 0)]).asin();
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        (yaw, pitch, roll)
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Pure pinhole intrinsics; no distortion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        if cx < 0.0 || cx >= width as f64 || cy < 0.0 || cy >= height as f64 {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn contains(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.x <= self.width as f64 - 1.0 && px.y >= 0.0 && px.y <= self.height as f64 - 1.0
    }
}

/// Projects a world point into pixel coordinates.
///
/// `cam_from_world` maps world points into the camera frame. The result may
/// lie outside the image bounds; callers filter.
pub fn project_point(
    intr: &CameraIntrinsics,
    cam_from_world: &Pose3,
    point: &Vec3,
) -> Result<Vec2, GeometryError> {
    let p = cam_from_world.transform_point(point);
    if p.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { depth: p.z });
    }
    Ok(Vec2::new(
        intr.fx * p.x / p.z + intr.cx,
        intr.fy * p.y / p.z + intr.cy,
    ))
}

/// Unit ray in the camera frame through the given pixel.
pub fn unproject_ray(intr: &CameraIntrinsics, pixel: &Vec2) -> Vec3 {
    Vec3::new(
        (pixel.x - intr.cx) / intr.fx,
        (pixel.y - intr.cy) / intr.fy,
        1.0,
    )
    .normalize()
}

/// Plane `{p : normal . p = offset}` with unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    normal: Vec3,
    offset: f64,
}

impl GroundPlane {
    pub fn new(normal: Vec3, offset: f64) -> Result<Self, GeometryError> {
        if (normal.norm() - 1.0).abs() > GEOM_EPS {
            return Err(GeometryError::InvalidPlane);
        }
        Ok(Self { normal, offset })
    }

    /// The z = 0 world ground plane.
    pub fn z0() -> Self {
        Self {
            normal: Vec3::new(0.0, 0.0, 1.0),
            offset: 0.0,
        }
    }

    pub fn normal(&self) -> &Vec3 {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed height of a point above the plane.
    pub fn height(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// First intersection of a forward ray with the ground plane.
pub fn ray_ground_intersection(
    origin: &Vec3,
    dir: &Vec3,
    plane: &GroundPlane,
) -> Result<Vec3, GeometryError> {
    let denom = plane.normal().dot(dir);
    if denom.abs() < GEOM_EPS {
        return Err(GeometryError::NoIntersection);
    }
    let t = (plane.offset() - plane.normal().dot(origin)) / denom;
    if t <= 0.0 {
        return Err(GeometryError::NoIntersection);
    }
    Ok(origin + dir * t)
}

/// One camera of the rig: intrinsics plus its mounting pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigCamera {
    pub intrinsics: CameraIntrinsics,
    /// Maps body-frame points into this camera's frame.
    pub cam_from_body: Pose3,
}

impl RigCamera {
    /// World-from-camera pose given the body pose in the world.
    pub fn world_from_camera(&self, world_from_body: &Pose3) -> Pose3 {
        world_from_body.compose(&self.cam_from_body.invert())
    }

    /// Camera-from-world pose given the body pose in the world.
    pub fn cam_from_world(&self, world_from_body: &Pose3) -> Pose3 {
        self.cam_from_body.compose(&world_from_body.invert())
    }
}

/// The multi-camera rig carried by the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<RigCamera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<RigCamera>) -> Result<Self, GeometryError> {
        if cameras.is_empty() {
            return Err(GeometryError::EmptyRig);
        }
        Ok(Self { cameras })
    }

    /// Default rig: four cameras with 90 degree yaw spacing, mounted 0.5 m
    /// above the body origin, pitched 15 degrees down, offset 0.1 m outward.
    /// Mounting height and tilt are engineering defaults, not platform data.
    pub fn default_rig(intrinsics: CameraIntrinsics) -> Self {
        let cameras = (0..4)
            .map(|k| {
                let yaw = k as f64 * std::f64::consts::FRAC_PI_2;
                let center = Vec3::new(0.1 * yaw.cos(), 0.1 * yaw.sin(), 0.5);
                RigCamera {
                    intrinsics,
                    cam_from_body: camera_mount(yaw, 15f64.to_radians(), center),
                }
            })
            .collect();
        Self { cameras }
    }

    pub fn cameras(&self) -> &[RigCamera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, index: usize) -> &RigCamera {
        &self.cameras[index]
    }
}

/// cam-from-body pose for a camera looking along the body-frame direction
/// yawed by `view_yaw` and pitched `pitch_down` below the horizon, with its
/// center at `center` in body coordinates.
pub fn camera_mount(view_yaw: f64, pitch_down: f64, center: Vec3) -> Pose3 {
    // Axis permutation from an x-forward/z-up frame to the optical frame
    // (x right, y down, z forward).
    let permute = Mat3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    let body_from_cam_rot = rot_z(view_yaw) * rot_y(pitch_down) * permute.transpose();
    let body_from_cam = Pose3 {
        rotation: body_from_cam_rot,
        translation: center,
    };
    body_from_cam.invert()
}
