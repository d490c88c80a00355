//! Joint Perspective-n-Point pose refinement across the camera rig.
//!
//! One body pose is optimized against all correspondences at once with
//! damped Gauss-Newton on SE(3), left-multiplied increments in the
//! body-from-world frame. After convergence, correspondences reprojecting
//! more than 3 px off are dropped and the solve repeats once on the
//! survivors.

use nalgebra::{Matrix2x6, Matrix3, Matrix6, Vector2, Vector6};

use crate::geometry::{CameraRig, Mat3, Pose3, Vec2, Vec3};

use super::{OdometryError, PNP_OUTLIER_PX};

/// One 3D-2D correspondence: a world landmark seen at a pixel by one rig
/// camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpCorrespondence {
    pub world_point: Vec3,
    pub pixel: Vec2,
    pub camera_index: usize,
}

/// Converged pose with the outlier split.
#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    pub pose: Pose3,
    pub inlier_count: usize,
    /// Per-correspondence inlier mask, parallel to the input slice.
    pub inliers: Vec<bool>,
    pub iterations: usize,
    /// Root-mean-square reprojection error over the inliers, in pixels.
    pub rms_error: f64,
}

const MAX_ITERS: usize = 50;
const CONVERGENCE_STEP: f64 = 1e-8;
const MAX_CONSECUTIVE_REJECTS: usize = 5;

/// Estimates the body pose (world-from-body) that minimizes total squared
/// reprojection error over all rig cameras, starting from `initial`.
pub fn pnp_estimate(
    correspondences: &[PnpCorrespondence],
    rig: &CameraRig,
    initial: &Pose3,
) -> Result<PnpResult, OdometryError> {
    if correspondences.len() < 4 {
        return Err(OdometryError::InsufficientCorrespondences(
            correspondences.len(),
        ));
    }
    let active: Vec<usize> = (0..correspondences.len()).collect();
    // Gross outliers drag a plain L2 optimum far enough that clean points
    // can exceed the pixel gate, so the marking pass runs Huber-weighted;
    // the survivors then get the pure least-squares solve.
    let first = solve(correspondences, &active, rig, initial, true)?;

    let mut kept = Vec::new();
    for &i in &active {
        if reprojection_error(&correspondences[i], rig, &first.0) <= PNP_OUTLIER_PX {
            kept.push(i);
        }
    }
    if kept.len() < 4 {
        return Err(OdometryError::InsufficientCorrespondences(kept.len()));
    }
    let (pose, iterations) = solve(correspondences, &kept, rig, &first.0, false)?;

    // Final inlier accounting against the refined pose.
    let mut final_inliers = vec![false; correspondences.len()];
    let mut count = 0usize;
    let mut sq_sum = 0.0;
    for (i, c) in correspondences.iter().enumerate() {
        let err = reprojection_error(c, rig, &pose);
        if err <= PNP_OUTLIER_PX {
            final_inliers[i] = true;
            count += 1;
            sq_sum += err * err;
        }
    }
    Ok(PnpResult {
        pose,
        inlier_count: count,
        inliers: final_inliers,
        iterations,
        rms_error: if count > 0 {
            (sq_sum / count as f64).sqrt()
        } else {
            f64::INFINITY
        },
    })
}

fn reprojection_error(c: &PnpCorrespondence, rig: &CameraRig, world_from_body: &Pose3) -> f64 {
    let cam = rig.camera(c.camera_index);
    let cam_from_world = cam.cam_from_world(world_from_body);
    let p = cam_from_world.transform_point(&c.world_point);
    if p.z <= 1e-6 {
        return f64::INFINITY;
    }
    let intr = &cam.intrinsics;
    let px = Vec2::new(intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy);
    (px - c.pixel).norm()
}

fn total_cost(
    correspondences: &[PnpCorrespondence],
    active: &[usize],
    rig: &CameraRig,
    world_from_body: &Pose3,
    robust: bool,
) -> f64 {
    active
        .iter()
        .map(|&i| {
            let e = reprojection_error(&correspondences[i], rig, world_from_body);
            if !e.is_finite() {
                1e12
            } else if robust {
                huber_rho(e)
            } else {
                e * e
            }
        })
        .sum()
}

fn huber_weight(r: f64) -> f64 {
    if r <= PNP_OUTLIER_PX {
        1.0
    } else {
        PNP_OUTLIER_PX / r
    }
}

fn huber_rho(r: f64) -> f64 {
    if r <= PNP_OUTLIER_PX {
        r * r
    } else {
        2.0 * PNP_OUTLIER_PX * r - PNP_OUTLIER_PX * PNP_OUTLIER_PX
    }
}

/// Damped Gauss-Newton on the body-from-world transform with increments
/// T_bw <- exp(xi) * T_bw, xi = (translation, rotation). With `robust` the
/// normal equations and the acceptance cost use Huber weights at the
/// outlier gate scale.
fn solve(
    correspondences: &[PnpCorrespondence],
    active: &[usize],
    rig: &CameraRig,
    initial: &Pose3,
    robust: bool,
) -> Result<(Pose3, usize), OdometryError> {
    let mut body_from_world = initial.invert();
    let mut lambda = 1e-4;
    let mut cost = total_cost(correspondences, active, rig, &body_from_world.invert(), robust);
    let mut consecutive_rejects = 0usize;
    let mut iterations = 0usize;

    for _ in 0..MAX_ITERS {
        iterations += 1;
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for &i in active {
            let c = &correspondences[i];
            let cam = rig.camera(c.camera_index);
            let p_body = body_from_world.transform_point(&c.world_point);
            let p_cam = cam.cam_from_body.transform_point(&p_body);
            if p_cam.z <= 1e-6 {
                continue;
            }
            let intr = &cam.intrinsics;
            let inv_z = 1.0 / p_cam.z;
            let predicted = Vec2::new(
                intr.fx * p_cam.x * inv_z + intr.cx,
                intr.fy * p_cam.y * inv_z + intr.cy,
            );
            let residual = Vector2::new(predicted.x - c.pixel.x, predicted.y - c.pixel.y);
            let weight = if robust {
                huber_weight(residual.norm())
            } else {
                1.0
            };

            // d(pixel)/d(p_cam)
            let proj = nalgebra::Matrix2x3::new(
                intr.fx * inv_z,
                0.0,
                -intr.fx * p_cam.x * inv_z * inv_z,
                0.0,
                intr.fy * inv_z,
                -intr.fy * p_cam.y * inv_z * inv_z,
            );
            // d(p_cam)/d(xi): p_cam = R_cb (p_body) + t_cb with
            // p_body' = p_body + rho + phi x p_body under left increments.
            let mut d_pbody = nalgebra::Matrix3x6::<f64>::zeros();
            d_pbody
                .view_mut((0, 0), (3, 3))
                .copy_from(&Matrix3::identity());
            d_pbody
                .view_mut((0, 3), (3, 3))
                .copy_from(&(-skew(&p_body)));
            let jac: Matrix2x6<f64> = proj * (*cam.cam_from_body.rotation() * d_pbody);

            h += jac.transpose() * jac * weight;
            g += jac.transpose() * residual * weight;
        }

        let mut improved = false;
        for _ in 0..12 {
            let damped = h + Matrix6::identity() * lambda;
            let Some(step) = damped.lu().solve(&(-g)) else {
                lambda *= 10.0;
                continue;
            };
            // A vanishing step means the gradient is gone: converged.
            if step.norm() < CONVERGENCE_STEP {
                return Ok((body_from_world.invert().orthonormalized(), iterations));
            }
            let candidate = apply_increment(&body_from_world, &step);
            let new_cost = total_cost(correspondences, active, rig, &candidate.invert(), robust);
            if new_cost < cost {
                body_from_world = candidate;
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                consecutive_rejects = 0;
                break;
            }
            lambda *= 10.0;
            consecutive_rejects += 1;
            if consecutive_rejects >= MAX_CONSECUTIVE_REJECTS {
                return Err(OdometryError::DivergedSolve(consecutive_rejects));
            }
        }
        if !improved {
            // Damping exhausted without a decrease: accept the local optimum.
            break;
        }
    }
    Ok((body_from_world.invert().orthonormalized(), iterations))
}

fn apply_increment(body_from_world: &Pose3, step: &Vector6<f64>) -> Pose3 {
    let rho = Vec3::new(step[0], step[1], step[2]);
    let phi = Vec3::new(step[3], step[4], step[5]);
    let rot = rotation_exp(&phi);
    let new_rot = rot * body_from_world.rotation();
    let new_t = rot * body_from_world.translation() + rho;
    Pose3::new(orthonormalize(&new_rot), new_t).unwrap_or_else(|_| {
        Pose3::from_yaw_pitch_roll(0.0, 0.0, 0.0, new_t)
    })
}

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues exponential of a rotation vector.
fn rotation_exp(phi: &Vec3) -> Mat3 {
    let angle = phi.norm();
    if angle < 1e-12 {
        return Mat3::identity() + skew(phi);
    }
    let axis = phi / angle;
    let k = skew(&axis);
    Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn orthonormalize(m: &Mat3) -> Mat3 {
    let c0 = m.column(0).normalize();
    let mut c1 = m.column(1).into_owned();
    c1 -= c0 * c0.dot(&c1);
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}

/// Residual and Jacobian probe used by the finite-difference checks in the
/// test suites: reprojection residual of one correspondence at a body pose
/// perturbed by `xi` (left increment on body-from-world).
pub fn reprojection_residual_at(
    c: &PnpCorrespondence,
    rig: &CameraRig,
    world_from_body: &Pose3,
    xi: &[f64; 6],
) -> Option<Vec2> {
    let step = Vector6::from_column_slice(xi);
    let perturbed = apply_increment(&world_from_body.invert(), &step);
    let cam = rig.camera(c.camera_index);
    let p_body = perturbed.transform_point(&c.world_point);
    let p_cam = cam.cam_from_body.transform_point(&p_body);
    if p_cam.z <= 1e-6 {
        return None;
    }
    let intr = &cam.intrinsics;
    Some(Vec2::new(
        intr.fx * p_cam.x / p_cam.z + intr.cx - c.pixel.x,
        intr.fy * p_cam.y / p_cam.z + intr.cy - c.pixel.y,
    ))
}

/// Analytic Jacobian of the reprojection residual of one correspondence,
/// evaluated at xi = 0; rows are (u, v), columns the 6 increment axes.
pub fn reprojection_jacobian_at(
    c: &PnpCorrespondence,
    rig: &CameraRig,
    world_from_body: &Pose3,
) -> Option<[[f64; 6]; 2]> {
    let body_from_world = world_from_body.invert();
    let cam = rig.camera(c.camera_index);
    let p_body = body_from_world.transform_point(&c.world_point);
    let p_cam = cam.cam_from_body.transform_point(&p_body);
    if p_cam.z <= 1e-6 {
        return None;
    }
    let intr = &cam.intrinsics;
    let inv_z = 1.0 / p_cam.z;
    let proj = nalgebra::Matrix2x3::new(
        intr.fx * inv_z,
        0.0,
        -intr.fx * p_cam.x * inv_z * inv_z,
        0.0,
        intr.fy * inv_z,
        -intr.fy * p_cam.y * inv_z * inv_z,
    );
    let mut d_pbody = nalgebra::Matrix3x6::<f64>::zeros();
    d_pbody
        .view_mut((0, 0), (3, 3))
        .copy_from(&Matrix3::identity());
    d_pbody.view_mut((0, 3), (3, 3)).copy_from(&(-skew(&p_body)));
    let jac: Matrix2x6<f64> = proj * (*cam.cam_from_body.rotation() * d_pbody);
    let mut out = [[0.0; 6]; 2];
    for r in 0..2 {
        for col in 0..6 {
            out[r][col] = jac[(r, col)];
        }
    }
    Some(out)
}
