use super::pnp::{reprojection_jacobian_at, reprojection_residual_at};
use super::*;
use crate::geometry::{CameraIntrinsics, CameraRig};
use approx::assert_abs_diff_eq;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

fn sharp_intr() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 160.0, 120.0, 320, 240).unwrap()
}

fn world_from_camera(x: f64, y: f64, yaw: f64) -> Pose3 {
    crate::geometry::camera_mount(yaw, 0.1, Vec3::new(x, y, 1.0)).invert()
}

#[test]
fn triangulation_recovers_exact_point() {
    let intr = sharp_intr();
    let target = Vec3::new(4.0, 0.6, 0.4);
    let pose_a = world_from_camera(0.0, 0.0, 0.0);
    let pose_b = world_from_camera(0.4, -0.2, 0.05);
    let px_a = crate::geometry::project_point(&intr, &pose_a.invert(), &target).unwrap();
    let px_b = crate::geometry::project_point(&intr, &pose_b.invert(), &target).unwrap();
    let point = triangulate_landmark((&px_a, &pose_a), (&px_b, &pose_b), &intr).unwrap();
    assert!((point - target).norm() < 1e-6, "{point:?}");
}

#[test]
fn identical_camera_poses_are_degenerate() {
    let intr = sharp_intr();
    let pose = world_from_camera(0.0, 0.0, 0.0);
    let r = triangulate_landmark(
        (&Vec2::new(100.0, 100.0), &pose),
        (&Vec2::new(120.0, 100.0), &pose),
        &intr,
    );
    assert!(matches!(r, Err(OdometryError::DegenerateBaseline(_))));
}

#[test]
fn near_parallel_rays_are_degenerate() {
    let intr = sharp_intr();
    // Two cameras side by side staring at the same pixel: rays parallel.
    let pose_a = world_from_camera(0.0, 0.0, 0.0);
    let pose_b = world_from_camera(0.05, 0.0, 0.0);
    let px = Vec2::new(160.0, 120.0);
    let r = triangulate_landmark((&px, &pose_a), (&px, &pose_b), &intr);
    assert!(r.is_err());
}

#[test]
fn pixel_noise_bound_established_by_monte_carlo() {
    // 0.5 px observation noise, 0.5 m baseline, ~5 m depth. 1000 draws
    // establish that the p95 recovery error stays within 0.15 m.
    let intr = sharp_intr();
    let target = Vec3::new(5.0, 0.3, 0.5);
    let pose_a = world_from_camera(0.0, 0.0, 0.0);
    let pose_b = world_from_camera(0.15, -0.45, 0.03);
    let clean_a = crate::geometry::project_point(&intr, &pose_a.invert(), &target).unwrap();
    let clean_b = crate::geometry::project_point(&intr, &pose_b.invert(), &target).unwrap();
    let mut rng = StdRng::seed_from_u64(29);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut errors: Vec<f64> = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let px_a = clean_a + Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng));
        let px_b = clean_b + Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng));
        if let Ok(p) = triangulate_landmark((&px_a, &pose_a), (&px_b, &pose_b), &intr) {
            errors.push((p - target).norm());
        }
    }
    assert!(errors.len() > 950, "too many rejections: {}", errors.len());
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = errors[errors.len() * 95 / 100];
    assert!(p95 < 0.15, "p95 error {p95}");
}

fn synthetic_rig() -> CameraRig {
    CameraRig::default_rig(CameraIntrinsics::new(250.0, 250.0, 160.0, 120.0, 320, 240).unwrap())
}

/// Landmarks sprinkled around the robot plus their projections from a known
/// body pose, spread over all four cameras.
fn synthetic_scene(
    truth: &Pose3,
    n: usize,
    rng: &mut StdRng,
) -> (Vec<PnpCorrespondence>, CameraRig) {
    let rig = synthetic_rig();
    let mut out = Vec::new();
    while out.len() < n {
        let point = Vec3::new(
            rng.random_range(-8.0..8.0),
            rng.random_range(-8.0..8.0),
            rng.random_range(0.0..2.0),
        );
        for (camera_index, cam) in rig.cameras().iter().enumerate() {
            let cam_from_world = cam.cam_from_world(truth);
            if let Ok(px) = crate::geometry::project_point(&cam.intrinsics, &cam_from_world, &point)
            {
                if cam.intrinsics.contains(&px) && (point - truth.translation()).norm() > 1.0 {
                    out.push(PnpCorrespondence {
                        world_point: point,
                        pixel: px,
                        camera_index,
                    });
                    break;
                }
            }
        }
    }
    (out, rig)
}

#[test]
fn pnp_with_true_initial_is_a_fixed_point() {
    let mut rng = StdRng::seed_from_u64(1);
    let truth = Pose3::planar(1.2, -0.7, 0.5);
    let (corr, rig) = synthetic_scene(&truth, 24, &mut rng);
    let result = pnp_estimate(&corr, &rig, &truth).unwrap();
    assert!((result.pose.translation() - truth.translation()).norm() < 1e-9);
    assert!(
        (result.pose.rotation() - truth.rotation()).abs().max() < 1e-9,
        "rotation drifted"
    );
    assert_eq!(result.inlier_count, corr.len());
}

#[test]
fn pnp_recovers_from_perturbed_initial() {
    let mut rng = StdRng::seed_from_u64(2);
    let truth = Pose3::planar(0.4, 0.9, -0.3);
    let (corr, rig) = synthetic_scene(&truth, 24, &mut rng);
    let initial = Pose3::planar(0.4 + 0.21, 0.9 - 0.21, -0.3 + 5f64.to_radians());
    let result = pnp_estimate(&corr, &rig, &initial).unwrap();
    assert!(
        (result.pose.translation() - truth.translation()).norm() < 1e-6,
        "translation error {}",
        (result.pose.translation() - truth.translation()).norm()
    );
    assert!((result.pose.rotation() - truth.rotation()).abs().max() < 1e-6);
}

#[test]
fn pnp_rejects_gross_outliers() {
    let mut rng = StdRng::seed_from_u64(3);
    let truth = Pose3::planar(0.0, 0.0, 0.2);
    let (mut corr, rig) = synthetic_scene(&truth, 20, &mut rng);
    for c in corr.iter_mut().take(4) {
        c.pixel += Vec2::new(50.0, -35.0);
    }
    let initial = Pose3::planar(0.1, -0.1, 0.25);
    let result = pnp_estimate(&corr, &rig, &initial).unwrap();
    assert_eq!(result.inlier_count, 16);
    assert!(
        (result.pose.translation() - truth.translation()).norm() < 1e-3,
        "translation error {}",
        (result.pose.translation() - truth.translation()).norm()
    );
    for (i, &inl) in result.inliers.iter().enumerate() {
        assert_eq!(inl, i >= 4, "correspondence {i}");
    }
}

#[test]
fn pnp_requires_four_correspondences() {
    let rig = synthetic_rig();
    let corr = vec![
        PnpCorrespondence {
            world_point: Vec3::new(2.0, 0.0, 0.0),
            pixel: Vec2::new(160.0, 120.0),
            camera_index: 0,
        };
        3
    ];
    assert!(matches!(
        pnp_estimate(&corr, &rig, &Pose3::identity()),
        Err(OdometryError::InsufficientCorrespondences(3))
    ));
}

#[test]
fn pnp_jacobian_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(4);
    let h = 1e-6;
    for _ in 0..100 {
        let truth = Pose3::planar(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let (corr, rig) = synthetic_scene(&truth, 1, &mut rng);
        let c = &corr[0];
        let jac = reprojection_jacobian_at(c, &rig, &truth).unwrap();
        for axis in 0..6 {
            let mut plus = [0.0; 6];
            plus[axis] = h;
            let mut minus = [0.0; 6];
            minus[axis] = -h;
            let rp = reprojection_residual_at(c, &rig, &truth, &plus).unwrap();
            let rm = reprojection_residual_at(c, &rig, &truth, &minus).unwrap();
            let fd = (rp - rm) / (2.0 * h);
            for row in 0..2 {
                let f = if row == 0 { fd.x } else { fd.y };
                let denom = f.abs().max(1.0);
                assert!(
                    (jac[row][axis] - f).abs() / denom < 1e-5,
                    "axis {axis} row {row}: analytic {} fd {f}",
                    jac[row][axis]
                );
            }
        }
    }
}

#[test]
fn imu_rest_only_advances_time() {
    let s = RobotState::at_rest(1.0, 2.0, 0.3, 10.0);
    let imu = ImuSample {
        linear_acceleration: Vec3::zeros(),
        angular_velocity: Vec3::zeros(),
        timestamp: 10.0,
    };
    let next = imu_predict(&s, &imu, 0.05).unwrap();
    assert_eq!(next.planar(), s.planar());
    assert_eq!(next.v, 0.0);
    assert_abs_diff_eq!(next.timestamp, 10.05);
}

#[test]
fn imu_single_euler_step_on_velocity() {
    let s = RobotState::at_rest(0.0, 0.0, 0.0, 0.0);
    let imu = ImuSample {
        linear_acceleration: Vec3::new(1.0, 0.0, 0.0),
        angular_velocity: Vec3::zeros(),
        timestamp: 0.0,
    };
    let next = imu_predict(&s, &imu, 0.1).unwrap();
    assert_abs_diff_eq!(next.v, 0.1, epsilon = 1e-15);
}

#[test]
fn imu_constant_turn_traces_quarter_circle() {
    // gyro pi/2 rad/s at 1 m/s over 1 s: a quarter of a circle of radius
    // 2/pi; semi-implicit Euler at 10 ms should land within 2%.
    let mut s = RobotState {
        pose: Pose3::planar(0.0, 0.0, 0.0),
        v: 1.0,
        omega: 0.0,
        timestamp: 0.0,
    };
    let gyro = std::f64::consts::FRAC_PI_2;
    let imu = ImuSample {
        linear_acceleration: Vec3::zeros(),
        angular_velocity: Vec3::new(0.0, 0.0, gyro),
        timestamp: 0.0,
    };
    for _ in 0..100 {
        s = imu_predict(&s, &imu, 0.01).unwrap();
    }
    let r = 1.0 / gyro;
    let expected = Vec2::new(r, r);
    let got = s.pose.xy();
    assert!(
        (got - expected).norm() < 0.02 * (std::f64::consts::FRAC_PI_2 * r),
        "endpoint {got:?} vs {expected:?}"
    );
    assert_abs_diff_eq!(s.pose.yaw(), std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
}

#[test]
fn imu_rejects_non_positive_dt() {
    let s = RobotState::at_rest(0.0, 0.0, 0.0, 0.0);
    let imu = ImuSample {
        linear_acceleration: Vec3::zeros(),
        angular_velocity: Vec3::zeros(),
        timestamp: 0.0,
    };
    assert!(matches!(
        imu_predict(&s, &imu, 0.0),
        Err(OdometryError::NonPositiveDt(_))
    ));
}

#[test]
fn fusion_without_measurements_is_identity() {
    let s = RobotState {
        pose: Pose3::planar(3.0, -1.0, 0.8),
        v: 0.7,
        omega: 0.1,
        timestamp: 5.0,
    };
    assert_eq!(fuse_state(&s, None, None).unwrap(), s);
}

#[test]
fn fusion_with_agreeing_pnp_is_identity() {
    let s = RobotState {
        pose: Pose3::planar(3.0, -1.0, 0.8),
        v: 0.7,
        omega: 0.1,
        timestamp: 5.0,
    };
    let fused = fuse_state(&s, Some((&s.pose, 30)), None).unwrap();
    assert_abs_diff_eq!(fused.pose.translation().x, 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(fused.pose.translation().y, -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(fused.pose.yaw(), 0.8, epsilon = 1e-12);
}

#[test]
fn fusion_gain_hand_case() {
    // Predicted at the origin, PnP at (1, 0) with 30 inliers: gain
    // min(1, 30/30) * 0.8 moves x to 0.8.
    let s = RobotState::at_rest(0.0, 0.0, 0.0, 0.0);
    let pnp = Pose3::planar(1.0, 0.0, 0.0);
    let fused = fuse_state(&s, Some((&pnp, 30)), None).unwrap();
    assert_abs_diff_eq!(fused.pose.translation().x, 0.8, epsilon = 1e-12);
    // Half the inliers halve the gain.
    let fused = fuse_state(&s, Some((&pnp, 15)), None).unwrap();
    assert_abs_diff_eq!(fused.pose.translation().x, 0.4, epsilon = 1e-12);
}

#[test]
fn gps_gain_formula() {
    let s = RobotState::at_rest(0.0, 0.0, 0.0, 0.0);
    let fix = GpsFix {
        position: Vec2::new(2.0, 0.0),
        horizontal_accuracy: 0.5,
        timestamp: 0.0,
    };
    // gain = clamp(0.5 / (0.5 + 0.5), 0, 0.5) = 0.5
    let fused = fuse_state(&s, None, Some(&fix)).unwrap();
    assert_abs_diff_eq!(fused.pose.translation().x, 1.0, epsilon = 1e-12);
    // A sloppy fix is trusted less.
    let sloppy = GpsFix {
        horizontal_accuracy: 4.5,
        ..fix
    };
    let fused = fuse_state(&s, None, Some(&sloppy)).unwrap();
    assert_abs_diff_eq!(fused.pose.translation().x, 0.2, epsilon = 1e-12);
}

#[test]
fn stale_gps_is_rejected() {
    let s = RobotState::at_rest(0.0, 0.0, 0.0, 10.0);
    let fix = GpsFix {
        position: Vec2::new(2.0, 0.0),
        horizontal_accuracy: 0.5,
        timestamp: 9.8,
    };
    assert!(matches!(
        fuse_state(&s, None, Some(&fix)),
        Err(OdometryError::StaleMeasurement(_))
    ));
}

#[test]
fn estimator_tracks_straight_motion_from_synthetic_observations() {
    // The robot drives +x at 1 m/s. Ground-truth landmarks project into the
    // rig each frame; the estimator must stay glued to the truth.
    let rig = synthetic_rig();
    let mut rng = StdRng::seed_from_u64(7);
    let landmarks: Vec<Vec3> = (0..300)
        .map(|_| {
            Vec3::new(
                rng.random_range(-10.0..25.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(0.0..1.5),
            )
        })
        .collect();
    let mut est = Estimator::new(
        rig.clone(),
        RobotState {
            pose: Pose3::planar(0.0, 0.0, 0.0),
            v: 1.0,
            omega: 0.0,
            timestamp: 0.0,
        },
        EstimatorConfig::default(),
    );
    let dt = 0.1;
    for frame in 1..=100 {
        let t = frame as f64 * dt;
        let truth = Pose3::planar(t * 1.0, 0.0, 0.0);
        // Clean IMU: constant velocity, no turn.
        let imu = ImuSample {
            linear_acceleration: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            timestamp: t,
        };
        est.predict(&imu, dt).unwrap();
        let mut obs = Vec::new();
        for (track_id, lm) in landmarks.iter().enumerate() {
            for (camera_index, cam) in rig.cameras().iter().enumerate() {
                let cam_from_world = cam.cam_from_world(&truth);
                if let Ok(px) =
                    crate::geometry::project_point(&cam.intrinsics, &cam_from_world, lm)
                {
                    if cam.intrinsics.contains(&px) && (lm - truth.translation()).norm() > 1.5 {
                        obs.push(TrackObservation {
                            track_id: track_id as u64,
                            camera_index,
                            pixel: px,
                        });
                        break;
                    }
                }
            }
        }
        est.process_frame(&obs, None).unwrap();
    }
    let final_truth = Vec2::new(10.0, 0.0);
    let err = (est.state().pose.xy() - final_truth).norm();
    assert!(err < 0.05, "drifted {err} m over 10 m");
}
