//! Analytic camera rendering: per-pixel ray casting for labels and depth,
//! Gaussian splat compositing for trackable texture.

use crate::features::GrayImage;
use crate::geometry::{unproject_ray, CameraIntrinsics, Pose3, Vec2, Vec3};
use crate::percepts::{InstanceMap, SemanticMap};
use crate::rng::hash01;

use super::scene::{Footprint, Obstacle, Scene};
use super::{SimError, CLASS_GROUND, CLASS_SKY, TOY_CLASS_COUNT};

/// Base shades per surface kind; splats and dither add structure on top.
const SHADE_SKY: f64 = 14.0;
const SHADE_GROUND: f64 = 42.0;
const SHADE_PEDESTRIAN: f64 = 96.0;
const SHADE_VEGETATION: f64 = 68.0;
/// Obstacle shading dither amplitude (surface-anchored, trackable).
const OBSTACLE_DITHER: f64 = 14.0;
/// Splat Gaussian sigma in pixels.
const SPLAT_SIGMA: f64 = 0.7;
/// Ground dots beyond this camera distance are skipped, in meters.
const SPLAT_RANGE: f64 = 16.0;
/// Depth slack for the splat z-test, in meters.
const SPLAT_DEPTH_SLACK: f64 = 0.05;

/// A ray hit against the scene: distance, surface class, instance.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Hit {
    t: f64,
    class_id: u16,
    instance_id: u32,
    /// World point of the hit (for surface-anchored dither).
    point: Vec3,
}

/// First intersection of a world ray with an extruded obstacle volume.
pub(super) fn ray_obstacle(origin: &Vec3, dir: &Vec3, ob: &Obstacle) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > 1e-9 && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };
    match ob.footprint {
        Footprint::Circle { cx, cy, radius } => {
            // Side surface: quadratic in the planar components.
            let ox = origin.x - cx;
            let oy = origin.y - cy;
            let a = dir.x * dir.x + dir.y * dir.y;
            let b = 2.0 * (ox * dir.x + oy * dir.y);
            let c = ox * ox + oy * oy - radius * radius;
            if a > 1e-12 {
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                        let z = origin.z + t * dir.z;
                        if (0.0..=ob.height).contains(&z) {
                            consider(t);
                        }
                    }
                }
            }
            // Top cap.
            if dir.z.abs() > 1e-12 {
                let t = (ob.height - origin.z) / dir.z;
                let px = origin.x + t * dir.x - cx;
                let py = origin.y + t * dir.y - cy;
                if px * px + py * py <= radius * radius {
                    consider(t);
                }
            }
        }
        Footprint::Rect { x1, y1, x2, y2 } => {
            // Slab test against the axis-aligned volume [x1,x2]x[y1,y2]x[0,h].
            let mut tmin = f64::NEG_INFINITY;
            let mut tmax = f64::INFINITY;
            for (o, d, lo, hi) in [
                (origin.x, dir.x, x1, x2),
                (origin.y, dir.y, y1, y2),
                (origin.z, dir.z, 0.0, ob.height),
            ] {
                if d.abs() < 1e-12 {
                    if o < lo || o > hi {
                        return None;
                    }
                } else {
                    let mut t0 = (lo - o) / d;
                    let mut t1 = (hi - o) / d;
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    tmin = tmin.max(t0);
                    tmax = tmax.min(t1);
                    if tmin > tmax {
                        return None;
                    }
                }
            }
            if tmin > 1e-9 {
                consider(tmin);
            } else if tmax > 1e-9 {
                consider(tmax);
            }
        }
    }
    best
}

/// Nearest scene hit along a world ray; ground and sky are implicit.
fn cast_ray(scene: &Scene, origin: &Vec3, dir: &Vec3) -> Hit {
    let mut best = Hit {
        t: f64::INFINITY,
        class_id: CLASS_SKY,
        instance_id: 0,
        point: Vec3::zeros(),
    };
    for ob in &scene.obstacles {
        if let Some(t) = ray_obstacle(origin, dir, ob) {
            if t < best.t {
                best = Hit {
                    t,
                    class_id: ob.class_id,
                    instance_id: ob.instance_id,
                    point: origin + dir * t,
                };
            }
        }
    }
    if let Ok(p) = crate::geometry::ray_ground_intersection(origin, dir, &scene.ground) {
        let t = (p - origin).norm();
        if t < best.t {
            best = Hit {
                t,
                class_id: CLASS_GROUND,
                instance_id: 0,
                point: p,
            };
        }
    }
    best
}

fn base_shade(class_id: u16) -> f64 {
    match class_id {
        CLASS_GROUND => SHADE_GROUND,
        CLASS_SKY => SHADE_SKY,
        super::CLASS_PEDESTRIAN => SHADE_PEDESTRIAN,
        super::CLASS_VEGETATION => SHADE_VEGETATION,
        _ => 80.0,
    }
}

/// Renders one camera frame with its ground-truth label maps.
///
/// Labels come from per-pixel analytic ray casting. Intensity starts from a
/// per-class base shade, obstacle surfaces get a hash dither anchored to the
/// quantized hit point, and ground texture dots plus scene feature points
/// composite as 3x3 Gaussian splats that z-test against the ray-cast depth.
/// Fully deterministic given the scene seed.
pub fn synth_render(
    scene: &Scene,
    intr: &CameraIntrinsics,
    world_from_camera: &Pose3,
) -> Result<(GrayImage, SemanticMap, InstanceMap), SimError> {
    let camera_center = *world_from_camera.translation();
    if scene.ground.height(&camera_center) <= 0.0 {
        return Err(SimError::CameraBelowGround);
    }
    let w = intr.width as usize;
    let h = intr.height as usize;
    let mut intensity = vec![0.0f64; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    let mut classes = vec![CLASS_SKY; w * h];
    let mut instances = vec![0u32; w * h];

    for y in 0..h {
        for x in 0..w {
            let ray_cam = unproject_ray(intr, &Vec2::new(x as f64, y as f64));
            let dir = world_from_camera.transform_vector(&ray_cam);
            let hit = cast_ray(scene, &camera_center, &dir);
            let idx = y * w + x;
            classes[idx] = hit.class_id;
            instances[idx] = hit.instance_id;
            depth[idx] = hit.t;
            let mut shade = base_shade(hit.class_id);
            if hit.instance_id != 0 {
                // Surface-anchored dither (5 cm quantization) so obstacle
                // faces carry trackable texture.
                let qx = (hit.point.x * 20.0).round() as i64;
                let qy = (hit.point.y * 20.0).round() as i64;
                let qz = (hit.point.z * 20.0).round() as i64;
                let n = hash01(scene.seed, qx ^ (qz << 21), qy ^ (qz << 42), 0xd1f7);
                shade += (n - 0.5) * 2.0 * OBSTACLE_DITHER;
            }
            intensity[idx] = shade;
        }
    }

    // Ground texture dots.
    let cam_xy = Vec2::new(camera_center.x, camera_center.y);
    for (ix, iy) in scene.texture_cells_near(cam_xy, SPLAT_RANGE) {
        if let Some((p, brightness)) = scene.texture_dot(ix, iy) {
            if (Vec2::new(p.x, p.y) - cam_xy).norm() > SPLAT_RANGE {
                continue;
            }
            splat(
                &p,
                brightness,
                intr,
                world_from_camera,
                &mut intensity,
                &depth,
                w,
                h,
            );
        }
    }
    // Elevated feature points.
    for f in &scene.landmark_features {
        let p = Vec3::new(f.position[0], f.position[1], f.position[2]);
        splat(
            &p,
            f.intensity,
            intr,
            world_from_camera,
            &mut intensity,
            &depth,
            w,
            h,
        );
    }

    let data: Vec<u8> = intensity.iter().map(|&v| v.clamp(0.0, 255.0) as u8).collect();
    let image = GrayImage::new(w, h, data).expect("buffer sized to w*h");
    let sem = SemanticMap::new(w, h, classes, TOY_CLASS_COUNT.max(37))
        .expect("classes within the toy taxonomy");
    let inst = InstanceMap::new(w, h, instances).expect("buffer sized to w*h");
    Ok((image, sem, inst))
}

#[allow(clippy::too_many_arguments)]
fn splat(
    world_point: &Vec3,
    brightness: f64,
    intr: &CameraIntrinsics,
    world_from_camera: &Pose3,
    intensity: &mut [f64],
    depth: &[f64],
    w: usize,
    h: usize,
) {
    let cam_from_world = world_from_camera.invert();
    let pc = cam_from_world.transform_point(world_point);
    if pc.z < 0.2 {
        return;
    }
    let px = intr.fx * pc.x / pc.z + intr.cx;
    let py = intr.fy * pc.y / pc.z + intr.cy;
    let cx = px.round() as i64;
    let cy = py.round() as i64;
    if cx < -1 || cy < -1 || cx > w as i64 || cy > h as i64 {
        return;
    }
    // Z test at the center pixel: splats behind obstacle silhouettes vanish.
    let zx = cx.clamp(0, w as i64 - 1) as usize;
    let zy = cy.clamp(0, h as i64 - 1) as usize;
    let dist = (world_point - world_from_camera.translation()).norm();
    if dist > depth[zy * w + zx] + SPLAT_DEPTH_SLACK {
        return;
    }
    for dy in -1..=1i64 {
        for dx in -1..=1i64 {
            let qx = cx + dx;
            let qy = cy + dy;
            if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                continue;
            }
            let ex = qx as f64 - px;
            let ey = qy as f64 - py;
            let weight = (-(ex * ex + ey * ey) / (2.0 * SPLAT_SIGMA * SPLAT_SIGMA)).exp();
            intensity[qy as usize * w + qx as usize] += brightness * weight;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::camera_mount;
    use crate::simworld::scene::build_preset;
    use crate::simworld::{ScenePoint, CLASS_PEDESTRIAN};

    fn sim_intr() -> CameraIntrinsics {
        CameraIntrinsics::new(240.0, 240.0, 159.5, 119.5, 320, 240).unwrap()
    }

    fn forward_camera() -> Pose3 {
        camera_mount(0.0, 15f64.to_radians(), Vec3::new(0.1, 0.0, 0.5)).invert()
    }

    fn empty_scene(seed: u64) -> Scene {
        let mut scene = build_preset("straight50", seed).unwrap();
        scene.landmark_features.clear();
        scene.obstacles.clear();
        scene.texture.density = 0.0;
        scene
    }

    #[test]
    fn empty_scene_renders_ground_below_horizon_sky_above() {
        let scene = empty_scene(1);
        let (img, sem, inst) = synth_render(&scene, &sim_intr(), &forward_camera()).unwrap();
        // 15 degree downward pitch: the horizon sits above the image center.
        assert_eq!(sem.get(160, 230), CLASS_GROUND);
        assert_eq!(sem.get(160, 5), CLASS_SKY);
        assert!(inst.ids().iter().all(|&i| i == 0));
        // Uniform shades on each side.
        assert_eq!(img.get(160, 230), SHADE_GROUND as u8);
        assert_eq!(img.get(160, 5), SHADE_SKY as u8);
    }

    #[test]
    fn camera_below_ground_errors() {
        let scene = empty_scene(1);
        let pose = camera_mount(0.0, 0.2, Vec3::new(0.0, 0.0, -0.2)).invert();
        assert!(matches!(
            synth_render(&scene, &sim_intr(), &pose),
            Err(SimError::CameraBelowGround)
        ));
    }

    #[test]
    fn single_feature_on_optical_axis_is_brightest_at_center() {
        let mut scene = empty_scene(2);
        let pose = forward_camera();
        // A point 1.5 m along the optical axis (still above the ground for
        // the 15 degree downward pitch).
        let dir = pose.transform_vector(&Vec3::new(0.0, 0.0, 1.0));
        let p = pose.translation() + dir * 1.5;
        scene.landmark_features.push(ScenePoint {
            position: [p.x, p.y, p.z],
            intensity: 255.0,
        });
        let (img, _, _) = synth_render(&scene, &sim_intr(), &pose).unwrap();
        let mut best = (0u8, 0usize, 0usize);
        for y in 0..240 {
            for x in 0..320 {
                if img.get(x, y) > best.0 {
                    best = (img.get(x, y), x, y);
                }
            }
        }
        // cx, cy round to (160, 119) or (159, 120) depending on the half
        // pixel; accept the principal-point neighborhood.
        assert!(
            (best.1 as i64 - 160).abs() <= 1 && (best.2 as i64 - 120).abs() <= 1,
            "brightest at ({}, {})",
            best.1,
            best.2
        );
    }

    #[test]
    fn obstacle_occludes_ground_and_labels_instance() {
        let mut scene = empty_scene(3);
        scene.obstacles.push(Obstacle {
            footprint: Footprint::Circle { cx: 3.0, cy: 0.0, radius: 0.5 },
            height: 1.8,
            class_id: CLASS_PEDESTRIAN,
            instance_id: 9,
        });
        let (_, sem, inst) = synth_render(&scene, &sim_intr(), &forward_camera()).unwrap();
        // The camera pitches down, so probe a pixel above the image center
        // whose ray passes through the obstacle front before the ground.
        assert_eq!(sem.get(160, 80), CLASS_PEDESTRIAN);
        assert_eq!(inst.get(160, 80), 9);
        // Labels are mutually consistent everywhere.
        for y in 0..240 {
            for x in 0..320 {
                if inst.get(x, y) != 0 {
                    assert_eq!(sem.get(x, y), CLASS_PEDESTRIAN);
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = build_preset("straight50", 11).unwrap();
        let (a, sa, ia) = synth_render(&scene, &sim_intr(), &forward_camera()).unwrap();
        let (b, sb, ib) = synth_render(&scene, &sim_intr(), &forward_camera()).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(ia, ib);
    }

    #[test]
    fn tracked_flow_under_small_translation_matches_projection() {
        // Render two frames 0.05 m apart, FAST+LK track between them, and
        // compare each flow against the analytic reprojection of the
        // feature's ground point.
        use crate::features::{build_pyramid, fast_detect, lk_track, FastParams, LkParams};
        let mut scene = build_preset("straight50", 5).unwrap();
        // Ground texture only, so every corner has an analytic ground point.
        scene.landmark_features.clear();
        let intr = sim_intr();
        let mount = camera_mount(0.0, 15f64.to_radians(), Vec3::new(0.1, 0.0, 0.5));
        let pose0 = Pose3::planar(2.0, 0.0, 0.0).compose(&mount.invert());
        let pose1 = Pose3::planar(2.05, 0.0, 0.0).compose(&mount.invert());
        let (img0, _, _) = synth_render(&scene, &intr, &pose0).unwrap();
        let (img1, _, _) = synth_render(&scene, &intr, &pose1).unwrap();
        let kps = fast_detect(&img0, &FastParams::default()).unwrap();
        assert!(kps.len() > 30, "only {} corners", kps.len());
        let points: Vec<Vec2> = kps.iter().take(60).map(|k| k.position).collect();
        let p0 = build_pyramid(&img0, 3).unwrap();
        let p1 = build_pyramid(&img1, 3).unwrap();
        let tracked = lk_track(&p0, &p1, &points, &LkParams::default()).unwrap();

        let mut errors = Vec::new();
        for (start, (end, status)) in points.iter().zip(&tracked) {
            if *status != crate::features::LkStatus::TrackedOk {
                continue;
            }
            // Analytic flow: unproject the pixel to the ground, reproject
            // into the second camera.
            let ray = pose0.transform_vector(&unproject_ray(&intr, start));
            let Ok(ground_pt) = crate::geometry::ray_ground_intersection(
                pose0.translation(),
                &ray,
                &scene.ground,
            ) else {
                continue;
            };
            let Ok(expected) =
                crate::geometry::project_point(&intr, &pose1.invert(), &ground_pt)
            else {
                continue;
            };
            errors.push((end - expected).norm());
        }
        assert!(errors.len() > 20, "only {} analytic matches", errors.len());
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        assert!(mean < 0.2, "mean flow error {mean} px over {} pts", errors.len());
    }
}
