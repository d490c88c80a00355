//! Declarative scenes: ground texture, elevated feature points, obstacle
//! volumes and the ground-truth route. One seed determines all procedural
//! content.

use serde::{Deserialize, Serialize};

use crate::geometry::{GroundPlane, Vec2, Vec3};
use crate::planning::ReferenceTrajectory;
use crate::rng::hash01;

use super::{SimError, CLASS_PEDESTRIAN, CLASS_VEGETATION};

/// Planar obstacle footprint, extruded from the ground up to `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Footprint {
    Circle { cx: f64, cy: f64, radius: f64 },
    Rect { x1: f64, y1: f64, x2: f64, y2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub footprint: Footprint,
    pub height: f64,
    pub class_id: u16,
    pub instance_id: u32,
}

impl Obstacle {
    /// Distance from the footprint boundary, negative inside.
    pub fn planar_signed_distance(&self, p: &Vec2) -> f64 {
        match self.footprint {
            Footprint::Circle { cx, cy, radius } => {
                (Vec2::new(cx, cy) - p).norm() - radius
            }
            Footprint::Rect { x1, y1, x2, y2 } => {
                let dx = (x1 - p.x).max(p.x - x2);
                let dy = (y1 - p.y).max(p.y - y2);
                if dx <= 0.0 && dy <= 0.0 {
                    dx.max(dy)
                } else {
                    Vec2::new(dx.max(0.0), dy.max(0.0)).norm()
                }
            }
        }
    }
}

/// An elevated bright feature point (a post, a trunk mark) the trackers can
/// latch onto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub position: [f64; 3],
    pub intensity: f64,
}

/// Procedural ground texture: one candidate dot per `spacing` cell, present
/// with probability `density`, placed and shaded by hashing the cell
/// coordinates with the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundTexture {
    pub spacing: f64,
    pub density: f64,
    pub min_intensity: f64,
    pub max_intensity: f64,
}

impl Default for GroundTexture {
    fn default() -> Self {
        Self {
            spacing: 0.22,
            density: 0.4,
            min_intensity: 110.0,
            max_intensity: 235.0,
        }
    }
}

/// The full synthetic world.
#[derive(Debug, Clone)]
pub struct Scene {
    pub seed: u64,
    pub ground: GroundPlane,
    pub texture: GroundTexture,
    pub landmark_features: Vec<ScenePoint>,
    pub obstacles: Vec<Obstacle>,
    pub route: ReferenceTrajectory,
}

impl Scene {
    /// A ground dot for a texture cell, if the hash places one there.
    /// Returns (world position, intensity).
    pub fn texture_dot(&self, ix: i64, iy: i64) -> Option<(Vec3, f64)> {
        if hash01(self.seed, ix, iy, 0x0d07) >= self.texture.density {
            return None;
        }
        let s = self.texture.spacing;
        let x = (ix as f64 + hash01(self.seed, ix, iy, 0x0ff5)) * s;
        let y = (iy as f64 + hash01(self.seed, ix, iy, 0x0ff6)) * s;
        let i = self.texture.min_intensity
            + hash01(self.seed, ix, iy, 0x0ff7)
                * (self.texture.max_intensity - self.texture.min_intensity);
        Some((Vec3::new(x, y, 0.0), i))
    }

    /// Iterates texture cells within `range` of a planar position.
    pub fn texture_cells_near(&self, center: Vec2, range: f64) -> impl Iterator<Item = (i64, i64)> {
        let s = self.texture.spacing;
        let ix0 = ((center.x - range) / s).floor() as i64;
        let ix1 = ((center.x + range) / s).ceil() as i64;
        let iy0 = ((center.y - range) / s).floor() as i64;
        let iy1 = ((center.y + range) / s).ceil() as i64;
        (iy0..=iy1).flat_map(move |iy| (ix0..=ix1).map(move |ix| (ix, iy)))
    }
}

/// Serializable scene description, either a named preset or explicit
/// content.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub preset: Option<String>,
    pub texture: GroundTexture,
    pub obstacles: Vec<Obstacle>,
    pub landmark_features: Vec<ScenePoint>,
    /// Route waypoints as (x, y) or (x, y, v_target).
    pub route: Vec<Vec<f64>>,
    pub route_closed: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            preset: Some("straight50".to_string()),
            texture: GroundTexture::default(),
            obstacles: Vec::new(),
            landmark_features: Vec::new(),
            route: Vec::new(),
            route_closed: false,
        }
    }
}

impl SceneConfig {
    pub fn build(&self) -> Result<Scene, SimError> {
        if let Some(preset) = &self.preset {
            return build_preset(preset, self.seed);
        }
        if self.route.len() < 2 {
            return Err(SimError::BadScene(
                "a scene needs a preset or a route with at least two waypoints".into(),
            ));
        }
        let waypoints: Vec<(Vec2, Option<f64>)> = self
            .route
            .iter()
            .map(|w| {
                (
                    Vec2::new(w[0], *w.get(1).unwrap_or(&0.0)),
                    w.get(2).copied(),
                )
            })
            .collect();
        let route = ReferenceTrajectory::new(waypoints, self.route_closed)
            .map_err(|e| SimError::BadScene(e.to_string()))?;
        Ok(Scene {
            seed: self.seed,
            ground: GroundPlane::z0(),
            texture: self.texture,
            landmark_features: self.landmark_features.clone(),
            obstacles: self.obstacles.clone(),
            route,
        })
    }
}

/// Builds one of the named scene presets.
pub fn build_preset(name: &str, seed: u64) -> Result<Scene, SimError> {
    match name {
        "straight50" => Ok(straight_course(seed, 50.0, false)),
        "straight50_obstacles" => Ok(straight_course(seed, 50.0, true)),
        "circle5" => Ok(circle_course(seed, 5.0)),
        "loop100" => Ok(loop_course(seed)),
        other => Err(SimError::BadScene(format!("unknown preset '{other}'"))),
    }
}

/// Feature posts scattered along a route corridor, placed by hashing.
fn corridor_features(seed: u64, route: &ReferenceTrajectory, count: usize) -> Vec<ScenePoint> {
    let mut features = Vec::with_capacity(count);
    let total = route.total_length();
    for i in 0..count {
        let s = hash01(seed, i as i64, 0, 0xbeef) * total;
        let side = if hash01(seed, i as i64, 1, 0xbeef) < 0.5 { -1.0 } else { 1.0 };
        let lateral = 1.5 + hash01(seed, i as i64, 2, 0xbeef) * 6.0;
        let at = route.point_at(s);
        let ahead = route.point_at(s + 0.5);
        let dir = (ahead - at).normalize();
        let normal = Vec2::new(-dir.y, dir.x) * side;
        let p = at + normal * lateral;
        features.push(ScenePoint {
            position: [
                p.x,
                p.y,
                0.2 + hash01(seed, i as i64, 3, 0xbeef) * 1.6,
            ],
            intensity: 150.0 + hash01(seed, i as i64, 4, 0xbeef) * 100.0,
        });
    }
    features
}

fn straight_course(seed: u64, length: f64, obstacles: bool) -> Scene {
    let n = (length / 1.0) as usize;
    let route = ReferenceTrajectory::from_points(
        &(0..=n).map(|i| (i as f64, 0.0)).collect::<Vec<_>>(),
        false,
    )
    .expect("static route");
    let mut obs = Vec::new();
    if obstacles {
        obs.push(Obstacle {
            footprint: Footprint::Circle { cx: 18.0, cy: 1.6, radius: 0.4 },
            height: 1.8,
            class_id: CLASS_PEDESTRIAN,
            instance_id: 1,
        });
        obs.push(Obstacle {
            footprint: Footprint::Rect { x1: 30.0, y1: -2.6, x2: 31.2, y2: -1.6 },
            height: 1.2,
            class_id: CLASS_VEGETATION,
            instance_id: 2,
        });
    }
    let features = corridor_features(seed, &route, 160);
    Scene {
        seed,
        ground: GroundPlane::z0(),
        texture: GroundTexture::default(),
        landmark_features: features,
        obstacles: obs,
        route,
    }
}

fn circle_course(seed: u64, radius: f64) -> Scene {
    let n = 64;
    let route = ReferenceTrajectory::from_points(
        &(0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                (radius * a.cos(), radius * a.sin())
            })
            .collect::<Vec<_>>(),
        true,
    )
    .expect("static route");
    let features = corridor_features(seed, &route, 140);
    Scene {
        seed,
        ground: GroundPlane::z0(),
        texture: GroundTexture::default(),
        landmark_features: features,
        obstacles: Vec::new(),
        route,
    }
}

/// A rounded-rectangle loop roughly 100 m around.
fn loop_course(seed: u64) -> Scene {
    let mut pts = Vec::new();
    let (w, h, r) = (30.0, 18.0, 4.0);
    let corner = |cx: f64, cy: f64, a0: f64, pts: &mut Vec<(f64, f64)>| {
        for i in 0..=8 {
            let a = a0 + i as f64 / 8.0 * std::f64::consts::FRAC_PI_2;
            pts.push((cx + r * a.cos(), cy + r * a.sin()));
        }
    };
    // Counterclockwise from the origin corner.
    for i in 0..=10 {
        pts.push((r + (w - 2.0 * r) * i as f64 / 10.0, 0.0));
    }
    corner(w - r, r, -std::f64::consts::FRAC_PI_2, &mut pts);
    for i in 1..=5 {
        pts.push((w, r + (h - 2.0 * r) * i as f64 / 5.0));
    }
    corner(w - r, h - r, 0.0, &mut pts);
    for i in 1..=10 {
        pts.push((w - r - (w - 2.0 * r) * i as f64 / 10.0, h));
    }
    corner(r, h - r, std::f64::consts::FRAC_PI_2, &mut pts);
    for i in 1..=4 {
        pts.push((0.0, h - r - (h - 2.0 * r) * i as f64 / 5.0));
    }
    corner(r, r, std::f64::consts::PI, &mut pts);
    pts.dedup_by(|a, b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() < 1e-6);
    // The corner helper closes back onto the first point; drop it.
    if let (Some(first), Some(last)) = (pts.first().copied(), pts.last().copied()) {
        if ((first.0 - last.0).powi(2) + (first.1 - last.1).powi(2)).sqrt() < 1e-6 {
            pts.pop();
        }
    }
    let route = ReferenceTrajectory::from_points(&pts, true).expect("static route");
    let features = corridor_features(seed, &route, 240);
    Scene {
        seed,
        ground: GroundPlane::z0(),
        texture: GroundTexture::default(),
        landmark_features: features,
        obstacles: Vec::new(),
        route,
    }
}
