//! World modeling: the bird's-eye occupancy grid, lidar-to-image fusion,
//! ground-class reprojection and 3D instance boxes.

use std::collections::HashSet;

use crate::geometry::{
    ray_ground_intersection, unproject_ray, CameraIntrinsics, CameraRig, GroundPlane, Pose3, Vec2,
    Vec3,
};
use crate::percepts::{BoundingBox2D, InstanceMap, SemanticMap};

/// Obstacle returns with height above ground outside this open interval are
/// treated as ground or overhang and ignored, in meters.
pub const OBSTACLE_HEIGHT_GATE: (f64, f64) = (0.1, 2.5);
/// Evidence counts needed before a cell commits to Free or Occupied.
pub const EVIDENCE_THRESHOLD: u8 = 2;
/// Pixel subsampling stride for ground reprojection.
pub const GROUND_STRIDE: usize = 4;
/// Default maximum ground-reprojection range, in meters.
pub const DEFAULT_GROUND_RANGE: f64 = 20.0;
/// Lidar points closer than this to a camera are ignored, in meters.
pub const MIN_LIDAR_DEPTH: f64 = 0.1;
/// Depth gate around the per-instance median for 3D box support, in meters.
pub const BOX_DEPTH_GATE: f64 = 1.5;
/// Minimum surviving lidar points for a 3D box.
pub const MIN_BOX_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MappingError {
    #[error("camera center is not above the ground plane")]
    CameraBelowGround,
    #[error("query position ({0:.2}, {1:.2}) is outside the grid")]
    OutOfGrid(f64, f64),
    #[error("grid dimensions must be positive with positive resolution")]
    BadGridShape,
}

/// A lidar sweep in the sensor frame; may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub timestamp: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, timestamp: f64) -> Self {
        Self { points, timestamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Free/occupied evidence counters for one cell; counts saturate at 255.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellCounts {
    pub free: u8,
    pub occupied: u8,
}

impl CellCounts {
    /// Occupied evidence dominates: a cell with enough occupied hits stays
    /// Occupied regardless of how much free evidence it also gathered.
    pub fn state(&self) -> CellState {
        if self.occupied >= EVIDENCE_THRESHOLD {
            CellState::Occupied
        } else if self.free >= EVIDENCE_THRESHOLD {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }
}

/// Robot-centered planar occupancy grid. The origin is the world position of
/// the corner of cell (0, 0); the grid scrolls by whole cells to follow the
/// robot.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Vec2,
    cells: Vec<CellCounts>,
    /// Indices of cells currently in the Occupied state.
    occupied: HashSet<usize>,
}

impl OccupancyGrid {
    pub fn new(resolution: f64, width: usize, height: usize, origin: Vec2) -> Result<Self, MappingError> {
        if resolution <= 0.0 || width == 0 || height == 0 {
            return Err(MappingError::BadGridShape);
        }
        Ok(Self {
            resolution,
            width,
            height,
            origin,
            cells: vec![CellCounts::default(); width * height],
            occupied: HashSet::new(),
        })
    }

    /// 40 m x 40 m window at 0.1 m resolution centered on the world origin.
    pub fn default_centered() -> Self {
        Self::new(0.1, 400, 400, Vec2::new(-20.0, -20.0)).unwrap()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        self.cell_of(p).is_some()
    }

    /// Cell index containing a world position.
    pub fn cell_of(&self, p: &Vec2) -> Option<usize> {
        let cx = ((p.x - self.origin.x) / self.resolution).floor();
        let cy = ((p.y - self.origin.y) / self.resolution).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return None;
        }
        Some(cy as usize * self.width + cx as usize)
    }

    /// World position of a cell's center.
    pub fn cell_center(&self, index: usize) -> Vec2 {
        let x = (index % self.width) as f64;
        let y = (index / self.width) as f64;
        Vec2::new(
            self.origin.x + (x + 0.5) * self.resolution,
            self.origin.y + (y + 0.5) * self.resolution,
        )
    }

    pub fn counts(&self, index: usize) -> CellCounts {
        self.cells[index]
    }

    pub fn state(&self, index: usize) -> CellState {
        self.cells[index].state()
    }

    pub fn state_at(&self, p: &Vec2) -> Option<CellState> {
        self.cell_of(p).map(|i| self.state(i))
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupied.iter().copied()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.len()
    }

    fn add_free(&mut self, index: usize) {
        let c = &mut self.cells[index];
        c.free = c.free.saturating_add(1);
    }

    fn add_occupied(&mut self, index: usize) {
        let c = &mut self.cells[index];
        c.occupied = c.occupied.saturating_add(1);
        if c.occupied >= EVIDENCE_THRESHOLD {
            self.occupied.insert(index);
        }
    }

    /// Forces a cell into the Occupied state (used when synchronizing box
    /// footprints into the grid).
    pub fn mark_occupied(&mut self, index: usize) {
        let c = &mut self.cells[index];
        c.occupied = c.occupied.max(EVIDENCE_THRESHOLD);
        self.occupied.insert(index);
    }

    /// Scrolls the window by whole cells so that `center` lands within half
    /// a cell of the grid's center. Cells scrolled in start Unknown.
    pub fn recenter_on(&mut self, center: &Vec2) {
        let half_w = self.width as f64 / 2.0;
        let half_h = self.height as f64 / 2.0;
        let desired_x = center.x - half_w * self.resolution;
        let desired_y = center.y - half_h * self.resolution;
        let shift_x = ((desired_x - self.origin.x) / self.resolution).round() as i64;
        let shift_y = ((desired_y - self.origin.y) / self.resolution).round() as i64;
        if shift_x == 0 && shift_y == 0 {
            return;
        }
        let mut cells = vec![CellCounts::default(); self.width * self.height];
        let mut occupied = HashSet::new();
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                let sx = x + shift_x;
                let sy = y + shift_y;
                if sx < 0 || sy < 0 || sx >= self.width as i64 || sy >= self.height as i64 {
                    continue;
                }
                let src = sy as usize * self.width + sx as usize;
                let dst = y as usize * self.width + x as usize;
                cells[dst] = self.cells[src];
                if cells[dst].state() == CellState::Occupied {
                    occupied.insert(dst);
                }
            }
        }
        self.cells = cells;
        self.occupied = occupied;
        self.origin.x += shift_x as f64 * self.resolution;
        self.origin.y += shift_y as f64 * self.resolution;
    }
}

/// One lidar point seen by one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub point_index: usize,
    pub camera_index: usize,
    pub pixel: Vec2,
    /// Camera-frame z of the point, in meters.
    pub depth: f64,
}

/// Projects a sensor-frame cloud into every rig camera. A point is emitted
/// once per camera where its depth exceeds 0.1 m and its pixel rounds into
/// the image bounds. `body_pose` is accepted for interface symmetry with the
/// rest of the frame pipeline; the sensor-to-camera chain never leaves the
/// body frame.
pub fn project_lidar_to_image(
    cloud: &PointCloud,
    sensor_from_body: &Pose3,
    rig: &CameraRig,
    _body_pose: &Pose3,
) -> Vec<ProjectedPoint> {
    let body_from_sensor = sensor_from_body.invert();
    let mut out = Vec::new();
    for (camera_index, cam) in rig.cameras().iter().enumerate() {
        let cam_from_sensor = cam.cam_from_body.compose(&body_from_sensor);
        for (point_index, p) in cloud.points.iter().enumerate() {
            let pc = cam_from_sensor.transform_point(p);
            if pc.z <= MIN_LIDAR_DEPTH {
                continue;
            }
            let intr = &cam.intrinsics;
            let pixel = Vec2::new(intr.fx * pc.x / pc.z + intr.cx, intr.fy * pc.y / pc.z + intr.cy);
            let rx = pixel.x.round();
            let ry = pixel.y.round();
            if rx < 0.0 || ry < 0.0 || rx > intr.width as f64 - 1.0 || ry > intr.height as f64 - 1.0 {
                continue;
            }
            out.push(ProjectedPoint {
                point_index,
                camera_index,
                pixel,
                depth: pc.z,
            });
        }
    }
    out
}

/// Reprojects traversable-class pixels onto the ground plane and returns the
/// grid cells they vote Free, without mutating the grid.
///
/// Pixels are subsampled on a stride-4 lattice anchored at (0, 0). Rays that
/// miss the plane (horizon and above) are skipped, as are intersections
/// farther than `max_range` (horizontal distance from the camera) and cells
/// outside the grid. One vote is emitted per qualifying pixel; repeated cell
/// indices are deliberate evidence.
pub fn ground_cells_from_semantics(
    sem: &SemanticMap,
    traversable: &HashSet<u16>,
    intr: &CameraIntrinsics,
    world_from_camera: &Pose3,
    plane: &GroundPlane,
    grid: &OccupancyGrid,
    max_range: f64,
) -> Result<Vec<usize>, MappingError> {
    let camera_center = *world_from_camera.translation();
    if plane.height(&camera_center) <= 0.0 {
        return Err(MappingError::CameraBelowGround);
    }
    let mut cells = Vec::new();
    let max_range2 = max_range * max_range;
    for y in (0..sem.height()).step_by(GROUND_STRIDE) {
        for x in (0..sem.width()).step_by(GROUND_STRIDE) {
            if !traversable.contains(&sem.get(x, y)) {
                continue;
            }
            let ray_cam = unproject_ray(intr, &Vec2::new(x as f64, y as f64));
            let ray_world = world_from_camera.transform_vector(&ray_cam);
            let Ok(hit) = ray_ground_intersection(&camera_center, &ray_world, plane) else {
                continue;
            };
            let dx = hit.x - camera_center.x;
            let dy = hit.y - camera_center.y;
            if dx * dx + dy * dy > max_range2 {
                continue;
            }
            if let Some(idx) = grid.cell_of(&Vec2::new(hit.x, hit.y)) {
                cells.push(idx);
            }
        }
    }
    Ok(cells)
}

/// Oriented (currently axis-aligned) box in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox3D {
    pub center: Vec3,
    /// Half-sizes along x, y, z; strictly positive.
    pub extents: Vec3,
    pub yaw: f64,
    pub class_id: u16,
    pub instance_id: u32,
}

/// Lifts 2D instance boxes to 3D using lidar points that project onto the
/// instance mask.
///
/// `projected` must hold this camera's projections for the same frame as
/// `inst`, and `cloud_world` the full cloud in world coordinates (indexed by
/// `point_index`). Points whose depth deviates from the instance's median by
/// more than 1.5 m are rejected; an instance needs at least 5 surviving
/// points to produce a box. Boxes are axis-aligned (yaw 0) and span the
/// surviving points' extents.
pub fn instance_to_3d_box(
    inst: &InstanceMap,
    boxes2d: &[BoundingBox2D],
    projected: &[ProjectedPoint],
    cloud_world: &[Vec3],
) -> Vec<BoundingBox3D> {
    let mut out = Vec::new();
    for b in boxes2d {
        // Candidate points: projections landing on this instance's mask
        // pixels inside the 2D box extent.
        let mut candidates: Vec<(usize, f64)> = Vec::new();
        for p in projected {
            let px = p.pixel.x.round();
            let py = p.pixel.y.round();
            if px < 0.0 || py < 0.0 {
                continue;
            }
            let (ux, uy) = (px as usize, py as usize);
            if ux < b.x1 || ux > b.x2 || uy < b.y1 || uy > b.y2 {
                continue;
            }
            if ux >= inst.width() || uy >= inst.height() {
                continue;
            }
            if inst.get(ux, uy) != b.instance_id {
                continue;
            }
            candidates.push((p.point_index, p.depth));
        }
        if candidates.len() < MIN_BOX_POINTS {
            continue;
        }
        let mut depths: Vec<f64> = candidates.iter().map(|c| c.1).collect();
        depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if depths.len() % 2 == 1 {
            depths[depths.len() / 2]
        } else {
            0.5 * (depths[depths.len() / 2 - 1] + depths[depths.len() / 2])
        };
        let survivors: Vec<usize> = candidates
            .iter()
            .filter(|(_, d)| (d - median).abs() <= BOX_DEPTH_GATE)
            .map(|(i, _)| *i)
            .collect();
        if survivors.len() < MIN_BOX_POINTS {
            continue;
        }
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for &i in &survivors {
            let p = cloud_world[i];
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        // Degenerate axes (coplanar support) get a minimal extent.
        let extents = ((hi - lo) / 2.0).map(|e| e.max(1e-3));
        out.push(BoundingBox3D {
            center: (hi + lo) / 2.0,
            extents,
            yaw: 0.0,
            class_id: b.class_id,
            instance_id: b.instance_id,
        });
    }
    out
}

/// Applies one frame's evidence to the grid, then scrolls the window to
/// follow the robot.
///
/// Obstacle points outside the (0.1, 2.5) m height band above the ground are
/// ignored, as is any evidence outside the grid. Cells flip Occupied at two
/// occupied hits (dominating), Free at two free hits, and stay Unknown
/// otherwise.
pub fn update_grid(
    grid: &mut OccupancyGrid,
    free_evidence: &[usize],
    obstacle_points: &[Vec3],
    robot_pose: &Pose3,
) {
    for &idx in free_evidence {
        if idx < grid.cells.len() {
            grid.add_free(idx);
        }
    }
    for p in obstacle_points {
        if p.z <= OBSTACLE_HEIGHT_GATE.0 || p.z >= OBSTACLE_HEIGHT_GATE.1 {
            continue;
        }
        if let Some(idx) = grid.cell_of(&Vec2::new(p.x, p.y)) {
            grid.add_occupied(idx);
        }
    }
    grid.recenter_on(&robot_pose.xy());
}

/// Distance from `position` to the nearest Occupied cell center, capped at
/// `max_radius`. Standing on an Occupied cell gives 0. Unknown cells count
/// as free here; the planner treats unexplored terrain as drivable and
/// relies on occupied evidence only.
pub fn clearance_query(
    grid: &OccupancyGrid,
    position: &Vec2,
    max_radius: f64,
) -> Result<f64, MappingError> {
    let Some(own_cell) = grid.cell_of(position) else {
        return Err(MappingError::OutOfGrid(position.x, position.y));
    };
    if grid.state(own_cell) == CellState::Occupied {
        return Ok(0.0);
    }
    let mut best = max_radius;
    for idx in grid.occupied_cells() {
        let c = grid.cell_center(idx);
        let d = (c - position).norm();
        if d < best {
            best = d;
        }
    }
    Ok(best)
}

/// The reconstructed world: grid plus 3D instance boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub grid: OccupancyGrid,
    pub boxes: Vec<BoundingBox3D>,
    pub timestamp: f64,
}

impl WorldModel {
    pub fn new(grid: OccupancyGrid, timestamp: f64) -> Self {
        Self {
            grid,
            boxes: Vec::new(),
            timestamp,
        }
    }

    /// Marks every box's ground footprint Occupied in the grid.
    pub fn sync_boxes_into_grid(&mut self) {
        let res = self.grid.resolution();
        let origin = self.grid.origin();
        let (w, h) = (self.grid.width() as i64, self.grid.height() as i64);
        let boxes = self.boxes.clone();
        for b in &boxes {
            let cx0 = ((b.center.x - b.extents.x - origin.x) / res).floor() as i64;
            let cx1 = ((b.center.x + b.extents.x - origin.x) / res).floor() as i64;
            let cy0 = ((b.center.y - b.extents.y - origin.y) / res).floor() as i64;
            let cy1 = ((b.center.y + b.extents.y - origin.y) / res).floor() as i64;
            for cy in cy0.max(0)..=cy1.min(h - 1) {
                for cx in cx0.max(0)..=cx1.min(w - 1) {
                    self.grid.mark_occupied((cy * w + cx) as usize);
                }
            }
        }
    }
}
