//! On-disk formats: grayscale frames, 16-bit label maps, the CSV streams,
//! rig calibration and dataset manifests.
//!
//! Dataset layout (all CSVs carry header rows):
//!
//! ```text
//! calib.json
//! frames/cam{0..3}/frame_%06d.png      8-bit grayscale
//! labels/cam{k}/frame_%06d_sem.png     16-bit, semantic class id
//! labels/cam{k}/frame_%06d_inst.png    16-bit, instance id
//! lidar/sweep_%06d.csv                 x,y,z
//! frames.csv                           timestamp_s,camera_index,path
//! sweeps.csv                           timestamp_s,path
//! imu.csv                              timestamp_s,ax,ay,az,gx,gy,gz
//! gps.csv                              timestamp_s,x_m,y_m,acc_m
//! route.csv                            x_m,y_m,v_target_mps
//! truth.csv                            timestamp_s,x,y,yaw_rad,v,omega
//! manifest.json
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::features::GrayImage;
use crate::geometry::{CameraIntrinsics, CameraRig, Pose3, RigCamera, Vec2, Vec3};
use crate::mapping::{CellState, OccupancyGrid, PointCloud};
use crate::odometry::{GpsFix, ImuSample};
use crate::percepts::{InstanceMap, SemanticMap};
use crate::planning::ReferenceTrajectory;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec failure: {0}")]
    Image(#[from] image::ImageError),
    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn malformed(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Images

pub fn save_gray_png(image: &GrayImage, path: &Path) -> Result<(), IoError> {
    let buf = image::GrayImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.data().to_vec(),
    )
    .expect("buffer matches dimensions");
    buf.save(path)?;
    Ok(())
}

pub fn load_gray_png(path: &Path) -> Result<GrayImage, IoError> {
    let img = image::open(path)?.into_luma8();
    GrayImage::new(img.width() as usize, img.height() as usize, img.into_raw())
        .map_err(|e| malformed(path, e.to_string()))
}

fn save_u16_png(width: usize, height: usize, values: &[u16], path: &Path) -> Result<(), IoError> {
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(width as u32, height as u32, values.to_vec())
            .expect("buffer matches dimensions");
    buf.save(path)?;
    Ok(())
}

fn load_u16_png(path: &Path) -> Result<(usize, usize, Vec<u16>), IoError> {
    let img = image::open(path)?.into_luma16();
    Ok((img.width() as usize, img.height() as usize, img.into_raw()))
}

pub fn save_semantic_png(map: &SemanticMap, path: &Path) -> Result<(), IoError> {
    save_u16_png(map.width(), map.height(), map.classes(), path)
}

pub fn load_semantic_png(path: &Path, num_classes: u16) -> Result<SemanticMap, IoError> {
    let (w, h, values) = load_u16_png(path)?;
    SemanticMap::new(w, h, values, num_classes).map_err(|e| malformed(path, e.to_string()))
}

pub fn save_instance_png(map: &InstanceMap, path: &Path) -> Result<(), IoError> {
    let values: Vec<u16> = map.ids().iter().map(|&v| v.min(u16::MAX as u32) as u16).collect();
    save_u16_png(map.width(), map.height(), &values, path)
}

pub fn load_instance_png(path: &Path) -> Result<InstanceMap, IoError> {
    let (w, h, values) = load_u16_png(path)?;
    InstanceMap::new(w, h, values.into_iter().map(u32::from).collect())
        .map_err(|e| malformed(path, e.to_string()))
}

/// Grid snapshot: 0 = Unknown, 128 = Free, 255 = Occupied, plus a sidecar
/// text file with the origin and resolution.
pub fn save_grid_png(grid: &OccupancyGrid, path: &Path) -> Result<(), IoError> {
    let mut data = vec![0u8; grid.width() * grid.height()];
    for (i, v) in data.iter_mut().enumerate() {
        *v = match grid.state(i) {
            CellState::Unknown => 0,
            CellState::Free => 128,
            CellState::Occupied => 255,
        };
    }
    let buf = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, data)
        .expect("buffer matches dimensions");
    buf.save(path)?;
    let sidecar = path.with_extension("txt");
    let mut f = BufWriter::new(File::create(sidecar)?);
    writeln!(f, "origin_x_m {:.6}", grid.origin().x)?;
    writeln!(f, "origin_y_m {:.6}", grid.origin().y)?;
    writeln!(f, "resolution_m {:.6}", grid.resolution())?;
    writeln!(f, "width_cells {}", grid.width())?;
    writeln!(f, "height_cells {}", grid.height())?;
    Ok(())
}

/// Annotated frame: grayscale base with per-track colored discs, color
/// hashed from the persistent track ID.
pub fn save_annotated_png(
    image: &GrayImage,
    tracks: &[(u64, Vec2)],
    path: &Path,
) -> Result<(), IoError> {
    let w = image.width();
    let h = image.height();
    let mut rgb = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let g = image.get(x, y);
            rgb.put_pixel(x as u32, y as u32, image::Rgb([g, g, g]));
        }
    }
    for &(id, pos) in tracks {
        let color = id_color(id);
        let cx = pos.x.round() as i64;
        let cy = pos.y.round() as i64;
        for dy in -2..=2i64 {
            for dx in -2..=2i64 {
                if dx * dx + dy * dy > 5 {
                    continue;
                }
                let px = cx + dx;
                let py = cy + dy;
                if px >= 0 && py >= 0 && px < w as i64 && py < h as i64 {
                    rgb.put_pixel(px as u32, py as u32, image::Rgb(color));
                }
            }
        }
    }
    rgb.save(path)?;
    Ok(())
}

/// Saturated RGB derived from the track ID, stable across frames.
pub fn id_color(id: u64) -> [u8; 3] {
    let h = crate::rng::splitmix64(id.wrapping_mul(0x9e37_79b9_7f4a_7c15)) % 360;
    hsv_to_rgb(h as f64, 0.95, 1.0)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0) as u8,
        ((g + m) * 255.0) as u8,
        ((b + m) * 255.0) as u8,
    ]
}

// ---------------------------------------------------------------------------
// CSV streams

fn open_csv(path: &Path, header: &str) -> Result<BufWriter<File>, IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    Ok(w)
}

fn read_csv_rows(path: &Path, expected_cols: usize) -> Result<Vec<Vec<f64>>, IoError> {
    let f = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let values: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| malformed(path, format!("line {}: {e}", i + 1)))?;
        if values.len() < expected_cols {
            return Err(malformed(
                path,
                format!("line {}: expected {} columns", i + 1, expected_cols),
            ));
        }
        rows.push(values);
    }
    Ok(rows)
}

pub struct ImuWriter(BufWriter<File>);

impl ImuWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        Ok(Self(open_csv(path, "timestamp_s,ax,ay,az,gx,gy,gz")?))
    }

    pub fn write(&mut self, s: &ImuSample) -> Result<(), IoError> {
        writeln!(
            self.0,
            "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.timestamp,
            s.linear_acceleration.x,
            s.linear_acceleration.y,
            s.linear_acceleration.z,
            s.angular_velocity.x,
            s.angular_velocity.y,
            s.angular_velocity.z
        )?;
        Ok(())
    }
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    Ok(read_csv_rows(path, 7)?
        .into_iter()
        .map(|r| ImuSample {
            timestamp: r[0],
            linear_acceleration: Vec3::new(r[1], r[2], r[3]),
            angular_velocity: Vec3::new(r[4], r[5], r[6]),
        })
        .collect())
}

pub struct GpsWriter(BufWriter<File>);

impl GpsWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        Ok(Self(open_csv(path, "timestamp_s,x_m,y_m,acc_m")?))
    }

    pub fn write(&mut self, fix: &GpsFix) -> Result<(), IoError> {
        writeln!(
            self.0,
            "{:.6},{:.9},{:.9},{:.4}",
            fix.timestamp, fix.position.x, fix.position.y, fix.horizontal_accuracy
        )?;
        Ok(())
    }
}

pub fn read_gps_csv(path: &Path) -> Result<Vec<GpsFix>, IoError> {
    Ok(read_csv_rows(path, 4)?
        .into_iter()
        .map(|r| GpsFix {
            timestamp: r[0],
            position: Vec2::new(r[1], r[2]),
            horizontal_accuracy: r[3],
        })
        .collect())
}

pub fn write_route_csv(route: &ReferenceTrajectory, path: &Path) -> Result<(), IoError> {
    let mut w = open_csv(path, "x_m,y_m,v_target_mps")?;
    for (p, v) in route.waypoints() {
        match v {
            Some(v) => writeln!(w, "{:.9},{:.9},{:.4}", p.x, p.y, v)?,
            None => writeln!(w, "{:.9},{:.9},", p.x, p.y)?,
        }
    }
    Ok(())
}

pub fn read_route_csv(path: &Path, closed: bool) -> Result<ReferenceTrajectory, IoError> {
    let f = BufReader::new(File::open(path)?);
    let mut waypoints = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 2 {
            return Err(malformed(path, format!("line {}: expected x,y", i + 1)));
        }
        let x: f64 = parts[0].trim().parse().map_err(|e| malformed(path, format!("{e}")))?;
        let y: f64 = parts[1].trim().parse().map_err(|e| malformed(path, format!("{e}")))?;
        let v = parts
            .get(2)
            .and_then(|t| if t.trim().is_empty() { None } else { t.trim().parse::<f64>().ok() });
        waypoints.push((Vec2::new(x, y), v));
    }
    ReferenceTrajectory::new(waypoints, closed).map_err(|e| malformed(path, e.to_string()))
}

/// Writer for pose-shaped logs: truth.csv and the estimated pose log share
/// the (timestamp_s, x, y, yaw_rad, v, omega) schema.
pub struct PoseWriter(BufWriter<File>);

impl PoseWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        Ok(Self(open_csv(path, "timestamp_s,x,y,yaw_rad,v,omega")?))
    }

    pub fn write(&mut self, t: f64, x: f64, y: f64, yaw: f64, v: f64, omega: f64) -> Result<(), IoError> {
        writeln!(self.0, "{t:.6},{x:.9},{y:.9},{yaw:.9},{v:.9},{omega:.9}")?;
        Ok(())
    }
}

pub fn read_pose_csv(path: &Path) -> Result<Vec<(f64, f64, f64, f64, f64, f64)>, IoError> {
    Ok(read_csv_rows(path, 6)?
        .into_iter()
        .map(|r| (r[0], r[1], r[2], r[3], r[4], r[5]))
        .collect())
}

/// Control log; wall-clock solve times live in timing.csv so this stream
/// stays bit-reproducible across identical runs.
pub struct ControlWriter(BufWriter<File>);

impl ControlWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        Ok(Self(open_csv(
            path,
            "timestamp_s,x,y,yaw,v_cmd,omega_cmd,cost,solve_iterations",
        )?))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn write(
        &mut self,
        t: f64,
        x: f64,
        y: f64,
        yaw: f64,
        v_cmd: f64,
        omega_cmd: f64,
        cost: f64,
        iterations: usize,
    ) -> Result<(), IoError> {
        writeln!(
            self.0,
            "{t:.6},{x:.9},{y:.9},{yaw:.9},{v_cmd:.9},{omega_cmd:.9},{cost:.9},{iterations}"
        )?;
        Ok(())
    }
}

pub fn write_lidar_csv(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    let mut w = open_csv(path, "x,y,z")?;
    for p in &cloud.points {
        writeln!(w, "{:.6},{:.6},{:.6}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn read_lidar_csv(path: &Path, timestamp: f64) -> Result<PointCloud, IoError> {
    let points = read_csv_rows(path, 3)?
        .into_iter()
        .map(|r| Vec3::new(r[0], r[1], r[2]))
        .collect();
    Ok(PointCloud::new(points, timestamp))
}

/// Index of a timestamped file stream (frames.csv has an extra camera
/// column).
pub struct StreamIndexWriter(BufWriter<File>);

impl StreamIndexWriter {
    pub fn create_frames(path: &Path) -> Result<Self, IoError> {
        Ok(Self(open_csv(path, "timestamp_s,camera_index,path")?))
    }

    pub fn create_sweeps(path: &Path) -> Result<Self, IoError> {
        Ok(Self(open_csv(path, "timestamp_s,path")?))
    }

    pub fn write_frame(&mut self, t: f64, camera: usize, rel_path: &str) -> Result<(), IoError> {
        writeln!(self.0, "{t:.6},{camera},{rel_path}")?;
        Ok(())
    }

    pub fn write_sweep(&mut self, t: f64, rel_path: &str) -> Result<(), IoError> {
        writeln!(self.0, "{t:.6},{rel_path}")?;
        Ok(())
    }
}

pub fn read_frames_csv(path: &Path) -> Result<Vec<(f64, usize, String)>, IoError> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(malformed(path, format!("line {}", i + 1)));
        }
        let t: f64 = parts[0].trim().parse().map_err(|e| malformed(path, format!("{e}")))?;
        let cam: usize = parts[1].trim().parse().map_err(|e| malformed(path, format!("{e}")))?;
        out.push((t, cam, parts[2].trim().to_string()));
    }
    Ok(out)
}

pub fn read_sweeps_csv(path: &Path) -> Result<Vec<(f64, String)>, IoError> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(2, ',').collect();
        if parts.len() != 2 {
            return Err(malformed(path, format!("line {}", i + 1)));
        }
        let t: f64 = parts[0].trim().parse().map_err(|e| malformed(path, format!("{e}")))?;
        out.push((t, parts[1].trim().to_string()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Calibration

/// Per-camera calibration entry: intrinsics plus camera-from-body extrinsics
/// as ZYX Euler degrees and a translation in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraCalibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigCalibration {
    pub cameras: Vec<CameraCalibration>,
}

impl RigCalibration {
    pub fn from_rig(rig: &CameraRig) -> Self {
        let cameras = rig
            .cameras()
            .iter()
            .map(|cam| {
                let (yaw, pitch, roll) = cam.cam_from_body.euler_zyx();
                let t = cam.cam_from_body.translation();
                CameraCalibration {
                    fx: cam.intrinsics.fx,
                    fy: cam.intrinsics.fy,
                    cx: cam.intrinsics.cx,
                    cy: cam.intrinsics.cy,
                    width: cam.intrinsics.width,
                    height: cam.intrinsics.height,
                    yaw_deg: yaw.to_degrees(),
                    pitch_deg: pitch.to_degrees(),
                    roll_deg: roll.to_degrees(),
                    x_m: t.x,
                    y_m: t.y,
                    z_m: t.z,
                }
            })
            .collect();
        Self { cameras }
    }

    pub fn to_rig(&self) -> Result<CameraRig, IoError> {
        let cameras: Result<Vec<RigCamera>, IoError> = self
            .cameras
            .iter()
            .map(|c| {
                let intrinsics = CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)
                    .map_err(|e| IoError::Invalid(e.to_string()))?;
                let cam_from_body = Pose3::from_yaw_pitch_roll(
                    c.yaw_deg.to_radians(),
                    c.pitch_deg.to_radians(),
                    c.roll_deg.to_radians(),
                    Vec3::new(c.x_m, c.y_m, c.z_m),
                );
                Ok(RigCamera {
                    intrinsics,
                    cam_from_body,
                })
            })
            .collect();
        CameraRig::new(cameras?).map_err(|e| IoError::Invalid(e.to_string()))
    }
}

pub fn save_calibration(rig: &CameraRig, path: &Path) -> Result<(), IoError> {
    let calib = RigCalibration::from_rig(rig);
    let json = serde_json::to_string_pretty(&calib)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_calibration(path: &Path) -> Result<CameraRig, IoError> {
    let json = fs::read_to_string(path)?;
    let calib: RigCalibration = serde_json::from_str(&json)?;
    calib.to_rig()
}

// ---------------------------------------------------------------------------
// Manifest

/// Per-stream accounting of a recorded dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub duration_s: f64,
    pub cameras: usize,
    pub camera_hz: f64,
    pub imu_hz: f64,
    pub lidar_hz: f64,
    pub gps_period_s: f64,
    pub frames_per_camera: usize,
    pub imu_samples: usize,
    pub gps_fixes: usize,
    pub lidar_sweeps: usize,
    pub streams: Vec<String>,
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), IoError> {
    fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, IoError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
