//! The odometry estimator: owns the robot state and the landmark map, and
//! turns per-frame track observations plus IMU/GPS streams into fused pose
//! estimates.
//!
//! Map building runs after the pose update each frame: new tracks register
//! their first observation, tracks that have accumulated enough camera
//! baseline triangulate into landmarks, and existing landmarks refine by a
//! running average of re-triangulations against the first observation.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraRig, Pose3, Vec2, Vec3};

use super::pnp::{pnp_estimate, PnpCorrespondence};
use super::{
    fuse_state, imu_predict, triangulate_landmark, GpsFix, ImuSample, Landmark, OdometryError,
    RobotState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Camera-center baseline a track must span before triangulating, m.
    pub min_baseline: f64,
    /// Landmark map capacity; oldest registrations evict first.
    pub max_landmarks: usize,
    /// Correspondence count below which the PnP solve is skipped.
    pub min_pnp_correspondences: usize,
    /// Fraction of each applied GPS correction propagated into the landmark
    /// map so the map frame follows the fixes instead of fighting them.
    pub map_anchor_beta: f64,
    /// Forward speed clamp, m/s.
    pub v_max: f64,
    /// Cap on the triangulation running-average window.
    pub max_observation_count: u32,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            min_baseline: 0.05,
            max_landmarks: 2000,
            min_pnp_correspondences: 8,
            map_anchor_beta: 0.2,
            v_max: 1.5,
            max_observation_count: 50,
        }
    }
}

/// One feature observation handed to the estimator: which track saw what,
/// where, through which camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackObservation {
    pub track_id: u64,
    pub camera_index: usize,
    pub pixel: Vec2,
}

#[derive(Debug, Clone)]
struct FirstObservation {
    pixel: Vec2,
    world_from_camera: Pose3,
    camera_index: usize,
}

#[derive(Debug, Clone)]
struct LandmarkRecord {
    position: Vec3,
    observation_count: u32,
}

/// Summary of the last frame's estimation step, for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameSummary {
    pub pnp_solved: bool,
    pub pnp_inliers: usize,
    pub pnp_rms_px: f64,
    pub landmarks: usize,
    pub correspondences: usize,
}

pub struct Estimator {
    cfg: EstimatorConfig,
    rig: CameraRig,
    state: RobotState,
    first_obs: HashMap<u64, FirstObservation>,
    landmarks: HashMap<u64, LandmarkRecord>,
    registration_order: VecDeque<u64>,
    last_summary: FrameSummary,
}

impl Estimator {
    pub fn new(rig: CameraRig, initial: RobotState, cfg: EstimatorConfig) -> Self {
        Self {
            cfg,
            rig,
            state: initial,
            first_obs: HashMap::new(),
            landmarks: HashMap::new(),
            registration_order: VecDeque::new(),
            last_summary: FrameSummary::default(),
        }
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn last_summary(&self) -> FrameSummary {
        self.last_summary
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }

    pub fn landmarks(&self) -> impl Iterator<Item = Landmark> + '_ {
        self.landmarks.iter().map(|(&id, r)| Landmark {
            id,
            position: r.position,
            observation_count: r.observation_count,
        })
    }

    /// Advances the state by one IMU sample.
    pub fn predict(&mut self, imu: &ImuSample, dt: f64) -> Result<(), OdometryError> {
        let mut next = imu_predict(&self.state, imu, dt)?;
        next.v = next.v.clamp(-self.cfg.v_max, self.cfg.v_max);
        self.state = next;
        Ok(())
    }

    /// Tracks whose IDs are no longer observed should be retired so their
    /// landmarks free capacity.
    pub fn retire_tracks(&mut self, lost_ids: &[u64]) {
        for id in lost_ids {
            self.first_obs.remove(id);
            self.landmarks.remove(id);
        }
    }

    /// Processes one synchronized multi-camera frame of observations plus an
    /// optional GPS fix, returning the fused state.
    pub fn process_frame(
        &mut self,
        observations: &[TrackObservation],
        gps: Option<&GpsFix>,
    ) -> Result<RobotState, OdometryError> {
        let predicted = self.state;
        let mut summary = FrameSummary {
            landmarks: self.landmarks.len(),
            ..FrameSummary::default()
        };

        // Pose update from the existing map.
        let mut correspondences = Vec::new();
        for obs in observations {
            if let Some(record) = self.landmarks.get(&obs.track_id) {
                correspondences.push(PnpCorrespondence {
                    world_point: record.position,
                    pixel: obs.pixel,
                    camera_index: obs.camera_index,
                });
            }
        }
        summary.correspondences = correspondences.len();

        let pnp_pose = if correspondences.len() >= self.cfg.min_pnp_correspondences {
            match pnp_estimate(&correspondences, &self.rig, &predicted.pose) {
                Ok(result) => {
                    summary.pnp_solved = true;
                    summary.pnp_inliers = result.inlier_count;
                    summary.pnp_rms_px = result.rms_error;
                    // The motion model is planar: project the solution back
                    // onto the ground plane before fusing.
                    let planar = Pose3::planar(
                        result.pose.translation().x,
                        result.pose.translation().y,
                        result.pose.yaw(),
                    );
                    Some((planar, result.inlier_count))
                }
                Err(_) => None,
            }
        } else {
            None
        };

        let after_pnp = fuse_state(
            &predicted,
            pnp_pose.as_ref().map(|(p, n)| (p, *n)),
            None,
        )?;
        let fused = fuse_state(&after_pnp, None, gps)?;

        // Let the landmark map follow a fraction of the applied GPS
        // correction so later PnP solves anchor to the corrected frame.
        if gps.is_some() {
            let delta = Vec2::new(
                fused.pose.translation().x - after_pnp.pose.translation().x,
                fused.pose.translation().y - after_pnp.pose.translation().y,
            ) * self.cfg.map_anchor_beta;
            if delta.norm() > 0.0 {
                for record in self.landmarks.values_mut() {
                    record.position.x += delta.x;
                    record.position.y += delta.y;
                }
                for first in self.first_obs.values_mut() {
                    let t = *first.world_from_camera.translation();
                    first.world_from_camera = Pose3::new(
                        *first.world_from_camera.rotation(),
                        Vec3::new(t.x + delta.x, t.y + delta.y, t.z),
                    )
                    .expect("translation shift keeps rotation valid");
                }
            }
        }
        self.state = fused;

        // Map maintenance against the updated pose.
        self.update_map(observations);
        summary.landmarks = self.landmarks.len();
        self.last_summary = summary;
        Ok(self.state)
    }

    fn update_map(&mut self, observations: &[TrackObservation]) {
        for obs in observations {
            let cam = self.rig.camera(obs.camera_index);
            let world_from_camera = cam.world_from_camera(&self.state.pose);
            match self.first_obs.get(&obs.track_id) {
                None => {
                    self.first_obs.insert(
                        obs.track_id,
                        FirstObservation {
                            pixel: obs.pixel,
                            world_from_camera,
                            camera_index: obs.camera_index,
                        },
                    );
                }
                Some(first) => {
                    if first.camera_index != obs.camera_index {
                        continue;
                    }
                    let baseline = (first.world_from_camera.translation()
                        - world_from_camera.translation())
                    .norm();
                    if baseline < self.cfg.min_baseline {
                        continue;
                    }
                    let tri = triangulate_landmark(
                        (&first.pixel, &first.world_from_camera),
                        (&obs.pixel, &world_from_camera),
                        &cam.intrinsics,
                    );
                    let Ok(point) = tri else { continue };
                    match self.landmarks.get_mut(&obs.track_id) {
                        None => {
                            self.landmarks.insert(
                                obs.track_id,
                                LandmarkRecord {
                                    position: point,
                                    observation_count: 2,
                                },
                            );
                            self.registration_order.push_back(obs.track_id);
                            self.evict_over_capacity();
                        }
                        Some(record) => {
                            if record.observation_count < self.cfg.max_observation_count {
                                record.observation_count += 1;
                            }
                            let n = record.observation_count as f64;
                            record.position += (point - record.position) / n;
                        }
                    }
                }
            }
        }
    }

    fn evict_over_capacity(&mut self) {
        while self.landmarks.len() > self.cfg.max_landmarks {
            let Some(oldest) = self.registration_order.pop_front() else {
                break;
            };
            self.landmarks.remove(&oldest);
        }
    }
}
