//! Desk-scale navigation stack for a four-camera skid-steer ground robot.
//!
//! The crate is organized around the data flow of the on-robot software:
//! camera frames feed a handcrafted corner tracker ([`features`]), tracked
//! points feed pose estimation ([`odometry`]), segmentation label maps and
//! lidar sweeps feed the occupancy world model ([`mapping`]), and the world
//! model feeds local planning ([`planning`]) and trajectory tracking
//! ([`control`]). A fully synthetic world ([`simworld`]) stands in for the
//! sensors so every stage can be exercised end to end on a desk.

pub mod config;
pub mod control;
pub mod features;
pub mod geometry;
pub mod io;
pub mod mapping;
pub mod motion;
pub mod odometry;
pub mod percepts;
pub mod pipeline;
pub mod planning;
pub mod rng;
pub mod simworld;

/// Range a robot can cover at a sustained speed before recharging, in km.
///
/// `v_max` is in m/s, `endurance_h` in hours.
pub fn estimate_coverage_km(v_max: f64, endurance_h: f64) -> Result<f64, NonPositiveInput> {
    if v_max <= 0.0 || endurance_h <= 0.0 || !v_max.is_finite() || !endurance_h.is_finite() {
        return Err(NonPositiveInput);
    }
    Ok(v_max * endurance_h * 3600.0 / 1000.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("inputs must be positive and finite")]
pub struct NonPositiveInput;
