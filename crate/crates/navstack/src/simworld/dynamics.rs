//! Ground-truth skid-steer dynamics and inertial/GPS sensor synthesis.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::ControlInput;
use crate::geometry::{wrap_angle, Pose3, Vec2, Vec3};
use crate::motion::unicycle_step;
use crate::odometry::{GpsFix, ImuSample, RobotState};
use crate::rng::{stream_rng, Stream};

/// Noise magnitudes of the simulated platform and sensors. Zero sigmas
/// disable the corresponding draws entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Per-step speed noise, m/s.
    pub sigma_v: f64,
    /// Per-step yaw-rate noise, rad/s.
    pub sigma_omega: f64,
    /// Accelerometer noise, m/s^2.
    pub sigma_accel: f64,
    /// Gyro noise, rad/s.
    pub sigma_gyro: f64,
    /// GPS position noise, m (also reported as horizontal accuracy).
    pub sigma_gps: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_v: 0.01,
            sigma_omega: 0.01,
            sigma_accel: 0.02,
            sigma_gyro: 0.002,
            sigma_gps: 0.5,
        }
    }
}

impl NoiseParams {
    pub fn silent() -> Self {
        Self {
            sigma_v: 0.0,
            sigma_omega: 0.0,
            sigma_accel: 0.0,
            sigma_gyro: 0.0,
            sigma_gps: 0.0,
        }
    }
}

/// Ground-truth simulation state: the true planar state, the slip fractions
/// of the skid-steer platform and the seeded noise streams. The planar
/// tuple is the authority; `Pose3` views are derived on demand so the
/// ideal-model path stays bit-identical to the prediction model.
pub struct SimState {
    x: f64,
    y: f64,
    yaw: f64,
    v: f64,
    omega: f64,
    timestamp: f64,
    /// Longitudinal slip fraction in [0, 0.3]: effective v = v_cmd * (1 - s).
    pub slip_long: f64,
    /// Lateral slip fraction in [0, 0.3]: effective omega = w_cmd * (1 - s).
    pub slip_lat: f64,
    pub noise: NoiseParams,
    rng_dynamics: ChaCha8Rng,
    rng_imu: ChaCha8Rng,
    rng_gps: ChaCha8Rng,
}

impl SimState {
    pub fn new(initial: RobotState, slip_long: f64, slip_lat: f64, noise: NoiseParams, seed: u64) -> Self {
        assert!((0.0..=0.3).contains(&slip_long) && (0.0..=0.3).contains(&slip_lat));
        let (x, y, yaw) = initial.planar();
        Self {
            x,
            y,
            yaw,
            v: initial.v,
            omega: initial.omega,
            timestamp: initial.timestamp,
            slip_long,
            slip_lat,
            noise,
            rng_dynamics: stream_rng(seed, Stream::Dynamics),
            rng_imu: stream_rng(seed, Stream::Imu),
            rng_gps: stream_rng(seed, Stream::Gps),
        }
    }

    pub fn true_state(&self) -> RobotState {
        RobotState {
            pose: Pose3::planar(self.x, self.y, self.yaw),
            v: self.v,
            omega: self.omega,
            timestamp: self.timestamp,
        }
    }

    pub fn planar(&self) -> (f64, f64, f64) {
        (self.x, self.y, self.yaw)
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }
}

/// Advances the true state by one step: commands degrade by the slip
/// fractions, pick up zero-mean seeded noise, and integrate through the
/// exact unicycle arc. With zero slip and silent noise this is bit-identical
/// to the controller's prediction model.
pub fn step_dynamics(sim: &mut SimState, u: &ControlInput, dt: f64) {
    let mut v_eff = u.v_cmd * (1.0 - sim.slip_long);
    let mut omega_eff = u.omega_cmd * (1.0 - sim.slip_lat);
    if sim.noise.sigma_v > 0.0 {
        v_eff += Normal::new(0.0, sim.noise.sigma_v)
            .expect("sigma validated")
            .sample(&mut sim.rng_dynamics);
    }
    if sim.noise.sigma_omega > 0.0 {
        omega_eff += Normal::new(0.0, sim.noise.sigma_omega)
            .expect("sigma validated")
            .sample(&mut sim.rng_dynamics);
    }
    let (nx, ny, nyaw) = unicycle_step((sim.x, sim.y, sim.yaw), v_eff, omega_eff, dt);
    sim.x = nx;
    sim.y = ny;
    sim.yaw = nyaw;
    sim.v = v_eff;
    sim.omega = omega_eff;
    sim.timestamp += dt;
}

/// Synthesizes the IMU reading for the step from `prev` to `next`:
/// finite-difference forward acceleration and yaw rate plus seeded noise.
pub fn synth_imu(sim: &mut SimState, prev: &RobotState, next: &RobotState, dt: f64) -> ImuSample {
    let mut ax = (next.v - prev.v) / dt;
    let mut gz = wrap_angle(next.pose.yaw() - prev.pose.yaw()) / dt;
    if sim.noise.sigma_accel > 0.0 {
        ax += Normal::new(0.0, sim.noise.sigma_accel)
            .expect("sigma validated")
            .sample(&mut sim.rng_imu);
    }
    if sim.noise.sigma_gyro > 0.0 {
        gz += Normal::new(0.0, sim.noise.sigma_gyro)
            .expect("sigma validated")
            .sample(&mut sim.rng_imu);
    }
    ImuSample {
        linear_acceleration: Vec3::new(ax, 0.0, 0.0),
        angular_velocity: Vec3::new(0.0, 0.0, gz),
        timestamp: next.timestamp,
    }
}

/// Synthesizes a GPS fix of the current true position with seeded noise.
pub fn synth_gps(sim: &mut SimState) -> GpsFix {
    let mut pos = Vec2::new(sim.x, sim.y);
    if sim.noise.sigma_gps > 0.0 {
        let normal = Normal::new(0.0, sim.noise.sigma_gps).expect("sigma validated");
        pos += Vec2::new(normal.sample(&mut sim.rng_gps), normal.sample(&mut sim.rng_gps));
    }
    GpsFix {
        position: pos,
        horizontal_accuracy: sim.noise.sigma_gps.max(1e-3),
        timestamp: sim.timestamp,
    }
}

/// Whether a fix is due in the half-open interval (prev_t, next_t] for the
/// given emission period (fixes land on integer multiples of the period;
/// the t = 0 fix belongs to the caller's startup).
pub fn gps_due(prev_t: f64, next_t: f64, period: f64) -> bool {
    let eps = 1e-9;
    ((next_t + eps) / period).floor() > ((prev_t + eps) / period).floor()
}
