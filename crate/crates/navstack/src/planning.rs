//! Dynamic Window Approach local planner.
//!
//! Candidates are constant (v, omega) commands sampled on a lattice over the
//! one-step reachable velocity window, rolled out with the exact unicycle
//! model, filtered by the collision/stoppability admissibility rule and
//! scored against the reference route.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec2};
use crate::mapping::{clearance_query, OccupancyGrid};
use crate::motion::unicycle_step;
use crate::odometry::RobotState;

/// Distance along the route from the projection point to the lookahead
/// waypoint, in meters.
pub const LOOKAHEAD_DISTANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanningError {
    #[error("score requested for an inadmissible candidate")]
    NotAdmissible,
    #[error("a reference trajectory needs at least two distinct waypoints")]
    BadReference,
}

/// Body-level velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

/// A rolled-out candidate. `score` is `None` until scored; the braking
/// fallback comes back with `admissible = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCandidate {
    pub command: VelocityCommand,
    pub states: Vec<(f64, f64, f64)>,
    pub score: Option<f64>,
    pub admissible: bool,
}

/// Global route the local planner steers along.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    waypoints: Vec<(Vec2, Option<f64>)>,
    closed: bool,
    /// Cumulative arc length at each waypoint.
    arcs: Vec<f64>,
    total_length: f64,
}

impl ReferenceTrajectory {
    pub fn new(waypoints: Vec<(Vec2, Option<f64>)>, closed: bool) -> Result<Self, PlanningError> {
        if waypoints.len() < 2 {
            return Err(PlanningError::BadReference);
        }
        for w in waypoints.windows(2) {
            if (w[0].0 - w[1].0).norm() < 1e-9 {
                return Err(PlanningError::BadReference);
            }
        }
        let mut arcs = Vec::with_capacity(waypoints.len());
        let mut s = 0.0;
        arcs.push(0.0);
        for w in waypoints.windows(2) {
            s += (w[1].0 - w[0].0).norm();
            arcs.push(s);
        }
        let total_length = if closed {
            s + (waypoints[0].0 - waypoints.last().unwrap().0).norm()
        } else {
            s
        };
        Ok(Self {
            waypoints,
            closed,
            arcs,
            total_length,
        })
    }

    pub fn from_points(points: &[(f64, f64)], closed: bool) -> Result<Self, PlanningError> {
        Self::new(
            points.iter().map(|&(x, y)| (Vec2::new(x, y), None)).collect(),
            closed,
        )
    }

    pub fn waypoints(&self) -> impl Iterator<Item = (Vec2, Option<f64>)> + '_ {
        self.waypoints.iter().copied()
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    fn segment(&self, i: usize) -> (Vec2, Vec2) {
        let a = self.waypoints[i].0;
        let b = self.waypoints[(i + 1) % self.waypoints.len()].0;
        (a, b)
    }

    fn num_segments(&self) -> usize {
        if self.closed {
            self.waypoints.len()
        } else {
            self.waypoints.len() - 1
        }
    }

    /// Arc length of the closest point on the route to `p`.
    pub fn project(&self, p: &Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.num_segments() {
            let (a, b) = self.segment(i);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d = (p - q).norm();
            if d < best.0 {
                best = (d, self.arcs[i] + ab.norm() * t);
            }
        }
        best.1
    }

    /// Distance from `p` to the closest point on the route.
    pub fn cross_track(&self, p: &Vec2) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.num_segments() {
            let (a, b) = self.segment(i);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            best = best.min((p - (a + ab * t)).norm());
        }
        best
    }

    /// Position at an arc length (wrapping for closed routes, clamping for
    /// open ones).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = if self.closed {
            s.rem_euclid(self.total_length)
        } else {
            s.clamp(0.0, self.total_length)
        };
        for i in 0..self.num_segments() {
            let (a, b) = self.segment(i);
            let len = (b - a).norm();
            let s0 = self.arcs[i];
            if s <= s0 + len {
                return a + (b - a) * ((s - s0) / len).clamp(0.0, 1.0);
            }
        }
        self.waypoints.last().unwrap().0
    }

    /// First waypoint at least `ahead` meters past arc length `s`; for open
    /// routes that run out, the final waypoint.
    pub fn lookahead_waypoint(&self, s: f64, ahead: f64) -> Vec2 {
        let target = s + ahead;
        if self.closed {
            let t = target.rem_euclid(self.total_length);
            for (i, &arc) in self.arcs.iter().enumerate() {
                if arc >= t {
                    return self.waypoints[i].0;
                }
            }
            return self.waypoints[0].0;
        }
        for (i, &arc) in self.arcs.iter().enumerate() {
            if arc >= target {
                return self.waypoints[i].0;
            }
        }
        self.waypoints.last().unwrap().0
    }

    /// Target speed governing arc length `s`: the most recent waypoint speed
    /// at or before `s`, falling back to the first waypoint's.
    pub fn target_speed_at(&self, s: f64) -> Option<f64> {
        let mut speed = None;
        for (i, &arc) in self.arcs.iter().enumerate() {
            if arc <= s {
                if let Some(v) = self.waypoints[i].1 {
                    speed = Some(v);
                }
            }
        }
        speed.or(self.waypoints[0].1)
    }
}

/// All DWA knobs with their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwaConfig {
    pub v_max: f64,
    pub omega_max: f64,
    /// Forward acceleration limit, m/s^2.
    pub accel_v: f64,
    /// Yaw acceleration limit, rad/s^2.
    pub accel_omega: f64,
    /// Planning step, seconds.
    pub dt_plan: f64,
    /// Rollout horizon, seconds.
    pub horizon: f64,
    pub samples_v: usize,
    pub samples_omega: usize,
    pub weight_heading: f64,
    pub weight_clearance: f64,
    pub weight_velocity: f64,
    /// Disc footprint radius, meters.
    pub robot_radius: f64,
    /// Clearance cap used for queries and normalization, meters.
    pub clearance_cap: f64,
}

impl Default for DwaConfig {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            omega_max: 1.0,
            accel_v: 0.5,
            accel_omega: 1.0,
            dt_plan: 0.1,
            horizon: 3.0,
            samples_v: 11,
            samples_omega: 21,
            weight_heading: 1.0,
            weight_clearance: 1.0,
            weight_velocity: 0.5,
            robot_radius: 0.5,
            clearance_cap: 5.0,
        }
    }
}

/// One-step reachable velocity window (reverse motion excluded).
pub fn dynamic_window(state: &RobotState, cfg: &DwaConfig) -> (f64, f64, f64, f64) {
    let v_lo = (state.v - cfg.accel_v * cfg.dt_plan).max(0.0);
    let v_hi = (state.v + cfg.accel_v * cfg.dt_plan).min(cfg.v_max);
    let w_lo = (state.omega - cfg.accel_omega * cfg.dt_plan).max(-cfg.omega_max);
    let w_hi = (state.omega + cfg.accel_omega * cfg.dt_plan).min(cfg.omega_max);
    (v_lo, v_hi, w_lo, w_hi)
}

/// Constant-command rollout: `ceil(horizon / dt_plan) + 1` states starting
/// at `start`, stepped with the exact arc model.
pub fn rollout(
    start: (f64, f64, f64),
    cmd: &VelocityCommand,
    dt_plan: f64,
    horizon: f64,
) -> Vec<(f64, f64, f64)> {
    let steps = (horizon / dt_plan).ceil() as usize;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(start);
    let mut s = start;
    for _ in 0..steps {
        s = unicycle_step(s, cmd.v, cmd.omega, dt_plan);
        states.push(s);
    }
    states
}

/// Minimum clearance along a candidate, or None when any state leaves the
/// grid (out-of-grid counts as collision).
fn min_clearance(states: &[(f64, f64, f64)], grid: &OccupancyGrid, cap: f64) -> Option<f64> {
    let mut min_c = cap;
    for &(x, y, _) in states {
        match clearance_query(grid, &Vec2::new(x, y), cap) {
            Ok(c) => min_c = min_c.min(c),
            Err(_) => return None,
        }
    }
    Some(min_c)
}

/// Collision and stoppability test: every state must keep at least
/// `robot_radius` of clearance, and the command speed must satisfy
/// v^2 <= 2 * accel_v * (min clearance - robot_radius) so the robot can
/// stop before the nearest obstacle.
pub fn admissible(candidate: &TrajectoryCandidate, grid: &OccupancyGrid, cfg: &DwaConfig) -> bool {
    let Some(min_c) = min_clearance(&candidate.states, grid, cfg.clearance_cap) else {
        return false;
    };
    if min_c < cfg.robot_radius {
        return false;
    }
    let v = candidate.command.v;
    v * v <= 2.0 * cfg.accel_v * (min_c - cfg.robot_radius)
}

/// Weighted objective of an admissible candidate. Each term is normalized
/// to [0, 1]:
/// - heading: alignment between the endpoint heading and the direction from
///   the endpoint to its lookahead waypoint (the first route waypoint at
///   least 2 m past the endpoint's projection onto the route);
/// - clearance: minimum clearance along the rollout over the cap;
/// - velocity: command speed over v_max.
pub fn score_candidate(
    candidate: &TrajectoryCandidate,
    grid: &OccupancyGrid,
    reference: &ReferenceTrajectory,
    cfg: &DwaConfig,
) -> Result<f64, PlanningError> {
    if !candidate.admissible {
        return Err(PlanningError::NotAdmissible);
    }
    let min_c = min_clearance(&candidate.states, grid, cfg.clearance_cap)
        .ok_or(PlanningError::NotAdmissible)?;
    let &(ex, ey, eyaw) = candidate.states.last().expect("rollouts are non-empty");
    let endpoint = Vec2::new(ex, ey);
    let s = reference.project(&endpoint);
    let look = reference.lookahead_waypoint(s, LOOKAHEAD_DISTANCE);
    let to_look = look - endpoint;
    let heading = if to_look.norm() < 1e-9 {
        1.0
    } else {
        let desired = to_look.y.atan2(to_look.x);
        1.0 - wrap_angle(desired - eyaw).abs() / std::f64::consts::PI
    };
    let clearance = min_c / cfg.clearance_cap;
    let velocity = candidate.command.v / cfg.v_max;
    Ok(cfg.weight_heading * heading
        + cfg.weight_clearance * clearance
        + cfg.weight_velocity * velocity)
}

/// Evaluates the full velocity lattice and returns the best admissible
/// candidate; ties break toward lower |omega|, then lower v. With nothing
/// admissible, returns the braking candidate (decelerating straight ahead)
/// flagged inadmissible.
pub fn plan(
    state: &RobotState,
    grid: &OccupancyGrid,
    reference: &ReferenceTrajectory,
    cfg: &DwaConfig,
) -> TrajectoryCandidate {
    let start = (
        state.pose.translation().x,
        state.pose.translation().y,
        state.pose.yaw(),
    );
    let (v_lo, v_hi, w_lo, w_hi) = dynamic_window(state, cfg);
    let mut best: Option<TrajectoryCandidate> = None;
    for i in 0..cfg.samples_v {
        let v = lattice_value(v_lo, v_hi, i, cfg.samples_v);
        for j in 0..cfg.samples_omega {
            let omega = lattice_value(w_lo, w_hi, j, cfg.samples_omega);
            let cmd = VelocityCommand { v, omega };
            let states = rollout(start, &cmd, cfg.dt_plan, cfg.horizon);
            let mut cand = TrajectoryCandidate {
                command: cmd,
                states,
                score: None,
                admissible: false,
            };
            cand.admissible = admissible(&cand, grid, cfg);
            if !cand.admissible {
                continue;
            }
            let score = score_candidate(&cand, grid, reference, cfg).expect("admissible");
            cand.score = Some(score);
            let better = match &best {
                None => true,
                Some(b) => {
                    let bs = b.score.unwrap();
                    score > bs
                        || (score == bs
                            && (cmd.omega.abs() < b.command.omega.abs()
                                || (cmd.omega.abs() == b.command.omega.abs()
                                    && cmd.v < b.command.v)))
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.unwrap_or_else(|| braking_candidate(state, start, cfg))
}

/// Inclusive linspace over [lo, hi].
pub fn lattice_value(lo: f64, hi: f64, index: usize, count: usize) -> f64 {
    if count <= 1 {
        return lo;
    }
    lo + (hi - lo) * index as f64 / (count - 1) as f64
}

/// Straight-line stop: v decays at accel_v, omega = 0.
fn braking_candidate(
    state: &RobotState,
    start: (f64, f64, f64),
    cfg: &DwaConfig,
) -> TrajectoryCandidate {
    let steps = (cfg.horizon / cfg.dt_plan).ceil() as usize;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(start);
    let mut s = start;
    let mut v = state.v.max(0.0);
    for _ in 0..steps {
        v = (v - cfg.accel_v * cfg.dt_plan).max(0.0);
        s = unicycle_step(s, v, 0.0, cfg.dt_plan);
        states.push(s);
    }
    TrajectoryCandidate {
        command: VelocityCommand {
            v: (state.v - cfg.accel_v * cfg.dt_plan).max(0.0),
            omega: 0.0,
        },
        states,
        score: None,
        admissible: false,
    }
}
