//! Constrained nonlinear model predictive tracking on the unicycle model.
//!
//! The solver is iterated linearization (iLQR structure): linearize the
//! dynamics about the current rollout, backward-pass a regularized LQR to
//! get feedforward/feedback gains, forward-pass with a line search, and
//! clamp every input hard to the box and per-step rate constraints. Only
//! strictly cost-decreasing passes are accepted, so the reported cost is
//! monotone across outer iterations.

use serde::{Deserialize, Serialize};

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::geometry::wrap_angle;
use crate::motion::{unicycle_jacobians, unicycle_step, PlanarState};
use crate::odometry::RobotState;
use crate::planning::TrajectoryCandidate;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("reference must have horizon + 1 states, got {0}")]
    ReferenceLengthMismatch(usize),
    #[error("solver cost became non-finite")]
    NonFiniteCost,
    #[error("candidate needs at least 2 states, got {0}")]
    ShortCandidate(usize),
}

/// Body-level control command; wheel speeds derive as
/// `v ± omega * track_width / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v_cmd: f64,
    pub omega_cmd: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        v_cmd: 0.0,
        omega_cmd: 0.0,
    };

    /// Left/right wheel speeds of the differential drive.
    pub fn wheel_speeds(&self, track_width: f64) -> (f64, f64) {
        (
            self.v_cmd - self.omega_cmd * track_width / 2.0,
            self.v_cmd + self.omega_cmd * track_width / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmpcConfig {
    pub horizon_steps: usize,
    pub dt_ctrl: f64,
    pub q_x: f64,
    pub q_y: f64,
    pub q_yaw: f64,
    pub r_v: f64,
    pub r_omega: f64,
    /// Box bounds on |v| and |omega|.
    pub v_bound: f64,
    pub omega_bound: f64,
    /// Per-step rate bounds on consecutive inputs.
    pub v_rate: f64,
    pub omega_rate: f64,
    pub max_iterations: usize,
    /// Stop when the cost decrease falls below this.
    pub tolerance: f64,
    pub track_width: f64,
    /// Deceleration used by the braking fallback, m/s^2.
    pub brake_decel: f64,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 20,
            dt_ctrl: 0.05,
            q_x: 10.0,
            q_y: 10.0,
            q_yaw: 1.0,
            r_v: 0.1,
            r_omega: 0.1,
            v_bound: 1.5,
            omega_bound: 1.0,
            v_rate: 0.1,
            omega_rate: 0.2,
            max_iterations: 30,
            tolerance: 1e-6,
            track_width: 0.6,
            brake_decel: 0.5,
        }
    }
}

/// Converged solution of one receding-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NmpcSolution {
    pub inputs: Vec<ControlInput>,
    pub predicted: Vec<PlanarState>,
    pub cost: f64,
    pub iterations: usize,
}

/// One exact unicycle prediction step; shared with the planner's rollouts
/// by contract.
pub fn predict_model(state: PlanarState, u: &ControlInput, dt: f64) -> PlanarState {
    unicycle_step(state, u.v_cmd, u.omega_cmd, dt)
}

/// Clamps an input sequence hard-feasible: box bounds first, then the rate
/// chain between consecutive entries (the first entry is rate-free).
fn clamp_feasible(inputs: &mut [ControlInput], cfg: &NmpcConfig) {
    let mut prev: Option<ControlInput> = None;
    for u in inputs.iter_mut() {
        u.v_cmd = u.v_cmd.clamp(-cfg.v_bound, cfg.v_bound);
        u.omega_cmd = u.omega_cmd.clamp(-cfg.omega_bound, cfg.omega_bound);
        if let Some(p) = prev {
            u.v_cmd = u.v_cmd.clamp(p.v_cmd - cfg.v_rate, p.v_cmd + cfg.v_rate);
            u.omega_cmd = u
                .omega_cmd
                .clamp(p.omega_cmd - cfg.omega_rate, p.omega_cmd + cfg.omega_rate);
            // Rate windows always intersect the box for positive bounds,
            // so the result stays inside both.
        }
        prev = Some(*u);
    }
}

fn rollout_states(state: PlanarState, inputs: &[ControlInput], dt: f64) -> Vec<PlanarState> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(state);
    let mut s = state;
    for u in inputs {
        s = predict_model(s, u, dt);
        states.push(s);
    }
    states
}

fn trajectory_cost(states: &[PlanarState], inputs: &[ControlInput], reference: &[PlanarState], cfg: &NmpcConfig) -> f64 {
    let mut cost = 0.0;
    for k in 1..states.len() {
        let (x, y, yaw) = states[k];
        let (rx, ry, ryaw) = reference[k];
        let dyaw = wrap_angle(yaw - ryaw);
        cost += cfg.q_x * (x - rx).powi(2) + cfg.q_y * (y - ry).powi(2) + cfg.q_yaw * dyaw * dyaw;
        let u = inputs[k - 1];
        cost += cfg.r_v * u.v_cmd * u.v_cmd + cfg.r_omega * u.omega_cmd * u.omega_cmd;
    }
    cost
}

/// Solves the receding-horizon tracking problem from `state` against a
/// reference of `horizon_steps + 1` states. The warm start, when present,
/// is shifted by one step (receding horizon) before use.
pub fn nmpc_solve(
    state: PlanarState,
    reference: &[PlanarState],
    warm_start: Option<&[ControlInput]>,
    cfg: &NmpcConfig,
) -> Result<NmpcSolution, ControlError> {
    let h = cfg.horizon_steps;
    if reference.len() != h + 1 {
        return Err(ControlError::ReferenceLengthMismatch(reference.len()));
    }
    if !(state.0.is_finite() && state.1.is_finite() && state.2.is_finite()) {
        return Err(ControlError::NonFiniteCost);
    }

    let mut inputs: Vec<ControlInput> = match warm_start {
        Some(w) if !w.is_empty() => {
            let mut shifted: Vec<ControlInput> = w.iter().skip(1).copied().collect();
            let last = *w.last().unwrap();
            while shifted.len() < h {
                shifted.push(last);
            }
            shifted.truncate(h);
            shifted
        }
        _ => vec![ControlInput::ZERO; h],
    };
    clamp_feasible(&mut inputs, cfg);

    let mut states = rollout_states(state, &inputs, cfg.dt_ctrl);
    let mut cost = trajectory_cost(&states, &inputs, reference, cfg);
    if !cost.is_finite() {
        return Err(ControlError::NonFiniteCost);
    }

    let q = Matrix3::from_diagonal(&Vector3::new(cfg.q_x, cfg.q_y, cfg.q_yaw));
    let r = Matrix2::from_diagonal(&Vector2::new(cfg.r_v, cfg.r_omega));
    let mut mu = 1e-6;
    let mut iterations = 0usize;

    for _ in 0..cfg.max_iterations {
        iterations += 1;

        // Linearize about the current rollout.
        let mut a_mats = Vec::with_capacity(h);
        let mut b_mats = Vec::with_capacity(h);
        for k in 0..h {
            let (a, b) = unicycle_jacobians(states[k], inputs[k].v_cmd, inputs[k].omega_cmd, cfg.dt_ctrl);
            a_mats.push(Matrix3::from_fn(|i, j| a[i][j]));
            b_mats.push(Matrix3x2::from_fn(|i, j| b[i][j]));
        }

        // Backward pass, seeded by the terminal stage cost (stage h).
        let mut ks: Vec<Vector2<f64>> = vec![Vector2::zeros(); h];
        let mut kmats: Vec<Matrix2x3<f64>> = vec![Matrix2x3::zeros(); h];
        let (mut vx, mut vxx) = {
            let (x, y, yaw) = states[h];
            let (rx, ry, ryaw) = reference[h];
            let err = Vector3::new(x - rx, y - ry, wrap_angle(yaw - ryaw));
            (2.0 * q * err, 2.0 * q)
        };
        let mut backward_ok = true;
        for k in (0..h).rev() {
            let u = Vector2::new(inputs[k].v_cmd, inputs[k].omega_cmd);
            let lu = 2.0 * r * u;
            let luu = 2.0 * r;
            let a = &a_mats[k];
            let b = &b_mats[k];
            let qu = lu + b.transpose() * vx;
            let quu = luu + b.transpose() * vxx * b + Matrix2::identity() * mu;
            let qux = b.transpose() * vxx * a;
            let Some(quu_inv) = quu.try_inverse() else {
                backward_ok = false;
                break;
            };
            ks[k] = -quu_inv * qu;
            kmats[k] = -quu_inv * qux;

            // Stage cost at k (state error applies for k >= 1).
            let (lx, lxx) = if k >= 1 {
                let (x, y, yaw) = states[k];
                let (rx, ry, ryaw) = reference[k];
                let err = Vector3::new(x - rx, y - ry, wrap_angle(yaw - ryaw));
                (2.0 * q * err, 2.0 * q)
            } else {
                (Vector3::zeros(), Matrix3::zeros())
            };
            let kk = &kmats[k];
            let kv = &ks[k];
            vx = lx
                + a.transpose() * vx
                + kk.transpose() * quu * kv
                + kk.transpose() * qu
                + qux.transpose() * kv;
            vxx = lxx + a.transpose() * vxx * a + kk.transpose() * quu * kk
                + kk.transpose() * qux
                + qux.transpose() * kk;
            vxx = (vxx + vxx.transpose()) / 2.0;
        }
        if !backward_ok {
            mu *= 10.0;
            if mu > 1e8 {
                break;
            }
            continue;
        }

        // Forward pass with a backtracking line search; inputs clamp hard
        // to the constraint set at every trial.
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..12 {
            let mut new_inputs = inputs.clone();
            let mut s = state;
            let mut prev: Option<ControlInput> = None;
            for k in 0..h {
                let dx = Vector3::new(
                    s.0 - states[k].0,
                    s.1 - states[k].1,
                    wrap_angle(s.2 - states[k].2),
                );
                let du = ks[k] * alpha + kmats[k] * dx;
                let mut u = ControlInput {
                    v_cmd: inputs[k].v_cmd + du[0],
                    omega_cmd: inputs[k].omega_cmd + du[1],
                };
                u.v_cmd = u.v_cmd.clamp(-cfg.v_bound, cfg.v_bound);
                u.omega_cmd = u.omega_cmd.clamp(-cfg.omega_bound, cfg.omega_bound);
                if let Some(p) = prev {
                    u.v_cmd = u.v_cmd.clamp(p.v_cmd - cfg.v_rate, p.v_cmd + cfg.v_rate);
                    u.omega_cmd = u
                        .omega_cmd
                        .clamp(p.omega_cmd - cfg.omega_rate, p.omega_cmd + cfg.omega_rate);
                }
                prev = Some(u);
                new_inputs[k] = u;
                s = predict_model(s, &u, cfg.dt_ctrl);
            }
            let new_states = rollout_states(state, &new_inputs, cfg.dt_ctrl);
            let new_cost = trajectory_cost(&new_states, &new_inputs, reference, cfg);
            if !new_cost.is_finite() {
                return Err(ControlError::NonFiniteCost);
            }
            if new_cost < cost {
                let decrease = cost - new_cost;
                inputs = new_inputs;
                states = new_states;
                cost = new_cost;
                accepted = true;
                mu = (mu * 0.5).max(1e-9);
                if decrease < cfg.tolerance {
                    return Ok(NmpcSolution {
                        inputs,
                        predicted: states,
                        cost,
                        iterations,
                    });
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            mu *= 10.0;
            if mu > 1e8 {
                break;
            }
        }
    }

    Ok(NmpcSolution {
        inputs,
        predicted: states,
        cost,
        iterations,
    })
}

/// Resamples a planner candidate onto the control grid and solves one
/// receding-horizon step. Returns the first input and the solution to warm
/// start the next cycle; solver failure degrades to a straight-line braking
/// input.
pub fn track_step(
    state: &RobotState,
    selected: &TrajectoryCandidate,
    warm_start: Option<&[ControlInput]>,
    cfg: &NmpcConfig,
    dt_plan: f64,
) -> Result<(ControlInput, Vec<ControlInput>), ControlError> {
    if selected.states.len() < 2 {
        return Err(ControlError::ShortCandidate(selected.states.len()));
    }
    let reference = resample_reference(&selected.states, dt_plan, cfg);
    match nmpc_solve(state.planar(), &reference, warm_start, cfg) {
        Ok(solution) => Ok((solution.inputs[0], solution.inputs)),
        Err(ControlError::NonFiniteCost) => {
            let braking = ControlInput {
                v_cmd: (state.v - cfg.brake_decel * cfg.dt_ctrl).max(0.0),
                omega_cmd: 0.0,
            };
            Ok((braking, vec![braking; cfg.horizon_steps]))
        }
        Err(e) => Err(e),
    }
}

/// Linear interpolation in position, shortest-arc in yaw, of the candidate
/// states (spaced `dt_plan` apart) onto `horizon_steps + 1` points spaced
/// `dt_ctrl` apart. Times beyond the candidate clamp to its last state.
pub fn resample_reference(
    candidate_states: &[PlanarState],
    dt_plan: f64,
    cfg: &NmpcConfig,
) -> Vec<PlanarState> {
    let mut reference = Vec::with_capacity(cfg.horizon_steps + 1);
    let last = (candidate_states.len() - 1) as f64;
    for k in 0..=cfg.horizon_steps {
        let t = k as f64 * cfg.dt_ctrl / dt_plan;
        let t = t.min(last);
        let i = (t.floor() as usize).min(candidate_states.len() - 2);
        let frac = t - i as f64;
        let (x0, y0, yaw0) = candidate_states[i];
        let (x1, y1, yaw1) = candidate_states[i + 1];
        reference.push((
            x0 + (x1 - x0) * frac,
            y0 + (y1 - y0) * frac,
            yaw0 + wrap_angle(yaw1 - yaw0) * frac,
        ));
    }
    reference
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose3;
    use crate::planning::VelocityCommand;
    use approx::assert_abs_diff_eq;

    fn straight_reference(speed: f64, cfg: &NmpcConfig) -> Vec<PlanarState> {
        (0..=cfg.horizon_steps)
            .map(|k| (speed * k as f64 * cfg.dt_ctrl, 0.0, 0.0))
            .collect()
    }

    #[test]
    fn predict_model_matches_shared_kinematics() {
        let u = ControlInput { v_cmd: 1.0, omega_cmd: 1.0 };
        let got = predict_model((0.0, 0.0, 0.0), &u, std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(got.0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got.1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got.2, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        // Rest and straight-step cases.
        assert_eq!(predict_model((1.0, 2.0, 0.3), &ControlInput::ZERO, 1.0), (1.0, 2.0, 0.3));
        let s = predict_model((0.0, 0.0, 0.0), &ControlInput { v_cmd: 1.0, omega_cmd: 0.0 }, 1.0);
        assert_abs_diff_eq!(s.0, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_on_zero_reference_returns_zero_inputs() {
        let cfg = NmpcConfig::default();
        let reference: Vec<PlanarState> = vec![(2.0, -1.0, 0.4); cfg.horizon_steps + 1];
        let solution = nmpc_solve((2.0, -1.0, 0.4), &reference, None, &cfg).unwrap();
        assert!(solution.cost < 1e-9, "cost {}", solution.cost);
        for u in &solution.inputs {
            assert!(u.v_cmd.abs() < 1e-6 && u.omega_cmd.abs() < 1e-6);
        }
    }

    #[test]
    fn straight_line_reference_is_tracked_at_speed() {
        let cfg = NmpcConfig::default();
        let reference = straight_reference(1.0, &cfg);
        // Warm-started near the solution so rate constraints do not bind.
        let warm = vec![ControlInput { v_cmd: 1.0, omega_cmd: 0.0 }; cfg.horizon_steps + 1];
        let solution = nmpc_solve((0.0, 0.0, 0.0), &reference, Some(&warm), &cfg).unwrap();
        // The head of the plan runs at the reference speed with no turning;
        // the horizon tail is allowed its terminal decay.
        for k in 0..cfg.horizon_steps / 3 {
            assert!(
                (solution.inputs[k].v_cmd - 1.0).abs() < 1e-3,
                "step {k}: {}",
                solution.inputs[k].v_cmd
            );
            assert!(solution.inputs[k].omega_cmd.abs() < 1e-3);
        }
    }

    #[test]
    fn receding_horizon_holds_reference_speed() {
        // Closed loop: apply the first input, advance the model, re-anchor
        // the reference at the new state. The applied command settles at the
        // reference speed.
        let cfg = NmpcConfig::default();
        let mut state = (0.0, 0.0, 0.0);
        let mut warm: Option<Vec<ControlInput>> = None;
        let mut last = ControlInput::ZERO;
        for _ in 0..40 {
            let reference: Vec<PlanarState> = (0..=cfg.horizon_steps)
                .map(|k| (state.0 + k as f64 * cfg.dt_ctrl, 0.0, 0.0))
                .collect();
            let solution = nmpc_solve(state, &reference, warm.as_deref(), &cfg).unwrap();
            last = solution.inputs[0];
            state = predict_model(state, &last, cfg.dt_ctrl);
            warm = Some(solution.inputs);
        }
        assert!((last.v_cmd - 1.0).abs() < 1e-3, "{}", last.v_cmd);
        assert!(last.omega_cmd.abs() < 1e-3);
    }

    #[test]
    fn unreachable_reference_saturates_at_bounds() {
        let cfg = NmpcConfig::default();
        // A 2 m jump in one control step.
        let mut reference = vec![(0.0, 0.0, 0.0); cfg.horizon_steps + 1];
        for (k, r) in reference.iter_mut().enumerate() {
            if k >= 1 {
                *r = (2.0, 0.0, 0.0);
            }
        }
        let warm = vec![ControlInput { v_cmd: 1.5, omega_cmd: 0.0 }; cfg.horizon_steps];
        let solution = nmpc_solve((0.0, 0.0, 0.0), &reference, Some(&warm), &cfg).unwrap();
        assert!(solution.cost > 0.0);
        assert!(solution.inputs[0].v_cmd <= cfg.v_bound + 1e-12);
        // The head of the plan pins to the speed bound chasing the step.
        assert_abs_diff_eq!(solution.inputs[0].v_cmd, cfg.v_bound, epsilon = 1e-9);
    }

    #[test]
    fn wrong_reference_length_is_rejected() {
        let cfg = NmpcConfig::default();
        let reference = vec![(0.0, 0.0, 0.0); cfg.horizon_steps];
        assert!(matches!(
            nmpc_solve((0.0, 0.0, 0.0), &reference, None, &cfg),
            Err(ControlError::ReferenceLengthMismatch(_))
        ));
    }

    #[test]
    fn constraints_hold_exactly_on_every_output() {
        let cfg = NmpcConfig::default();
        for seed in 0..20u64 {
            let reference: Vec<PlanarState> = (0..=cfg.horizon_steps)
                .map(|k| {
                    let t = k as f64 * cfg.dt_ctrl;
                    (
                        t * 1.2 + crate::rng::hash01(seed, k as i64, 0, 40) * 0.3,
                        crate::rng::hash01(seed, k as i64, 1, 40) * 0.5,
                        crate::rng::hash01(seed, k as i64, 2, 40) * 0.4 - 0.2,
                    )
                })
                .collect();
            let solution = nmpc_solve((0.0, 0.0, 0.0), &reference, None, &cfg).unwrap();
            for (k, u) in solution.inputs.iter().enumerate() {
                assert!(u.v_cmd.abs() <= cfg.v_bound, "v bound at {k}");
                assert!(u.omega_cmd.abs() <= cfg.omega_bound, "omega bound at {k}");
                if k > 0 {
                    let p = solution.inputs[k - 1];
                    assert!(
                        (u.v_cmd - p.v_cmd).abs() <= cfg.v_rate + 1e-15,
                        "v rate at {k}"
                    );
                    assert!(
                        (u.omega_cmd - p.omega_cmd).abs() <= cfg.omega_rate + 1e-15,
                        "omega rate at {k}"
                    );
                }
            }
        }
    }

    #[test]
    fn cost_is_monotone_across_outer_iterations() {
        // Run the solver twice with increasing iteration caps; with a
        // monotone accept rule the cost can only go down as caps rise.
        let base = NmpcConfig::default();
        let reference: Vec<PlanarState> = (0..=base.horizon_steps)
            .map(|k| (k as f64 * base.dt_ctrl * 1.0, 0.3, 0.0))
            .collect();
        let mut prev_cost = f64::INFINITY;
        for iters in [1, 2, 4, 8, 16, 30] {
            let cfg = NmpcConfig {
                max_iterations: iters,
                tolerance: 0.0,
                ..base.clone()
            };
            let solution = nmpc_solve((0.0, 0.0, 0.0), &reference, None, &cfg).unwrap();
            assert!(
                solution.cost <= prev_cost + 1e-12,
                "cost rose from {prev_cost} to {} at cap {iters}",
                solution.cost
            );
            prev_cost = solution.cost;
        }
    }

    #[test]
    fn track_step_at_equilibrium_reproduces_candidate_command() {
        let cfg = NmpcConfig::default();
        let cmd = VelocityCommand { v: 1.0, omega: 0.0 };
        let candidate = crate::planning::TrajectoryCandidate {
            command: cmd,
            states: crate::planning::rollout((0.0, 0.0, 0.0), &cmd, 0.1, 3.0),
            score: Some(1.0),
            admissible: true,
        };
        let state = RobotState {
            pose: Pose3::planar(0.0, 0.0, 0.0),
            v: 1.0,
            omega: 0.0,
            timestamp: 0.0,
        };
        let warm = vec![ControlInput { v_cmd: 1.0, omega_cmd: 0.0 }; cfg.horizon_steps];
        let (u, _next_warm) = track_step(&state, &candidate, Some(&warm), &cfg, 0.1).unwrap();
        assert!((u.v_cmd - 1.0).abs() < 0.05, "{}", u.v_cmd);
        assert!(u.omega_cmd.abs() < 0.05);
    }

    #[test]
    fn track_step_standstill_candidate_returns_zero() {
        let cfg = NmpcConfig::default();
        let cmd = VelocityCommand { v: 0.0, omega: 0.0 };
        let candidate = crate::planning::TrajectoryCandidate {
            command: cmd,
            states: crate::planning::rollout((1.0, 1.0, 0.2), &cmd, 0.1, 3.0),
            score: Some(1.0),
            admissible: true,
        };
        let state = RobotState {
            pose: Pose3::planar(1.0, 1.0, 0.2),
            v: 0.0,
            omega: 0.0,
            timestamp: 0.0,
        };
        let (u, _) = track_step(&state, &candidate, None, &cfg, 0.1).unwrap();
        assert!(u.v_cmd.abs() < 1e-6);
        assert!(u.omega_cmd.abs() < 1e-6);
    }

    #[test]
    fn solver_failure_degrades_to_braking() {
        let cfg = NmpcConfig::default();
        let cmd = VelocityCommand { v: 1.0, omega: 0.0 };
        let candidate = crate::planning::TrajectoryCandidate {
            command: cmd,
            states: crate::planning::rollout((0.0, 0.0, 0.0), &cmd, 0.1, 3.0),
            score: Some(1.0),
            admissible: true,
        };
        // A non-finite state forces NonFiniteCost inside the solver.
        let state = RobotState {
            pose: Pose3::planar(0.0, 0.0, 0.0),
            v: 1.0,
            omega: 0.0,
            timestamp: 0.0,
        };
        let mut bad = candidate.clone();
        bad.states[1].0 = f64::NAN;
        let (u, warm) = track_step(&state, &bad, None, &cfg, 0.1).unwrap();
        assert_abs_diff_eq!(u.v_cmd, 1.0 - cfg.brake_decel * cfg.dt_ctrl, epsilon = 1e-12);
        assert_eq!(u.omega_cmd, 0.0);
        assert_eq!(warm.len(), cfg.horizon_steps);
    }

    #[test]
    fn short_candidate_is_rejected() {
        let cfg = NmpcConfig::default();
        let candidate = crate::planning::TrajectoryCandidate {
            command: VelocityCommand { v: 0.0, omega: 0.0 },
            states: vec![(0.0, 0.0, 0.0)],
            score: None,
            admissible: true,
        };
        let state = RobotState::at_rest(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            track_step(&state, &candidate, None, &cfg, 0.1),
            Err(ControlError::ShortCandidate(1))
        ));
    }

    #[test]
    fn resampling_interpolates_between_plan_steps() {
        let cfg = NmpcConfig::default();
        // Candidate states 0.1 s apart moving 0.1 m per step.
        let states: Vec<PlanarState> = (0..31).map(|k| (k as f64 * 0.1, 0.0, 0.0)).collect();
        let reference = resample_reference(&states, 0.1, &cfg);
        assert_eq!(reference.len(), cfg.horizon_steps + 1);
        // dt_ctrl = 0.05 lands halfway between plan steps.
        assert_abs_diff_eq!(reference[1].0, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(reference[2].0, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn wheel_speed_map() {
        let u = ControlInput { v_cmd: 1.0, omega_cmd: 0.5 };
        let (l, r) = u.wheel_speeds(0.6);
        assert_abs_diff_eq!(l, 1.0 - 0.15);
        assert_abs_diff_eq!(r, 1.0 + 0.15);
    }
}

