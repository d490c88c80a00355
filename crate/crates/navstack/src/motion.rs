//! Shared unicycle kinematics.
//!
//! The planner's rollouts, the controller's prediction model and the
//! simulator's true dynamics all step through this one function so that the
//! ideal-model paths agree bit for bit.

/// Planar state (x, y, yaw).
pub type PlanarState = (f64, f64, f64);

/// Commands with |omega| below this take the straight-line branch.
pub const OMEGA_STRAIGHT_EPS: f64 = 1e-6;

/// Exact unicycle step: arc of radius v/omega, or a straight line for
/// near-zero omega.
pub fn unicycle_step(state: PlanarState, v: f64, omega: f64, dt: f64) -> PlanarState {
    let (x, y, yaw) = state;
    if omega.abs() < OMEGA_STRAIGHT_EPS {
        (x + v * dt * yaw.cos(), y + v * dt * yaw.sin(), yaw)
    } else {
        let r = v / omega;
        let yaw2 = yaw + omega * dt;
        (
            x + r * (yaw2.sin() - yaw.sin()),
            y - r * (yaw2.cos() - yaw.cos()),
            yaw2,
        )
    }
}

/// Jacobians of `unicycle_step` with respect to state and input.
///
/// Returns (A, B) where A is the 3x3 state Jacobian and B the 3x2 input
/// Jacobian, row-major over (x, y, yaw) and columns (v, omega). Near
/// omega = 0 the arc expressions are replaced by their series limits so the
/// derivatives stay continuous across the branch switch.
pub fn unicycle_jacobians(state: PlanarState, v: f64, omega: f64, dt: f64) -> ([[f64; 3]; 3], [[f64; 2]; 3]) {
    let (_, _, yaw) = state;
    let (s1, c1) = yaw.sin_cos();
    let yaw2 = yaw + omega * dt;
    let (s2, c2) = yaw2.sin_cos();

    let mut a = [[0.0; 3]; 3];
    a[0][0] = 1.0;
    a[1][1] = 1.0;
    a[2][2] = 1.0;

    let mut b = [[0.0; 2]; 3];
    b[2][1] = dt;

    if omega.abs() < 1e-4 {
        // Series expansion of the arc step around omega = 0:
        //   dx = v*dt*cos(yaw) - v*dt^2/2 * omega * sin(yaw) + O(w^2)
        //   dy = v*dt*sin(yaw) + v*dt^2/2 * omega * cos(yaw) + O(w^2)
        a[0][2] = -v * dt * s1 - 0.5 * v * dt * dt * omega * c1;
        a[1][2] = v * dt * c1 - 0.5 * v * dt * dt * omega * s1;
        b[0][0] = dt * c1 - 0.5 * dt * dt * omega * s1;
        b[1][0] = dt * s1 + 0.5 * dt * dt * omega * c1;
        b[0][1] = -0.5 * v * dt * dt * s1 - v * dt * dt * dt * omega * c1 / 3.0;
        b[1][1] = 0.5 * v * dt * dt * c1 - v * dt * dt * dt * omega * s1 / 3.0;
    } else {
        let r = v / omega;
        a[0][2] = r * (c2 - c1);
        a[1][2] = r * (s2 - s1);
        b[0][0] = (s2 - s1) / omega;
        b[1][0] = -(c2 - c1) / omega;
        b[0][1] = -v * (s2 - s1) / (omega * omega) + v * dt * c2 / omega;
        b[1][1] = v * (c2 - c1) / (omega * omega) + v * dt * s2 / omega;
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rest_command_leaves_state_unchanged() {
        let s = (1.0, -2.0, 0.7);
        assert_eq!(unicycle_step(s, 0.0, 0.0, 0.5), s);
    }

    #[test]
    fn straight_step_advances_along_heading() {
        let (x, y, yaw) = unicycle_step((0.0, 0.0, 0.0), 1.0, 0.0, 1.0);
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(yaw, 0.0);
    }

    #[test]
    fn quarter_circle_is_exact() {
        // v = 1, omega = 1 for pi/2 seconds: radius-1 quarter circle.
        let (x, y, yaw) = unicycle_step((0.0, 0.0, 0.0), 1.0, 1.0, std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(yaw, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut state = 0x3c6ef372fe94f82bu64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let h = 1e-6;
        for _ in 0..100 {
            let s = (next() * 4.0 - 2.0, next() * 4.0 - 2.0, next() * 6.0 - 3.0);
            let v = next() * 1.5;
            // Stay a decade away from the series/arc switch at 1e-4.
            let omega = (0.05 + next() * 0.95) * if next() > 0.5 { 1.0 } else { -1.0 };
            let dt = 0.02 + next() * 0.08;
            let (a, b) = unicycle_jacobians(s, v, omega, dt);
            let f0 = unicycle_step(s, v, omega, dt);
            for col in 0..3 {
                let mut sp = [s.0, s.1, s.2];
                sp[col] += h;
                let mut sm = [s.0, s.1, s.2];
                sm[col] -= h;
                let fp = unicycle_step((sp[0], sp[1], sp[2]), v, omega, dt);
                let fm = unicycle_step((sm[0], sm[1], sm[2]), v, omega, dt);
                let fd = [
                    (fp.0 - fm.0) / (2.0 * h),
                    (fp.1 - fm.1) / (2.0 * h),
                    (fp.2 - fm.2) / (2.0 * h),
                ];
                for row in 0..3 {
                    let denom = fd[row].abs().max(1.0);
                    assert!(
                        (a[row][col] - fd[row]).abs() / denom < 1e-6,
                        "A[{row}][{col}] analytic {} vs fd {}",
                        a[row][col],
                        fd[row]
                    );
                }
            }
            for (col, (vp, wp)) in [(h, 0.0), (0.0, h)].iter().enumerate() {
                let fp = unicycle_step(s, v + vp, omega + wp, dt);
                let fm = unicycle_step(s, v - vp, omega - wp, dt);
                let fd = [
                    (fp.0 - fm.0) / (2.0 * h),
                    (fp.1 - fm.1) / (2.0 * h),
                    (fp.2 - fm.2) / (2.0 * h),
                ];
                for row in 0..3 {
                    let denom = fd[row].abs().max(1.0);
                    assert!(
                        (b[row][col] - fd[row]).abs() / denom < 1e-6,
                        "B[{row}][{col}] analytic {} vs fd {} (v={v} w={omega})",
                        b[row][col],
                        fd[row]
                    );
                }
            }
            let _ = f0;
        }
    }
}
