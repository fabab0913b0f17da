//! Reference path geometry, error signals, stage costs, and obstacle
//! constraints.
//!
//! The reference is a circle traversed counter-clockwise by the path
//! parameter; the tracking controller instead follows the wall clock,
//! clamped at the path end. Obstacles are circles the end effector must
//! stay out of, expressed in squared form so the constraint stays smooth
//! everywhere.

use crate::dynamics::{
    fk_elems, fk_jacobian_elems, forward_kinematics, ExtendedState, ManipulatorModel,
    TrackingState,
};
use crate::scalar::Scalar;
use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TaskError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("weight matrix {name} must be symmetric positive definite")]
    NotPositiveDefinite { name: &'static str },
}

/// Circular reference path `center + radius·[cos(s+phase), sin(s+phase)]`,
/// with the parameter running from 0 to `s_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirclePath {
    pub center: Vector2<f64>,
    pub radius: f64,
    pub phase: f64,
    /// Terminal path parameter (one lap by default).
    pub s_end: f64,
}

impl CirclePath {
    pub fn new(
        center: Vector2<f64>,
        radius: f64,
        phase: f64,
        s_end: f64,
    ) -> Result<Self, TaskError> {
        if radius <= 0.0 {
            return Err(TaskError::NonPositive {
                name: "radius",
                value: radius,
            });
        }
        if s_end <= 0.0 {
            return Err(TaskError::NonPositive {
                name: "s_end",
                value: s_end,
            });
        }
        Ok(CirclePath {
            center,
            radius,
            phase,
            s_end,
        })
    }

    /// The benchmark path: radius 0.2 m centered at (0.55, 0.55), one lap.
    pub fn benchmark() -> Self {
        CirclePath {
            center: Vector2::new(0.55, 0.55),
            radius: 0.2,
            phase: 0.0,
            s_end: 2.0 * std::f64::consts::PI,
        }
    }
}

/// Circular keep-out region for the end effector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Vector2<f64>,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: Vector2<f64>, radius: f64) -> Result<Self, TaskError> {
        if radius <= 0.0 {
            return Err(TaskError::NonPositive {
                name: "obstacle radius",
                value: radius,
            });
        }
        Ok(Obstacle { center, radius })
    }
}

/// Stage-cost weights. All matrices are symmetric positive definite and the
/// scalar weights positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    /// Penalty on the position error.
    pub error: Matrix2<f64>,
    /// Penalty on the error rate.
    pub error_rate: Matrix2<f64>,
    /// Penalty on the joint torques.
    pub torque: Matrix2<f64>,
    /// Penalty on the timing error (path-following only).
    pub timing_error: f64,
    /// Penalty on the timing input (path-following only).
    pub timing_input: f64,
}

impl CostWeights {
    pub fn new(
        error: Matrix2<f64>,
        error_rate: Matrix2<f64>,
        torque: Matrix2<f64>,
        timing_error: f64,
        timing_input: f64,
    ) -> Result<Self, TaskError> {
        check_spd("error", &error)?;
        check_spd("error_rate", &error_rate)?;
        check_spd("torque", &torque)?;
        if timing_error <= 0.0 {
            return Err(TaskError::NonPositive {
                name: "timing_error",
                value: timing_error,
            });
        }
        if timing_input <= 0.0 {
            return Err(TaskError::NonPositive {
                name: "timing_input",
                value: timing_input,
            });
        }
        Ok(CostWeights {
            error,
            error_rate,
            torque,
            timing_error,
            timing_input,
        })
    }

    /// Benchmark tuning: `Q = 1e4·I`, `Q_d = 10·I`, `R = 1e-3·I`, `q = 1`,
    /// `r = 1e-3`. The tracking controller simply ignores the timing weights.
    pub fn benchmark() -> Self {
        CostWeights {
            error: Matrix2::identity() * 1e4,
            error_rate: Matrix2::identity() * 10.0,
            torque: Matrix2::identity() * 1e-3,
            timing_error: 1.0,
            timing_input: 1e-3,
        }
    }
}

fn check_spd(name: &'static str, m: &Matrix2<f64>) -> Result<(), TaskError> {
    let symmetric = (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * m.amax().max(1.0);
    let pd = m[(0, 0)] > 0.0 && m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] > 0.0;
    if symmetric && pd {
        Ok(())
    } else {
        Err(TaskError::NotPositiveDefinite { name })
    }
}

/// Everything that defines the control task besides the plant itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDefinition {
    pub path: CirclePath,
    /// Upper bound on the path-parameter rate (rad/s).
    pub s_dot_max: f64,
    /// Symmetric bound on the timing input (rad/s²).
    pub v_max: f64,
    pub obstacles: Vec<Obstacle>,
    pub weights: CostWeights,
    /// Optional symmetric joint-speed bound (rad/s).
    pub joint_speed_limit: Option<f64>,
}

impl TaskDefinition {
    /// Benchmark task without obstacles or speed limits.
    ///
    /// The timing-input bound is sized so that stopping from full path speed
    /// takes the whole horizon lookahead (ṡ²/2v = ṡ·T at T = 0.2 s): braking
    /// in front of an obstacle is then only chosen when no swerve fits the
    /// horizon, which separates the small on-path obstacle (passed) from the
    /// large one (stalled at).
    pub fn benchmark() -> Self {
        TaskDefinition {
            path: CirclePath::benchmark(),
            s_dot_max: 2.0,
            v_max: 5.0,
            obstacles: Vec::new(),
            weights: CostWeights::benchmark(),
            joint_speed_limit: None,
        }
    }

    /// The two benchmark obstacles: a small one sitting on the path and a
    /// larger one cutting across it later in the lap.
    pub fn benchmark_obstacles() -> Vec<Obstacle> {
        vec![
            Obstacle {
                center: Vector2::new(0.55, 0.75),
                radius: 0.02,
            },
            Obstacle {
                center: Vector2::new(0.4, 0.4),
                radius: 0.04,
            },
        ]
    }
}

// ---------------------------------------------------------------------------
// Scalar-generic kernels
// ---------------------------------------------------------------------------

pub(crate) fn path_point_elems<S: Scalar>(s: S, path: &CirclePath) -> [S; 2] {
    let arg = s + S::constant(path.phase);
    [
        arg.cos().scale(path.radius) + S::constant(path.center[0]),
        arg.sin().scale(path.radius) + S::constant(path.center[1]),
    ]
}

pub(crate) fn path_tangent_elems<S: Scalar>(s: S, path: &CirclePath) -> [S; 2] {
    let arg = s + S::constant(path.phase);
    [
        -arg.sin().scale(path.radius),
        arg.cos().scale(path.radius),
    ]
}

/// Path-following stage cost on the extended state; `input = None` drops the
/// torque and timing-input terms (terminal stage).
pub(crate) fn stage_cost_pf_elems<S: Scalar>(
    xi: &[S],
    input: Option<&[S]>,
    weights: &CostWeights,
    path: &CirclePath,
    model: &ManipulatorModel,
) -> S {
    let y = [xi[0], xi[1]];
    let x = [xi[2], xi[3]];
    let (s, s_rate) = (xi[4], xi[5]);

    let p = fk_elems(y, model);
    let rho = path_point_elems(s, path);
    let e = [p[0] - rho[0], p[1] - rho[1]];

    let jac = fk_jacobian_elems(y, model);
    let tangent = path_tangent_elems(s, path);
    let e_rate = [
        jac[0][0] * x[0] + jac[0][1] * x[1] - tangent[0] * s_rate,
        jac[1][0] * x[0] + jac[1][1] * x[1] - tangent[1] * s_rate,
    ];

    let timing_err = s - S::constant(path.s_end);

    let mut cost = quad_form(&e, &weights.error)
        + quad_form(&e_rate, &weights.error_rate)
        + timing_err.sq().scale(0.5 * weights.timing_error);
    if let Some(w) = input {
        let u = [w[0], w[1]];
        cost += quad_form(&u, &weights.torque) + w[2].sq().scale(0.5 * weights.timing_input);
    }
    cost
}

/// Tracking stage cost; the reference point and velocity are fixed numbers
/// because the tracking clock is not a decision variable.
pub(crate) fn stage_cost_tt_elems<S: Scalar>(
    chi: &[S],
    torque: Option<&[S]>,
    reference: [f64; 2],
    reference_rate: [f64; 2],
    weights: &CostWeights,
    model: &ManipulatorModel,
) -> S {
    let y = [chi[0], chi[1]];
    let x = [chi[2], chi[3]];

    let p = fk_elems(y, model);
    let e = [
        p[0] - S::constant(reference[0]),
        p[1] - S::constant(reference[1]),
    ];

    let jac = fk_jacobian_elems(y, model);
    let e_rate = [
        jac[0][0] * x[0] + jac[0][1] * x[1] - S::constant(reference_rate[0]),
        jac[1][0] * x[0] + jac[1][1] * x[1] - S::constant(reference_rate[1]),
    ];

    let mut cost = quad_form(&e, &weights.error) + quad_form(&e_rate, &weights.error_rate);
    if let Some(u) = torque {
        cost += quad_form(&[u[0], u[1]], &weights.torque);
    }
    cost
}

/// `½ vᵀ W v` for a symmetric 2×2 weight.
fn quad_form<S: Scalar>(v: &[S; 2], w: &Matrix2<f64>) -> S {
    (v[0].sq().scale(w[(0, 0)]) + v[1].sq().scale(w[(1, 1)])).scale(0.5)
        + (v[0] * v[1]).scale(w[(0, 1)])
}

/// Smooth keep-out constraint `r² − ‖p − c‖²`; feasible iff ≤ 0.
pub(crate) fn obstacle_violation_elems<S: Scalar>(p: [S; 2], o: &Obstacle) -> S {
    let dx = p[0] - S::constant(o.center[0]);
    let dy = p[1] - S::constant(o.center[1]);
    S::constant(o.radius * o.radius) - dx.sq() - dy.sq()
}

// ---------------------------------------------------------------------------
// f64 API
// ---------------------------------------------------------------------------

/// Point on the reference path at parameter `s` (defined for all real `s`;
/// callers clamp to `[0, s_end]`).
pub fn path_point(s: f64, path: &CirclePath) -> Vector2<f64> {
    let p = path_point_elems(s, path);
    Vector2::new(p[0], p[1])
}

/// Derivative of [`path_point`] with respect to the parameter; its magnitude
/// equals the radius.
pub fn path_tangent(s: f64, path: &CirclePath) -> Vector2<f64> {
    let t = path_tangent_elems(s, path);
    Vector2::new(t[0], t[1])
}

/// Position deviation from the path, `f_p(y) − ϱ(s)`.
pub fn path_error(
    state: &ExtendedState,
    path: &CirclePath,
    model: &ManipulatorModel,
) -> Vector2<f64> {
    forward_kinematics(&state.joint.angles, model) - path_point(state.timing.parameter, path)
}

/// Rate of the path deviation, `J_p(y)·x − ϱ'(s)·ṡ`.
pub fn path_error_rate(
    state: &ExtendedState,
    path: &CirclePath,
    model: &ManipulatorModel,
) -> Vector2<f64> {
    crate::dynamics::fk_jacobian(&state.joint.angles, model) * state.joint.velocities
        - path_tangent(state.timing.parameter, path) * state.timing.rate
}

/// The tracking clock: the reference parameter advances with wall time and
/// freezes at the path end.
pub fn tracking_clock(t: f64, path: &CirclePath) -> f64 {
    t.min(path.s_end)
}

/// Tracking deviation `f_p(y) − ϱ(min(t, s_end))`.
pub fn tracking_error(
    state: &TrackingState,
    t: f64,
    path: &CirclePath,
    model: &ManipulatorModel,
) -> Vector2<f64> {
    forward_kinematics(&state.joint.angles, model) - path_point(tracking_clock(t, path), path)
}

/// Rate of the tracking deviation; the reference velocity vanishes once the
/// clock is clamped.
pub fn tracking_error_rate(
    state: &TrackingState,
    t: f64,
    path: &CirclePath,
    model: &ManipulatorModel,
) -> Vector2<f64> {
    let clock_rate = if t < path.s_end { 1.0 } else { 0.0 };
    crate::dynamics::fk_jacobian(&state.joint.angles, model) * state.joint.velocities
        - path_tangent(tracking_clock(t, path), path) * clock_rate
}

/// Timing error `s − s_end`.
pub fn timing_error(s: f64, path: &CirclePath) -> f64 {
    s - path.s_end
}

/// Path-following stage cost
/// `½e'Qe + ½ė'Q_d ė + ½u'Ru + ½q·e_s² + ½r·v²`.
pub fn stage_cost_pf(
    state: &ExtendedState,
    input: &[f64; 3],
    weights: &CostWeights,
    path: &CirclePath,
    model: &ManipulatorModel,
) -> f64 {
    stage_cost_pf_elems(&state.to_vec(), Some(&input[..]), weights, path, model)
}

/// Tracking stage cost: as the path-following cost without the timing terms,
/// with errors measured against the clock-driven reference.
pub fn stage_cost_tt(
    state: &TrackingState,
    torque: &Vector2<f64>,
    t: f64,
    weights: &CostWeights,
    path: &CirclePath,
    model: &ManipulatorModel,
) -> f64 {
    let clock = tracking_clock(t, path);
    let reference = path_point(clock, path);
    let clock_rate = if t < path.s_end { 1.0 } else { 0.0 };
    let reference_rate = path_tangent(clock, path) * clock_rate;
    stage_cost_tt_elems(
        &state.to_vec(),
        Some(&[torque[0], torque[1]]),
        [reference[0], reference[1]],
        [reference_rate[0], reference_rate[1]],
        weights,
        model,
    )
}

/// Obstacle constraint value `r² − ‖p − center‖²`; the point is clear of the
/// obstacle iff the value is ≤ 0.
pub fn obstacle_violation(p: &Vector2<f64>, obstacle: &Obstacle) -> f64 {
    obstacle_violation_elems([p[0], p[1]], obstacle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{JointState, PathTimingState};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model() -> ManipulatorModel {
        ManipulatorModel::benchmark()
    }

    #[test]
    fn path_point_spot_values() {
        let path = CirclePath::benchmark();
        let p0 = path_point(0.0, &path);
        assert_relative_eq!(p0[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(p0[1], 0.55, epsilon = 1e-15);

        // the quarter-lap point coincides with the first benchmark obstacle
        let pq = path_point(PI / 2.0, &path);
        assert_relative_eq!(pq[0], 0.55, epsilon = 1e-15);
        assert_relative_eq!(pq[1], 0.75, epsilon = 1e-15);

        let lap = path_point(2.0 * PI, &path);
        assert_relative_eq!(lap[0], p0[0], epsilon = 1e-12);
        assert_relative_eq!(lap[1], p0[1], epsilon = 1e-12);
    }

    #[test]
    fn path_tangent_properties() {
        let path = CirclePath::benchmark();
        let t0 = path_tangent(0.0, &path);
        assert_relative_eq!(t0[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(t0[1], 0.2, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let s: f64 = rng.gen_range(-10.0..10.0);
            let tangent = path_tangent(s, &path);
            let radial = path_point(s, &path) - path.center;
            assert_relative_eq!(tangent.dot(&radial), 0.0, epsilon = 1e-12);
            assert_relative_eq!(tangent.norm(), path.radius, epsilon = 1e-12);

            let h = 1e-6;
            let fdt = (path_point(s + h, &path) - path_point(s - h, &path)) / (2.0 * h);
            assert_relative_eq!(tangent[0], fdt[0], epsilon = 1e-7);
            assert_relative_eq!(tangent[1], fdt[1], epsilon = 1e-7);
        }
    }

    #[test]
    fn path_error_cases() {
        let (path, m) = (CirclePath::benchmark(), model());
        // FK([π/2, −π/2]) = (0.5, 0.5); at s = 0 the reference is (0.75, 0.55)
        let xi = ExtendedState::new(
            JointState::at_rest(Vector2::new(PI / 2.0, -PI / 2.0)),
            PathTimingState::at_origin(),
        );
        let e = path_error(&xi, &path, &m);
        assert_relative_eq!(e[0], -0.25, epsilon = 1e-12);
        assert_relative_eq!(e[1], -0.05, epsilon = 1e-12);

        // independent of the rate
        let mut xi2 = xi;
        xi2.timing.rate = 1.7;
        assert_eq!(path_error(&xi2, &path, &m), e);

        // vanishes on the path
        let on_path = crate::dynamics::inverse_kinematics(
            &path_point(1.0, &path),
            &m,
            crate::dynamics::ElbowBranch::Up,
        )
        .unwrap();
        let xi3 = ExtendedState::new(
            JointState::at_rest(on_path),
            PathTimingState::new(1.0, 0.0),
        );
        assert!(path_error(&xi3, &path, &m).norm() < 1e-12);
    }

    #[test]
    fn path_error_rate_cases() {
        let (path, m) = (CirclePath::benchmark(), model());
        let still = ExtendedState::new(
            JointState::at_rest(Vector2::new(0.3, 0.4)),
            PathTimingState::at_origin(),
        );
        assert!(path_error_rate(&still, &path, &m).norm() < 1e-15);

        let drifting = ExtendedState::new(
            JointState::at_rest(Vector2::new(0.3, 0.4)),
            PathTimingState::new(0.0, 1.0),
        );
        let rate = path_error_rate(&drifting, &path, &m);
        assert_relative_eq!(rate[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(rate[1], -0.2, epsilon = 1e-15);
    }

    /// The error rate is the time derivative of the error along trajectories.
    #[test]
    fn path_error_rate_matches_finite_difference_along_trajectory() {
        let (path, m) = (CirclePath::benchmark(), model());
        let dt = 1e-5;
        let mut state = ExtendedState::new(
            JointState::new(Vector2::new(0.9, -0.8), Vector2::new(0.4, -0.3)),
            PathTimingState::new(0.5, 0.8),
        );
        let input = [2.0, 1.0, 0.3];
        for _ in 0..20 {
            let rate = path_error_rate(&state, &path, &m);
            let rhs = crate::dynamics::extended_rhs(&state, &input, &m).unwrap();
            let mut fwd = state.to_vec();
            let mut bwd = state.to_vec();
            for k in 0..6 {
                fwd[k] += dt * rhs[k];
                bwd[k] -= dt * rhs[k];
            }
            let ef = path_error(&ExtendedState::from_slice(&fwd), &path, &m);
            let eb = path_error(&ExtendedState::from_slice(&bwd), &path, &m);
            let fd = (ef - eb) / (2.0 * dt);
            for k in 0..2 {
                let denom = rate[k].abs().max(fd[k].abs()).max(1.0);
                assert!(((rate[k] - fd[k]) / denom).abs() < 1e-4);
            }
            // march the state forward a bit
            let mut v = state.to_vec();
            for k in 0..6 {
                v[k] += 1e-3 * rhs[k];
            }
            state = ExtendedState::from_slice(&v);
        }
    }

    #[test]
    fn tracking_error_clamps_the_clock() {
        let (path, m) = (CirclePath::benchmark(), model());
        let chi = TrackingState::new(JointState::at_rest(Vector2::new(1.0, -0.9)));
        let late = tracking_error(&chi, path.s_end + 3.0, &path, &m);
        let at_end = tracking_error(&chi, path.s_end, &path, &m);
        assert_eq!(late, at_end);

        let rate = tracking_error_rate(&chi, path.s_end + 3.0, &path, &m);
        assert!(rate.norm() < 1e-15);

        // on-reference at t = 0
        let y = crate::dynamics::inverse_kinematics(
            &path_point(0.0, &path),
            &m,
            crate::dynamics::ElbowBranch::Up,
        )
        .unwrap();
        let chi0 = TrackingState::new(JointState::at_rest(y));
        assert!(tracking_error(&chi0, 0.0, &path, &m).norm() < 1e-12);
    }

    #[test]
    fn timing_error_is_affine() {
        let path = CirclePath::benchmark();
        assert_eq!(timing_error(path.s_end, &path), 0.0);
        assert_relative_eq!(timing_error(0.0, &path), -2.0 * PI, epsilon = 1e-15);
        assert!(timing_error(1.0, &path) < timing_error(2.0, &path));
    }

    #[test]
    fn stage_cost_spot_values() {
        let (path, m) = (CirclePath::benchmark(), model());
        let weights = CostWeights::benchmark();

        // global minimum: on path, still, at the end, zero input
        let y_end = crate::dynamics::inverse_kinematics(
            &path_point(path.s_end, &path),
            &m,
            crate::dynamics::ElbowBranch::Up,
        )
        .unwrap();
        let goal = ExtendedState::new(
            JointState::at_rest(y_end),
            PathTimingState::new(path.s_end, 0.0),
        );
        let c = stage_cost_pf(&goal, &[0.0, 0.0, 0.0], &weights, &path, &m);
        assert!(c.abs() < 1e-18);

        // ½·1e4·(0.01)² = 0.5 for a pure 1 cm error: build a state whose FK is
        // offset from the reference by (0.01, 0) with everything else zero.
        let p_target = path_point(path.s_end, &path) + Vector2::new(0.01, 0.0);
        let y = crate::dynamics::inverse_kinematics(
            &p_target,
            &m,
            crate::dynamics::ElbowBranch::Up,
        )
        .unwrap();
        let xi = ExtendedState::new(
            JointState::at_rest(y),
            PathTimingState::new(path.s_end, 0.0),
        );
        let c = stage_cost_pf(&xi, &[0.0, 0.0, 0.0], &weights, &path, &m);
        assert_relative_eq!(c, 0.5, epsilon = 1e-9);

        // torque-only cost ½·1e-3·(900+900) = 0.9
        let c = stage_cost_pf(&goal, &[30.0, 30.0, 0.0], &weights, &path, &m);
        assert_relative_eq!(c, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn stage_cost_is_nonnegative_and_zero_only_at_the_goal() {
        let (path, m) = (CirclePath::benchmark(), model());
        let weights = CostWeights::benchmark();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let xi = ExtendedState::from_slice(&[
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.0..2.0),
            ]);
            let w = [
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-10.0..10.0),
            ];
            assert!(stage_cost_pf(&xi, &w, &weights, &path, &m) >= 0.0);

            let chi = TrackingState::new(xi.joint);
            let t = rng.gen_range(0.0..8.0);
            assert!(
                stage_cost_tt(
                    &chi,
                    &Vector2::new(w[0], w[1]),
                    t,
                    &weights,
                    &path,
                    &m
                ) >= 0.0
            );
        }
    }

    #[test]
    fn obstacle_violation_cases() {
        let o = Obstacle::new(Vector2::new(0.55, 0.75), 0.02).unwrap();
        // boundary
        assert_relative_eq!(
            obstacle_violation(&Vector2::new(0.55, 0.77), &o),
            0.0,
            epsilon = 1e-15
        );
        // center is maximally infeasible
        assert_relative_eq!(
            obstacle_violation(&o.center, &o),
            0.0004,
            epsilon = 1e-15
        );
        // outside
        assert!(obstacle_violation(&Vector2::new(0.0, 0.0), &o) < 0.0);
    }

    /// The squared form keeps the constraint smooth at the obstacle center.
    #[test]
    fn obstacle_gradient_is_smooth_everywhere() {
        let o = Obstacle::new(Vector2::new(0.4, 0.4), 0.04).unwrap();
        for p in [
            Vector2::new(0.4, 0.4), // center: unsquared norms would be non-differentiable here
            Vector2::new(0.41, 0.4),
            Vector2::new(0.1, 0.9),
        ] {
            let grad_analytic = -2.0 * (p - o.center);
            let g = crate::autodiff::fd::gradient(
                |q| obstacle_violation(&Vector2::new(q[0], q[1]), &o),
                p.as_slice(),
            );
            assert_relative_eq!(g[0], grad_analytic[0], epsilon = 1e-7);
            assert_relative_eq!(g[1], grad_analytic[1], epsilon = 1e-7);
        }
    }

    #[test]
    fn weight_validation() {
        assert!(CostWeights::new(
            Matrix2::identity(),
            Matrix2::identity(),
            Matrix2::identity(),
            1.0,
            1.0
        )
        .is_ok());
        assert!(CostWeights::new(
            Matrix2::new(1.0, 2.0, 2.0, 1.0), // indefinite
            Matrix2::identity(),
            Matrix2::identity(),
            1.0,
            1.0
        )
        .is_err());
        assert!(CostWeights::new(
            Matrix2::identity(),
            Matrix2::identity(),
            Matrix2::identity(),
            0.0,
            1.0
        )
        .is_err());
        assert!(CirclePath::new(Vector2::zeros(), -0.1, 0.0, 1.0).is_err());
        assert!(Obstacle::new(Vector2::zeros(), 0.0).is_err());
    }
}
