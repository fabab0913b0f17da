//! Rigid-body dynamics of the planar two-link manipulator and the
//! path-timing double integrator.
//!
//! The manipulator is parameterized by the composite inertia terms
//! `a1, a2, a3` and gravity terms `g1, g2`; the equations of motion are
//! `M(y)·ẍ = u − C(y, x)·x − G(y)` with the matrices below. All operations
//! are pure functions and safe to call concurrently.

use crate::scalar::Scalar;
use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("inertia matrix is numerically singular (pivot {pivot:.3e})")]
    SingularInertia { pivot: f64 },
}

/// Validation failures for [`ManipulatorModel`].
#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelValidationError {
    #[error("parameter {name} = {value} violates {constraint}")]
    Parameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("inertia matrix loses positive definiteness at y2 = {y2}")]
    IndefiniteInertia { y2: f64 },
}

/// Composite dynamic parameters of the two-link arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManipulatorModel {
    /// Inertia composites (kg·m²).
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Gravity composites (N·m).
    pub g1: f64,
    pub g2: f64,
    /// Link lengths (m); used by the kinematics only.
    pub l1: f64,
    pub l2: f64,
    /// Symmetric torque bound (N·m).
    pub u_max: f64,
}

impl ManipulatorModel {
    /// Builds and validates a model.
    pub fn new(
        a1: f64,
        a2: f64,
        a3: f64,
        g1: f64,
        g2: f64,
        l1: f64,
        l2: f64,
        u_max: f64,
    ) -> Result<Self, ModelValidationError> {
        let model = ManipulatorModel {
            a1,
            a2,
            a3,
            g1,
            g2,
            l1,
            l2,
            u_max,
        };
        model.validate()?;
        Ok(model)
    }

    /// The benchmark arm: composite parameters from the reference system,
    /// 0.5 m links and 30 N·m torque limits.
    pub fn benchmark() -> Self {
        ManipulatorModel {
            a1: 0.5578,
            a2: 0.2263,
            a3: 0.0785,
            g1: 17.0694,
            g2: 4.3164,
            l1: 0.5,
            l2: 0.5,
            u_max: 30.0,
        }
    }

    fn validate(&self) -> Result<(), ModelValidationError> {
        let check = |name, value: f64, ok: bool, constraint| {
            if ok {
                Ok(())
            } else {
                Err(ModelValidationError::Parameter {
                    name,
                    value,
                    constraint,
                })
            }
        };
        check("a1", self.a1, self.a1 > 0.0, "a1 > 0")?;
        check("a3", self.a3, self.a3 > 0.0, "a3 > 0")?;
        check("a1", self.a1, self.a1 > self.a2, "a1 > a2")?;
        check("l1", self.l1, self.l1 > 0.0, "l1 > 0")?;
        check("l2", self.l2, self.l2 > 0.0, "l2 > 0")?;
        check("u_max", self.u_max, self.u_max > 0.0, "u_max > 0")?;
        // Positive definiteness over a full revolution of the elbow, via both
        // leading principal minors.
        for k in 0..=360 {
            let y2 = 2.0 * std::f64::consts::PI * k as f64 / 360.0;
            let m = inertia(&Vector2::new(0.0, y2), self);
            if m[(0, 0)] <= 0.0 || m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] <= 0.0 {
                return Err(ModelValidationError::IndefiniteInertia { y2 });
            }
        }
        Ok(())
    }

    /// Maximum end-effector reach.
    pub fn reach(&self) -> f64 {
        self.l1 + self.l2
    }
}

/// Joint angles and velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub angles: Vector2<f64>,
    pub velocities: Vector2<f64>,
}

impl JointState {
    pub fn new(angles: Vector2<f64>, velocities: Vector2<f64>) -> Self {
        JointState {
            angles,
            velocities,
        }
    }

    pub fn at_rest(angles: Vector2<f64>) -> Self {
        JointState::new(angles, Vector2::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.angles.iter().chain(self.velocities.iter()).all(|v| v.is_finite())
    }
}

/// Path parameter and its rate; the timing subsystem is a double integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTimingState {
    pub parameter: f64,
    pub rate: f64,
}

impl PathTimingState {
    pub fn new(parameter: f64, rate: f64) -> Self {
        PathTimingState { parameter, rate }
    }

    pub fn at_origin() -> Self {
        PathTimingState::new(0.0, 0.0)
    }
}

/// State of the path-following controller: joints plus path timing
/// (6 entries: `[angles, velocities, parameter, rate]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedState {
    pub joint: JointState,
    pub timing: PathTimingState,
}

impl ExtendedState {
    pub const DIM: usize = 6;

    pub fn new(joint: JointState, timing: PathTimingState) -> Self {
        ExtendedState { joint, timing }
    }

    pub fn to_vec(&self) -> [f64; 6] {
        [
            self.joint.angles[0],
            self.joint.angles[1],
            self.joint.velocities[0],
            self.joint.velocities[1],
            self.timing.parameter,
            self.timing.rate,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::DIM);
        ExtendedState {
            joint: JointState::new(Vector2::new(v[0], v[1]), Vector2::new(v[2], v[3])),
            timing: PathTimingState::new(v[4], v[5]),
        }
    }
}

/// State of the trajectory-tracking controller: joints only
/// (4 entries: `[angles, velocities]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingState {
    pub joint: JointState,
}

impl TrackingState {
    pub const DIM: usize = 4;

    pub fn new(joint: JointState) -> Self {
        TrackingState { joint }
    }

    pub fn to_vec(&self) -> [f64; 4] {
        [
            self.joint.angles[0],
            self.joint.angles[1],
            self.joint.velocities[0],
            self.joint.velocities[1],
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::DIM);
        TrackingState {
            joint: JointState::new(Vector2::new(v[0], v[1]), Vector2::new(v[2], v[3])),
        }
    }
}

// ---------------------------------------------------------------------------
// Scalar-generic kernels. The same expressions back the f64 API below and the
// derivative sweeps in the transcription atoms.
// ---------------------------------------------------------------------------

/// Entries (m11, m12, m22) of the symmetric inertia matrix.
pub(crate) fn inertia_elems<S: Scalar>(y2: S, m: &ManipulatorModel) -> (S, S, S) {
    let c2 = y2.cos();
    let m11 = c2.scale(m.a2) + S::constant(m.a1);
    let m12 = c2.scale(0.5 * m.a2) + S::constant(m.a3);
    (m11, m12, S::constant(m.a3))
}

/// Coriolis matrix rows. The off-diagonal (1,2) entry carries the same `a2`
/// factor as the rest; this is required for `Ṁ − 2C` skew-symmetry.
pub(crate) fn coriolis_elems<S: Scalar>(
    y2: S,
    x1: S,
    x2: S,
    m: &ManipulatorModel,
) -> (S, S, S) {
    let s2 = y2.sin().scale(0.5 * m.a2);
    let c11 = -(s2 * x2);
    let c12 = -(s2 * (x1 + x2));
    let c21 = s2 * x1;
    (c11, c12, c21)
}

pub(crate) fn gravity_elems<S: Scalar>(y1: S, y2: S, m: &ManipulatorModel) -> (S, S) {
    let shoulder = y1.cos().scale(m.g1);
    let both = (y1 + y2).cos().scale(m.g2);
    (shoulder + both, both)
}

/// Joint accelerations `M⁻¹(u − Cx − G)` via a direct 2×2 solve.
pub(crate) fn joint_accel_elems<S: Scalar>(
    y: [S; 2],
    x: [S; 2],
    u: [S; 2],
    m: &ManipulatorModel,
) -> [S; 2] {
    let (m11, m12, m22) = inertia_elems(y[1], m);
    let (c11, c12, c21) = coriolis_elems(y[1], x[0], x[1], m);
    let (g1, g2) = gravity_elems(y[0], y[1], m);
    let r1 = u[0] - (c11 * x[0] + c12 * x[1]) - g1;
    let r2 = u[1] - (c21 * x[0]) - g2;
    let det = m11 * m22 - m12 * m12;
    [(m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det]
}

pub(crate) fn fk_elems<S: Scalar>(y: [S; 2], m: &ManipulatorModel) -> [S; 2] {
    let elbow = y[0] + y[1];
    [
        y[0].cos().scale(m.l1) + elbow.cos().scale(m.l2),
        y[0].sin().scale(m.l1) + elbow.sin().scale(m.l2),
    ]
}

/// Row-major entries of the end-effector Jacobian.
pub(crate) fn fk_jacobian_elems<S: Scalar>(y: [S; 2], m: &ManipulatorModel) -> [[S; 2]; 2] {
    let elbow = y[0] + y[1];
    let s1 = y[0].sin().scale(m.l1);
    let c1 = y[0].cos().scale(m.l1);
    let s12 = elbow.sin().scale(m.l2);
    let c12 = elbow.cos().scale(m.l2);
    [[-(s1 + s12), -s12], [c1 + c12, c12]]
}

/// Stacked dynamics of the extended state: `[ẏ; ẋ; ṡ; s̈]` with input
/// `w = [u1, u2, v]`.
pub(crate) fn extended_rhs_elems<S: Scalar>(
    xi: &[S],
    w: &[S],
    m: &ManipulatorModel,
    out: &mut [S],
) {
    debug_assert_eq!(xi.len(), 6);
    debug_assert_eq!(w.len(), 3);
    let accel = joint_accel_elems([xi[0], xi[1]], [xi[2], xi[3]], [w[0], w[1]], m);
    out[0] = xi[2];
    out[1] = xi[3];
    out[2] = accel[0];
    out[3] = accel[1];
    out[4] = xi[5];
    out[5] = w[2];
}

/// Joint-only dynamics `[ẏ; ẋ]` with torque input.
pub(crate) fn tracking_rhs_elems<S: Scalar>(
    chi: &[S],
    u: &[S],
    m: &ManipulatorModel,
    out: &mut [S],
) {
    debug_assert_eq!(chi.len(), 4);
    debug_assert_eq!(u.len(), 2);
    let accel = joint_accel_elems([chi[0], chi[1]], [chi[2], chi[3]], [u[0], u[1]], m);
    out[0] = chi[2];
    out[1] = chi[3];
    out[2] = accel[0];
    out[3] = accel[1];
}

// ---------------------------------------------------------------------------
// f64 API
// ---------------------------------------------------------------------------

/// Inertia matrix `M(y)`.
pub fn inertia(angles: &Vector2<f64>, model: &ManipulatorModel) -> Matrix2<f64> {
    let (m11, m12, m22) = inertia_elems(angles[1], model);
    Matrix2::new(m11, m12, m12, m22)
}

/// Coriolis matrix `C(y, x)`.
pub fn coriolis(
    angles: &Vector2<f64>,
    velocities: &Vector2<f64>,
    model: &ManipulatorModel,
) -> Matrix2<f64> {
    let (c11, c12, c21) = coriolis_elems(angles[1], velocities[0], velocities[1], model);
    Matrix2::new(c11, c12, c21, 0.0)
}

/// Gravity torque vector `G(y)`.
pub fn gravity(angles: &Vector2<f64>, model: &ManipulatorModel) -> Vector2<f64> {
    let (g1, g2) = gravity_elems(angles[0], angles[1], model);
    Vector2::new(g1, g2)
}

/// Joint accelerations `M(y)⁻¹ (u − C(y,x)x − G(y))`.
///
/// Solves the 2×2 system directly; fails if the determinant pivot falls
/// below `1e-12`, which signals corrupted model parameters.
pub fn joint_accel(
    angles: &Vector2<f64>,
    velocities: &Vector2<f64>,
    torque: &Vector2<f64>,
    model: &ManipulatorModel,
) -> Result<Vector2<f64>, DynamicsError> {
    let (m11, m12, m22) = inertia_elems(angles[1], model);
    let det = m11 * m22 - m12 * m12;
    if det.abs() < 1e-12 {
        return Err(DynamicsError::SingularInertia { pivot: det });
    }
    let a = joint_accel_elems(
        [angles[0], angles[1]],
        [velocities[0], velocities[1]],
        [torque[0], torque[1]],
        model,
    );
    Ok(Vector2::new(a[0], a[1]))
}

/// End-effector position of the planar elbow arm.
pub fn forward_kinematics(angles: &Vector2<f64>, model: &ManipulatorModel) -> Vector2<f64> {
    let p = fk_elems([angles[0], angles[1]], model);
    Vector2::new(p[0], p[1])
}

/// Analytic Jacobian of [`forward_kinematics`] with respect to the angles.
pub fn fk_jacobian(angles: &Vector2<f64>, model: &ManipulatorModel) -> Matrix2<f64> {
    let j = fk_jacobian_elems([angles[0], angles[1]], model);
    Matrix2::new(j[0][0], j[0][1], j[1][0], j[1][1])
}

/// Time derivative of the extended state under input `w = [u1, u2, v]`.
pub fn extended_rhs(
    state: &ExtendedState,
    input: &[f64; 3],
    model: &ManipulatorModel,
) -> Result<[f64; 6], DynamicsError> {
    // Reuse the checked 2x2 solve so singular parameters surface as errors.
    let accel = joint_accel(
        &state.joint.angles,
        &state.joint.velocities,
        &Vector2::new(input[0], input[1]),
        model,
    )?;
    Ok([
        state.joint.velocities[0],
        state.joint.velocities[1],
        accel[0],
        accel[1],
        state.timing.rate,
        input[2],
    ])
}

/// Time derivative of the tracking state under a torque input.
pub fn tracking_rhs(
    state: &TrackingState,
    torque: &Vector2<f64>,
    model: &ManipulatorModel,
) -> Result<[f64; 4], DynamicsError> {
    let accel = joint_accel(&state.joint.angles, &state.joint.velocities, torque, model)?;
    Ok([
        state.joint.velocities[0],
        state.joint.velocities[1],
        accel[0],
        accel[1],
    ])
}

/// Branch selector for the planar two-link inverse kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElbowBranch {
    Up,
    Down,
}

/// Joint angles reaching `target`, or `None` when out of reach.
///
/// The elbow-up branch takes the negative elbow angle.
pub fn inverse_kinematics(
    target: &Vector2<f64>,
    model: &ManipulatorModel,
    branch: ElbowBranch,
) -> Option<Vector2<f64>> {
    let (l1, l2) = (model.l1, model.l2);
    let r2 = target.norm_squared();
    let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let q2 = match branch {
        ElbowBranch::Up => -c2.acos(),
        ElbowBranch::Down => c2.acos(),
    };
    let q1 = target[1].atan2(target[0]) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    Some(Vector2::new(q1, q2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model() -> ManipulatorModel {
        ManipulatorModel::benchmark()
    }

    #[test]
    fn inertia_spot_values() {
        let m = model();
        let i0 = inertia(&Vector2::new(0.0, 0.0), &m);
        assert_relative_eq!(i0[(0, 0)], 0.7841, epsilon = 1e-12);
        assert_relative_eq!(i0[(0, 1)], 0.19165, epsilon = 1e-12);
        assert_relative_eq!(i0[(1, 0)], 0.19165, epsilon = 1e-12);
        assert_relative_eq!(i0[(1, 1)], 0.0785, epsilon = 1e-12);

        let ihalf = inertia(&Vector2::new(0.3, PI / 2.0), &m);
        assert_relative_eq!(ihalf[(0, 0)], 0.5578, epsilon = 1e-12);
        assert_relative_eq!(ihalf[(0, 1)], 0.0785, epsilon = 1e-12);
        assert_relative_eq!(ihalf[(1, 1)], 0.0785, epsilon = 1e-12);

        let ipi = inertia(&Vector2::new(0.0, PI), &m);
        assert_relative_eq!(ipi[(0, 0)], 0.3315, epsilon = 1e-12);
        assert_relative_eq!(ipi[(0, 1)], -0.03465, epsilon = 1e-12);
        let det = ipi[(0, 0)] * ipi[(1, 1)] - ipi[(0, 1)] * ipi[(1, 0)];
        assert_relative_eq!(det, 0.0248221275, epsilon = 1e-9);
        assert!(det > 0.0);
    }

    #[test]
    fn inertia_positive_definite_over_elbow_revolution() {
        let m = model();
        for k in 0..1000 {
            let y2 = 2.0 * PI * k as f64 / 1000.0;
            let mat = inertia(&Vector2::new(0.0, y2), &m);
            // eigenvalues of the symmetric 2x2
            let tr = mat[(0, 0)] + mat[(1, 1)];
            let det = mat[(0, 0)] * mat[(1, 1)] - mat[(0, 1)] * mat[(1, 0)];
            let disc = (tr * tr - 4.0 * det).sqrt();
            let lam_min = 0.5 * (tr - disc);
            assert!(lam_min > 1e-3, "λmin = {lam_min} at y2 = {y2}");
        }
    }

    #[test]
    fn coriolis_spot_values() {
        let m = model();
        let zero_vel = coriolis(&Vector2::new(0.3, 1.1), &Vector2::zeros(), &m);
        assert_eq!(zero_vel, Matrix2::zeros());

        let straight = coriolis(&Vector2::new(0.7, 0.0), &Vector2::new(2.0, -3.0), &m);
        assert_eq!(straight, Matrix2::zeros());

        let c = coriolis(&Vector2::new(0.0, PI / 2.0), &Vector2::new(1.0, 1.0), &m);
        assert_relative_eq!(c[(0, 0)], -0.11315, epsilon = 1e-12);
        assert_relative_eq!(c[(0, 1)], -0.2263, epsilon = 1e-12);
        assert_relative_eq!(c[(1, 0)], 0.11315, epsilon = 1e-12);
        assert_relative_eq!(c[(1, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gravity_spot_values() {
        let m = model();
        let g0 = gravity(&Vector2::new(0.0, 0.0), &m);
        assert_relative_eq!(g0[0], 21.3858, epsilon = 1e-12);
        assert_relative_eq!(g0[1], 4.3164, epsilon = 1e-12);

        let gup = gravity(&Vector2::new(PI / 2.0, 0.0), &m);
        assert_relative_eq!(gup[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(gup[1], 0.0, epsilon = 1e-12);

        let gdown = gravity(&Vector2::new(PI, 0.0), &m);
        assert_relative_eq!(gdown[0], -21.3858, epsilon = 1e-12);
        assert_relative_eq!(gdown[1], -4.3164, epsilon = 1e-12);
    }

    /// `zᵀ(Ṁ − 2C)z = 0`: pins the corrected Coriolis off-diagonal factor.
    #[test]
    fn skew_symmetry_of_mdot_minus_two_coriolis() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let y2: f64 = rng.gen_range(-PI..PI);
            let x1: f64 = rng.gen_range(-3.0..3.0);
            let x2: f64 = rng.gen_range(-3.0..3.0);
            let z1: f64 = rng.gen_range(-1.0..1.0);
            let z2: f64 = rng.gen_range(-1.0..1.0);
            // dM/dy2 · x2 by hand
            let dm11 = -m.a2 * y2.sin() * x2;
            let dm12 = -0.5 * m.a2 * y2.sin() * x2;
            let c = coriolis(&Vector2::new(0.0, y2), &Vector2::new(x1, x2), &m);
            let s11 = dm11 - 2.0 * c[(0, 0)];
            let s12 = dm12 - 2.0 * c[(0, 1)];
            let s21 = dm12 - 2.0 * c[(1, 0)];
            let s22 = -2.0 * c[(1, 1)];
            let quad = z1 * z1 * s11 + z1 * z2 * (s12 + s21) + z2 * z2 * s22;
            assert!(quad.abs() < 1e-10, "quadratic form = {quad}");
        }
    }

    #[test]
    fn joint_accel_equilibria() {
        let m = model();
        let up = joint_accel(
            &Vector2::new(PI / 2.0, 0.0),
            &Vector2::zeros(),
            &Vector2::zeros(),
            &m,
        )
        .unwrap();
        assert_relative_eq!(up.norm(), 0.0, epsilon = 1e-12);

        let compensated = joint_accel(
            &Vector2::zeros(),
            &Vector2::zeros(),
            &gravity(&Vector2::zeros(), &m),
            &m,
        )
        .unwrap();
        assert_relative_eq!(compensated.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_accel_matches_independent_solve() {
        let m = model();
        let a = joint_accel(&Vector2::zeros(), &Vector2::zeros(), &Vector2::zeros(), &m).unwrap();
        // Solve [[0.7841, 0.19165], [0.19165, 0.0785]] a = [-21.3858, -4.3164]
        // with nalgebra's LU as the independent route.
        let mat = Matrix2::new(0.7841, 0.19165, 0.19165, 0.0785);
        let rhs = Vector2::new(-21.3858, -4.3164);
        let expected = mat.lu().solve(&rhs).unwrap();
        assert_relative_eq!(a[0], expected[0], epsilon = 1e-10);
        assert_relative_eq!(a[1], expected[1], epsilon = 1e-10);
    }

    #[test]
    fn singular_model_is_reported() {
        let mut m = model();
        m.a1 = 0.2263; // forces det(M) through zero somewhere
        m.a3 = 1e-9;
        let r = joint_accel(
            &Vector2::new(0.0, PI / 2.0),
            &Vector2::zeros(),
            &Vector2::zeros(),
            &m,
        );
        // a3 tiny makes det = m11*a3 - m12^2 negative but tiny only for
        // specific configurations; check the error path with an exact zero.
        m.a2 = 0.0;
        m.a1 = 1e-13;
        m.a3 = 1e-13;
        let r2 = joint_accel(&Vector2::zeros(), &Vector2::zeros(), &Vector2::zeros(), &m);
        assert!(r.is_ok() || matches!(r, Err(DynamicsError::SingularInertia { .. })));
        assert!(matches!(r2, Err(DynamicsError::SingularInertia { .. })));
    }

    #[test]
    fn forward_kinematics_spot_values() {
        let m = model();
        let straight = forward_kinematics(&Vector2::new(0.0, 0.0), &m);
        assert_relative_eq!(straight[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(straight[1], 0.0, epsilon = 1e-12);

        let bent = forward_kinematics(&Vector2::new(PI / 2.0, -PI / 2.0), &m);
        assert_relative_eq!(bent[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(bent[1], 0.5, epsilon = 1e-12);

        let up = forward_kinematics(&Vector2::new(PI / 2.0, 0.0), &m);
        assert_relative_eq!(up[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(up[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fk_jacobian_spot_values_and_finite_differences() {
        let m = model();
        let j0 = fk_jacobian(&Vector2::new(0.0, 0.0), &m);
        assert_relative_eq!(j0[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(j0[(0, 1)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(j0[(1, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(j0[(1, 1)], 0.5, epsilon = 1e-12);

        let jup = fk_jacobian(&Vector2::new(PI / 2.0, 0.0), &m);
        assert_relative_eq!(jup[(0, 0)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(jup[(0, 1)], -0.5, epsilon = 1e-12);
        assert_relative_eq!(jup[(1, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(jup[(1, 1)], 0.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y = Vector2::new(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
            let jac = fk_jacobian(&y, &m);
            let fdj = crate::autodiff::fd::jacobian(
                |q| {
                    let p = forward_kinematics(&Vector2::new(q[0], q[1]), &m);
                    vec![p[0], p[1]]
                },
                y.as_slice(),
                2,
            );
            for r in 0..2 {
                for c in 0..2 {
                    let err = (jac[(r, c)] - fdj[r][c]).abs()
                        / jac[(r, c)].abs().max(fdj[r][c].abs()).max(1.0);
                    assert!(err < 1e-7, "rel err {err} at ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn extended_rhs_structure() {
        let m = model();
        let eq = ExtendedState::new(
            JointState::at_rest(Vector2::new(PI / 2.0, 0.0)),
            PathTimingState::at_origin(),
        );
        let dz = extended_rhs(&eq, &[0.0, 0.0, 0.0], &m).unwrap();
        assert!(dz.iter().all(|v| v.abs() < 1e-12));

        let drifting = ExtendedState::new(
            JointState::at_rest(Vector2::new(PI / 2.0, 0.0)),
            PathTimingState::new(0.3, 1.0),
        );
        let dz = extended_rhs(&drifting, &[0.0, 0.0, 0.0], &m).unwrap();
        assert_eq!(dz[4], 1.0);
        assert!(dz[5].abs() < 1e-15);
        assert!(dz[..4].iter().all(|v| v.abs() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let xi = ExtendedState::from_slice(
                &(0..6).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>(),
            );
            let w = [
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-5.0..5.0),
            ];
            let dz = extended_rhs(&xi, &w, &m).unwrap();
            assert_eq!(dz[0], xi.joint.velocities[0]);
            assert_eq!(dz[1], xi.joint.velocities[1]);
        }
    }

    #[test]
    fn tracking_rhs_agrees_with_extended_rhs() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let joint = JointState::new(
                Vector2::new(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI)),
                Vector2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            );
            let u = Vector2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let chi = TrackingState::new(joint);
            let xi = ExtendedState::new(joint, PathTimingState::new(0.2, 0.7));
            let d_chi = tracking_rhs(&chi, &u, &m).unwrap();
            let d_xi = extended_rhs(&xi, &[u[0], u[1], 0.0], &m).unwrap();
            for k in 0..4 {
                assert_relative_eq!(d_chi[k], d_xi[k], epsilon = 1e-15);
            }
        }

        // gravity compensation holds the straight-out pose
        let chi = TrackingState::new(JointState::at_rest(Vector2::zeros()));
        let d = tracking_rhs(&chi, &gravity(&Vector2::zeros(), &m), &m).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn inverse_kinematics_round_trip() {
        let m = model();
        let target = Vector2::new(0.75, 0.55);
        for branch in [ElbowBranch::Up, ElbowBranch::Down] {
            let y = inverse_kinematics(&target, &m, branch).unwrap();
            let p = forward_kinematics(&y, &m);
            assert_relative_eq!(p[0], target[0], epsilon = 1e-12);
            assert_relative_eq!(p[1], target[1], epsilon = 1e-12);
        }
        let up = inverse_kinematics(&target, &m, ElbowBranch::Up).unwrap();
        assert!(up[1] < 0.0);
        assert!(inverse_kinematics(&Vector2::new(1.5, 0.0), &m, ElbowBranch::Up).is_none());
    }

    #[test]
    fn model_validation_rejects_bad_parameters() {
        assert!(ManipulatorModel::new(0.1, 0.2263, 0.0785, 17.0, 4.3, 0.5, 0.5, 30.0).is_err());
        assert!(ManipulatorModel::new(0.5578, 0.2263, 0.0785, 17.0, 4.3, 0.5, 0.5, -1.0).is_err());
        assert!(ManipulatorModel::new(0.5578, 0.2263, 0.0785, 17.0, 4.3, 0.5, 0.5, 30.0).is_ok());
    }
}
