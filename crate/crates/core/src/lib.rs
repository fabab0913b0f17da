//! Nonlinear model-predictive control toolkit for a planar two-link
//! manipulator.
//!
//! The crate contrasts two receding-horizon controllers over the same plant:
//! a path-following controller that treats progress along a geometric path as
//! a decision variable, and a trajectory-tracking controller whose reference
//! advances with the wall clock. Both optimal control problems are transcribed
//! with either a fixed-step RK4 scheme or Legendre collocation and solved by
//! the crate's primal-dual interior-point method with exact forward-mode
//! derivatives.
//!
//! Modules:
//! - [`dynamics`]: manipulator model, rigid-body terms, kinematics.
//! - [`path`]: reference geometry, error signals, stage costs, obstacles.
//! - [`scalar`] / [`autodiff`]: forward-mode derivative engine.
//! - [`transcription`]: OCP → NLP conversion for both integrators.
//! - [`ipm`]: the interior-point NLP solver.
//! - [`runtime`]: closed-loop simulation with warm-started resolves.
//! - [`analytic`]: small NLPs with known solutions, used for self-tests.

pub mod analytic;
pub mod autodiff;
pub mod dynamics;
pub mod ipm;
pub mod path;
pub mod runtime;
pub mod scalar;
pub mod transcription;

pub use autodiff::{hessian_of_lagrangian, DifferentiableFunction, FunctionBuilder, SmoothMap};
pub use dynamics::{
    ElbowBranch, ExtendedState, JointState, ManipulatorModel, PathTimingState, TrackingState,
};
pub use ipm::{IpmOptions, IpmResult, SolveStatus};
pub use path::{CirclePath, CostWeights, Obstacle, TaskDefinition};
pub use runtime::{ClosedLoopLog, ScenarioConfig};
pub use scalar::{Dual, HyperDual, Scalar};
pub use transcription::{
    Controller, DecisionLayout, Integrator, NlpProblem, TranscriptionConfig,
};
