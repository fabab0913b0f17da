//! Receding-horizon closed loop.
//!
//! Each control instant transcribes the OCP at the measured state, solves it
//! (warm-started from the previous prediction shifted by one step), applies
//! the first input for one control period, and advances the plant: the joint
//! block by 10 fine RK4 substeps of the true dynamics, the path-timing block
//! exactly as a double integrator followed by clamping onto its bounds. A
//! solver breakdown holds the previous input and flags the log row, so runs
//! always complete.

use crate::dynamics::{
    forward_kinematics, gravity, inverse_kinematics, tracking_rhs, ElbowBranch, ExtendedState,
    JointState, ManipulatorModel, PathTimingState, TrackingState,
};
use crate::ipm::{solve, IpmOptions, SolveStatus};
use crate::path::{path_error, path_point, tracking_clock, tracking_error, TaskDefinition};
use crate::transcription::{
    extract_trajectory, pack_trajectory, rk4_step, transcribe, Controller, DecisionLayout,
    Integrator, TranscribeError, Trajectory, TranscriptionConfig,
};
use nalgebra::Vector2;
use std::time::Duration;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("horizon must be positive and no longer than the duration")]
    BadHorizon,
    #[error("delta_t must divide the horizon to within 1e-12")]
    NonIntegralHorizon,
    #[error(transparent)]
    Transcription(#[from] TranscribeError),
}

/// Everything needed to run one closed-loop experiment.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub controller: Controller,
    pub integrator: Integrator,
    /// Collocation degree; ignored by RK4.
    pub degree: usize,
    /// Prediction horizon T (s).
    pub horizon: f64,
    /// Control period (s).
    pub delta_t: f64,
    /// Closed-loop duration (s).
    pub duration: f64,
    pub initial_joint: JointState,
    pub model: ManipulatorModel,
    pub task: TaskDefinition,
    pub ipm: IpmOptions,
}

impl ScenarioConfig {
    /// Horizon steps `N = T / δ_t`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.delta_t).round() as usize
    }

    pub fn transcription(&self) -> TranscriptionConfig {
        match self.integrator {
            Integrator::Rk4 => TranscriptionConfig::rk4(self.delta_t, self.steps()),
            Integrator::Collocation => {
                TranscriptionConfig::collocation(self.delta_t, self.steps(), self.degree)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.horizon > 0.0) || self.duration < self.horizon {
            return Err(ScenarioError::BadHorizon);
        }
        let steps = self.horizon / self.delta_t;
        if (steps - steps.round()).abs() > 1e-12 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(ScenarioError::NonIntegralHorizon);
        }
        Ok(())
    }

    fn defaults(controller: Controller, integrator: Integrator) -> Self {
        ScenarioConfig {
            controller,
            integrator,
            degree: 3,
            horizon: 0.2,
            delta_t: 0.01,
            duration: 3.0,
            initial_joint: JointState::at_rest(Vector2::new(
                std::f64::consts::FRAC_PI_2,
                -std::f64::consts::FRAC_PI_2,
            )),
            model: ManipulatorModel::benchmark(),
            task: TaskDefinition::benchmark(),
            ipm: IpmOptions::default(),
        }
    }

    /// Approach scenario: the arm starts off the path (end effector at
    /// (0.5, 0.5)) with a 0.5π rad/s joint-speed limit and no obstacles.
    pub fn approach(controller: Controller, integrator: Integrator) -> Self {
        let mut scenario = Self::defaults(controller, integrator);
        scenario.duration = 3.0;
        scenario.task.joint_speed_limit = Some(0.5 * std::f64::consts::PI);
        scenario
    }

    /// Obstructed scenario: the arm starts on the path origin (elbow-up
    /// branch), speed limits removed, both benchmark obstacles present.
    ///
    /// The path-following run lasts 4 s, long enough to pass the first
    /// obstacle and stall at the second. The tracking controller's reference
    /// clock needs 2π s to finish the lap, so its run lasts 7.5 s.
    pub fn obstacles(controller: Controller, integrator: Integrator) -> Self {
        let mut scenario = Self::defaults(controller, integrator);
        scenario.task.obstacles = TaskDefinition::benchmark_obstacles();
        scenario.task.joint_speed_limit = None;
        scenario.duration = match controller {
            Controller::Mpfc => 4.0,
            Controller::Ttmpc => 7.5,
        };
        let origin = path_point(0.0, &scenario.task.path);
        let angles = inverse_kinematics(&origin, &scenario.model, ElbowBranch::Up)
            .expect("path origin is inside the workspace");
        scenario.initial_joint = JointState::at_rest(angles);
        scenario
    }
}

/// One logged control period.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub time: f64,
    pub joint: JointState,
    /// Plant path timing for the path-following controller; the clamped
    /// clock (unit rate) for the tracking controller.
    pub timing: PathTimingState,
    /// Torques applied over the period.
    pub torque: Vector2<f64>,
    /// Timing input applied (always 0 for the tracking controller).
    pub timing_input: f64,
    pub end_effector: Vector2<f64>,
    /// Norm of the controller's position error at this instant.
    pub error_norm: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: Duration,
    pub setup_time: Duration,
}

/// Full closed-loop record.
#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub scenario: ScenarioConfig,
    pub steps: Vec<StepRecord>,
}

impl ClosedLoopLog {
    pub fn final_step(&self) -> Option<&StepRecord> {
        self.steps.last()
    }
}

/// Result of a single receding-horizon solve.
#[derive(Debug, Clone)]
pub struct ControlStep {
    /// First input of the optimized sequence (`[u1, u2]` or `[u1, u2, v]`).
    pub applied: Vec<f64>,
    pub predicted: Trajectory,
    /// Raw decision vector, the warm start for the next instant.
    pub solution: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: Duration,
    pub setup_time: Duration,
}

fn cold_start_guess(
    state: &[f64],
    layout: &DecisionLayout,
    model: &ManipulatorModel,
    controller: Controller,
) -> Vec<f64> {
    let torque = gravity(&Vector2::new(state[0], state[1]), model);
    let torque = Vector2::new(
        torque[0].clamp(-model.u_max, model.u_max),
        torque[1].clamp(-model.u_max, model.u_max),
    );
    let mut input = vec![torque[0], torque[1]];
    if controller == Controller::Mpfc {
        input.push(0.0);
    }
    let states = vec![state.to_vec(); layout.steps + 1];
    let inputs = vec![input; layout.steps];
    pack_trajectory(&states, &inputs, layout)
}

fn shifted_guess(previous: &[f64], layout: &DecisionLayout) -> Vec<f64> {
    let old = extract_trajectory(previous, layout);
    let steps = layout.steps;
    let mut states: Vec<Vec<f64>> = (1..=steps).map(|k| old.states[k].clone()).collect();
    states.push(old.states[steps].clone());
    let mut inputs: Vec<Vec<f64>> = (1..steps).map(|k| old.inputs[k].clone()).collect();
    inputs.push(old.inputs[steps - 1].clone());
    pack_trajectory(&states, &inputs, layout)
}

/// Transcribes and solves the OCP at `(state, t_k)`; `warm` is the previous
/// decision vector, shifted by one step when present.
pub fn controller_step(
    state: &[f64],
    t_k: f64,
    scenario: &ScenarioConfig,
    warm: Option<&[f64]>,
) -> Result<ControlStep, TranscribeError> {
    let setup_start = std::time::Instant::now();
    let config = scenario.transcription();
    let (problem, layout) = transcribe(
        scenario.controller,
        &config,
        &scenario.model,
        &scenario.task,
        state,
        t_k,
    )?;
    let guess = match warm {
        Some(previous) => shifted_guess(previous, &layout),
        None => cold_start_guess(state, &layout, &scenario.model, scenario.controller),
    };
    let setup_time = setup_start.elapsed();

    let mut options = scenario.ipm;
    options.warm_start = warm.is_some();
    let result = solve(&problem, &guess, &options);

    let predicted = extract_trajectory(&result.solution, &layout);
    Ok(ControlStep {
        applied: predicted.inputs[0].clone(),
        predicted,
        solution: result.solution,
        status: result.status,
        iterations: result.stats.iterations,
        solve_time: result.stats.total,
        setup_time,
    })
}

/// Advances the joint block by `substeps` RK4 steps of the true dynamics.
pub fn simulate_plant_joint(
    joint: &JointState,
    torque: &Vector2<f64>,
    delta_t: f64,
    substeps: usize,
    model: &ManipulatorModel,
) -> JointState {
    let rhs = |z: &[f64], w: &[f64]| {
        tracking_rhs(
            &TrackingState::from_slice(z),
            &Vector2::new(w[0], w[1]),
            model,
        )
        .expect("benchmark inertia is invertible")
        .to_vec()
    };
    let mut z = TrackingState::new(*joint).to_vec().to_vec();
    let h = delta_t / substeps as f64;
    for _ in 0..substeps {
        z = rk4_step(rhs, &z, &[torque[0], torque[1]], h);
    }
    TrackingState::from_slice(&z).joint
}

/// One control period of the true plant: 10 RK4 substeps for the joints, the
/// timing block integrated exactly and clamped onto `[0, s_end] × [0, ṡ_max]`.
pub fn simulate_plant(
    state: &ExtendedState,
    input: &[f64; 3],
    delta_t: f64,
    model: &ManipulatorModel,
    task: &TaskDefinition,
) -> ExtendedState {
    let joint = simulate_plant_joint(
        &state.joint,
        &Vector2::new(input[0], input[1]),
        delta_t,
        10,
        model,
    );
    let v = input[2];
    let s = state.timing.parameter + state.timing.rate * delta_t + 0.5 * v * delta_t * delta_t;
    let rate = state.timing.rate + v * delta_t;
    let timing = PathTimingState::new(
        s.clamp(0.0, task.path.s_end),
        rate.clamp(0.0, task.s_dot_max),
    );
    ExtendedState::new(joint, timing)
}

/// Runs the scenario to completion; every step is logged even when an
/// individual solve fails.
pub fn run_closed_loop(scenario: &ScenarioConfig) -> Result<ClosedLoopLog, ScenarioError> {
    scenario.validate()?;
    let total_steps = (scenario.duration / scenario.delta_t).round() as usize;
    let model = scenario.model;
    let task = &scenario.task;

    let mut plant = ExtendedState::new(scenario.initial_joint, PathTimingState::at_origin());
    let mut warm: Option<Vec<f64>> = None;
    // fail-operational fallback before the first successful solve
    let mut held_input = {
        let g = gravity(&scenario.initial_joint.angles, &model);
        match scenario.controller {
            Controller::Mpfc => vec![g[0], g[1], 0.0],
            Controller::Ttmpc => vec![g[0], g[1]],
        }
    };

    let mut steps = Vec::with_capacity(total_steps);
    for k in 0..total_steps {
        let t = k as f64 * scenario.delta_t;
        let state_vec: Vec<f64> = match scenario.controller {
            Controller::Mpfc => plant.to_vec().to_vec(),
            Controller::Ttmpc => TrackingState::new(plant.joint).to_vec().to_vec(),
        };

        let (applied, status, iterations, solve_time, setup_time) =
            match controller_step(&state_vec, t, scenario, warm.as_deref()) {
                Ok(step) => {
                    let usable = matches!(
                        step.status,
                        SolveStatus::Optimal | SolveStatus::MaxIterations
                    );
                    if usable {
                        warm = Some(step.solution.clone());
                        (
                            step.applied,
                            step.status,
                            step.iterations,
                            step.solve_time,
                            step.setup_time,
                        )
                    } else {
                        warm = None;
                        (
                            held_input.clone(),
                            step.status,
                            step.iterations,
                            step.solve_time,
                            step.setup_time,
                        )
                    }
                }
                Err(_) => {
                    warm = None;
                    (
                        held_input.clone(),
                        SolveStatus::NumericalFailure,
                        0,
                        Duration::ZERO,
                        Duration::ZERO,
                    )
                }
            };

        let end_effector = forward_kinematics(&plant.joint.angles, &model);
        let (timing, error_norm) = match scenario.controller {
            Controller::Mpfc => (
                plant.timing,
                path_error(&plant, &task.path, &model).norm(),
            ),
            Controller::Ttmpc => {
                let clock = tracking_clock(t, &task.path);
                let rate = if t < task.path.s_end { 1.0 } else { 0.0 };
                (
                    PathTimingState::new(clock, rate),
                    tracking_error(&TrackingState::new(plant.joint), t, &task.path, &model)
                        .norm(),
                )
            }
        };
        steps.push(StepRecord {
            time: t,
            joint: plant.joint,
            timing,
            torque: Vector2::new(applied[0], applied[1]),
            timing_input: if applied.len() > 2 { applied[2] } else { 0.0 },
            end_effector,
            error_norm,
            status,
            iterations,
            solve_time,
            setup_time,
        });

        let input3 = [
            applied[0],
            applied[1],
            if applied.len() > 2 { applied[2] } else { 0.0 },
        ];
        plant = simulate_plant(&plant, &input3, scenario.delta_t, &model, task);
        held_input = applied;
    }

    Ok(ClosedLoopLog {
        scenario: scenario.clone(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn model() -> ManipulatorModel {
        ManipulatorModel::benchmark()
    }

    #[test]
    fn plant_holds_equilibrium_under_gravity_compensation() {
        let m = model();
        let task = TaskDefinition::benchmark();
        let joint = JointState::at_rest(Vector2::new(0.3, -1.1));
        let g = gravity(&joint.angles, &m);
        let state = ExtendedState::new(joint, PathTimingState::at_origin());
        let next = simulate_plant(&state, &[g[0], g[1], 0.0], 0.01, &m, &task);
        assert!((next.joint.angles - joint.angles).norm() < 1e-10);
        assert!((next.joint.velocities - joint.velocities).norm() < 1e-10);
    }

    #[test]
    fn timing_block_integrates_exactly_and_clamps() {
        let m = model();
        let task = TaskDefinition::benchmark();
        let joint = JointState::at_rest(Vector2::new(PI / 2.0, 0.0));
        let state = ExtendedState::new(joint, PathTimingState::new(0.5, 1.0));
        let next = simulate_plant(&state, &[0.0, 0.0, 0.0], 0.01, &m, &task);
        assert_relative_eq!(next.timing.parameter, 0.51, epsilon = 1e-15);
        assert_relative_eq!(next.timing.rate, 1.0, epsilon = 1e-15);

        // rate clamps at the configured maximum
        let fast = ExtendedState::new(joint, PathTimingState::new(0.5, task.s_dot_max));
        let next = simulate_plant(&fast, &[0.0, 0.0, 5.0], 0.01, &m, &task);
        assert_eq!(next.timing.rate, task.s_dot_max);

        // parameter clamps at the path end
        let near_end = ExtendedState::new(
            joint,
            PathTimingState::new(task.path.s_end - 1e-4, task.s_dot_max),
        );
        let next = simulate_plant(&near_end, &[0.0, 0.0, 0.0], 0.01, &m, &task);
        assert_eq!(next.timing.parameter, task.path.s_end);
    }

    #[test]
    fn plant_substep_refinement_converges() {
        let m = model();
        let joint = JointState::new(Vector2::new(0.4, -0.9), Vector2::new(0.5, -0.2));
        let torque = Vector2::new(3.0, -2.0);
        let coarse = simulate_plant_joint(&joint, &torque, 0.01, 10, &m);
        let fine = simulate_plant_joint(&joint, &torque, 0.01, 100, &m);
        assert!((coarse.angles - fine.angles).norm() < 1e-9);
        assert!((coarse.velocities - fine.velocities).norm() < 1e-9);
    }

    #[test]
    fn zero_duration_scenario_gives_empty_log() {
        let mut scenario = ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4);
        scenario.duration = 0.0;
        // zero duration shorter than horizon: relax the validation inputs
        scenario.horizon = 0.0;
        assert!(run_closed_loop(&scenario).is_err());
        // a short but nonzero run logs one row per control period
        scenario.horizon = 0.05;
        scenario.duration = 0.05;
        let log = run_closed_loop(&scenario).unwrap();
        assert_eq!(log.steps.len(), 5);
        assert!(log
            .steps
            .windows(2)
            .all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn scenario_validation() {
        let mut scenario = ScenarioConfig::approach(Controller::Mpfc, Integrator::Rk4);
        assert!(scenario.validate().is_ok());
        scenario.horizon = 0.2071;
        assert!(matches!(
            scenario.validate(),
            Err(ScenarioError::NonIntegralHorizon)
        ));
        scenario.horizon = 5.0;
        assert!(matches!(scenario.validate(), Err(ScenarioError::BadHorizon)));
    }

    #[test]
    fn obstacle_scenario_starts_on_the_path_origin() {
        let scenario = ScenarioConfig::obstacles(Controller::Mpfc, Integrator::Rk4);
        let p = forward_kinematics(&scenario.initial_joint.angles, &scenario.model);
        let origin = path_point(0.0, &scenario.task.path);
        assert!((p - origin).norm() < 1e-12);
        assert!(scenario.initial_joint.angles[1] < 0.0); // elbow-up branch
        assert_eq!(scenario.duration, 4.0);
        let tt = ScenarioConfig::obstacles(Controller::Ttmpc, Integrator::Rk4);
        assert_eq!(tt.duration, 7.5);
    }
}
