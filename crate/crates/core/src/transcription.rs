//! Direct transcription of the two optimal control problems into sparse NLPs.
//!
//! Both controllers use the simultaneous approach: states and inputs at every
//! step are decision variables, and the integrator (one RK4 step or Legendre
//! collocation over each interval) enters as equality constraints. The running
//! cost is approximated with the rectangle rule; the final node contributes a
//! state-only term so the terminal path and timing errors stay penalized
//! without inventing an input beyond the horizon.

use crate::autodiff::{
    merge_patterns, DifferentiableFunction, FunctionBuilder, FunctionError, SmoothMap,
};
use crate::dynamics::{
    extended_rhs_elems, tracking_rhs_elems, ExtendedState, ManipulatorModel, TrackingState,
};
use crate::path::{
    obstacle_violation_elems, path_point, path_tangent, stage_cost_pf_elems, stage_cost_tt_elems,
    tracking_clock, CirclePath, CostWeights, Obstacle, TaskDefinition,
};
use crate::scalar::Scalar;
use crate::dynamics::fk_elems;
use std::ops::Range;
use thiserror::Error;

/// Largest state dimension handled by the stack-allocated integrator buffers.
const MAX_STATE: usize = 6;

/// Which receding-horizon controller an NLP belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    /// Model predictive path following: path progress is a decision variable.
    Mpfc,
    /// Trajectory tracking: the reference advances with the wall clock.
    Ttmpc,
}

impl Controller {
    pub fn state_dim(self) -> usize {
        match self {
            Controller::Mpfc => ExtendedState::DIM,
            Controller::Ttmpc => TrackingState::DIM,
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Controller::Mpfc => 3,
            Controller::Ttmpc => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Controller::Mpfc => "mpfc",
            Controller::Ttmpc => "ttmpc",
        }
    }
}

/// Integration scheme used between consecutive time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    Collocation,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::Collocation => "collocation",
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TranscribeError {
    #[error("delta_t must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon must contain at least one step")]
    EmptyHorizon,
    #[error("collocation degree {0} outside supported range 1..=5")]
    UnsupportedDegree(usize),
    #[error("initial state has {got} entries, controller expects {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error(
        "initial state entry {index} = {value} violates bound [{lower}, {upper}] by more than 1e-6"
    )]
    InfeasibleInitialState {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
}

/// Discretization parameters shared by both integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranscriptionConfig {
    pub integrator: Integrator,
    /// Interval length (s); also the control period.
    pub delta_t: f64,
    /// Number of intervals in the horizon (`T = steps · delta_t`).
    pub steps: usize,
    /// Collocation degree (interior nodes per interval); ignored by RK4.
    pub degree: usize,
}

impl TranscriptionConfig {
    pub fn rk4(delta_t: f64, steps: usize) -> Self {
        TranscriptionConfig {
            integrator: Integrator::Rk4,
            delta_t,
            steps,
            degree: 0,
        }
    }

    pub fn collocation(delta_t: f64, steps: usize, degree: usize) -> Self {
        TranscriptionConfig {
            integrator: Integrator::Collocation,
            delta_t,
            steps,
            degree,
        }
    }

    fn validate(&self) -> Result<(), TranscribeError> {
        if !(self.delta_t > 0.0) {
            return Err(TranscribeError::NonPositiveStep(self.delta_t));
        }
        if self.steps == 0 {
            return Err(TranscribeError::EmptyHorizon);
        }
        if self.integrator == Integrator::Collocation && !(1..=5).contains(&self.degree) {
            return Err(TranscribeError::UnsupportedDegree(self.degree));
        }
        Ok(())
    }
}

/// Index map from (step, node, input) to ranges of the decision vector.
///
/// RK4 layout: `[z_0, w_0, z_1, w_1, …, z_{N-1}, w_{N-1}, z_N]`.
/// Collocation layout per step: the `degree + 1` interval nodes, then the
/// input; a single extra base node closes the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionLayout {
    pub nx: usize,
    pub nu: usize,
    pub steps: usize,
    /// 0 for RK4; the collocation degree otherwise.
    pub degree: usize,
}

impl DecisionLayout {
    fn new(controller: Controller, config: &TranscriptionConfig) -> Self {
        DecisionLayout {
            nx: controller.state_dim(),
            nu: controller.input_dim(),
            steps: config.steps,
            degree: match config.integrator {
                Integrator::Rk4 => 0,
                Integrator::Collocation => config.degree,
            },
        }
    }

    fn stride(&self) -> usize {
        self.nx * (self.degree + 1) + self.nu
    }

    /// Total number of decision variables.
    pub fn n(&self) -> usize {
        self.steps * self.stride() + self.nx
    }

    /// Base state node `k`, for `k ∈ 0..=steps`.
    pub fn state(&self, k: usize) -> Range<usize> {
        debug_assert!(k <= self.steps);
        let start = k * self.stride();
        start..start + self.nx
    }

    /// Interval node `j` of step `k`; `node(k, 0) == state(k)`.
    pub fn node(&self, k: usize, j: usize) -> Range<usize> {
        debug_assert!(k < self.steps && j <= self.degree);
        let start = k * self.stride() + j * self.nx;
        start..start + self.nx
    }

    /// Input applied over step `k`, for `k ∈ 0..steps`.
    pub fn input(&self, k: usize) -> Range<usize> {
        debug_assert!(k < self.steps);
        let start = k * self.stride() + (self.degree + 1) * self.nx;
        start..start + self.nu
    }
}

/// Time-indexed result of unpacking a decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Base node states, `steps + 1` of them.
    pub states: Vec<Vec<f64>>,
    /// Piecewise-constant inputs, `steps` of them.
    pub inputs: Vec<Vec<f64>>,
}

/// Reads base-node states and inputs out of a decision vector.
pub fn extract_trajectory(q: &[f64], layout: &DecisionLayout) -> Trajectory {
    assert_eq!(q.len(), layout.n(), "decision vector length mismatch");
    let states = (0..=layout.steps)
        .map(|k| q[layout.state(k)].to_vec())
        .collect();
    let inputs = (0..layout.steps)
        .map(|k| q[layout.input(k)].to_vec())
        .collect();
    Trajectory { states, inputs }
}

/// Packs node states and inputs into a decision vector; collocation inner
/// nodes are filled with the step's base state.
pub fn pack_trajectory(states: &[Vec<f64>], inputs: &[Vec<f64>], layout: &DecisionLayout) -> Vec<f64> {
    assert_eq!(states.len(), layout.steps + 1);
    assert_eq!(inputs.len(), layout.steps);
    let mut q = vec![0.0; layout.n()];
    for (k, state) in states.iter().enumerate() {
        q[layout.state(k)].copy_from_slice(state);
        if k < layout.steps {
            for j in 1..=layout.degree {
                q[layout.node(k, j)].copy_from_slice(state);
            }
            q[layout.input(k)].copy_from_slice(&inputs[k]);
        }
    }
    q
}

// ---------------------------------------------------------------------------
// Integration primitives
// ---------------------------------------------------------------------------

/// One classical RK4 step of `ż = f(z, w)` with the input held constant.
pub fn rk4_step<F>(rhs: F, state: &[f64], input: &[f64], delta_t: f64) -> Vec<f64>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let n = state.len();
    let k1 = rhs(state, input);
    let at = |base: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        (0..n).map(|i| base[i] + h * k[i]).collect()
    };
    let k2 = rhs(&at(state, &k1, delta_t / 2.0), input);
    let k3 = rhs(&at(state, &k2, delta_t / 2.0), input);
    let k4 = rhs(&at(state, &k3, delta_t), input);
    (0..n)
        .map(|i| state[i] + delta_t / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn controller_rhs<S: Scalar>(
    controller: Controller,
    model: &ManipulatorModel,
    z: &[S],
    w: &[S],
    out: &mut [S],
) {
    match controller {
        Controller::Mpfc => extended_rhs_elems(z, w, model, out),
        Controller::Ttmpc => tracking_rhs_elems(z, w, model, out),
    }
}

/// Scalar-generic RK4 step of the controller dynamics.
fn rk4_elems<S: Scalar>(
    controller: Controller,
    model: &ManipulatorModel,
    z: &[S],
    w: &[S],
    delta_t: f64,
    out: &mut [S],
) {
    let nx = z.len();
    let mut k1 = [S::zero(); MAX_STATE];
    let mut k2 = [S::zero(); MAX_STATE];
    let mut k3 = [S::zero(); MAX_STATE];
    let mut k4 = [S::zero(); MAX_STATE];
    let mut zt = [S::zero(); MAX_STATE];

    controller_rhs(controller, model, z, w, &mut k1[..nx]);
    for i in 0..nx {
        zt[i] = z[i] + k1[i].scale(delta_t / 2.0);
    }
    controller_rhs(controller, model, &zt[..nx], w, &mut k2[..nx]);
    for i in 0..nx {
        zt[i] = z[i] + k2[i].scale(delta_t / 2.0);
    }
    controller_rhs(controller, model, &zt[..nx], w, &mut k3[..nx]);
    for i in 0..nx {
        zt[i] = z[i] + k3[i].scale(delta_t);
    }
    controller_rhs(controller, model, &zt[..nx], w, &mut k4[..nx]);
    for i in 0..nx {
        out[i] = z[i]
            + (k1[i] + k2[i].scale(2.0) + k3[i].scale(2.0) + k4[i]).scale(delta_t / 6.0);
    }
}

/// Gauss–Legendre points shifted to `(0, 1)`, ascending. Closed forms of the
/// Legendre roots for degrees 1–5.
pub fn legendre_nodes(degree: usize) -> Result<Vec<f64>, TranscribeError> {
    let nodes: &[f64] = match degree {
        1 => &[0.5],
        2 => &[0.211_324_865_405_187_1, 0.788_675_134_594_812_9],
        3 => &[0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7],
        4 => &[
            0.069_431_844_202_973_71,
            0.330_009_478_207_571_9,
            0.669_990_521_792_428_1,
            0.930_568_155_797_026_3,
        ],
        5 => &[
            0.046_910_077_030_668_01,
            0.230_765_344_947_158_45,
            0.5,
            0.769_234_655_052_841_55,
            0.953_089_922_969_332,
        ],
        d => return Err(TranscribeError::UnsupportedDegree(d)),
    };
    Ok(nodes.to_vec())
}

/// Precomputed Lagrange interpolation data over the nodes `{0, θ_1, …, θ_d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeCoefficients {
    /// Interpolation nodes including the interval start.
    pub nodes: Vec<f64>,
    /// `L_j(1)` for `j = 0..=d`: weights mapping node values to the interval end.
    pub end_weights: Vec<f64>,
    /// `diff_matrix[j][r] = L̇_r(θ_j)` for `j, r = 0..=d`.
    pub diff_matrix: Vec<Vec<f64>>,
}

/// Exact interpolation coefficients for the collocation scheme.
pub fn lagrange_coefficients(degree: usize) -> Result<LagrangeCoefficients, TranscribeError> {
    let mut nodes = vec![0.0];
    nodes.extend(legendre_nodes(degree)?);
    let m = nodes.len();

    let lagrange_at = |j: usize, tau: f64| -> f64 {
        (0..m)
            .filter(|&r| r != j)
            .map(|r| (tau - nodes[r]) / (nodes[j] - nodes[r]))
            .product()
    };
    let end_weights: Vec<f64> = (0..m).map(|j| lagrange_at(j, 1.0)).collect();

    let mut diff_matrix = vec![vec![0.0; m]; m];
    for j in 0..m {
        for r in 0..m {
            diff_matrix[j][r] = if r == j {
                (0..m)
                    .filter(|&k| k != j)
                    .map(|k| 1.0 / (nodes[j] - nodes[k]))
                    .sum()
            } else {
                let product: f64 = (0..m)
                    .filter(|&k| k != r && k != j)
                    .map(|k| (nodes[j] - nodes[k]) / (nodes[r] - nodes[k]))
                    .product();
                product / (nodes[r] - nodes[j])
            };
        }
    }

    Ok(LagrangeCoefficients {
        nodes,
        end_weights,
        diff_matrix,
    })
}

// ---------------------------------------------------------------------------
// Transcription atoms
// ---------------------------------------------------------------------------

struct StepMap {
    model: ManipulatorModel,
    controller: Controller,
    delta_t: f64,
}

impl SmoothMap for StepMap {
    fn n_in(&self) -> usize {
        self.controller.state_dim() + self.controller.input_dim()
    }
    fn n_out(&self) -> usize {
        self.controller.state_dim()
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let nx = self.controller.state_dim();
        rk4_elems(
            self.controller,
            &self.model,
            &x[..nx],
            &x[nx..],
            self.delta_t,
            out,
        );
    }
}

struct RhsMap {
    model: ManipulatorModel,
    controller: Controller,
}

impl SmoothMap for RhsMap {
    fn n_in(&self) -> usize {
        self.controller.state_dim() + self.controller.input_dim()
    }
    fn n_out(&self) -> usize {
        self.controller.state_dim()
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let nx = self.controller.state_dim();
        controller_rhs(self.controller, &self.model, &x[..nx], &x[nx..], out);
    }
}

struct PathStageCost {
    model: ManipulatorModel,
    path: CirclePath,
    weights: CostWeights,
    with_input: bool,
}

impl SmoothMap for PathStageCost {
    fn n_in(&self) -> usize {
        if self.with_input {
            9
        } else {
            6
        }
    }
    fn n_out(&self) -> usize {
        1
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let input = if self.with_input { Some(&x[6..]) } else { None };
        out[0] = stage_cost_pf_elems(&x[..6], input, &self.weights, &self.path, &self.model);
    }
}

struct TrackStageCost {
    model: ManipulatorModel,
    weights: CostWeights,
    reference: [f64; 2],
    reference_rate: [f64; 2],
    with_input: bool,
}

impl SmoothMap for TrackStageCost {
    fn n_in(&self) -> usize {
        if self.with_input {
            6
        } else {
            4
        }
    }
    fn n_out(&self) -> usize {
        1
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let torque = if self.with_input { Some(&x[4..]) } else { None };
        out[0] = stage_cost_tt_elems(
            &x[..4],
            torque,
            self.reference,
            self.reference_rate,
            &self.weights,
            &self.model,
        );
    }
}

struct ObstacleMap {
    model: ManipulatorModel,
    obstacle: Obstacle,
}

impl SmoothMap for ObstacleMap {
    fn n_in(&self) -> usize {
        2
    }
    fn n_out(&self) -> usize {
        1
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let p = fk_elems([x[0], x[1]], &self.model);
        out[0] = obstacle_violation_elems(p, &self.obstacle);
    }
}

// ---------------------------------------------------------------------------
// The NLP container
// ---------------------------------------------------------------------------

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NlpError {
    #[error("bound arrays must have length n = {n}")]
    BoundLength { n: usize },
    #[error("lower bound exceeds upper bound at index {index}")]
    InvertedBounds { index: usize },
    #[error("callback dimensions do not match declared sizes")]
    CallbackDimensions,
}

/// A finite-dimensional NLP
/// `min φ(q)  s.t.  f_e(q) = 0,  h_e(q) ≤ 0,  lower ≤ q ≤ upper`.
pub struct NlpProblem {
    pub n: usize,
    pub m_eq: usize,
    pub m_ineq: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: DifferentiableFunction,
    pub eq: DifferentiableFunction,
    pub ineq: DifferentiableFunction,
    /// Union lower-triangle pattern of the Lagrangian Hessian and the slot
    /// maps of the three member functions into it.
    lag_pattern: Vec<(usize, usize)>,
    lag_maps: Vec<Vec<usize>>,
}

impl NlpProblem {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        cost: DifferentiableFunction,
        eq: DifferentiableFunction,
        ineq: DifferentiableFunction,
    ) -> Result<Self, NlpError> {
        let n = cost.n_in();
        if lower.len() != n || upper.len() != n {
            return Err(NlpError::BoundLength { n });
        }
        if let Some(index) = (0..n).find(|&i| lower[i] > upper[i]) {
            return Err(NlpError::InvertedBounds { index });
        }
        if cost.n_out() != 1 || eq.n_in() != n || ineq.n_in() != n {
            return Err(NlpError::CallbackDimensions);
        }
        let (lag_pattern, lag_maps) = merge_patterns(&[
            cost.hessian_pattern(),
            eq.hessian_pattern(),
            ineq.hessian_pattern(),
        ]);
        Ok(NlpProblem {
            n,
            m_eq: eq.n_out(),
            m_ineq: ineq.n_out(),
            lower,
            upper,
            cost,
            eq,
            ineq,
            lag_pattern,
            lag_maps,
        })
    }

    pub fn cost_value(&self, q: &[f64]) -> Result<f64, FunctionError> {
        Ok(self.cost.eval_vec(q)?[0])
    }

    pub fn cost_gradient(&self, q: &[f64], grad: &mut [f64]) -> Result<(), FunctionError> {
        self.cost.weighted_gradient(q, &[1.0], grad)
    }

    /// Lower-triangle sparsity of `∇²(σφ + λ_eᵀf_e + λ_hᵀh_e)`.
    pub fn lagrangian_hessian_pattern(&self) -> &[(usize, usize)] {
        &self.lag_pattern
    }

    /// Values aligned with [`Self::lagrangian_hessian_pattern`].
    pub fn lagrangian_hessian(
        &self,
        q: &[f64],
        sigma: f64,
        lambda_eq: &[f64],
        lambda_ineq: &[f64],
        values: &mut [f64],
    ) -> Result<(), FunctionError> {
        assert_eq!(values.len(), self.lag_pattern.len());
        values.fill(0.0);
        let mut scratch = vec![0.0; self.cost.hessian_pattern().len()];
        self.cost.add_weighted_hessian(q, &[1.0], sigma, &mut scratch)?;
        for (k, &m) in self.lag_maps[0].iter().enumerate() {
            values[m] += scratch[k];
        }
        let mut scratch = vec![0.0; self.eq.hessian_pattern().len()];
        self.eq.add_weighted_hessian(q, lambda_eq, 1.0, &mut scratch)?;
        for (k, &m) in self.lag_maps[1].iter().enumerate() {
            values[m] += scratch[k];
        }
        if self.m_ineq > 0 {
            let mut scratch = vec![0.0; self.ineq.hessian_pattern().len()];
            self.ineq
                .add_weighted_hessian(q, lambda_ineq, 1.0, &mut scratch)?;
            for (k, &m) in self.lag_maps[2].iter().enumerate() {
                values[m] += scratch[k];
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// transcribe
// ---------------------------------------------------------------------------

/// Converts the continuous-time OCP at time `t_k` with measured state
/// `x_init` into an [`NlpProblem`] plus the layout of its decision vector.
///
/// The initial state is clamped onto the variable bounds when it violates
/// them by at most `1e-6` (floating-point drift from the plant integration);
/// larger violations are an error.
pub fn transcribe(
    controller: Controller,
    config: &TranscriptionConfig,
    model: &ManipulatorModel,
    task: &TaskDefinition,
    x_init: &[f64],
    t_k: f64,
) -> Result<(NlpProblem, DecisionLayout), TranscribeError> {
    config.validate()?;
    let layout = DecisionLayout::new(controller, config);
    let (nx, nu, steps) = (layout.nx, layout.nu, layout.steps);
    if x_init.len() != nx {
        return Err(TranscribeError::StateDimension {
            expected: nx,
            got: x_init.len(),
        });
    }
    let n = layout.n();
    let delta_t = config.delta_t;

    // Per-entry state bounds shared by every node.
    let mut state_lower = vec![f64::NEG_INFINITY; nx];
    let mut state_upper = vec![f64::INFINITY; nx];
    if let Some(limit) = task.joint_speed_limit {
        for i in 2..4 {
            state_lower[i] = -limit;
            state_upper[i] = limit;
        }
    }
    if controller == Controller::Mpfc {
        state_lower[4] = 0.0;
        state_upper[4] = task.path.s_end;
        state_lower[5] = 0.0;
        state_upper[5] = task.s_dot_max;
    }
    let mut input_lower = vec![-model.u_max; nu];
    let mut input_upper = vec![model.u_max; nu];
    if controller == Controller::Mpfc {
        input_lower[2] = -task.v_max;
        input_upper[2] = task.v_max;
    }

    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let apply_state_bounds = |range: Range<usize>, lower: &mut [f64], upper: &mut [f64]| {
        for (i, g) in range.enumerate() {
            lower[g] = state_lower[i];
            upper[g] = state_upper[i];
        }
    };
    for k in 0..steps {
        // box bounds at every node, including collocation interior nodes
        for j in 0..=layout.degree {
            apply_state_bounds(layout.node(k, j), &mut lower, &mut upper);
        }
        for (i, g) in layout.input(k).enumerate() {
            lower[g] = input_lower[i];
            upper[g] = input_upper[i];
        }
    }
    apply_state_bounds(layout.state(steps), &mut lower, &mut upper);

    // Clamp the measured state onto the node-0 bounds.
    let mut x0 = x_init.to_vec();
    for i in 0..nx {
        let clamped = x0[i].clamp(state_lower[i], state_upper[i]);
        if (clamped - x0[i]).abs() > 1e-6 {
            return Err(TranscribeError::InfeasibleInitialState {
                index: i,
                value: x0[i],
                lower: state_lower[i],
                upper: state_upper[i],
            });
        }
        x0[i] = clamped;
    }

    // ---- cost -------------------------------------------------------------
    let mut cost = FunctionBuilder::new(n, 1);
    for k in 0..=steps {
        let with_input = k < steps;
        let mut inputs: Vec<usize> = layout.state(k).collect();
        if with_input {
            inputs.extend(layout.input(k));
        }
        match controller {
            Controller::Mpfc => {
                cost.atom(
                    PathStageCost {
                        model: *model,
                        path: task.path,
                        weights: task.weights,
                        with_input,
                    },
                    inputs,
                    0,
                    delta_t,
                );
            }
            Controller::Ttmpc => {
                let t_stage = t_k + k as f64 * delta_t;
                let clock = tracking_clock(t_stage, &task.path);
                let clock_rate = if t_stage < task.path.s_end { 1.0 } else { 0.0 };
                let reference = path_point(clock, &task.path);
                let reference_rate = path_tangent(clock, &task.path) * clock_rate;
                cost.atom(
                    TrackStageCost {
                        model: *model,
                        weights: task.weights,
                        reference: [reference[0], reference[1]],
                        reference_rate: [reference_rate[0], reference_rate[1]],
                        with_input,
                    },
                    inputs,
                    0,
                    delta_t,
                );
            }
        }
    }

    // ---- equality constraints ----------------------------------------------
    let m_eq = match config.integrator {
        Integrator::Rk4 => nx * (steps + 1),
        Integrator::Collocation => nx * (1 + steps * (1 + config.degree)),
    };
    let mut eq = FunctionBuilder::new(n, m_eq);
    // initial-condition pin
    for (i, g) in layout.state(0).enumerate() {
        eq.linear_term(i, g, 1.0);
        eq.constant_term(i, -x0[i]);
    }
    match config.integrator {
        Integrator::Rk4 => {
            for k in 0..steps {
                let row = nx * (k + 1);
                for (i, g) in layout.state(k + 1).enumerate() {
                    eq.linear_term(row + i, g, 1.0);
                }
                let mut inputs: Vec<usize> = layout.state(k).collect();
                inputs.extend(layout.input(k));
                eq.atom(
                    StepMap {
                        model: *model,
                        controller,
                        delta_t,
                    },
                    inputs,
                    row,
                    -1.0,
                );
            }
        }
        Integrator::Collocation => {
            let degree = config.degree;
            let coeffs = lagrange_coefficients(degree)?;
            let mut row = nx;
            for k in 0..steps {
                // continuity: next base node interpolates the interval end
                for i in 0..nx {
                    eq.linear_term(row + i, layout.state(k + 1).start + i, 1.0);
                    for (r, &w) in coeffs.end_weights.iter().enumerate() {
                        eq.linear_term(row + i, layout.node(k, r).start + i, -w);
                    }
                }
                row += nx;
                // dynamics matched at every interior node
                for j in 1..=degree {
                    let mut inputs: Vec<usize> = layout.node(k, j).collect();
                    inputs.extend(layout.input(k));
                    eq.atom(
                        RhsMap {
                            model: *model,
                            controller,
                        },
                        inputs,
                        row,
                        1.0,
                    );
                    for r in 0..=degree {
                        let c = -coeffs.diff_matrix[j][r] / delta_t;
                        for i in 0..nx {
                            eq.linear_term(row + i, layout.node(k, r).start + i, c);
                        }
                    }
                    row += nx;
                }
            }
            debug_assert_eq!(row, m_eq);
        }
    }

    // ---- inequality constraints (obstacles at base nodes) -------------------
    // The initial node is excluded: its state is pinned by the measured
    // plant, so an active obstacle row there would have an unbounded
    // multiplier (the constraint cannot be moved by any decision).
    let m_ineq = task.obstacles.len() * steps;
    let mut ineq = FunctionBuilder::new(n, m_ineq);
    let mut row = 0;
    for k in 1..=steps {
        let angles = layout.state(k).start;
        for obstacle in &task.obstacles {
            ineq.atom(
                ObstacleMap {
                    model: *model,
                    obstacle: *obstacle,
                },
                vec![angles, angles + 1],
                row,
                1.0,
            );
            row += 1;
        }
    }

    let problem = NlpProblem::new(lower, upper, cost.build(), eq.build(), ineq.build())
        .expect("transcription produces consistent dimensions");
    Ok((problem, layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::gravity;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector, Vector2};
    use std::f64::consts::PI;

    fn model() -> ManipulatorModel {
        ManipulatorModel::benchmark()
    }

    fn task_with_obstacles() -> TaskDefinition {
        let mut task = TaskDefinition::benchmark();
        task.obstacles = TaskDefinition::benchmark_obstacles();
        task
    }

    #[test]
    fn rk4_fixed_point_and_scalar_exponential() {
        let z = rk4_step(|_, _| vec![0.0, 0.0], &[1.0, -2.0], &[], 0.3);
        assert_eq!(z, vec![1.0, -2.0]);

        let z = rk4_step(|z, _| vec![z[0]], &[1.0], &[], 0.1);
        assert_relative_eq!(z[0], 1.1051708333333332, epsilon = 1e-15);
    }

    #[test]
    fn rk4_self_convergence_is_fourth_order() {
        let m = model();
        let rhs = |z: &[f64], w: &[f64]| {
            let state = TrackingState::from_slice(z);
            crate::dynamics::tracking_rhs(&state, &Vector2::new(w[0], w[1]), &m)
                .unwrap()
                .to_vec()
        };
        let z0 = [0.4, -0.6, 0.2, 0.1];
        let torque = [3.0, -1.0];
        let horizon = 0.08;
        let integrate = |dt: f64| {
            let n = (horizon / dt).round() as usize;
            let mut z = z0.to_vec();
            for _ in 0..n {
                z = rk4_step(rhs, &z, &torque, dt);
            }
            z
        };
        let reference = integrate(0.0005);
        let err = |z: &[f64]| -> f64 {
            z.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let e1 = err(&integrate(0.02));
        let e2 = err(&integrate(0.01));
        let ratio = e1 / e2;
        assert!(
            (8.0..=32.0).contains(&ratio),
            "halving the step gave error ratio {ratio}, expected ~16"
        );
    }

    #[test]
    fn legendre_nodes_spot_values() {
        assert_eq!(legendre_nodes(1).unwrap(), vec![0.5]);
        let d2 = legendre_nodes(2).unwrap();
        assert_relative_eq!(d2[0], 0.5 - 1.0 / (2.0 * 3.0_f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(d2[1], 0.5 + 1.0 / (2.0 * 3.0_f64.sqrt()), epsilon = 1e-15);
        let d3 = legendre_nodes(3).unwrap();
        assert_relative_eq!(d3[0], 0.11270166537925831, epsilon = 1e-14);
        assert_relative_eq!(d3[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(d3[2], 0.8872983346207417, epsilon = 1e-14);
        assert!(legendre_nodes(6).is_err());
        assert!(legendre_nodes(0).is_err());
    }

    /// Every tabulated degree must consist of roots of the shifted Legendre
    /// polynomial, evaluated independently by the three-term recurrence.
    #[test]
    fn legendre_nodes_are_roots_of_shifted_legendre() {
        for degree in 1..=5 {
            let nodes = legendre_nodes(degree).unwrap();
            assert_eq!(nodes.len(), degree);
            assert!(nodes.windows(2).all(|w| w[0] < w[1]));
            for &theta in &nodes {
                assert!(theta > 0.0 && theta < 1.0);
                // standard Legendre P_d at x = 2θ − 1
                let x = 2.0 * theta - 1.0;
                let mut p0 = 1.0;
                let mut p1 = x;
                for k in 1..degree {
                    let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let value = if degree == 1 { p1 } else { p1 };
                assert!(value.abs() < 1e-13, "P_{degree}({theta}) = {value}");
            }
        }
    }

    #[test]
    fn lagrange_coefficients_properties() {
        let d1 = lagrange_coefficients(1).unwrap();
        assert_relative_eq!(d1.end_weights[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(d1.end_weights[1], 2.0, epsilon = 1e-14);

        for degree in 1..=5 {
            let c = lagrange_coefficients(degree).unwrap();
            // partition of unity at the interval end
            assert_relative_eq!(c.end_weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            // derivative of a constant vanishes
            for row in &c.diff_matrix {
                assert_relative_eq!(row.iter().sum::<f64>(), 0.0, epsilon = 1e-11);
            }
            // interpolation property via the defining product
            let m = c.nodes.len();
            for j in 0..m {
                for i in 0..m {
                    let l: f64 = (0..m)
                        .filter(|&r| r != j)
                        .map(|r| (c.nodes[i] - c.nodes[r]) / (c.nodes[j] - c.nodes[r]))
                        .product();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(l, expected, epsilon = 1e-12);
                }
            }
        }
    }

    /// Degree-3 collocation integrates the double integrator exactly over an
    /// interval: polynomial dynamics of degree ≤ 2d−1 are exact for Gauss
    /// points.
    #[test]
    fn collocation_solves_linear_system_exactly() {
        let degree = 3;
        let c = lagrange_coefficients(degree).unwrap();
        let delta = 0.37;
        let a = [[0.0, 1.0], [0.0, 0.0]]; // ż = Az, double integrator
        let z0 = [0.8, -1.3];

        // Unknowns: node values z_1..z_3 (z_0 = z0). Collocation equations:
        // A z_j = (1/δ) Σ_r D[j][r] z_r  for j = 1..3.
        let nun = 2 * degree;
        let mut mat = DMatrix::<f64>::zeros(nun, nun);
        let mut rhs = DVector::<f64>::zeros(nun);
        for j in 1..=degree {
            for i in 0..2 {
                let row = 2 * (j - 1) + i;
                // A z_j term
                for l in 0..2 {
                    mat[(row, 2 * (j - 1) + l)] += a[i][l];
                }
                // -(1/δ) D[j][r] z_r terms
                for r in 1..=degree {
                    mat[(row, 2 * (r - 1) + i)] -= c.diff_matrix[j][r] / delta;
                }
                rhs[row] = c.diff_matrix[j][0] / delta * z0[i];
            }
        }
        let sol = mat.lu().solve(&rhs).expect("collocation system solvable");

        // interval end via the end weights
        let mut z_end = [c.end_weights[0] * z0[0], c.end_weights[0] * z0[1]];
        for r in 1..=degree {
            for i in 0..2 {
                z_end[i] += c.end_weights[r] * sol[2 * (r - 1) + i];
            }
        }
        let exact = [z0[0] + delta * z0[1], z0[1]];
        assert!((z_end[0] - exact[0]).abs() < 1e-10);
        assert!((z_end[1] - exact[1]).abs() < 1e-10);
    }

    #[test]
    fn transcription_sizes_match_counting() {
        let m = model();
        let task = task_with_obstacles();
        let x0 = [1.0, -0.7, 0.0, 0.0, 0.0, 0.0];

        let (nlp, layout) = transcribe(
            Controller::Mpfc,
            &TranscriptionConfig::rk4(0.01, 20),
            &m,
            &task,
            &x0,
            0.0,
        )
        .unwrap();
        assert_eq!(nlp.n, 186);
        assert_eq!(nlp.m_eq, 126);
        assert_eq!(layout.n(), 186);

        let (nlp, _) = transcribe(
            Controller::Ttmpc,
            &TranscriptionConfig::rk4(0.01, 20),
            &m,
            &task,
            &x0[..4],
            0.0,
        )
        .unwrap();
        assert_eq!(nlp.n, 124);
        assert_eq!(nlp.m_eq, 84);

        let (nlp, _) = transcribe(
            Controller::Mpfc,
            &TranscriptionConfig::collocation(0.01, 20, 3),
            &m,
            &task,
            &x0,
            0.0,
        )
        .unwrap();
        assert_eq!(nlp.n, 546);
        assert_eq!(nlp.m_eq, 486);
        assert_eq!(nlp.m_ineq, 2 * 20);
    }

    #[test]
    fn pack_extract_round_trip() {
        for config in [
            TranscriptionConfig::rk4(0.01, 4),
            TranscriptionConfig::collocation(0.01, 4, 3),
        ] {
            let layout = DecisionLayout::new(Controller::Mpfc, &config);
            let states: Vec<Vec<f64>> = (0..=4)
                .map(|k| (0..6).map(|i| (k * 10 + i) as f64).collect())
                .collect();
            let inputs: Vec<Vec<f64>> = (0..4)
                .map(|k| (0..3).map(|i| -((k * 10 + i) as f64)).collect())
                .collect();
            let q = pack_trajectory(&states, &inputs, &layout);
            let traj = extract_trajectory(&q, &layout);
            assert_eq!(traj.states, states);
            assert_eq!(traj.inputs, inputs);
        }
    }

    /// Open-loop RK4 simulation packed into the decision vector satisfies the
    /// RK4 equality constraints to round-off.
    #[test]
    fn rk4_feasibility_oracle() {
        let m = model();
        let task = TaskDefinition::benchmark();
        let steps = 15;
        let config = TranscriptionConfig::rk4(0.01, steps);
        let x0 = [1.0, -0.7, 0.1, -0.2, 0.3, 0.5];
        let (nlp, layout) = transcribe(Controller::Mpfc, &config, &m, &task, &x0, 0.0).unwrap();

        let rhs = |z: &[f64], w: &[f64]| {
            let state = ExtendedState::from_slice(z);
            crate::dynamics::extended_rhs(&state, &[w[0], w[1], w[2]], &m)
                .unwrap()
                .to_vec()
        };
        let mut states = vec![x0.to_vec()];
        let mut inputs = Vec::new();
        for k in 0..steps {
            let w = vec![2.0 * (k as f64 * 0.7).sin(), -1.0, 0.4];
            let next = rk4_step(rhs, states.last().unwrap(), &w, config.delta_t);
            states.push(next);
            inputs.push(w);
        }
        let q = pack_trajectory(&states, &inputs, &layout);
        let residual = nlp.eq.eval_vec(&q).unwrap();
        let max = residual.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        assert!(max < 1e-12, "max equality residual {max}");
    }

    /// Zero cost exactly on the encoding of the solved task.
    #[test]
    fn cost_vanishes_at_the_goal_encoding() {
        let m = model();
        let task = TaskDefinition::benchmark();
        let y_goal = crate::dynamics::inverse_kinematics(
            &path_point(task.path.s_end, &task.path),
            &m,
            crate::dynamics::ElbowBranch::Up,
        )
        .unwrap();
        let goal = [y_goal[0], y_goal[1], 0.0, 0.0, task.path.s_end, 0.0];
        for config in [
            TranscriptionConfig::rk4(0.01, 8),
            TranscriptionConfig::collocation(0.01, 8, 3),
        ] {
            let (nlp, layout) = transcribe(Controller::Mpfc, &config, &m, &task, &goal, 0.0).unwrap();
            let states = vec![goal.to_vec(); config.steps + 1];
            let inputs = vec![vec![0.0; 3]; config.steps];
            let q = pack_trajectory(&states, &inputs, &layout);
            assert!(nlp.cost_value(&q).unwrap().abs() < 1e-18);
        }
    }

    #[test]
    fn initial_state_clamping() {
        let m = model();
        let task = TaskDefinition::benchmark();
        let config = TranscriptionConfig::rk4(0.01, 3);
        // tiny negative rate from plant drift gets clamped silently
        let drifted = [1.0, -0.7, 0.0, 0.0, 0.0, -1e-9];
        let (nlp, layout) =
            transcribe(Controller::Mpfc, &config, &m, &task, &drifted, 0.0).unwrap();
        let q = pack_trajectory(
            &vec![vec![1.0, -0.7, 0.0, 0.0, 0.0, 0.0]; 4],
            &vec![vec![0.0; 3]; 3],
            &layout,
        );
        let residual = nlp.eq.eval_vec(&q).unwrap();
        assert!(residual[..6].iter().all(|r| r.abs() < 1e-12));

        // beyond tolerance is rejected
        let bad = [1.0, -0.7, 0.0, 0.0, 0.0, -1e-3];
        assert!(matches!(
            transcribe(Controller::Mpfc, &config, &m, &task, &bad, 0.0),
            Err(TranscribeError::InfeasibleInitialState { .. })
        ));
    }

    #[test]
    fn torque_and_timing_bounds_are_boxed() {
        let m = model();
        let mut task = TaskDefinition::benchmark();
        task.joint_speed_limit = Some(0.5 * PI);
        let (nlp, layout) = transcribe(
            Controller::Mpfc,
            &TranscriptionConfig::collocation(0.01, 2, 2),
            &m,
            &task,
            &[1.0, -0.7, 0.0, 0.0, 0.0, 0.0],
            0.0,
        )
        .unwrap();
        for k in 0..2 {
            for j in 0..=2 {
                let node = layout.node(k, j);
                assert_eq!(nlp.lower[node.start + 4], 0.0);
                assert_eq!(nlp.upper[node.start + 4], task.path.s_end);
                assert_eq!(nlp.lower[node.start + 5], 0.0);
                assert_eq!(nlp.upper[node.start + 5], task.s_dot_max);
                assert_eq!(nlp.lower[node.start + 2], -0.5 * PI);
            }
            let input = layout.input(k);
            assert_eq!(nlp.lower[input.start], -30.0);
            assert_eq!(nlp.upper[input.start + 1], 30.0);
            assert_eq!(nlp.lower[input.start + 2], -task.v_max);
            assert_eq!(nlp.upper[input.start + 2], task.v_max);
        }
    }

    /// The tracking cost at a gravity-compensated rest state on the frozen
    /// reference is the pure torque penalty.
    #[test]
    fn tracking_cost_at_frozen_reference() {
        let m = model();
        let task = TaskDefinition::benchmark();
        let y = crate::dynamics::inverse_kinematics(
            &path_point(task.path.s_end, &task.path),
            &m,
            crate::dynamics::ElbowBranch::Up,
        )
        .unwrap();
        let x0 = [y[0], y[1], 0.0, 0.0];
        let config = TranscriptionConfig::rk4(0.01, 3);
        // start the horizon after the clock has clamped
        let (nlp, layout) = transcribe(
            Controller::Ttmpc,
            &config,
            &m,
            &task,
            &x0,
            task.path.s_end + 1.0,
        )
        .unwrap();
        let u = gravity(&Vector2::new(y[0], y[1]), &m);
        let states = vec![x0.to_vec(); 4];
        let inputs = vec![vec![u[0], u[1]]; 3];
        let q = pack_trajectory(&states, &inputs, &layout);
        let expected: f64 = 3.0 * config.delta_t * 0.5 * 1e-3 * (u[0] * u[0] + u[1] * u[1]);
        assert_relative_eq!(nlp.cost_value(&q).unwrap(), expected, epsilon = 1e-12);
    }
}
