//! Small NLPs with hand-derived solutions.
//!
//! These back the solver's correctness tests and the CLI self-test: an
//! equality-constrained QP, a box QP, an inequality QP, Rosenbrock under an
//! active box bound, and a scalar smoothed-logistic problem. Each records the
//! analytic optimizer it must reproduce.

use crate::autodiff::FunctionBuilder;
use crate::scalar::Scalar;
use crate::transcription::NlpProblem;
use crate::SmoothMap;

/// An NLP together with its known solution.
pub struct AnalyticNlp {
    pub name: &'static str,
    pub problem: NlpProblem,
    pub start: Vec<f64>,
    pub solution: Vec<f64>,
}

/// Dense quadratic `½ xᵀHx + gᵀx` over all inputs.
struct QuadraticMap {
    h: Vec<f64>,
    g: Vec<f64>,
    n: usize,
}

impl SmoothMap for QuadraticMap {
    fn n_in(&self) -> usize {
        self.n
    }
    fn n_out(&self) -> usize {
        1
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mut acc = S::zero();
        for i in 0..self.n {
            acc += x[i].scale(self.g[i]);
            for j in 0..self.n {
                acc += (x[i] * x[j]).scale(0.5 * self.h[i * self.n + j]);
            }
        }
        out[0] = acc;
    }
}

struct RosenbrockMap;

impl SmoothMap for RosenbrockMap {
    fn n_in(&self) -> usize {
        2
    }
    fn n_out(&self) -> usize {
        1
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let a = S::one() - x[0];
        let b = x[1] - x[0] * x[0];
        out[0] = a.sq() + b.sq().scale(100.0);
    }
}

/// `ln(1 + eˣ) − 0.3x`: strictly convex with minimizer `ln(3/7)`.
struct SoftplusMap;

impl SmoothMap for SoftplusMap {
    fn n_in(&self) -> usize {
        1
    }
    fn n_out(&self) -> usize {
        1
    }
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        out[0] = (S::one() + x[0].exp()).ln() - x[0].scale(0.3);
    }
}

fn unconstrained(n: usize) -> (Vec<f64>, Vec<f64>) {
    (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
}

fn empty(n: usize) -> crate::autodiff::DifferentiableFunction {
    FunctionBuilder::new(n, 0).build()
}

/// `min x² + y²  s.t.  x + y = 1` → (½, ½).
pub fn equality_qp() -> AnalyticNlp {
    let mut cost = FunctionBuilder::new(2, 1);
    cost.atom(
        QuadraticMap {
            h: vec![2.0, 0.0, 0.0, 2.0],
            g: vec![0.0, 0.0],
            n: 2,
        },
        vec![0, 1],
        0,
        1.0,
    );
    let mut eq = FunctionBuilder::new(2, 1);
    eq.linear_term(0, 0, 1.0);
    eq.linear_term(0, 1, 1.0);
    eq.constant_term(0, -1.0);
    let (lower, upper) = unconstrained(2);
    AnalyticNlp {
        name: "equality_qp",
        problem: NlpProblem::new(lower, upper, cost.build(), eq.build(), empty(2)).unwrap(),
        start: vec![-1.0, 3.0],
        solution: vec![0.5, 0.5],
    }
}

/// `min (x−2)²  s.t.  x ≤ 1` → 1, bound multiplier 2.
pub fn box_qp() -> AnalyticNlp {
    let mut cost = FunctionBuilder::new(1, 1);
    cost.atom(
        QuadraticMap {
            h: vec![2.0],
            g: vec![-4.0],
            n: 1,
        },
        vec![0],
        0,
        1.0,
    );
    cost.constant_term(0, 4.0);
    AnalyticNlp {
        name: "box_qp",
        problem: NlpProblem::new(
            vec![f64::NEG_INFINITY],
            vec![1.0],
            cost.build(),
            empty(1),
            empty(1),
        )
        .unwrap(),
        start: vec![-3.0],
        solution: vec![1.0],
    }
}

/// `min (x₁−2)² + (x₂−1)²  s.t.  x₁ + x₂ ≤ 1` → (1, 0): the unconstrained
/// minimizer (2, 1) projected onto the half-space boundary.
pub fn inequality_qp() -> AnalyticNlp {
    let mut cost = FunctionBuilder::new(2, 1);
    cost.atom(
        QuadraticMap {
            h: vec![2.0, 0.0, 0.0, 2.0],
            g: vec![-4.0, -2.0],
            n: 2,
        },
        vec![0, 1],
        0,
        1.0,
    );
    cost.constant_term(0, 5.0);
    let mut ineq = FunctionBuilder::new(2, 1);
    ineq.linear_term(0, 0, 1.0);
    ineq.linear_term(0, 1, 1.0);
    ineq.constant_term(0, -1.0);
    let (lower, upper) = unconstrained(2);
    AnalyticNlp {
        name: "inequality_qp",
        problem: NlpProblem::new(lower, upper, cost.build(), empty(2), ineq.build()).unwrap(),
        start: vec![-1.0, -1.0],
        solution: vec![1.0, 0.0],
    }
}

/// Rosenbrock with the upper box bound `x ≤ ½` active: minimizer (½, ¼).
pub fn rosenbrock_box() -> AnalyticNlp {
    let mut cost = FunctionBuilder::new(2, 1);
    cost.atom(RosenbrockMap, vec![0, 1], 0, 1.0);
    AnalyticNlp {
        name: "rosenbrock_box",
        problem: NlpProblem::new(
            vec![-2.0, -2.0],
            vec![0.5, 2.0],
            cost.build(),
            empty(2),
            empty(2),
        )
        .unwrap(),
        start: vec![-1.2, 1.0],
        solution: vec![0.5, 0.25],
    }
}

/// Scalar softplus toy: minimizer at `ln(3/7)` where the logistic sigmoid
/// equals 0.3.
pub fn softplus_scalar() -> AnalyticNlp {
    let mut cost = FunctionBuilder::new(1, 1);
    cost.atom(SoftplusMap, vec![0], 0, 1.0);
    AnalyticNlp {
        name: "softplus_scalar",
        problem: NlpProblem::new(vec![-10.0], vec![10.0], cost.build(), empty(1), empty(1))
            .unwrap(),
        start: vec![4.0],
        solution: vec![(3.0_f64 / 7.0).ln()],
    }
}

/// The five-problem battery used by the acceptance suite and `selftest`.
pub fn battery() -> Vec<AnalyticNlp> {
    vec![
        equality_qp(),
        box_qp(),
        inequality_qp(),
        rosenbrock_box(),
        softplus_scalar(),
    ]
}
