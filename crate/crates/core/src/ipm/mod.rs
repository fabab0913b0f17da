//! Primal-dual interior-point solver for the transcribed NLPs.
//!
//! Inequalities receive slack variables so that `h_e(q) + s = 0` with
//! `s ≥ 0`; box bounds (including slack positivity) are handled through a
//! logarithmic barrier with one multiplier per finite bound. The barrier
//! parameter follows a monotone schedule, each barrier subproblem is solved
//! by damped Newton steps on the primal-dual equations, and the symmetric
//! indefinite KKT systems are factored by the sparse LDLᵀ in [`ldl`] with
//! inertia-driven primal regularization. Steps obey the fraction-to-the-
//! boundary rule and a backtracking line search on an ℓ1 merit function.
//!
//! The solver is deterministic: identical inputs and options produce
//! identical iterate sequences.

pub mod ldl;

use crate::autodiff::FunctionError;
use crate::transcription::NlpProblem;
use ldl::{factor, rcm_ordering, LdlFactor, SymbolicLdl, UpperCsc};
use log::debug;
use std::collections::HashMap;
use std::time::{Duration, Instant};

/// Algorithmic constants of the interior-point method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Initial barrier parameter.
    pub mu_init: f64,
    /// Scaled KKT tolerance for optimality.
    pub kkt_tolerance: f64,
    /// Iteration budget across all barrier subproblems.
    pub max_iterations: usize,
    /// Fraction-to-the-boundary parameter τ.
    pub fraction_to_boundary: f64,
    /// Linear barrier decrease factor κ_μ.
    pub barrier_decrease: f64,
    /// Superlinear barrier exponent θ_μ.
    pub barrier_exponent: f64,
    /// Smallest nonzero primal regularization tried.
    pub regularization_floor: f64,
    /// Reuse the caller's primal guess with a reduced initial barrier.
    pub warm_start: bool,
    /// Record per-iteration diagnostics in the result.
    pub record_trace: bool,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            mu_init: 0.1,
            kkt_tolerance: 1e-8,
            max_iterations: 200,
            fraction_to_boundary: 0.995,
            barrier_decrease: 0.2,
            barrier_exponent: 1.5,
            regularization_floor: 1e-8,
            warm_start: false,
            record_trace: false,
        }
    }
}

impl IpmOptions {
    pub fn warm() -> Self {
        IpmOptions {
            warm_start: true,
            ..IpmOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    InfeasibleDetected,
    NumericalFailure,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max_iter",
            SolveStatus::InfeasibleDetected => "infeasible_detected",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

/// Cumulative wall time and call counts per callback family, mirroring the
/// usual solver timing breakdown (constraints, their Jacobian, the Lagrangian
/// Hessian, cost, cost gradient).
#[derive(Debug, Clone, Copy, Default)]
pub struct CallbackTimes {
    pub constraint: Duration,
    pub constraint_calls: usize,
    pub constraint_jacobian: Duration,
    pub constraint_jacobian_calls: usize,
    pub hessian: Duration,
    pub hessian_calls: usize,
    pub cost: Duration,
    pub cost_calls: usize,
    pub cost_gradient: Duration,
    pub cost_gradient_calls: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub mu: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub step_length: f64,
    pub min_slack: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub callback: CallbackTimes,
    pub total: Duration,
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    /// Primal solution (original variables, without slacks).
    pub solution: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Scaled KKT error at the returned point.
    pub kkt_error: f64,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub lower_bound_multipliers: Vec<f64>,
    pub upper_bound_multipliers: Vec<f64>,
    pub stats: SolveStats,
}

impl IpmResult {
    pub fn multipliers(&self) -> MultiplierSet {
        MultiplierSet {
            eq: self.eq_multipliers.clone(),
            ineq: self.ineq_multipliers.clone(),
            lower: self.lower_bound_multipliers.clone(),
            upper: self.upper_bound_multipliers.clone(),
        }
    }
}

/// Multipliers for [`kkt_residuals`].
#[derive(Debug, Clone, Default)]
pub struct MultiplierSet {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Infinity norms of the three KKT residual blocks at barrier parameter `mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
    }
}

/// Raw primal-dual residual norms of `problem` at a point, with slacks
/// implied by `s = max(−h(q), 0)`.
pub fn kkt_residuals(
    problem: &NlpProblem,
    q: &[f64],
    multipliers: &MultiplierSet,
    mu: f64,
) -> Result<KktResiduals, FunctionError> {
    let n = problem.n;
    assert_eq!(q.len(), n);
    assert_eq!(multipliers.eq.len(), problem.m_eq);
    assert_eq!(multipliers.ineq.len(), problem.m_ineq);

    let mut grad = vec![0.0; n];
    problem.cost_gradient(q, &mut grad)?;
    let mut stat = grad;
    let eq_jac = problem.eq.jacobian(q)?;
    for (k, &(r, c)) in eq_jac.pattern.iter().enumerate() {
        stat[c] += eq_jac.values[k] * multipliers.eq[r];
    }
    let ineq_jac = problem.ineq.jacobian(q)?;
    for (k, &(r, c)) in ineq_jac.pattern.iter().enumerate() {
        stat[c] += ineq_jac.values[k] * multipliers.ineq[r];
    }
    for i in 0..n {
        if !multipliers.lower.is_empty() {
            stat[i] -= multipliers.lower[i];
        }
        if !multipliers.upper.is_empty() {
            stat[i] += multipliers.upper[i];
        }
    }
    let stationarity = inf_norm(&stat);

    let eq_val = problem.eq.eval_vec(q)?;
    let ineq_val = problem.ineq.eval_vec(q)?;
    let mut feasibility = inf_norm(&eq_val);
    for &h in &ineq_val {
        feasibility = feasibility.max(h.max(0.0));
    }

    let mut complementarity = 0.0_f64;
    for (i, &h) in ineq_val.iter().enumerate() {
        let s = (-h).max(0.0);
        complementarity = complementarity.max((multipliers.ineq[i] * s - mu).abs());
    }
    for i in 0..n {
        if problem.lower[i].is_finite() && !multipliers.lower.is_empty() {
            complementarity = complementarity
                .max(((q[i] - problem.lower[i]) * multipliers.lower[i] - mu).abs());
        }
        if problem.upper[i].is_finite() && !multipliers.upper.is_empty() {
            complementarity = complementarity
                .max(((problem.upper[i] - q[i]) * multipliers.upper[i] - mu).abs());
        }
    }
    Ok(KktResiduals {
        stationarity,
        feasibility,
        complementarity,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

// ---------------------------------------------------------------------------
// KKT system plumbing
// ---------------------------------------------------------------------------

/// Permuted sparse KKT matrix with slot maps from each value source into the
/// CSC storage; the pattern and symbolic factorization are built once per
/// solve.
struct KktSystem {
    n_kkt: usize,
    matrix: UpperCsc,
    symbolic: SymbolicLdl,
    signs: Vec<i8>,
    iperm: Vec<usize>,
    hess_slots: Vec<usize>,
    diag_slots: Vec<usize>,
    eq_slots: Vec<usize>,
    ineq_slots: Vec<usize>,
    slack_slots: Vec<usize>,
    dual_diag_slots: Vec<usize>,
    scratch: Vec<f64>,
}

impl KktSystem {
    fn build(problem: &NlpProblem) -> Self {
        let n = problem.n;
        let m_eq = problem.m_eq;
        let m_ineq = problem.m_ineq;
        let nt = n + m_ineq;
        let m = m_eq + m_ineq;
        let n_kkt = nt + m;

        // Source positions in the unpermuted KKT matrix, upper triangle.
        let mut positions: Vec<(usize, usize)> = Vec::new();
        for &(i, j) in problem.lagrangian_hessian_pattern() {
            positions.push((j.min(i), j.max(i)));
        }
        let hess_count = positions.len();
        for i in 0..nt {
            positions.push((i, i));
        }
        let mut dual_support: Vec<Vec<usize>> = vec![Vec::new(); m];
        for &(r, c) in problem.eq.jacobian_pattern() {
            positions.push((c, nt + r));
            dual_support[r].push(c);
        }
        for &(r, c) in problem.ineq.jacobian_pattern() {
            positions.push((c, nt + m_eq + r));
            dual_support[m_eq + r].push(c);
        }
        for r in 0..m_ineq {
            positions.push((n + r, nt + m_eq + r));
            dual_support[m_eq + r].push(n + r);
        }
        for r in 0..m {
            positions.push((nt + r, nt + r));
        }

        // Bandwidth-reducing ordering of the aggregate pattern, then adjusted
        // so each constraint row is eliminated only after every variable it
        // touches. With that order the dual pivots are Schur complements of a
        // positive block: strictly negative, so the pivoting-free LDLᵀ never
        // breaks down on the unregularized KKT matrix.
        let rcm = rcm_ordering(n_kkt, &positions);
        let mut rcm_pos = vec![0usize; n_kkt];
        for (new, &old) in rcm.iter().enumerate() {
            rcm_pos[old] = new;
        }
        let mut keyed: Vec<(usize, usize)> = (0..n_kkt)
            .map(|old| {
                let key = if old < nt {
                    2 * rcm_pos[old]
                } else {
                    let support = &dual_support[old - nt];
                    let latest = support.iter().map(|&c| rcm_pos[c]).max().unwrap_or(0);
                    2 * latest + 1
                };
                (key, old)
            })
            .collect();
        keyed.sort_unstable();
        let mut iperm = vec![0usize; n_kkt];
        for (new, &(_, old)) in keyed.iter().enumerate() {
            iperm[old] = new;
        }

        let permuted: Vec<(usize, usize)> = positions
            .iter()
            .map(|&(r, c)| {
                let (pr, pc) = (iperm[r], iperm[c]);
                (pr.min(pc), pr.max(pc))
            })
            .collect();
        let mut pattern: Vec<(usize, usize)> = permuted.clone();
        pattern.sort_unstable_by_key(|&(r, c)| (c, r));
        pattern.dedup();
        let index: HashMap<(usize, usize), usize> =
            pattern.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        let slots: Vec<usize> = permuted.iter().map(|e| index[e]).collect();

        let matrix = UpperCsc::from_pattern(n_kkt, &pattern);
        let symbolic = SymbolicLdl::analyze(&matrix);
        let mut signs = vec![0i8; n_kkt];
        for old in 0..n_kkt {
            signs[iperm[old]] = if old < nt { 1 } else { -1 };
        }

        let mut cursor = 0;
        let take = |cursor: &mut usize, len: usize| -> Vec<usize> {
            let out = slots[*cursor..*cursor + len].to_vec();
            *cursor += len;
            out
        };
        let hess_slots = take(&mut cursor, hess_count);
        let diag_slots = take(&mut cursor, nt);
        let eq_slots = take(&mut cursor, problem.eq.jacobian_pattern().len());
        let ineq_slots = take(&mut cursor, problem.ineq.jacobian_pattern().len());
        let slack_slots = take(&mut cursor, m_ineq);
        let dual_diag_slots = take(&mut cursor, m);
        debug_assert_eq!(cursor, slots.len());

        debug!(
            "kkt system: dim {}, nnz {}, factor nnz {}",
            n_kkt,
            pattern.len(),
            symbolic.factor_nnz()
        );

        KktSystem {
            n_kkt,
            matrix,
            symbolic,
            signs,
            iperm,
            hess_slots,
            diag_slots,
            eq_slots,
            ineq_slots,
            slack_slots,
            dual_diag_slots,
            scratch: vec![0.0; n_kkt],
        }
    }

    fn assemble(
        &mut self,
        hess: &[f64],
        barrier_diag: &[f64],
        delta_w: f64,
        delta_c: f64,
        eq_jac: &[f64],
        ineq_jac: &[f64],
    ) {
        let values = &mut self.matrix.values;
        values.fill(0.0);
        for (k, &slot) in self.hess_slots.iter().enumerate() {
            values[slot] += hess[k];
        }
        for (i, &slot) in self.diag_slots.iter().enumerate() {
            values[slot] += barrier_diag[i] + delta_w;
        }
        for (k, &slot) in self.eq_slots.iter().enumerate() {
            values[slot] += eq_jac[k];
        }
        for (k, &slot) in self.ineq_slots.iter().enumerate() {
            values[slot] += ineq_jac[k];
        }
        for &slot in &self.slack_slots {
            values[slot] += 1.0;
        }
        // static dual regularization keeps the system quasi-definite so the
        // pivoting-free factorization cannot break down; refinement removes
        // its effect from the computed step
        for &slot in &self.dual_diag_slots {
            values[slot] -= delta_c;
        }
    }

    fn factorize(&self) -> Result<LdlFactor, ldl::LdlError> {
        factor(&self.matrix, &self.symbolic, &self.signs)
    }

    /// Solves the assembled system for an unpermuted right-hand side.
    fn solve(&mut self, fac: &LdlFactor, rhs: &[f64]) -> Vec<f64> {
        for old in 0..self.n_kkt {
            self.scratch[self.iperm[old]] = rhs[old];
        }
        let solved = fac.solve_refined(&self.matrix, &self.scratch, 3);
        let mut out = vec![0.0; self.n_kkt];
        for old in 0..self.n_kkt {
            out[old] = solved[self.iperm[old]];
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct Timers {
    cb: CallbackTimes,
}

impl Timers {
    fn time<T>(slot: &mut Duration, calls: &mut usize, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *slot += t0.elapsed();
        *calls += 1;
        out
    }
}

/// Interior carrier of the primal-dual iterate.
struct Iterate {
    /// Primal variables: original variables then inequality slacks.
    x: Vec<f64>,
    /// Constraint multipliers: equalities then slacked inequalities.
    y: Vec<f64>,
    /// Bound multipliers (0 where the bound is infinite).
    z_lower: Vec<f64>,
    z_upper: Vec<f64>,
}

/// Solves `problem` starting from `initial_guess` (length `problem.n`).
///
/// Non-convergence is reported through [`IpmResult::status`], never by
/// panicking or returning `Err`; evaluation failures at the incumbent point
/// surface as [`SolveStatus::NumericalFailure`].
pub fn solve(problem: &NlpProblem, initial_guess: &[f64], options: &IpmOptions) -> IpmResult {
    let t_start = Instant::now();
    let n = problem.n;
    let m_eq = problem.m_eq;
    let m_ineq = problem.m_ineq;
    let nt = n + m_ineq;
    let m = m_eq + m_ineq;
    assert_eq!(initial_guess.len(), n);

    const BOUND_RELAX: f64 = 1e-8;
    const DELTA_C: f64 = 1e-8;
    const KAPPA_EPSILON: f64 = 10.0;
    const KAPPA_SIGMA: f64 = 1e10;
    const MAX_BACKTRACKS: usize = 30;
    const ARMIJO: f64 = 1e-4;

    // Relaxed bounds over (variables, slacks).
    let mut lb = vec![f64::NEG_INFINITY; nt];
    let mut ub = vec![f64::INFINITY; nt];
    for i in 0..n {
        if problem.lower[i].is_finite() {
            lb[i] = problem.lower[i] - BOUND_RELAX * problem.lower[i].abs().max(1.0);
        }
        if problem.upper[i].is_finite() {
            ub[i] = problem.upper[i] + BOUND_RELAX * problem.upper[i].abs().max(1.0);
        }
    }
    for i in n..nt {
        lb[i] = -BOUND_RELAX;
    }

    let mut timers = Timers {
        cb: CallbackTimes::default(),
    };
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut iterations = 0usize;

    let fail = |status: SolveStatus,
                x: &[f64],
                y: &[f64],
                zl: &[f64],
                zu: &[f64],
                kkt: f64,
                timers: Timers,
                iterations: usize,
                trace: Vec<IterationRecord>| {
        let q = x[..n].to_vec();
        let objective = problem.cost_value(&q).unwrap_or(f64::NAN);
        IpmResult {
            solution: q,
            objective,
            status,
            kkt_error: kkt,
            eq_multipliers: y[..m_eq].to_vec(),
            ineq_multipliers: y[m_eq..].to_vec(),
            lower_bound_multipliers: zl[..n].to_vec(),
            upper_bound_multipliers: zu[..n].to_vec(),
            stats: SolveStats {
                iterations,
                callback: timers.cb,
                total: t_start.elapsed(),
                trace,
            },
        }
    };

    // ---- initial point -----------------------------------------------------
    // A warm guess typically rides active bounds; pushing it a modest
    // distance inside keeps the initial barrier terms (and the KKT
    // conditioning) sane, at the cost of re-identifying the active set.
    let push = if options.warm_start { 1e-3 } else { 1e-2 };
    let interior = |v: f64, lo: f64, hi: f64| -> f64 {
        let mut out = v;
        if lo.is_finite() {
            let pad = if hi.is_finite() {
                (push * lo.abs().max(1.0)).min(0.25 * (hi - lo))
            } else {
                push * lo.abs().max(1.0)
            };
            out = out.max(lo + pad);
        }
        if hi.is_finite() {
            let pad = if lo.is_finite() {
                (push * hi.abs().max(1.0)).min(0.25 * (hi - lo))
            } else {
                push * hi.abs().max(1.0)
            };
            out = out.min(hi - pad);
        }
        out
    };

    let mut x = vec![0.0; nt];
    for i in 0..n {
        x[i] = interior(initial_guess[i], lb[i], ub[i]);
    }
    // slacks from the inequality values at the pushed primal point
    {
        let h = match problem.ineq.eval_vec(&x[..n]) {
            Ok(h) => h,
            Err(_) => {
                return fail(
                    SolveStatus::NumericalFailure,
                    &x,
                    &vec![0.0; m],
                    &vec![0.0; nt],
                    &vec![0.0; nt],
                    f64::INFINITY,
                    timers,
                    0,
                    trace,
                )
            }
        };
        for r in 0..m_ineq {
            x[n + r] = interior((-h[r]).max(1e-6), lb[n + r], ub[n + r]);
        }
    }

    let mut mu = if options.warm_start {
        (0.1 * options.mu_init).max(1e-4)
    } else {
        options.mu_init
    };
    let mu_min = options.kkt_tolerance / 10.0;

    let y = vec![0.0; m];
    let mut z_lower = vec![0.0; nt];
    let mut z_upper = vec![0.0; nt];
    for i in 0..nt {
        if lb[i].is_finite() {
            z_lower[i] = (mu / (x[i] - lb[i])).clamp(1e-6, 1e6);
        }
        if ub[i].is_finite() {
            z_upper[i] = (mu / (ub[i] - x[i])).clamp(1e-6, 1e6);
        }
    }
    let mut it = Iterate {
        x,
        y,
        z_lower,
        z_upper,
    };

    let mut kkt = KktSystem::build(problem);

    let mut eq_jac = vec![0.0; problem.eq.jacobian_pattern().len()];
    let mut ineq_jac = vec![0.0; problem.ineq.jacobian_pattern().len()];
    let mut hess = vec![0.0; problem.lagrangian_hessian_pattern().len()];
    let mut grad = vec![0.0; n];

    let mut delta_w_last = 0.0_f64;
    let mut merit_penalty = 1.0_f64;
    let mut consecutive_ls_failures = 0usize;
    let mut stalled_infeasible = 0usize;

    // constraint evaluation c(x) = [f_e(q); h(q) + s]
    let eval_constraints = |x: &[f64], timers: &mut Timers| -> Result<Vec<f64>, FunctionError> {
        Timers::time(
            &mut timers.cb.constraint,
            &mut timers.cb.constraint_calls,
            || -> Result<Vec<f64>, FunctionError> {
                let mut c = vec![0.0; m];
                problem.eq.eval(&x[..n], &mut c[..m_eq])?;
                if m_ineq > 0 {
                    let h = problem.ineq.eval_vec(&x[..n])?;
                    for r in 0..m_ineq {
                        c[m_eq + r] = h[r] + x[n + r];
                    }
                }
                Ok(c)
            },
        )
    };
    let eval_cost = |x: &[f64], timers: &mut Timers| -> Result<f64, FunctionError> {
        Timers::time(&mut timers.cb.cost, &mut timers.cb.cost_calls, || {
            problem.cost_value(&x[..n])
        })
    };

    // Scaled primal-dual error at barrier `mu_val` for arbitrary points; used
    // by the termination test and as a secondary line-search acceptance
    // criterion for re-centering steps the scalar merit cannot rank.
    let scaled_error = |grad: &[f64],
                        eq_jac: &[f64],
                        ineq_jac: &[f64],
                        c: &[f64],
                        x: &[f64],
                        y: &[f64],
                        z_lower: &[f64],
                        z_upper: &[f64],
                        mu_val: f64|
     -> f64 {
        let mut r_stat = vec![0.0; nt];
        r_stat[..n].copy_from_slice(grad);
        for (k, &(r, cidx)) in problem.eq.jacobian_pattern().iter().enumerate() {
            r_stat[cidx] += eq_jac[k] * y[r];
        }
        for (k, &(r, cidx)) in problem.ineq.jacobian_pattern().iter().enumerate() {
            r_stat[cidx] += ineq_jac[k] * y[m_eq + r];
        }
        for r in 0..m_ineq {
            r_stat[n + r] += y[m_eq + r];
        }
        for i in 0..nt {
            r_stat[i] -= z_lower[i];
            r_stat[i] += z_upper[i];
        }
        let n_bounds = (0..nt)
            .map(|i| usize::from(lb[i].is_finite()) + usize::from(ub[i].is_finite()))
            .sum::<usize>()
            .max(1);
        let mult_l1 = l1_norm(y) + l1_norm(z_lower) + l1_norm(z_upper);
        let s_max = 100.0;
        let s_d = ((mult_l1 / (m + n_bounds) as f64).max(s_max)) / s_max;
        let s_c = ((l1_norm(z_lower) + l1_norm(z_upper)) / n_bounds as f64).max(s_max) / s_max;
        let mut compl = 0.0_f64;
        for i in 0..nt {
            if lb[i].is_finite() {
                compl = compl.max(((x[i] - lb[i]) * z_lower[i] - mu_val).abs());
            }
            if ub[i].is_finite() {
                compl = compl.max(((ub[i] - x[i]) * z_upper[i] - mu_val).abs());
            }
        }
        (inf_norm(&r_stat) / s_d).max(inf_norm(c)).max(compl / s_c)
    };

    let mut c = match eval_constraints(&it.x, &mut timers) {
        Ok(c) => c,
        Err(_) => {
            return fail(
                SolveStatus::NumericalFailure,
                &it.x,
                &it.y,
                &it.z_lower,
                &it.z_upper,
                f64::INFINITY,
                timers,
                0,
                trace,
            )
        }
    };
    let mut phi = match eval_cost(&it.x, &mut timers) {
        Ok(v) => v,
        Err(_) => {
            return fail(
                SolveStatus::NumericalFailure,
                &it.x,
                &it.y,
                &it.z_lower,
                &it.z_upper,
                f64::INFINITY,
                timers,
                0,
                trace,
            )
        }
    };

    let mut status = SolveStatus::MaxIterations;
    let mut final_kkt = f64::INFINITY;

    'outer: loop {
        if iterations >= options.max_iterations {
            break;
        }

        // ---- derivatives at the incumbent ----------------------------------
        let jac_ok = Timers::time(
            &mut timers.cb.constraint_jacobian,
            &mut timers.cb.constraint_jacobian_calls,
            || {
                problem.eq.jacobian_values(&it.x[..n], &mut eq_jac).is_ok()
                    && problem
                        .ineq
                        .jacobian_values(&it.x[..n], &mut ineq_jac)
                        .is_ok()
            },
        );
        let grad_ok = Timers::time(
            &mut timers.cb.cost_gradient,
            &mut timers.cb.cost_gradient_calls,
            || problem.cost_gradient(&it.x[..n], &mut grad).is_ok(),
        );
        if !jac_ok || !grad_ok {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // stationarity residual r = ∇φ + Aᵀy − z_L + z_U over (vars, slacks)
        let mut r_stat = vec![0.0; nt];
        r_stat[..n].copy_from_slice(&grad);
        for (k, &(r, cidx)) in problem.eq.jacobian_pattern().iter().enumerate() {
            r_stat[cidx] += eq_jac[k] * it.y[r];
        }
        for (k, &(r, cidx)) in problem.ineq.jacobian_pattern().iter().enumerate() {
            r_stat[cidx] += ineq_jac[k] * it.y[m_eq + r];
        }
        for r in 0..m_ineq {
            r_stat[n + r] += it.y[m_eq + r];
        }
        for i in 0..nt {
            r_stat[i] -= it.z_lower[i];
            r_stat[i] += it.z_upper[i];
        }

        // scaled KKT errors (IPOPT-style scaling, s_max = 100)
        let n_bounds = (0..nt)
            .map(|i| usize::from(lb[i].is_finite()) + usize::from(ub[i].is_finite()))
            .sum::<usize>()
            .max(1);
        let mult_l1 = l1_norm(&it.y) + l1_norm(&it.z_lower) + l1_norm(&it.z_upper);
        let s_max = 100.0;
        let s_d = ((mult_l1 / (m + n_bounds) as f64).max(s_max)) / s_max;
        let s_c = ((l1_norm(&it.z_lower) + l1_norm(&it.z_upper)) / n_bounds as f64)
            .max(s_max)
            / s_max;

        let compl_err = |mu_val: f64| -> f64 {
            let mut e = 0.0_f64;
            for i in 0..nt {
                if lb[i].is_finite() {
                    e = e.max(((it.x[i] - lb[i]) * it.z_lower[i] - mu_val).abs());
                }
                if ub[i].is_finite() {
                    e = e.max(((ub[i] - it.x[i]) * it.z_upper[i] - mu_val).abs());
                }
            }
            e
        };
        let feas = inf_norm(&c);
        let stat_err = inf_norm(&r_stat) / s_d;
        if log::log_enabled!(log::Level::Debug) {
            let (ia, va) = r_stat
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(ia, va), (i, &v)| {
                    if v.abs() > va { (i, v.abs()) } else { (ia, va) }
                });
            debug!(
                "  stat argmax: var {ia} raw {va:.3e} s_d {s_d:.2e} x {:.6e} lb {:.2e} ub {:.2e} zl {:.3e} zu {:.3e} grad {:.3e}",
                it.x[ia],
                lb.get(ia).copied().unwrap_or(f64::NAN),
                ub.get(ia).copied().unwrap_or(f64::NAN),
                it.z_lower[ia], it.z_upper[ia],
                if ia < n { grad[ia] } else { 0.0 }
            );
        }
        let err_zero = stat_err.max(feas).max(compl_err(0.0) / s_c);
        let err_mu = stat_err.max(feas).max(compl_err(mu) / s_c);
        final_kkt = err_zero;

        if options.record_trace {
            let min_slack = (0..nt)
                .filter(|&i| lb[i].is_finite() || ub[i].is_finite())
                .map(|i| {
                    let dl = if lb[i].is_finite() {
                        it.x[i] - lb[i]
                    } else {
                        f64::INFINITY
                    };
                    let du = if ub[i].is_finite() {
                        ub[i] - it.x[i]
                    } else {
                        f64::INFINITY
                    };
                    dl.min(du)
                })
                .fold(f64::INFINITY, f64::min);
            trace.push(IterationRecord {
                mu,
                stationarity: stat_err,
                feasibility: feas,
                complementarity: compl_err(0.0) / s_c,
                step_length: 0.0,
                min_slack,
                regularization: delta_w_last,
            });
        }

        if err_zero <= options.kkt_tolerance {
            status = SolveStatus::Optimal;
            break;
        }

        // infeasibility stall heuristic
        if feas > 1e-4 && mu <= 1e-6 {
            stalled_infeasible += 1;
            if stalled_infeasible >= 20 {
                status = SolveStatus::InfeasibleDetected;
                break;
            }
        } else {
            stalled_infeasible = 0;
        }

        // monotone barrier update
        if err_mu <= KAPPA_EPSILON * mu && mu > mu_min {
            mu = mu_min.max((options.barrier_decrease * mu).min(mu.powf(options.barrier_exponent)));
            debug!("barrier decreased to {mu:.3e} at iteration {iterations}");
        }

        // ---- Newton step ----------------------------------------------------
        let hess_ok = Timers::time(
            &mut timers.cb.hessian,
            &mut timers.cb.hessian_calls,
            || {
                problem
                    .lagrangian_hessian(
                        &it.x[..n],
                        1.0,
                        &it.y[..m_eq],
                        &it.y[m_eq..],
                        &mut hess,
                    )
                    .is_ok()
            },
        );
        if !hess_ok {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // A bound pair whose product has crashed below μ carries barrier
        // curvature z/d far above its central-path value z²/μ, which poisons
        // the unpivoted factorization. Cap the curvature a factor above the
        // central value: on-path pairs are untouched, crashed pairs recover
        // in a couple of re-centering steps.
        let sigma_cap = |z: f64| 100.0 * z * z / mu + 1e6;
        let mut sigma_lower = vec![0.0; nt];
        let mut sigma_upper = vec![0.0; nt];
        let mut barrier_diag = vec![0.0; nt];
        for i in 0..nt {
            if lb[i].is_finite() {
                sigma_lower[i] = (it.z_lower[i] / (it.x[i] - lb[i])).min(sigma_cap(it.z_lower[i]));
                barrier_diag[i] += sigma_lower[i];
            }
            if ub[i].is_finite() {
                sigma_upper[i] = (it.z_upper[i] / (ub[i] - it.x[i])).min(sigma_cap(it.z_upper[i]));
                barrier_diag[i] += sigma_upper[i];
            }
        }

        // gradient of the barrier objective
        let mut grad_mu = vec![0.0; nt];
        grad_mu[..n].copy_from_slice(&grad);
        for i in 0..nt {
            if lb[i].is_finite() {
                grad_mu[i] -= mu / (it.x[i] - lb[i]);
            }
            if ub[i].is_finite() {
                grad_mu[i] += mu / (ub[i] - it.x[i]);
            }
        }

        let mut rhs = vec![0.0; nt + m];
        for i in 0..nt {
            rhs[i] = -grad_mu[i];
        }
        // subtract Aᵀ y
        for (k, &(r, cidx)) in problem.eq.jacobian_pattern().iter().enumerate() {
            rhs[cidx] -= eq_jac[k] * it.y[r];
        }
        for (k, &(r, cidx)) in problem.ineq.jacobian_pattern().iter().enumerate() {
            rhs[cidx] -= ineq_jac[k] * it.y[m_eq + r];
        }
        for r in 0..m_ineq {
            rhs[n + r] -= it.y[m_eq + r];
        }
        for r in 0..m {
            rhs[nt + r] = -c[r];
        }

        // Inertia-corrected factorization: escalate the primal regularization
        // until the inertia is (nt, m) with no perturbed pivots. The dual
        // regularization stays off in the first pass; it only enters as a
        // last resort against genuinely dependent constraint rows.
        let mut factor_result = None;
        'regularize: for delta_c in [0.0, DELTA_C] {
            let mut delta_w = 0.0_f64;
            loop {
                kkt.assemble(&hess, &barrier_diag, delta_w, delta_c, &eq_jac, &ineq_jac);
                match kkt.factorize() {
                    Ok(fac)
                        if fac.n_positive == nt
                            && fac.n_negative == m
                            && fac.n_regularized == 0 =>
                    {
                        if delta_w > 0.0 {
                            delta_w_last = delta_w;
                            debug!("inertia corrected with delta_w = {delta_w:.3e}");
                        }
                        factor_result = Some(fac);
                        break 'regularize;
                    }
                    _ => {
                        delta_w = if delta_w == 0.0 {
                            if delta_w_last == 0.0 {
                                options.regularization_floor
                            } else {
                                (delta_w_last / 3.0).max(options.regularization_floor)
                            }
                        } else {
                            delta_w * 10.0
                        };
                        if delta_w > 1e12 {
                            break;
                        }
                    }
                }
            }
        }
        let fac = match factor_result {
            Some(f) => f,
            None => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };

        let step = kkt.solve(&fac, &rhs);
        let (dx, dy) = step.split_at(nt);

        if log::log_enabled!(log::Level::Debug) {
            let mut kx = vec![0.0; nt + m];
            let mut pstep = vec![0.0; nt + m];
            for old in 0..nt + m {
                pstep[kkt.iperm[old]] = step[old];
            }
            let mut pres = vec![0.0; nt + m];
            kkt.matrix.sym_mul_add(&pstep, &mut pres);
            for old in 0..nt + m {
                kx[old] = pres[kkt.iperm[old]] - rhs[old];
            }
            let (imax, dmax) = dx
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(ia, va), (i, &v)| {
                    if v.abs() > va {
                        (i, v.abs())
                    } else {
                        (ia, va)
                    }
                });
            debug!(
                "iter {iterations}: mu={mu:.1e} solve residual {:.2e}, |dx|max {:.2e} at {}",
                inf_norm(&kx),
                dmax,
                imax
            );
        }

        // bound-multiplier steps
        let mut dz_lower = vec![0.0; nt];
        let mut dz_upper = vec![0.0; nt];
        for i in 0..nt {
            if lb[i].is_finite() {
                dz_lower[i] = mu / (it.x[i] - lb[i]) - it.z_lower[i] - sigma_lower[i] * dx[i];
            }
            if ub[i].is_finite() {
                dz_upper[i] = mu / (ub[i] - it.x[i]) - it.z_upper[i] + sigma_upper[i] * dx[i];
            }
        }

        // fraction-to-the-boundary step caps
        let tau = options.fraction_to_boundary;
        let mut alpha_max = 1.0_f64;
        let mut cap_var = usize::MAX;
        for i in 0..nt {
            if lb[i].is_finite() && dx[i] < 0.0 {
                let a = -tau * (it.x[i] - lb[i]) / dx[i];
                if a < alpha_max {
                    alpha_max = a;
                    cap_var = i;
                }
            }
            if ub[i].is_finite() && dx[i] > 0.0 {
                let a = tau * (ub[i] - it.x[i]) / dx[i];
                if a < alpha_max {
                    alpha_max = a;
                    cap_var = i;
                }
            }
        }
        if cap_var != usize::MAX && log::log_enabled!(log::Level::Debug) {
            let i = cap_var;
            debug!(
                "  ftb cap: var {i} x={:.3e} lb={:.1e} ub={:.1e} dx={:.3e} zl={:.2e} zu={:.2e} alpha_max={:.2e} nreg={}",
                it.x[i], lb[i], ub[i], dx[i], it.z_lower[i], it.z_upper[i], alpha_max,
                fac.n_regularized
            );
        }
        let mut alpha_z_lower = 1.0_f64;
        let mut alpha_z_upper = 1.0_f64;
        for i in 0..nt {
            if dz_lower[i] < 0.0 && it.z_lower[i] > 0.0 {
                alpha_z_lower = alpha_z_lower.min(-tau * it.z_lower[i] / dz_lower[i]);
            }
            if dz_upper[i] < 0.0 && it.z_upper[i] > 0.0 {
                alpha_z_upper = alpha_z_upper.min(-tau * it.z_upper[i] / dz_upper[i]);
            }
        }

        // ---- merit line search ----------------------------------------------
        let theta = l1_norm(&c);
        let d1: f64 = grad_mu.iter().zip(dx).map(|(g, d)| g * d).sum();
        // smallest penalty that keeps the Newton direction a descent
        // direction for the merit; an aggressive multiplier-based penalty
        // would let constraint curvature throttle the step length. Below the
        // feasibility noise floor the penalty stops growing: re-centering
        // steps legitimately trade ascent in the barrier objective against
        // nothing the ℓ1 term can measure.
        if theta > 1e-7 {
            let required = d1.max(0.0) / (0.5 * theta);
            if merit_penalty < required {
                merit_penalty = required + 1.0;
            }
        }
        let merit_at = |phi_v: f64, x_v: &[f64], c_v: &[f64]| -> f64 {
            let mut barrier = 0.0;
            for i in 0..nt {
                if lb[i].is_finite() {
                    barrier -= (x_v[i] - lb[i]).ln();
                }
                if ub[i].is_finite() {
                    barrier -= (ub[i] - x_v[i]).ln();
                }
            }
            phi_v + mu * barrier + merit_penalty * l1_norm(c_v)
        };
        let merit_0 = merit_at(phi, &it.x, &c);
        let descent = d1 - merit_penalty * theta;

        let mut alpha = alpha_max;
        let mut accepted = false;
        let mut trial_x = vec![0.0; nt];
        let mut trial_c = Vec::new();
        let mut trial_phi = 0.0;
        let mut trial_grad = vec![0.0; n];
        let mut trial_eq_jac = vec![0.0; eq_jac.len()];
        let mut trial_ineq_jac = vec![0.0; ineq_jac.len()];
        for bt in 0..=MAX_BACKTRACKS {
            for i in 0..nt {
                trial_x[i] = it.x[i] + alpha * dx[i];
            }
            let c_try = eval_constraints(&trial_x, &mut timers);
            let phi_try = eval_cost(&trial_x, &mut timers);
            if let (Ok(c_try), Ok(phi_try)) = (c_try, phi_try) {
                let merit_try = merit_at(phi_try, &trial_x, &c_try);
                if bt == 0 && log::log_enabled!(log::Level::Debug) {
                    debug!(
                        "  ls: merit0={merit_0:.9e} trial={merit_try:.9e} d1={d1:.3e} theta={theta:.3e} rho={merit_penalty:.3e} phi0={phi:.6e} phi_try={phi_try:.6e}"
                    );
                }
                if merit_try.is_finite() && merit_try <= merit_0 + ARMIJO * alpha * descent.min(0.0)
                {
                    trial_c = c_try;
                    trial_phi = phi_try;
                    accepted = true;
                    break;
                }
                // Secondary test: accept a step the merit rejects when the
                // scaled primal-dual residual drops. Pure re-centering moves
                // raise the barrier objective without feasibility gain, which
                // the merit cannot rank, yet they are exactly the Newton steps
                // that unpin badly centered complementarity pairs.
                if bt <= 6 {
                    let jac_ok = Timers::time(
                        &mut timers.cb.constraint_jacobian,
                        &mut timers.cb.constraint_jacobian_calls,
                        || {
                            problem
                                .eq
                                .jacobian_values(&trial_x[..n], &mut trial_eq_jac)
                                .is_ok()
                                && problem
                                    .ineq
                                    .jacobian_values(&trial_x[..n], &mut trial_ineq_jac)
                                    .is_ok()
                        },
                    );
                    let grad_ok = Timers::time(
                        &mut timers.cb.cost_gradient,
                        &mut timers.cb.cost_gradient_calls,
                        || problem.cost_gradient(&trial_x[..n], &mut trial_grad).is_ok(),
                    );
                    if jac_ok && grad_ok {
                        let mut y_try = it.y.clone();
                        for r in 0..m {
                            y_try[r] += alpha * dy[r];
                        }
                        let mut zl_try = it.z_lower.clone();
                        let mut zu_try = it.z_upper.clone();
                        for i in 0..nt {
                            zl_try[i] += alpha_z_lower * dz_lower[i];
                            zu_try[i] += alpha_z_upper * dz_upper[i];
                        }
                        let err_try = scaled_error(
                            &trial_grad,
                            &trial_eq_jac,
                            &trial_ineq_jac,
                            &c_try,
                            &trial_x,
                            &y_try,
                            &zl_try,
                            &zu_try,
                            mu,
                        );
                        if err_try <= (1.0 - 1e-4 * alpha) * err_mu {
                            trial_c = c_try;
                            trial_phi = phi_try;
                            accepted = true;
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }

        if !accepted {
            consecutive_ls_failures += 1;
            if consecutive_ls_failures >= 3 {
                status = SolveStatus::NumericalFailure;
                break 'outer;
            }
            // accept the conservative tiny step and keep going
            for i in 0..nt {
                trial_x[i] = it.x[i] + alpha * dx[i];
            }
            match (
                eval_constraints(&trial_x, &mut timers),
                eval_cost(&trial_x, &mut timers),
            ) {
                (Ok(cv), Ok(pv)) => {
                    trial_c = cv;
                    trial_phi = pv;
                }
                _ => {
                    status = SolveStatus::NumericalFailure;
                    break 'outer;
                }
            }
        } else {
            consecutive_ls_failures = 0;
        }

        it.x.copy_from_slice(&trial_x);
        c = trial_c;
        phi = trial_phi;
        for r in 0..m {
            it.y[r] += alpha * dy[r];
        }
        for i in 0..nt {
            it.z_lower[i] += alpha_z_lower * dz_lower[i];
            it.z_upper[i] += alpha_z_upper * dz_upper[i];
        }
        // The fraction-to-the-boundary rule keeps distances positive in exact
        // arithmetic; guard only against rounding pushing x onto (or past) a
        // bound, with a floor at the representable resolution of x − bound.
        // Anything larger collides with the central path when a bound carries
        // a large multiplier (central distance μ/z can reach 1e-13).
        for i in 0..nt {
            if lb[i].is_finite() {
                let floor = 4.0 * f64::EPSILON * it.x[i].abs().max(lb[i].abs()).max(1e-8);
                if it.x[i] - lb[i] < floor {
                    it.x[i] = lb[i] + floor;
                }
            }
            if ub[i].is_finite() {
                let floor = 4.0 * f64::EPSILON * it.x[i].abs().max(ub[i].abs()).max(1e-8);
                if ub[i] - it.x[i] < floor {
                    it.x[i] = ub[i] - floor;
                }
            }
        }
        for i in 0..nt {
            if lb[i].is_finite() {
                let d = it.x[i] - lb[i];
                it.z_lower[i] = it.z_lower[i].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
            if ub[i].is_finite() {
                let d = ub[i] - it.x[i];
                it.z_upper[i] = it.z_upper[i].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
        }
        if let Some(last) = trace.last_mut() {
            last.step_length = alpha;
        }

        iterations += 1;
    }

    let q = it.x[..n].to_vec();
    let objective = problem.cost_value(&q).unwrap_or(f64::NAN);
    IpmResult {
        solution: q,
        objective,
        status,
        kkt_error: final_kkt,
        eq_multipliers: it.y[..m_eq].to_vec(),
        ineq_multipliers: it.y[m_eq..].to_vec(),
        lower_bound_multipliers: it.z_lower[..n].to_vec(),
        upper_bound_multipliers: it.z_upper[..n].to_vec(),
        stats: SolveStats {
            iterations,
            callback: timers.cb,
            total: t_start.elapsed(),
            trace,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use approx::assert_relative_eq;

    #[test]
    fn analytic_battery_solves_to_tolerance() {
        for case in analytic::battery() {
            let result = solve(&case.problem, &case.start, &IpmOptions::default());
            assert_eq!(
                result.status,
                SolveStatus::Optimal,
                "{} did not converge: kkt {}",
                case.name,
                result.kkt_error
            );
            for (i, (&got, &want)) in result.solution.iter().zip(&case.solution).enumerate() {
                assert!(
                    (got - want).abs() < 1e-6,
                    "{}: solution[{i}] = {got}, expected {want}",
                    case.name
                );
            }
            assert!(result.kkt_error <= 1e-8);
        }
    }

    #[test]
    fn box_qp_multiplier_matches_kkt() {
        // min (x-2)^2 s.t. x <= 1: active bound with multiplier 2
        let case = analytic::box_qp();
        let result = solve(&case.problem, &case.start, &IpmOptions::default());
        assert_eq!(result.status, SolveStatus::Optimal);
        assert_relative_eq!(result.solution[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(result.upper_bound_multipliers[0], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn kkt_residuals_at_analytic_optimum() {
        let case = analytic::box_qp();
        let result = solve(&case.problem, &case.start, &IpmOptions::default());
        let res = kkt_residuals(
            &case.problem,
            &result.solution,
            &result.multipliers(),
            0.0,
        )
        .unwrap();
        assert!(res.stationarity < 1e-7, "stationarity {}", res.stationarity);
        assert!(res.feasibility < 1e-7);
        assert!(res.complementarity < 1e-7);

        // feasibility residual is exactly zero on an exactly feasible point
        let eq_case = analytic::equality_qp();
        let res = kkt_residuals(
            &eq_case.problem,
            &[0.5, 0.5],
            &MultiplierSet {
                eq: vec![0.0],
                ineq: vec![],
                lower: vec![0.0; 2],
                upper: vec![0.0; 2],
            },
            0.0,
        )
        .unwrap();
        assert!(res.feasibility < 1e-15);
    }

    #[test]
    fn residuals_decrease_over_final_iterations() {
        for case in analytic::battery() {
            let mut opts = IpmOptions::default();
            opts.record_trace = true;
            let result = solve(&case.problem, &case.start, &opts);
            assert_eq!(result.status, SolveStatus::Optimal);
            let trace = &result.stats.trace;
            if trace.len() >= 3 {
                let err = |r: &IterationRecord| {
                    r.stationarity.max(r.feasibility).max(r.complementarity)
                };
                let tail = &trace[trace.len() - 3..];
                assert!(
                    err(&tail[0]) >= err(&tail[1]) && err(&tail[1]) >= err(&tail[2]),
                    "{}: residuals not monotone over final 3 iterations: {:?}",
                    case.name,
                    tail.iter().map(err).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn slacks_stay_strictly_interior() {
        for case in analytic::battery() {
            let mut opts = IpmOptions::default();
            opts.record_trace = true;
            let result = solve(&case.problem, &case.start, &opts);
            for rec in &result.stats.trace {
                assert!(
                    rec.min_slack > 0.0,
                    "{}: slack hit the boundary (min {})",
                    case.name,
                    rec.min_slack
                );
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_iterates() {
        let case = analytic::inequality_qp();
        let mut opts = IpmOptions::default();
        opts.record_trace = true;
        let a = solve(&case.problem, &case.start, &opts);
        let b = solve(&case.problem, &case.start, &opts);
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.stats.iterations, b.stats.iterations);
        let key = |t: &[IterationRecord]| -> Vec<(f64, f64, f64)> {
            t.iter()
                .map(|r| (r.stationarity, r.feasibility, r.step_length))
                .collect()
        };
        assert_eq!(key(&a.stats.trace), key(&b.stats.trace));
    }
}
