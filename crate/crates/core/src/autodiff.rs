//! Structured differentiable functions with exact sparse derivatives.
//!
//! A [`DifferentiableFunction`] is a sum of a constant, a sparse linear part,
//! and small nonlinear *atoms*, each reading a handful of entries of the
//! argument vector and writing into a slice of the output. Atoms are written
//! once, generically over [`Scalar`], and evaluated with [`Dual`] seeds for
//! Jacobian columns and [`HyperDual`] seed pairs for Hessian entries. Finite
//! differences never enter these paths; they exist only as a checking oracle
//! in [`fd`].

use crate::scalar::{Dual, HyperDual, Scalar};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FunctionError {
    #[error("evaluation produced a non-finite value at output {output}")]
    NonFinite { output: usize },
    #[error("argument has length {got}, function expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A small nonlinear map written generically over the scalar type.
///
/// Implementations must be branch-free in the scalar values (parameters may
/// be branched on) so that every instantiation computes the same expression.
pub trait SmoothMap: Send + Sync + 'static {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn apply<S: Scalar>(&self, x: &[S], out: &mut [S]);
}

/// Object-safe evaluation interface; blanket-implemented for every
/// [`SmoothMap`] so boxed atoms can be stored uniformly.
trait AtomEval: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn eval_f64(&self, x: &[f64], out: &mut [f64]);
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]);
    fn eval_hyperdual(&self, x: &[HyperDual], out: &mut [HyperDual]);
}

impl<M: SmoothMap> AtomEval for M {
    fn dims(&self) -> (usize, usize) {
        (self.n_in(), self.n_out())
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out)
    }
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) {
        self.apply(x, out)
    }
    fn eval_hyperdual(&self, x: &[HyperDual], out: &mut [HyperDual]) {
        self.apply(x, out)
    }
}

struct Block {
    atom: Box<dyn AtomEval>,
    /// Global argument index of each atom input.
    inputs: Vec<usize>,
    /// First output row the atom writes to.
    out_start: usize,
    /// The block contributes `scale · atom(q[inputs])` to its rows.
    scale: f64,
}

/// Sparse matrix in coordinate form with a fixed, sorted, duplicate-free
/// pattern. Row-major ordering of `pattern`; `values` is parallel to it.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub pattern: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        match self.pattern.binary_search(&(row, col)) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (k, &(i, j)) in self.pattern.iter().enumerate() {
            dense[i][j] = self.values[k];
        }
        dense
    }
}

/// Symmetric sparse matrix, stored as the lower triangle (`row ≥ col`).
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    pub n: usize,
    /// Sorted, duplicate-free lower-triangle pattern.
    pub pattern: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl SparseSymmetric {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let key = (row.max(col), row.min(col));
        match self.pattern.binary_search(&key) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (k, &(i, j)) in self.pattern.iter().enumerate() {
            dense[i][j] = self.values[k];
            dense[j][i] = self.values[k];
        }
        dense
    }
}

/// Builder for [`DifferentiableFunction`].
pub struct FunctionBuilder {
    n_in: usize,
    n_out: usize,
    constant: Vec<f64>,
    linear: Vec<(usize, usize, f64)>,
    blocks: Vec<Block>,
}

impl FunctionBuilder {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        FunctionBuilder {
            n_in,
            n_out,
            constant: vec![0.0; n_out],
            linear: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn constant_term(&mut self, row: usize, value: f64) -> &mut Self {
        assert!(row < self.n_out);
        self.constant[row] += value;
        self
    }

    pub fn linear_term(&mut self, row: usize, col: usize, value: f64) -> &mut Self {
        assert!(row < self.n_out && col < self.n_in);
        if value != 0.0 {
            self.linear.push((row, col, value));
        }
        self
    }

    /// Adds `scale · atom(q[inputs])` to rows `out_start ..`.
    pub fn atom<M: SmoothMap>(
        &mut self,
        atom: M,
        inputs: Vec<usize>,
        out_start: usize,
        scale: f64,
    ) -> &mut Self {
        assert_eq!(inputs.len(), atom.n_in());
        assert!(out_start + atom.n_out() <= self.n_out);
        assert!(inputs.iter().all(|&c| c < self.n_in));
        self.blocks.push(Block {
            atom: Box::new(atom),
            inputs,
            out_start,
            scale,
        });
        self
    }

    pub fn build(self) -> DifferentiableFunction {
        DifferentiableFunction::assemble(self)
    }
}

/// A vector-valued function with declared Jacobian and Hessian sparsity and
/// exact derivative evaluation.
pub struct DifferentiableFunction {
    n_in: usize,
    n_out: usize,
    constant: Vec<f64>,
    linear: Vec<(usize, usize, f64)>,
    blocks: Vec<Block>,
    jac_pattern: Vec<(usize, usize)>,
    /// Slot in `jac_pattern` for each linear entry, then for each block's
    /// (out, in) pairs in row-major order.
    jac_slots: Vec<usize>,
    hess_pattern: Vec<(usize, usize)>,
    /// Slot in `hess_pattern` for each block's local input pairs
    /// `(a, b), a ≤ b`, in lexicographic order.
    hess_slots: Vec<usize>,
    max_atom_in: usize,
    max_atom_out: usize,
}

impl DifferentiableFunction {
    fn assemble(b: FunctionBuilder) -> Self {
        let mut jac_entries: Vec<(usize, usize)> = Vec::new();
        for &(r, c, _) in &b.linear {
            jac_entries.push((r, c));
        }
        for blk in &b.blocks {
            let (ni, no) = blk.atom.dims();
            for r in 0..no {
                for a in 0..ni {
                    jac_entries.push((blk.out_start + r, blk.inputs[a]));
                }
            }
        }
        let (jac_pattern, jac_slots) = dedup_pattern(jac_entries);

        let mut hess_entries: Vec<(usize, usize)> = Vec::new();
        for blk in &b.blocks {
            let ni = blk.atom.dims().0;
            for a in 0..ni {
                for c in a..ni {
                    let (gi, gj) = (blk.inputs[a], blk.inputs[c]);
                    hess_entries.push((gi.max(gj), gi.min(gj)));
                }
            }
        }
        let (hess_pattern, hess_slots) = dedup_pattern(hess_entries);

        let max_atom_in = b.blocks.iter().map(|x| x.atom.dims().0).max().unwrap_or(0);
        let max_atom_out = b.blocks.iter().map(|x| x.atom.dims().1).max().unwrap_or(0);

        DifferentiableFunction {
            n_in: b.n_in,
            n_out: b.n_out,
            constant: b.constant,
            linear: b.linear,
            blocks: b.blocks,
            jac_pattern,
            jac_slots,
            hess_pattern,
            hess_slots,
            max_atom_in,
            max_atom_out,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }
    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Declared Jacobian sparsity: a superset of all structurally nonzero
    /// entries, sorted row-major.
    pub fn jacobian_pattern(&self) -> &[(usize, usize)] {
        &self.jac_pattern
    }

    /// Declared sparsity of `∇²(wᵀf)` for any weights, lower triangle.
    pub fn hessian_pattern(&self) -> &[(usize, usize)] {
        &self.hess_pattern
    }

    fn check_arg(&self, q: &[f64]) -> Result<(), FunctionError> {
        if q.len() != self.n_in {
            return Err(FunctionError::DimensionMismatch {
                expected: self.n_in,
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, q: &[f64], out: &mut [f64]) -> Result<(), FunctionError> {
        self.check_arg(q)?;
        assert_eq!(out.len(), self.n_out);
        out.copy_from_slice(&self.constant);
        for &(r, c, v) in &self.linear {
            out[r] += v * q[c];
        }
        let mut xin = vec![0.0; self.max_atom_in];
        let mut xout = vec![0.0; self.max_atom_out];
        for blk in &self.blocks {
            let (ni, no) = blk.atom.dims();
            for (a, &g) in blk.inputs.iter().enumerate() {
                xin[a] = q[g];
            }
            blk.atom.eval_f64(&xin[..ni], &mut xout[..no]);
            for r in 0..no {
                out[blk.out_start + r] += blk.scale * xout[r];
            }
        }
        for (i, v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(FunctionError::NonFinite { output: i });
            }
        }
        Ok(())
    }

    pub fn eval_vec(&self, q: &[f64]) -> Result<Vec<f64>, FunctionError> {
        let mut out = vec![0.0; self.n_out];
        self.eval(q, &mut out)?;
        Ok(out)
    }

    /// Writes Jacobian values aligned with [`Self::jacobian_pattern`].
    pub fn jacobian_values(&self, q: &[f64], values: &mut [f64]) -> Result<(), FunctionError> {
        self.check_arg(q)?;
        assert_eq!(values.len(), self.jac_pattern.len());
        values.fill(0.0);
        let mut slot = 0;
        for &(_, _, v) in &self.linear {
            values[self.jac_slots[slot]] += v;
            slot += 1;
        }
        let mut xin = vec![Dual::default(); self.max_atom_in];
        let mut xout = vec![Dual::default(); self.max_atom_out];
        for blk in &self.blocks {
            let (ni, no) = blk.atom.dims();
            // One dual sweep per atom input gives one Jacobian column.
            for a in 0..ni {
                for (k, &g) in blk.inputs.iter().enumerate() {
                    xin[k] = Dual::new(q[g], if k == a { 1.0 } else { 0.0 });
                }
                blk.atom.eval_dual(&xin[..ni], &mut xout[..no]);
                for r in 0..no {
                    let d = blk.scale * xout[r].d;
                    if !d.is_finite() {
                        return Err(FunctionError::NonFinite {
                            output: blk.out_start + r,
                        });
                    }
                    values[self.jac_slots[slot + r * ni + a]] += d;
                }
            }
            slot += ni * no;
        }
        Ok(())
    }

    pub fn jacobian(&self, q: &[f64]) -> Result<SparseMatrix, FunctionError> {
        let mut values = vec![0.0; self.jac_pattern.len()];
        self.jacobian_values(q, &mut values)?;
        Ok(SparseMatrix {
            nrows: self.n_out,
            ncols: self.n_in,
            pattern: self.jac_pattern.clone(),
            values,
        })
    }

    /// Dense gradient of `weightsᵀ f`; with `n_out == 1` and a unit weight this
    /// is the plain gradient.
    pub fn weighted_gradient(
        &self,
        q: &[f64],
        weights: &[f64],
        grad: &mut [f64],
    ) -> Result<(), FunctionError> {
        self.check_arg(q)?;
        assert_eq!(weights.len(), self.n_out);
        assert_eq!(grad.len(), self.n_in);
        grad.fill(0.0);
        for &(r, c, v) in &self.linear {
            grad[c] += weights[r] * v;
        }
        let mut xin = vec![Dual::default(); self.max_atom_in];
        let mut xout = vec![Dual::default(); self.max_atom_out];
        for blk in &self.blocks {
            let (ni, no) = blk.atom.dims();
            for a in 0..ni {
                for (k, &g) in blk.inputs.iter().enumerate() {
                    xin[k] = Dual::new(q[g], if k == a { 1.0 } else { 0.0 });
                }
                blk.atom.eval_dual(&xin[..ni], &mut xout[..no]);
                let mut acc = 0.0;
                for r in 0..no {
                    acc += weights[blk.out_start + r] * xout[r].d;
                }
                let d = blk.scale * acc;
                if !d.is_finite() {
                    return Err(FunctionError::NonFinite {
                        output: blk.out_start,
                    });
                }
                grad[blk.inputs[a]] += d;
            }
        }
        Ok(())
    }

    /// Accumulates `scale · ∇²(weightsᵀ f)(q)` into `values`, which is aligned
    /// with [`Self::hessian_pattern`]. Callers zero `values` beforehand when a
    /// fresh Hessian is wanted.
    pub fn add_weighted_hessian(
        &self,
        q: &[f64],
        weights: &[f64],
        scale: f64,
        values: &mut [f64],
    ) -> Result<(), FunctionError> {
        self.check_arg(q)?;
        assert_eq!(weights.len(), self.n_out);
        assert_eq!(values.len(), self.hess_pattern.len());
        let mut xin = vec![HyperDual::default(); self.max_atom_in];
        let mut xout = vec![HyperDual::default(); self.max_atom_out];
        let mut slot = 0;
        for blk in &self.blocks {
            let (ni, no) = blk.atom.dims();
            let w = blk.scale * scale;
            // Skip atoms whose rows all carry zero weight; their second
            // derivatives cannot contribute.
            let active = (0..no).any(|r| weights[blk.out_start + r] != 0.0);
            if !active {
                slot += ni * (ni + 1) / 2;
                continue;
            }
            for a in 0..ni {
                for c in a..ni {
                    for (k, &g) in blk.inputs.iter().enumerate() {
                        xin[k] = HyperDual::new(
                            q[g],
                            if k == a { 1.0 } else { 0.0 },
                            if k == c { 1.0 } else { 0.0 },
                            0.0,
                        );
                    }
                    blk.atom.eval_hyperdual(&xin[..ni], &mut xout[..no]);
                    let mut acc = 0.0;
                    for r in 0..no {
                        acc += weights[blk.out_start + r] * xout[r].d12;
                    }
                    let h = w * acc;
                    if !h.is_finite() {
                        return Err(FunctionError::NonFinite {
                            output: blk.out_start,
                        });
                    }
                    values[self.hess_slots[slot]] += h;
                    slot += 1;
                }
            }
        }
        Ok(())
    }
}

/// Exact Hessian of the Lagrangian `σ·φ + λᵀc` at `q`.
///
/// `φ` must be scalar-valued and `λ` must match the output dimension of `c`.
pub fn hessian_of_lagrangian(
    phi: &DifferentiableFunction,
    c: &DifferentiableFunction,
    lambda: &[f64],
    sigma: f64,
    q: &[f64],
) -> Result<SparseSymmetric, FunctionError> {
    assert_eq!(phi.n_out(), 1);
    assert_eq!(c.n_out(), lambda.len());
    assert_eq!(phi.n_in(), c.n_in());
    let (pattern, maps) = merge_patterns(&[phi.hessian_pattern(), c.hessian_pattern()]);
    let mut values = vec![0.0; pattern.len()];

    let mut phi_vals = vec![0.0; phi.hessian_pattern().len()];
    phi.add_weighted_hessian(q, &[1.0], sigma, &mut phi_vals)?;
    for (k, &m) in maps[0].iter().enumerate() {
        values[m] += phi_vals[k];
    }
    let mut c_vals = vec![0.0; c.hessian_pattern().len()];
    c.add_weighted_hessian(q, lambda, 1.0, &mut c_vals)?;
    for (k, &m) in maps[1].iter().enumerate() {
        values[m] += c_vals[k];
    }
    Ok(SparseSymmetric {
        n: phi.n_in(),
        pattern,
        values,
    })
}

/// Sorts and deduplicates `entries`, returning the pattern plus the slot of
/// each original entry.
fn dedup_pattern(entries: Vec<(usize, usize)>) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut sorted: Vec<(usize, usize)> = entries.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let index: HashMap<(usize, usize), usize> =
        sorted.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let slots = entries.iter().map(|e| index[e]).collect();
    (sorted, slots)
}

/// Merges several sorted patterns into one, returning per-input slot maps.
pub fn merge_patterns(
    patterns: &[&[(usize, usize)]],
) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let mut union: Vec<(usize, usize)> = patterns.concat();
    union.sort_unstable();
    union.dedup();
    let index: HashMap<(usize, usize), usize> =
        union.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let maps = patterns
        .iter()
        .map(|p| p.iter().map(|e| index[e]).collect())
        .collect();
    (union, maps)
}

/// Central finite differences, used as an independent oracle in tests and the
/// CLI self-test. Never called from solver code paths.
pub mod fd {
    /// Step for coordinate `i`: `1e-6·max(1, |qᵢ|)`.
    pub fn step(qi: f64) -> f64 {
        1e-6 * qi.abs().max(1.0)
    }

    /// Dense central-difference Jacobian of `f` at `q`.
    pub fn jacobian<F>(f: F, q: &[f64], n_out: usize) -> Vec<Vec<f64>>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let n = q.len();
        let mut jac = vec![vec![0.0; n]; n_out];
        let mut qp = q.to_vec();
        for i in 0..n {
            let h = step(q[i]);
            qp[i] = q[i] + h;
            let fp = f(&qp);
            qp[i] = q[i] - h;
            let fm = f(&qp);
            qp[i] = q[i];
            for r in 0..n_out {
                jac[r][i] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        jac
    }

    /// Dense central-difference gradient of a scalar function.
    pub fn gradient<F>(f: F, q: &[f64]) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = q.len();
        let mut grad = vec![0.0; n];
        let mut qp = q.to_vec();
        for i in 0..n {
            let h = step(q[i]);
            qp[i] = q[i] + h;
            let fp = f(&qp);
            qp[i] = q[i] - h;
            let fm = f(&qp);
            qp[i] = q[i];
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grad
    }

    /// Largest elementwise deviation `|a−b| / max(1, |a|, |b|)`.
    pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
            .fold(0.0, f64::max)
    }
}
