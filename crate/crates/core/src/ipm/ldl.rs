//! Sparse LDLᵀ factorization of symmetric quasi-definite KKT matrices.
//!
//! The elimination order is fixed up front (reverse Cuthill–McKee keeps the
//! transcribed KKT systems banded), the elimination tree and column counts are
//! computed once per sparsity pattern, and each interior-point iteration only
//! refactors numerically. Diagonal entries whose sign disagrees with their
//! declared block (primal +, dual −) are nudged by a tiny static perturbation;
//! iterative refinement against the unperturbed matrix restores accuracy. The
//! sign counts of `D` expose the matrix inertia for the solver's
//! regularization loop.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum LdlError {
    #[error("matrix is structurally singular at column {0}")]
    ZeroPivot(usize),
}

/// Upper-triangular sparse matrix in compressed-column form, including the
/// full diagonal.
#[derive(Debug, Clone)]
pub struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
}

impl UpperCsc {
    /// Builds the pattern from sorted, deduplicated upper-triangle entries
    /// `(row, col)` with `row ≤ col`; every diagonal entry must be present.
    pub fn from_pattern(n: usize, entries: &[(usize, usize)]) -> Self {
        let mut colptr = vec![0usize; n + 1];
        for &(_, c) in entries {
            colptr[c + 1] += 1;
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        let rowidx = entries.iter().map(|&(r, _)| r).collect();
        UpperCsc {
            n,
            colptr,
            rowidx,
            values: vec![0.0; entries.len()],
        }
    }

    /// `y += A x` for the full symmetric matrix represented by this triangle.
    pub fn sym_mul_add(&self, x: &[f64], y: &mut [f64]) {
        for col in 0..self.n {
            for k in self.colptr[col]..self.colptr[col + 1] {
                let row = self.rowidx[k];
                let v = self.values[k];
                y[row] += v * x[col];
                if row != col {
                    y[col] += v * x[row];
                }
            }
        }
    }
}

/// Reverse Cuthill–McKee ordering of the symmetric pattern given by
/// upper-triangle entries. Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(n: usize, entries: &[(usize, usize)]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    // adjacency (excluding the diagonal)
    let mut degree = vec![0usize; n];
    for &(r, c) in entries {
        if r != c {
            degree[r] += 1;
            degree[c] += 1;
        }
    }
    let mut offset = vec![0usize; n + 1];
    for i in 0..n {
        offset[i + 1] = offset[i] + degree[i];
    }
    let mut adj = vec![0usize; offset[n]];
    let mut cursor = offset.clone();
    for &(r, c) in entries {
        if r != c {
            adj[cursor[r]] = c;
            cursor[r] += 1;
            adj[cursor[c]] = r;
            cursor[c] += 1;
        }
    }
    for i in 0..n {
        adj[offset[i]..offset[i + 1]].sort_unstable();
    }

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    // process components from their minimum-degree start nodes
    let mut starts: Vec<usize> = (0..n).collect();
    starts.sort_by_key(|&i| (degree[i], i));
    for &start in &starts {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            order.push(node);
            let mut neighbors: Vec<usize> = adj[offset[node]..offset[node + 1]]
                .iter()
                .copied()
                .filter(|&m| !visited[m])
                .collect();
            neighbors.sort_by_key(|&m| (degree[m], m));
            for m in neighbors {
                visited[m] = true;
                queue.push_back(m);
            }
        }
    }
    order.reverse();
    order
}

/// Symbolic data reused across numeric refactorizations.
#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    n: usize,
    etree: Vec<usize>,
    l_colptr: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl SymbolicLdl {
    /// Elimination tree and factor column counts from an upper CSC pattern.
    pub fn analyze(pattern: &UpperCsc) -> Self {
        let n = pattern.n;
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for j in 0..n {
            mark[j] = j;
            for k in pattern.colptr[j]..pattern.colptr[j + 1] {
                let mut i = pattern.rowidx[k];
                if i == j {
                    continue;
                }
                while mark[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    mark[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for i in 0..n {
            l_colptr[i + 1] = l_colptr[i] + lnz[i];
        }
        SymbolicLdl { n, etree, l_colptr }
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_colptr[self.n]
    }
}

/// Numeric LDLᵀ factor with inertia information.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    l_colptr: Vec<usize>,
    l_rowidx: Vec<usize>,
    l_values: Vec<f64>,
    /// Diagonal of the factorization; sign pattern carries the inertia.
    pub d: Vec<f64>,
    d_inv: Vec<f64>,
    /// Counts of positive and negative entries of `D`.
    pub n_positive: usize,
    pub n_negative: usize,
    /// Number of pivots whose sign had to be forced.
    pub n_regularized: usize,
}

/// Expected sign of each diagonal entry: `+1` for primal rows, `-1` for dual
/// rows of a KKT system.
pub fn factor(
    matrix: &UpperCsc,
    symbolic: &SymbolicLdl,
    signs: &[i8],
) -> Result<LdlFactor, LdlError> {
    // pivots whose magnitude falls below this are snapped to ±STATIC_PIVOT
    const PIVOT_EPS: f64 = 1e-13;
    const STATIC_PIVOT: f64 = 1e-8;

    let n = matrix.n;
    assert_eq!(symbolic.n, n);
    assert_eq!(signs.len(), n);
    let l_colptr = symbolic.l_colptr.clone();
    let mut l_rowidx = vec![0usize; symbolic.factor_nnz()];
    let mut l_values = vec![0.0; symbolic.factor_nnz()];
    let mut d = vec![0.0; n];
    let mut d_inv = vec![0.0; n];

    let mut y = vec![0.0; n];
    let mut pattern = vec![0usize; n];
    let mut flag = vec![NONE; n];
    let mut next = l_colptr[..n].to_vec();

    let mut n_positive = 0usize;
    let mut n_negative = 0usize;
    let mut n_regularized = 0usize;

    for k in 0..n {
        // Sparse triangular solve for row k of L using the elimination tree.
        let mut top = n;
        flag[k] = k;
        y[k] = 0.0;
        for p in matrix.colptr[k]..matrix.colptr[k + 1] {
            let i = matrix.rowidx[p];
            y[i] = matrix.values[p];
            let mut len = 0usize;
            let mut node = i;
            while flag[node] != k {
                pattern[len] = node;
                len += 1;
                flag[node] = k;
                node = symbolic.etree[node];
            }
            // reverse the path onto the stack
            while len > 0 {
                len -= 1;
                top -= 1;
                pattern[top] = pattern[len];
            }
        }
        let mut dk = y[k];
        y[k] = 0.0;
        for &i in &pattern[top..n] {
            let yi = y[i];
            y[i] = 0.0;
            for p in l_colptr[i]..next[i] {
                y[l_rowidx[p]] -= l_values[p] * yi;
            }
            let lki = yi * d_inv[i];
            dk -= lki * yi;
            l_rowidx[next[i]] = k;
            l_values[next[i]] = lki;
            next[i] += 1;
        }

        let sign = f64::from(signs[k]);
        if dk * sign < PIVOT_EPS {
            if sign == 0.0 {
                return Err(LdlError::ZeroPivot(k));
            }
            // Keep the count honest: only pivots already on the declared side
            // of zero (or exactly zero) are treated as round-off; genuinely
            // flipped pivots keep their sign so the inertia check can see them.
            if dk * sign > -PIVOT_EPS {
                dk = STATIC_PIVOT * sign;
                n_regularized += 1;
            }
        }
        if dk == 0.0 {
            return Err(LdlError::ZeroPivot(k));
        }
        if dk > 0.0 {
            n_positive += 1;
        } else {
            n_negative += 1;
        }
        d[k] = dk;
        d_inv[k] = 1.0 / dk;
    }

    Ok(LdlFactor {
        n,
        l_colptr,
        l_rowidx,
        l_values,
        d,
        d_inv,
        n_positive,
        n_negative,
        n_regularized,
    })
}

impl LdlFactor {
    /// Solves `(LDLᵀ) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for j in 0..self.n {
            let bj = b[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                b[self.l_rowidx[p]] -= self.l_values[p] * bj;
            }
        }
        for j in 0..self.n {
            b[j] *= self.d_inv[j];
        }
        for j in (0..self.n).rev() {
            let mut bj = b[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                bj -= self.l_values[p] * b[self.l_rowidx[p]];
            }
            b[j] = bj;
        }
    }

    /// Solves `A x = b` with a fixed number of refinement sweeps against the
    /// assembled matrix, recovering the accuracy lost to pivot perturbations.
    pub fn solve_refined(&self, matrix: &UpperCsc, b: &[f64], sweeps: usize) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        let mut residual = vec![0.0; self.n];
        for _ in 0..sweeps {
            // residual = b − A x
            let mut ax = vec![0.0; self.n];
            matrix.sym_mul_add(&x, &mut ax);
            for i in 0..self.n {
                residual[i] = b[i] - ax[i];
            }
            self.solve_in_place(&mut residual);
            for i in 0..self.n {
                x[i] += residual[i];
            }
        }
        x
    }
}
