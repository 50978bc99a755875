//! Sparse symmetric positive definite solves for the full-order model.
//!
//! The default path is a sparse Cholesky factorization (faer, fill-reducing
//! ordering) followed by residual-checked iterative refinement. Systems above
//! [`SolverOptions::direct_limit`] unknowns, or whose factorization fails, go
//! through Jacobi-preconditioned conjugate gradients.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target relative residual `||b - Ax|| / ||b||`.
    pub tolerance: f64,
    pub direct_limit: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            direct_limit: 400_000,
            max_iterations: 20_000,
        }
    }
}

/// Compressed sparse row matrix assembled from (row, col, value) triplets;
/// duplicate entries are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                triplets.push(Triplet::new(r, c, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::Config(format!("sparse matrix assembly failed: {e:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.apply(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    assert_eq!(b.len(), a.dim(), "rhs length");
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; a.dim()],
            relative_residual: 0.0,
            iterations: 0,
        });
    }
    if a.dim() <= opts.direct_limit {
        match solve_direct(a, b, b_norm, opts) {
            Ok(sol) => return Ok(sol),
            Err(e) => log::warn!("direct solve failed ({e}); falling back to CG"),
        }
    }
    solve_cg(a, b, b_norm, opts)
}

fn solve_direct(a: &CsrMatrix, b: &[f64], b_norm: f64, opts: &SolverOptions) -> Result<Solution> {
    let mat = a.to_faer()?;
    let llt = mat
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Config(format!("matrix is not positive definite: {e:?}")))?;
    let n = a.dim();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut history = Vec::new();
    for sweep in 0..4 {
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
        llt.solve_in_place(rhs.as_mut());
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += rhs[(i, 0)];
        }
        r = residual(a, &x, b);
        let rel = norm(&r) / b_norm;
        history.push(rel);
        if rel <= opts.tolerance {
            return Ok(Solution {
                x,
                relative_residual: rel,
                iterations: sweep + 1,
            });
        }
    }
    Err(Error::SolverDivergence { history })
}

fn solve_cg(a: &CsrMatrix, b: &[f64], b_norm: f64, opts: &SolverOptions) -> Result<Solution> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 0..opts.max_iterations {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Config(
                "CG met a non-positive curvature direction; matrix is not SPD".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / b_norm;
        if it % 50 == 0 {
            history.push(rel);
        }
        if rel <= opts.tolerance {
            // recompute the true residual, the recursive one drifts
            let true_rel = norm(&residual(a, &x, b)) / b_norm;
            if true_rel <= opts.tolerance * 10.0 {
                return Ok(Solution {
                    x,
                    relative_residual: true_rel,
                    iterations: it + 1,
                });
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    history.push(norm(&residual(a, &x, b)) / b_norm);
    Err(Error::SolverDivergence { history })
}
