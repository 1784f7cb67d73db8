//! Damped normal equations `(J^T W J + D) x = -J^T W r` and their solvers.
//!
//! The depth block is stored as a symmetric CSR matrix whose pattern comes
//! from the pixel graph and the correspondence taps; the camera unknowns
//! form a small dense border.

use std::sync::{Arc, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, SymbolicCholesky};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{Problem, SolverState, Term, CAMERA_UNKNOWNS};
use super::{LinearSolver, DENSE_LIMIT};
use crate::error::{Error, Result};

/// Sparsity pattern of the depth block: sorted column lists per row.
#[derive(Clone, Debug)]
pub(crate) struct Pattern {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    /// Sparse Cholesky plans without and with the camera border.
    cholesky: [OnceLock<Option<Arc<CholeskyPlan>>>; 2],
}

/// Where a stored entry of the lower triangle comes from.
#[derive(Clone, Copy, Debug)]
enum Slot {
    Depth(usize),
    Coupling(usize, usize),
    Camera(usize, usize),
}

/// Lower-triangular CSC layout of the full system and its symbolic
/// factorization, shared by every step of one problem.
#[derive(Debug)]
pub(crate) struct CholeskyPlan {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    slots: Vec<Slot>,
    symbolic: SymbolicCholesky<usize>,
}

impl Pattern {
    pub(crate) fn new(problem: &Problem) -> Self {
        let n = problem.n_pixels();
        let mut adj: Vec<Vec<u32>> = (0..n as u32).map(|i| vec![i]).collect();
        for &(p, q) in &problem.graph.edges {
            adj[p as usize].push(q);
            adj[q as usize].push(p);
        }
        for t in &problem.pairs {
            let taps: Vec<u32> = t.p.idx[..t.p.len].iter().chain(&t.q.idx[..t.q.len]).copied().collect();
            for &a in &taps {
                adj[a as usize].extend_from_slice(&taps);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(&row);
            row_ptr.push(cols.len());
        }
        Pattern {
            row_ptr,
            cols,
            cholesky: Default::default(),
        }
    }

    /// `None` when the symbolic analysis fails.
    fn cholesky_plan(&self, n_cam: usize) -> Option<Arc<CholeskyPlan>> {
        self.cholesky[usize::from(n_cam > 0)]
            .get_or_init(|| self.build_plan(n_cam).map(Arc::new))
            .clone()
    }

    fn build_plan(&self, n_cam: usize) -> Option<CholeskyPlan> {
        let n_z = self.row_ptr.len() - 1;
        let n = n_z + n_cam;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut slots = Vec::new();
        col_ptr.push(0);
        // the matrix is symmetric, so column j of the lower triangle is the
        // upper part of row j
        for j in 0..n_z {
            for k in self.row_ptr[j]..self.row_ptr[j + 1] {
                if self.cols[k] as usize >= j {
                    row_idx.push(self.cols[k] as usize);
                    slots.push(Slot::Depth(k));
                }
            }
            for c in 0..n_cam {
                row_idx.push(n_z + c);
                slots.push(Slot::Coupling(j, c));
            }
            col_ptr.push(row_idx.len());
        }
        for c in 0..n_cam {
            for d in c..n_cam {
                row_idx.push(n_z + d);
                slots.push(Slot::Camera(d, c));
            }
            col_ptr.push(row_idx.len());
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = factorize_symbolic_cholesky(sym, Side::Lower, Default::default(), Default::default()).ok()?;
        Some(CholeskyPlan {
            col_ptr,
            row_idx,
            slots,
            symbolic,
        })
    }

    fn position(&self, row: usize, col: u32) -> usize {
        let start = self.row_ptr[row];
        let slice = &self.cols[start..self.row_ptr[row + 1]];
        start + slice.binary_search(&col).expect("entry is in the pattern")
    }
}

/// Assembled damped normal equations.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    n_z: usize,
    n_cam: usize,
    pattern: std::sync::Arc<Pattern>,
    vals: Vec<f64>,
    /// Depth-camera coupling, one row per depth unknown.
    coupling: Vec<[f64; CAMERA_UNKNOWNS]>,
    cam: [[f64; CAMERA_UNKNOWNS]; CAMERA_UNKNOWNS],
    /// `-J^T W r`, depth unknowns first.
    pub rhs: Vec<f64>,
}

/// Outcome of a linear solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolve {
    pub x: Vec<f64>,
    pub method: LinearSolver,
    pub iterations: usize,
    /// `|b - A x| / |b|`.
    pub relative_residual: f64,
}

impl NormalEquations {
    /// Builds the system with per-row weights `weight(term, index)` (which
    /// include the tradeoff factors). `damping` is added to the diagonal of
    /// the camera block.
    pub(crate) fn assemble(
        problem: &Problem,
        st: &SolverState,
        weight: impl Fn(Term, usize) -> f64,
        optimize_camera: bool,
        damping: f64,
    ) -> NormalEquations {
        let n_z = problem.n_pixels();
        let n_cam = if optimize_camera { CAMERA_UNKNOWNS } else { 0 };
        let pattern = problem.pattern();
        let mut sys = NormalEquations {
            n_z,
            n_cam,
            vals: vec![0.0; pattern.cols.len()],
            pattern,
            coupling: vec![[0.0; CAMERA_UNKNOWNS]; n_z],
            cam: [[0.0; CAMERA_UNKNOWNS]; CAMERA_UNKNOWNS],
            rhs: vec![0.0; n_z + n_cam],
        };
        problem.visit_rows(st, |term, k, row| {
            let w = weight(term, k);
            if w == 0.0 {
                return;
            }
            let e = row.entries();
            for &(a, va) in e {
                let a = a as usize;
                sys.rhs[a] -= w * va * row.r;
                for &(b, vb) in e {
                    let pos = sys.pattern.position(a, b);
                    sys.vals[pos] += w * va * vb;
                }
                if optimize_camera {
                    for c in 0..CAMERA_UNKNOWNS {
                        sys.coupling[a][c] += w * va * row.cam[c];
                    }
                }
            }
            if optimize_camera {
                for c in 0..CAMERA_UNKNOWNS {
                    sys.rhs[n_z + c] -= w * row.cam[c] * row.r;
                    for d in 0..CAMERA_UNKNOWNS {
                        sys.cam[c][d] += w * row.cam[c] * row.cam[d];
                    }
                }
            }
        });
        for c in 0..n_cam {
            sys.cam[c][c] += damping;
        }
        sys
    }

    pub fn dim(&self) -> usize {
        self.n_z + self.n_cam
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        let (xz, xc) = x.split_at(self.n_z);
        for i in 0..self.n_z {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.vals[k] * xz[p.cols[k] as usize];
            }
            for c in 0..self.n_cam {
                acc += self.coupling[i][c] * xc[c];
            }
            y[i] = acc;
        }
        for c in 0..self.n_cam {
            let mut acc = 0.0;
            for (i, b) in self.coupling.iter().enumerate() {
                acc += b[c] * xz[i];
            }
            for d in 0..self.n_cam {
                acc += self.cam[c][d] * xc[d];
            }
            y[self.n_z + c] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let p = &self.pattern;
        let mut d: Vec<f64> = (0..self.n_z).map(|i| self.vals[p.position(i, i as u32)]).collect();
        d.extend((0..self.n_cam).map(|c| self.cam[c][c]));
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let p = &self.pattern;
        for i in 0..self.n_z {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                m[(i, p.cols[k] as usize)] = self.vals[k];
            }
            for c in 0..self.n_cam {
                m[(i, self.n_z + c)] = self.coupling[i][c];
                m[(self.n_z + c, i)] = self.coupling[i][c];
            }
        }
        for c in 0..self.n_cam {
            for d in 0..self.n_cam {
                m[(self.n_z + c, self.n_z + d)] = self.cam[c][d];
            }
        }
        m
    }

    fn relative_residual(&self, x: &[f64]) -> f64 {
        let bn = norm(&self.rhs);
        if bn == 0.0 {
            return 0.0;
        }
        let mut ax = vec![0.0; self.dim()];
        self.matvec(x, &mut ax);
        let r: f64 = ax.iter().zip(&self.rhs).map(|(a, b)| (b - a) * (b - a)).sum();
        r.sqrt() / bn
    }

    pub fn solve(&self, method: LinearSolver, tol: f64) -> Result<LinearSolve> {
        let method = match method {
            LinearSolver::Auto if self.dim() < DENSE_LIMIT => LinearSolver::Dense,
            LinearSolver::Auto => LinearSolver::SparseCholesky,
            m => m,
        };
        match method {
            LinearSolver::Dense => self.solve_dense(),
            LinearSolver::SparseCholesky => self.solve_sparse_cholesky(tol),
            _ => self.solve_pcg(tol),
        }
    }

    /// Sequential supernodal Cholesky, followed by up to
    /// [`MAX_REFINEMENTS`] rounds of iterative refinement while the
    /// relative residual exceeds `tol`. Falls back to [`Self::solve_pcg`]
    /// when the system is not numerically positive definite.
    pub fn solve_sparse_cholesky(&self, tol: f64) -> Result<LinearSolve> {
        let n = self.dim();
        let Some(plan) = self.pattern.cholesky_plan(self.n_cam) else {
            return self.solve_pcg(tol);
        };
        let vals: Vec<f64> = plan
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Depth(k) => self.vals[k],
                Slot::Coupling(i, c) => self.coupling[i][c],
                Slot::Camera(c, d) => self.cam[c][d],
            })
            .collect();
        let a = SparseColMatRef::new(
            SymbolicSparseColMatRef::new_checked(n, n, &plan.col_ptr, None, &plan.row_idx),
            &vals,
        );
        let sym = &plan.symbolic;
        let mut l_values = vec![0.0; sym.len_val()];
        let mut buf = MemBuffer::new(
            sym.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default())
                .or(sym.solve_in_place_scratch::<f64>(1, Par::Seq)),
        );
        let llt = match sym.factorize_numeric_llt(
            &mut l_values,
            a,
            Side::Lower,
            Default::default(),
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        ) {
            Ok(llt) => llt,
            Err(_) => return self.solve_pcg(tol),
        };
        let mut solve = |v: &mut [f64]| {
            llt.solve_in_place_with_conj(
                Conj::No,
                MatMut::from_column_major_slice_mut(v, n, 1),
                Par::Seq,
                MemStack::new(&mut buf),
            )
        };
        let mut x = self.rhs.clone();
        solve(&mut x);
        let mut rel = self.relative_residual(&x);
        let mut iterations = 1;
        while rel > tol && iterations <= MAX_REFINEMENTS {
            let mut ax = vec![0.0; n];
            self.matvec(&x, &mut ax);
            let mut d: Vec<f64> = self.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            solve(&mut d);
            let trial: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + d).collect();
            let trial_rel = self.relative_residual(&trial);
            iterations += 1;
            if !(trial_rel < rel) {
                break;
            }
            x = trial;
            rel = trial_rel;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return self.solve_pcg(tol);
        }
        Ok(LinearSolve {
            x,
            method: LinearSolver::SparseCholesky,
            iterations,
            relative_residual: rel,
        })
    }

    pub fn solve_dense(&self) -> Result<LinearSolve> {
        let b = DVector::from_column_slice(&self.rhs);
        let chol = self.to_dense().cholesky().ok_or_else(|| Error::Solver {
            message: format!("normal equations of size {} are not positive definite", self.dim()),
        })?;
        let x: Vec<f64> = chol.solve(&b).iter().copied().collect();
        let relative_residual = self.relative_residual(&x);
        Ok(LinearSolve {
            x,
            method: LinearSolver::Dense,
            iterations: 1,
            relative_residual,
        })
    }

    /// Conjugate gradient with a Jacobi preconditioner, stopping at
    /// `|r| <= tol |b|`.
    pub fn solve_pcg(&self, tol: f64) -> Result<LinearSolve> {
        let n = self.dim();
        let b = &self.rhs;
        let bn = norm(b);
        let mut x = vec![0.0; n];
        if bn == 0.0 {
            return Ok(LinearSolve {
                x,
                method: LinearSolver::ConjugateGradient,
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        let inv_diag: Vec<f64> = self
            .diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let max_iter = (10 * n).max(1000);
        for it in 1..=max_iter {
            self.matvec(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Solver {
                    message: format!("conjugate gradient broke down at iteration {it}: p^T A p = {pap:e}"),
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rel = norm(&r) / bn;
            if rel <= tol {
                return Ok(LinearSolve {
                    x,
                    method: LinearSolver::ConjugateGradient,
                    iterations: it,
                    relative_residual: rel,
                });
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solver {
            message: format!(
                "conjugate gradient did not reach relative residual {tol:e} in {max_iter} iterations (at {:e})",
                norm(&r) / bn
            ),
        })
    }
}

/// Iterative-refinement rounds after a sparse factorization.
const MAX_REFINEMENTS: usize = 3;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::problem::tests::random_instance;

    fn system(seed: u64, size: usize, cam: bool) -> NormalEquations {
        let p = random_instance(seed, size, 2 * size);
        let mut st = p.initial_state();
        for (i, z) in st.z.iter_mut().enumerate() {
            *z *= 1.0 + 0.1 * ((i * 7919 % 13) as f64 / 13.0 - 0.5);
        }
        st.camera.s *= 1.05;
        NormalEquations::assemble(&p, &st, |_, k| 0.3 + 0.7 * ((k * 31 % 17) as f64 / 17.0), cam, 1e-8)
    }

    #[test]
    fn matvec_agrees_with_the_dense_matrix() {
        let sys = system(1, 7, true);
        let dense = sys.to_dense();
        assert!((&dense - dense.transpose()).abs().max() < 1e-12);
        let x: Vec<f64> = (0..sys.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; sys.dim()];
        sys.matvec(&x, &mut y);
        let yd = &dense * DVector::from_column_slice(&x);
        for i in 0..sys.dim() {
            assert!((y[i] - yd[i]).abs() < 1e-10 * (1.0 + yd[i].abs()));
        }
    }

    #[test]
    fn conjugate_gradient_matches_the_dense_solve() {
        for (seed, cam) in [(2, true), (3, false), (4, true)] {
            let sys = system(seed, 12, cam);
            let d = sys.solve_dense().unwrap();
            let c = sys.solve_pcg(1e-12).unwrap();
            assert!(c.relative_residual <= 1e-12);
            let scale = d.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in d.x.iter().zip(&c.x) {
                assert!((a - b).abs() <= 1e-7 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero_step() {
        let mut sys = system(5, 6, true);
        sys.rhs.iter_mut().for_each(|v| *v = 0.0);
        for m in [LinearSolver::Dense, LinearSolver::SparseCholesky, LinearSolver::ConjugateGradient] {
            assert!(sys.solve(m, 1e-10).unwrap().x.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn auto_picks_by_size() {
        let small = system(6, 6, true);
        assert_eq!(small.solve(LinearSolver::Auto, 1e-10).unwrap().method, LinearSolver::Dense);
        let big = system(7, 24, true);
        assert!(big.dim() >= DENSE_LIMIT);
        assert_eq!(big.solve(LinearSolver::Auto, 1e-10).unwrap().method, LinearSolver::SparseCholesky);
    }

    #[test]
    fn sparse_cholesky_matches_the_dense_solve() {
        for (seed, cam) in [(8, true), (9, false), (10, true)] {
            let sys = system(seed, 12, cam);
            let d = sys.solve_dense().unwrap();
            let c = sys.solve_sparse_cholesky(1e-12).unwrap();
            assert_eq!(c.method, LinearSolver::SparseCholesky);
            assert!(c.relative_residual <= 1e-12, "{}", c.relative_residual);
            let scale = d.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in d.x.iter().zip(&c.x) {
                assert!((a - b).abs() <= 1e-7 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sparse_cholesky_reuses_the_plan_and_handles_zero_rhs() {
        let mut sys = system(11, 10, true);
        let first = sys.solve_sparse_cholesky(1e-10).unwrap();
        let again = sys.solve_sparse_cholesky(1e-10).unwrap();
        assert_eq!(first, again);
        sys.rhs.iter_mut().for_each(|v| *v = 0.0);
        assert!(sys.solve_sparse_cholesky(1e-10).unwrap().x.iter().all(|v| *v == 0.0));
    }
}
