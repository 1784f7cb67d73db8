//! Joint refinement of per-pixel depth and the camera.
//!
//! Three robust terms are minimized together: agreement of the ray depth
//! with its initial estimate, perpendicularity of neighbouring surface steps
//! to the estimated normals, and mirror consistency of corresponding world
//! points. Each outer iteration recomputes robust weights from the current
//! residuals and takes one or more damped Gauss-Newton steps on the
//! weighted least-squares surrogate, with a backtracking line search.
//!
//! Unknowns are the depth of every masked pixel and, unless frozen, the
//! camera increments `(c_y, c_z, t_x, s)`. The rotation increment about
//! world x is omitted: it commutes with the mirror and leaves every term
//! unchanged, so it is a null direction of the problem.

mod irls;
mod linear;
mod problem;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use irls::{
    gauss_newton_step, median, refine, update_weights, Refined, RefineReport, StepIncrement,
    StepRecord, Termination, WeightHistograms, Weights,
};
pub use linear::{LinearSolve, NormalEquations};
pub use problem::{
    Objective, PairTerm, PixelGraph, Problem, Residuals, SolverState, CAMERA_UNKNOWNS,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tradeoffs {
    /// Weight of the normal term.
    pub lambda: f64,
    /// Weight of the symmetry term.
    pub mu: f64,
}

impl Default for Tradeoffs {
    fn default() -> Self {
        Tradeoffs {
            lambda: 1.0,
            mu: 1.0,
        }
    }
}

impl Tradeoffs {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Tradeoffs { lambda, mu }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("solver.lambda", self.lambda), ("solver.mu", self.mu)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::schema(name, "must be a finite non-negative number"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    /// Dense Cholesky below [`DENSE_LIMIT`] unknowns, sparse Cholesky above.
    #[default]
    Auto,
    Dense,
    /// Fill-reducing sparse Cholesky; falls back to conjugate gradient when
    /// the factorization breaks down.
    SparseCholesky,
    ConjugateGradient,
}

/// Largest system solved densely by [`LinearSolver::Auto`].
pub const DENSE_LIMIT: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tradeoffs: Tradeoffs,
    pub max_outer_iters: usize,
    pub gn_steps_per_reweight: usize,
    /// Relative change of the robust objective below which iteration stops.
    pub converge_tol: f64,
    /// Diagonal damping added to the camera block of the normal equations.
    pub damping: f64,
    pub line_search_max_halvings: usize,
    pub optimize_camera: bool,
    /// Relative residual at which the iterative linear solve stops.
    pub linear_solver_tol: f64,
    pub linear_solver: LinearSolver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tradeoffs: Tradeoffs::default(),
            max_outer_iters: 30,
            gn_steps_per_reweight: 1,
            converge_tol: 1e-6,
            damping: 1e-8,
            line_search_max_halvings: 10,
            optimize_camera: true,
            linear_solver_tol: 1e-10,
            linear_solver: LinearSolver::Auto,
        }
    }
}

impl SolverConfig {
    pub fn with_tradeoffs(lambda: f64, mu: f64) -> Self {
        SolverConfig {
            tradeoffs: Tradeoffs::new(lambda, mu),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tradeoffs.validate()?;
        if self.max_outer_iters == 0 {
            return Err(Error::schema("solver.max_outer_iters", "must be at least 1"));
        }
        if self.gn_steps_per_reweight == 0 {
            return Err(Error::schema("solver.gn_steps_per_reweight", "must be at least 1"));
        }
        for (name, v) in [
            ("solver.converge_tol", self.converge_tol),
            ("solver.damping", self.damping),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::schema(name, "must be a finite non-negative number"));
            }
        }
        if !(self.linear_solver_tol > 0.0) || !self.linear_solver_tol.is_finite() {
            return Err(Error::schema("solver.linear_solver_tol", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = SolverConfig::default();
        assert_eq!((c.max_outer_iters, c.gn_steps_per_reweight), (30, 1));
        assert_eq!((c.converge_tol, c.damping, c.linear_solver_tol), (1e-6, 1e-8, 1e-10));
        assert!(c.validate().is_ok());
        assert!(SolverConfig::with_tradeoffs(-1.0, 1.0).validate().is_err());
        assert!(SolverConfig { max_outer_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { linear_solver_tol: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn config_documents_fill_defaults_and_reject_typos() {
        let c: SolverConfig =
            serde_json::from_str(r#"{"tradeoffs": {"mu": 3}, "optimize_camera": false}"#).unwrap();
        assert_eq!(c.tradeoffs, Tradeoffs::new(1.0, 3.0));
        assert!(!c.optimize_camera);
        assert!(serde_json::from_str::<SolverConfig>(r#"{"tradeoffs": {"lamda": 1}}"#).is_err());
    }
}
