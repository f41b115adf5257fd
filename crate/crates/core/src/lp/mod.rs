//! Linear programs over nonnegative variables and the simplex solver used
//! by the synthesis stage.

mod simplex;

use thiserror::Error;

use crate::scalar::Scalar;

pub use simplex::solve_lp;

/// Residual allowed on any constraint of an optimal solution.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Eq,
    /// `a·x ≥ rhs`
    Ge,
    /// `a·x ≤ rhs`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint<T> {
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, T)>,
    pub rhs: T,
    pub kind: ConstraintKind,
    pub label: String,
}

impl<T: Scalar> LinearConstraint<T> {
    pub fn eval(&self, x: &[T]) -> T {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[T]) -> T {
        let lhs = self.eval(x);
        match self.kind {
            ConstraintKind::Eq => (lhs - self.rhs).abs(),
            ConstraintKind::Ge => (self.rhs - lhs).max(T::zero()),
            ConstraintKind::Le => (lhs - self.rhs).max(T::zero()),
        }
    }
}

/// `minimize c·x` subject to linear rows and `x ≥ 0`.
///
/// Each variable carries a `(state, action)` label so solutions can be read
/// back as occupancy measures.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    pub labels: Vec<(usize, usize)>,
    pub objective: Vec<T>,
    pub constraints: Vec<LinearConstraint<T>>,
}

impl<T: Scalar> LpProblem<T> {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(c, v)| *c * *v).sum()
    }

    pub fn max_violation(&self, x: &[T]) -> T {
        let rows = self.constraints.iter().map(|c| c.violation(x));
        let bounds = x.iter().map(|v| (-*v).max(T::zero()));
        rows.chain(bounds).fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    /// Values of the problem variables; empty unless optimal.
    pub x: Vec<T>,
    pub objective_value: T,
    pub status: LpStatus,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP solver failed: {0}")]
    Solver(String),
    #[error("solution violates a constraint by {0:e}")]
    Residual(f64),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

impl LpError {
    pub fn code(&self) -> &'static str {
        "numerical_failure"
    }
}
