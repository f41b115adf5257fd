//! Two-phase primal simplex on a dense tableau.
//!
//! Artificial columns are never stored: they only ever leave the basis, so
//! the tableau holds the structural and slack columns. Pivots touch only the
//! nonzero entries of the pivot row, which keeps the sparse flow-balance
//! programs of the synthesis stage cheap.
//!
//! The tableau is always held in `f64`. Leaving rows are picked with a
//! two-pass (Harris) ratio test that prefers large pivots among near ties,
//! and at the end of each phase the tableau is rebuilt from the original
//! columns through an explicit basis inverse. Pivoting resumes if the
//! rebuilt tableau is not yet optimal, so accumulated roundoff never reaches
//! the reported solution.

use super::{ConstraintKind, LpError, LpProblem, LpSolution, LpStatus, FEASIBILITY_TOLERANCE};
use crate::linalg::invert_dense;
use crate::scalar::Scalar;

/// Reduced costs above `-OPTIMALITY` count as nonnegative.
const OPTIMALITY: f64 = 1e-10;
/// Smallest admissible pivot magnitude.
const PIVOT: f64 = 1e-9;
/// Primal infeasibility the ratio test may introduce and later clamp.
const HARRIS: f64 = 1e-10;
/// Entries below this after elimination are flushed to zero.
const FLUSH: f64 = 1e-14;
/// Phase-one objective (relative) above which the problem is infeasible.
const INFEASIBLE: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 64;
/// Rebuild-and-resume rounds per phase.
const MAX_REFRESH: usize = 8;

struct Tableau {
    m: usize,
    cols: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    /// Basic column of each row; `>= cols` marks an artificial.
    basis: Vec<usize>,
    /// Rows found redundant after phase one; excluded from ratio tests.
    dead: Vec<bool>,
    d: Vec<f64>,
    nz: Vec<usize>,
    /// Original (sign-normalized) columns, sparse by row.
    columns: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
}

enum Step {
    Optimal,
    Unbounded(usize),
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let inv = 1.0 / self.at(r, q);
        self.nz.clear();
        {
            let row = &mut self.a[r * cols..(r + 1) * cols];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    self.nz.push(j);
                }
            }
            row[q] = 1.0;
        }
        self.rhs[r] = (self.rhs[r] * inv).max(0.0);
        let rhs_r = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + q];
            if f == 0.0 {
                continue;
            }
            let (lo, hi) = self.a.split_at_mut(i.max(r) * cols);
            let (row_i, row_r) = if i < r {
                (&mut lo[i * cols..(i + 1) * cols], &hi[..cols])
            } else {
                (&mut hi[..cols], &lo[r * cols..(r + 1) * cols])
            };
            for &j in &self.nz {
                let v = row_i[j] - f * row_r[j];
                row_i[j] = if v.abs() < FLUSH { 0.0 } else { v };
            }
            row_i[q] = 0.0;
            // the ratio test tolerates tiny negative values; clamp them here
            let v = self.rhs[i] - f * rhs_r;
            self.rhs[i] = if v < HARRIS && v > -HARRIS { v.max(0.0) } else { v };
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &self.nz {
                self.d[j] -= f * self.a[r * cols + j];
            }
        }
        self.d[q] = 0.0;
        self.basis[r] = q;
    }

    /// Picks the leaving row for entering column `q`.
    fn ratio_test(&self, q: usize, bland: bool) -> Option<usize> {
        let candidates = || (0..self.m).filter(|&i| !self.dead[i] && self.at(i, q) > PIVOT);
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for i in candidates() {
                let ratio = self.rhs[i].max(0.0) / self.at(i, q);
                best = match best {
                    Some((li, lr)) if ratio > lr + 1e-12 * (1.0 + lr) => Some((li, lr)),
                    Some((li, lr)) if ratio >= lr - 1e-12 * (1.0 + lr) && self.basis[li] < self.basis[i] => {
                        Some((li, lr))
                    }
                    _ => Some((i, ratio)),
                };
            }
            return best.map(|(i, _)| i);
        }
        let bound = candidates()
            .map(|i| (self.rhs[i].max(0.0) + HARRIS) / self.at(i, q))
            .fold(f64::INFINITY, f64::min);
        candidates()
            .filter(|&i| self.rhs[i].max(0.0) / self.at(i, q) <= bound)
            .max_by(|&x, &y| self.at(x, q).total_cmp(&self.at(y, q)))
    }

    /// Runs pivots until optimal or unbounded; `iterations` is shared across phases.
    fn optimize(&mut self, iterations: &mut usize, limit: usize) -> Result<Step, LpError> {
        let mut streak = 0usize;
        loop {
            let bland = streak >= DEGENERATE_STREAK;
            let mut q = None;
            let mut best = -OPTIMALITY;
            for j in 0..self.cols {
                if self.d[j] < best {
                    q = Some(j);
                    if bland {
                        break;
                    }
                    best = self.d[j];
                }
            }
            let Some(q) = q else { return Ok(Step::Optimal) };
            if *iterations >= limit {
                return Err(LpError::Solver(format!("iteration limit {limit} reached")));
            }
            *iterations += 1;
            let Some(r) = self.ratio_test(q, bland) else { return Ok(Step::Unbounded(q)) };
            if self.rhs[r] / self.at(r, q) <= 1e-14 {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(r, q);
        }
    }

    /// Rebuilds tableau, right-hand side and reduced costs from the original
    /// columns for the current basis. `cost` covers the stored columns;
    /// artificials cost `artificial_cost`.
    fn refresh(&mut self, cost: &[f64], artificial_cost: f64) -> Result<(), LpError> {
        let (m, cols) = (self.m, self.cols);
        let mut basis_matrix = vec![0.0; m * m];
        for (k, &b) in self.basis.iter().enumerate() {
            if b >= cols {
                basis_matrix[(b - cols) * m + k] = 1.0;
            } else {
                for &(i, v) in &self.columns[b] {
                    basis_matrix[i * m + k] = v;
                }
            }
        }
        let inv = invert_dense(basis_matrix, m).ok_or_else(|| LpError::Solver("singular basis".into()))?;
        // column-major copy so that the product loops run over contiguous memory
        let mut inv_t = vec![0.0; m * m];
        for k in 0..m {
            for i in 0..m {
                inv_t[i * m + k] = inv[k * m + i];
            }
        }
        self.a.fill(0.0);
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                let src = &inv_t[i * m..(i + 1) * m];
                for (k, &w) in src.iter().enumerate() {
                    if w != 0.0 {
                        self.a[k * cols + j] += w * v;
                    }
                }
            }
        }
        for v in self.a.iter_mut() {
            if v.abs() < FLUSH {
                *v = 0.0;
            }
        }
        for k in 0..m {
            let row = &inv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&self.b).map(|(w, b)| w * b).sum();
            self.rhs[k] = if v > -HARRIS { v.max(0.0) } else { v };
        }
        let basic_cost: Vec<f64> =
            self.basis.iter().map(|&b| if b >= cols { artificial_cost } else { cost[b] }).collect();
        let mut y = vec![0.0; m];
        for (k, &cb) in basic_cost.iter().enumerate() {
            if cb != 0.0 {
                for (yi, &w) in y.iter_mut().zip(&inv[k * m..(k + 1) * m]) {
                    *yi += cb * w;
                }
            }
        }
        for (j, col) in self.columns.iter().enumerate() {
            self.d[j] = cost[j] - col.iter().map(|&(i, v)| y[i] * v).sum::<f64>();
        }
        for &b in &self.basis {
            if b < cols {
                self.d[b] = 0.0;
            }
        }
        Ok(())
    }

    /// Optimizes, rebuilds, and resumes until the rebuilt tableau is optimal.
    fn solve_phase(
        &mut self,
        cost: &[f64],
        artificial_cost: f64,
        iterations: &mut usize,
        limit: usize,
    ) -> Result<Step, LpError> {
        for _ in 0..MAX_REFRESH {
            if let Step::Unbounded(q) = self.optimize(iterations, limit)? {
                return Ok(Step::Unbounded(q));
            }
            self.refresh(cost, artificial_cost)?;
            let primal_ok = self.rhs.iter().all(|&v| v >= 0.0);
            let dual_ok = self.d.iter().all(|&v| v >= -OPTIMALITY);
            if primal_ok && dual_ok {
                return Ok(Step::Optimal);
            }
            if !primal_ok {
                log::debug!("simplex: basis lost primal feasibility after rebuild; clamping");
                for v in self.rhs.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        Err(LpError::Solver("tableau did not settle after repeated rebuilds".into()))
    }
}

/// Solves `minimize c·x` s.t. the problem's rows and `x ≥ 0`.
///
/// Returns an optimal basic solution whose constraint residuals are within
/// [`FEASIBILITY_TOLERANCE`], or an infeasible/unbounded status. A solution
/// that fails the residual check is reported as [`LpError::Residual`].
pub fn solve_lp<T: Scalar>(problem: &LpProblem<T>) -> Result<LpSolution<T>, LpError> {
    let n = problem.n_vars();
    if problem.labels.len() != n {
        return Err(LpError::Malformed("label count differs from variable count".into()));
    }
    let m = problem.constraints.len();
    let n_slack = problem
        .constraints
        .iter()
        .filter(|c| c.kind != ConstraintKind::Eq)
        .count();
    let cols = n + n_slack;
    let mut t = Tableau {
        m,
        cols,
        a: vec![0.0; m * cols],
        rhs: vec![0.0; m],
        basis: vec![0; m],
        dead: vec![false; m],
        d: vec![0.0; cols],
        nz: Vec::with_capacity(cols),
        columns: vec![Vec::new(); cols],
        b: vec![0.0; m],
    };
    let mut slack = n;
    for (i, c) in problem.constraints.iter().enumerate() {
        let rhs = c.rhs.as_f64();
        if !rhs.is_finite() {
            return Err(LpError::Malformed(format!("row {} has a non-finite bound", c.label)));
        }
        let flip = rhs < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        for &(j, v) in &c.coeffs {
            if j >= n {
                return Err(LpError::Malformed(format!("row {} references variable {j}", c.label)));
            }
            t.a[i * cols + j] += sign * v.as_f64();
        }
        t.b[i] = sign * rhs;
        let kind = match (c.kind, flip) {
            (ConstraintKind::Ge, true) => ConstraintKind::Le,
            (ConstraintKind::Le, true) => ConstraintKind::Ge,
            (k, _) => k,
        };
        match kind {
            ConstraintKind::Eq => t.basis[i] = cols + i,
            ConstraintKind::Le => {
                t.a[i * cols + slack] = 1.0;
                t.basis[i] = slack;
                slack += 1;
            }
            ConstraintKind::Ge => {
                t.a[i * cols + slack] = -1.0;
                t.basis[i] = cols + i;
                slack += 1;
            }
        }
    }
    t.rhs.copy_from_slice(&t.b);
    for i in 0..m {
        for j in 0..cols {
            let v = t.a[i * cols + j];
            if v != 0.0 {
                t.columns[j].push((i, v));
            }
        }
    }
    let limit = 50 * (m + cols) + 1000;
    let mut iterations = 0;

    // phase one: minimize the sum of artificials
    let zero_cost = vec![0.0; cols];
    for i in 0..m {
        if t.basis[i] >= cols {
            for j in 0..cols {
                t.d[j] -= t.a[i * cols + j];
            }
        }
    }
    t.solve_phase(&zero_cost, 1.0, &mut iterations, limit)?;
    let scale = 1.0 + t.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let art_mass: f64 = (0..m).filter(|&i| t.basis[i] >= cols).map(|i| t.rhs[i].abs()).sum();
    if art_mass > INFEASIBLE * scale {
        log::debug!("simplex: phase one ends with artificial mass {art_mass:e}");
        return Ok(LpSolution { x: Vec::new(), objective_value: T::nan(), status: LpStatus::Infeasible });
    }
    // drive the remaining (zero-level) artificials out of the basis
    for i in 0..m {
        if t.basis[i] < cols {
            continue;
        }
        let q = (0..cols)
            .filter(|&j| t.at(i, j).abs() > PIVOT)
            .max_by(|&x, &y| t.at(i, x).abs().total_cmp(&t.at(i, y).abs()));
        match q {
            Some(q) => {
                t.rhs[i] = 0.0;
                t.pivot(i, q)
            }
            None => t.dead[i] = true,
        }
    }

    // phase two
    let mut cost = vec![0.0; cols];
    for (c, v) in cost.iter_mut().zip(&problem.objective) {
        *c = v.as_f64();
    }
    t.refresh(&cost, 0.0)?;
    if let Step::Unbounded(_) = t.solve_phase(&cost, 0.0, &mut iterations, limit)? {
        return Ok(LpSolution { x: Vec::new(), objective_value: T::neg_infinity(), status: LpStatus::Unbounded });
    }
    log::debug!("simplex: {m} rows, {cols} columns, {iterations} pivots");

    let mut x = vec![T::zero(); n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = T::lit(t.rhs[i].max(0.0));
        }
    }
    let violation = problem.max_violation(&x);
    if violation > T::tol(FEASIBILITY_TOLERANCE) {
        return Err(LpError::Residual(violation.as_f64()));
    }
    Ok(LpSolution { objective_value: problem.objective_value(&x), x, status: LpStatus::Optimal })
}

#[cfg(test)]
mod tests {
    use super::super::LinearConstraint;
    use super::*;

    fn row(coeffs: &[(usize, f64)], kind: ConstraintKind, rhs: f64) -> LinearConstraint<f64> {
        LinearConstraint { coeffs: coeffs.to_vec(), rhs, kind, label: String::new() }
    }

    fn lp(c: &[f64], rows: Vec<LinearConstraint<f64>>) -> LpProblem<f64> {
        LpProblem { labels: (0..c.len()).map(|j| (j, 0)).collect(), objective: c.to_vec(), constraints: rows }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18  →  (2, 6), 36
        let p = lp(
            &[-3.0, -5.0],
            vec![
                row(&[(0, 1.0)], ConstraintKind::Le, 4.0),
                row(&[(1, 2.0)], ConstraintKind::Le, 12.0),
                row(&[(0, 3.0), (1, 2.0)], ConstraintKind::Le, 18.0),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective_value + 36.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y + 3z s.t. x + y + z = 1, y + z ≥ 0.5 → y = 0.5, x = 0.5, obj 1.5
        let p = lp(
            &[1.0, 2.0, 3.0],
            vec![
                row(&[(0, 1.0), (1, 1.0), (2, 1.0)], ConstraintKind::Eq, 1.0),
                row(&[(1, 1.0), (2, 1.0)], ConstraintKind::Ge, 0.5),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert!((s.objective_value - 1.5).abs() < 1e-12);
        assert!((s.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let p = lp(
            &[1.0, 0.0],
            vec![
                row(&[(0, 1.0), (1, 1.0)], ConstraintKind::Eq, 1.0),
                row(&[(0, 1.0)], ConstraintKind::Ge, 2.0),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert!(matches!(s.status, LpStatus::Infeasible));
    }

    #[test]
    fn unbounded_detected() {
        let p = lp(&[-1.0, 0.0], vec![row(&[(0, 1.0), (1, -1.0)], ConstraintKind::Eq, 1.0)]);
        let s = solve_lp(&p).unwrap();
        assert!(matches!(s.status, LpStatus::Unbounded));
    }

    #[test]
    fn redundant_equalities() {
        let p = lp(
            &[1.0, 1.0],
            vec![
                row(&[(0, 1.0), (1, 1.0)], ConstraintKind::Eq, 2.0),
                row(&[(0, 2.0), (1, 2.0)], ConstraintKind::Eq, 4.0),
                row(&[(0, 1.0)], ConstraintKind::Le, 1.5),
            ],
        );
        let s = solve_lp(&p).unwrap();
        assert!((s.objective_value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_is_flipped() {
        // -x ≥ -3  ⇔  x ≤ 3 ; max x
        let p = lp(&[-1.0], vec![row(&[(0, -1.0)], ConstraintKind::Ge, -3.0)]);
        let s = solve_lp(&p).unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_objective_returns_feasible_vertex() {
        let p = lp(&[0.0, 0.0], vec![row(&[(0, 1.0), (1, 1.0)], ConstraintKind::Eq, 1.0)]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.objective_value, 0.0);
        assert!((s.x[0] + s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f32_solve() {
        let p = LpProblem::<f32> {
            labels: vec![(0, 0), (1, 0)],
            objective: vec![1.0, 2.0],
            constraints: vec![LinearConstraint {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                rhs: 1.0,
                kind: ConstraintKind::Ge,
                label: String::new(),
            }],
        };
        let s = solve_lp(&p).unwrap();
        assert!((s.objective_value - 1.0).abs() < 1e-6);
    }
}
