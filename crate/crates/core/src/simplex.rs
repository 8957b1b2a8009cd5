//! Dense two-phase primal simplex for `min c.x  s.t.  A x >= b, x >= 0`
//! with `b >= 0`, using Bland's smallest-index rule for both the entering
//! and the leaving variable so that it never cycles.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs, one per column, and the negated objective value.
    cost: Vec<f64>,
    value: f64,
    tol: f64,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in &mut self.rows[row] {
            *v /= p;
        }
        self.rhs[row] /= p;
        let pivot_row = self.rows[row].clone();
        let pivot_rhs = self.rhs[row];
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (a, b) in r.iter_mut().zip(&pivot_row) {
                    *a -= f * b;
                }
                self.rhs[i] -= f * pivot_rhs;
                if self.rhs[i].abs() < self.tol * 1e-3 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for (a, b) in self.cost.iter_mut().zip(&pivot_row) {
                *a -= f * b;
            }
            self.value -= f * pivot_rhs;
        }
        self.basis[row] = col;
    }

    /// Runs Bland's rule over the columns allowed by `eligible`.
    fn optimize(&mut self, eligible: &dyn Fn(usize) -> bool) -> std::result::Result<(), ()> {
        let limit = 100_000;
        for _ in 0..limit {
            let entering = (0..self.cost.len()).find(|&j| eligible(j) && self.cost[j] < -self.tol);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > self.tol {
                    let ratio = self.rhs[i] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - self.tol || (ratio <= best + self.tol && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(());
            };
            self.pivot(row, col);
        }
        Err(())
    }
}

/// Solves `min c.x` subject to `A x >= b`, `x >= 0`. `a` is row-major with
/// one row per constraint.
pub fn minimize_covering(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpOutcome> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch("constraint matrix does not match cost/rhs".into()));
    }
    if b.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParameter("right-hand side must be non-negative".into()));
    }
    // Columns: x (n), surplus (m), artificial (m).
    let width = n + 2 * m;
    let scale = c.iter().chain(b).fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-11 * scale;
    let mut rows = vec![vec![0.0; width]; m];
    for i in 0..m {
        rows[i][..n].copy_from_slice(&a[i]);
        rows[i][n + i] = -1.0;
        rows[i][n + m + i] = 1.0;
    }
    let basis: Vec<usize> = (0..m).map(|i| n + m + i).collect();
    // Phase one: minimize the sum of artificials.
    let mut cost = vec![0.0; width];
    for j in 0..n + m {
        cost[j] = -rows.iter().map(|r| r[j]).sum::<f64>();
    }
    let value = -b.iter().sum::<f64>();
    let mut t = Tableau { rows, rhs: b.to_vec(), basis, cost, value, tol };
    if t.optimize(&|j| j < n + m).is_err() {
        return Err(Error::Numerical("phase one did not terminate".into()));
    }
    if -t.value > tol {
        return Ok(LpOutcome::Infeasible);
    }
    // Drive degenerate artificials out of the basis.
    for i in 0..m {
        if t.basis[i] >= n + m {
            if let Some(col) = (0..n + m).find(|&j| t.rows[i][j].abs() > tol) {
                t.pivot(i, col);
            }
        }
    }
    // Phase two: reduced costs of the real objective for the current basis.
    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(c);
    let mut value = 0.0;
    for i in 0..m {
        let bj = t.basis[i];
        let cb = if bj < n { c[bj] } else { 0.0 };
        if cb != 0.0 {
            for (k, v) in cost.iter_mut().enumerate() {
                *v -= cb * t.rows[i][k];
            }
            value -= cb * t.rhs[i];
        }
    }
    t.cost = cost;
    t.value = value;
    if t.optimize(&|j| j < n + m).is_err() {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs[i].max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal(LpSolution { x, objective }))
}
