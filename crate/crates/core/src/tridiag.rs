//! Symmetric tridiagonal eigen-machinery: Sturm counts, bisection for
//! individual eigenvalues, a pivoted tridiagonal solver and inverse iteration.
//!
//! A matrix is given by its diagonal `d[0..n]` and off-diagonal `e[0..n-1]`.

use crate::error::{Error, Result};

/// Number of eigenvalues strictly below `x`, from the signs of the LDL^T
/// pivots of `T - x I`.
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let n = d.len();
    if n == 0 {
        return 0;
    }
    let guard = f64::MIN_POSITIVE.sqrt() * norm_bound(d, e).max(1.0);
    let mut count = 0;
    let mut q = d[0] - x;
    for i in 0..n {
        if i > 0 {
            let safe = if q.abs() < guard { guard.copysign(q) } else { q };
            q = (d[i] - x) - e[i - 1] * e[i - 1] / safe;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn norm_bound(d: &[f64], e: &[f64]) -> f64 {
    let mut bound: f64 = 0.0;
    for i in 0..d.len() {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i < e.len() { e[i].abs() } else { 0.0 };
        bound = bound.max(d[i].abs() + left + right);
    }
    bound
}

/// Gershgorin interval containing the spectrum.
pub fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d.len() {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i < e.len() { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - left - right);
        hi = hi.max(d[i] + left + right);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) by bisection.
pub fn kth_eigenvalue(d: &[f64], e: &[f64], k: usize) -> Result<f64> {
    let n = d.len();
    if k >= n {
        return Err(Error::InvalidParameter(format!("eigenvalue index {k} out of range for n = {n}")));
    }
    let (mut lo, mut hi) = gershgorin(d, e);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    lo -= 1e-12 * scale;
    hi += 1e-12 * scale;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 2.0 * f64::EPSILON * (mid.abs() + f64::EPSILON * scale) {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solves `(T - shift I) x = b` by Gaussian elimination with partial
/// pivoting. Exactly zero pivots are replaced by a tiny multiple of the
/// matrix norm, which is what inverse iteration wants.
pub fn solve_shifted(d: &[f64], e: &[f64], shift: f64, b: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut diag: Vec<f64> = d.iter().map(|v| v - shift).collect();
    let mut x = b.to_vec();
    if n == 1 {
        let p = if diag[0] == 0.0 { f64::EPSILON } else { diag[0] };
        x[0] /= p;
        return x;
    }
    let tiny = f64::EPSILON * norm_bound(d, e).max(shift.abs()).max(f64::MIN_POSITIVE);
    let mut sub = e.to_vec();
    let mut sup = e.to_vec();
    // Second super-diagonal fill-in lives in `sub` after elimination.
    for i in 0..n - 1 {
        if diag[i].abs() >= sub[i].abs() {
            if diag[i] == 0.0 {
                diag[i] = tiny;
            }
            let fact = sub[i] / diag[i];
            diag[i + 1] -= fact * sup[i];
            x[i + 1] -= fact * x[i];
            sub[i] = 0.0;
        } else {
            let fact = diag[i] / sub[i];
            diag[i] = sub[i];
            let temp = diag[i + 1];
            diag[i + 1] = sup[i] - fact * temp;
            if i + 2 < n {
                sub[i] = sup[i + 1];
                sup[i + 1] = -fact * sub[i];
            } else {
                sub[i] = 0.0;
            }
            sup[i] = temp;
            x.swap(i, i + 1);
            x[i + 1] -= fact * x[i];
        }
    }
    if diag[n - 1] == 0.0 {
        diag[n - 1] = tiny;
    }
    x[n - 1] /= diag[n - 1];
    x[n - 2] = (x[n - 2] - sup[n - 2] * x[n - 1]) / diag[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - sup[i] * x[i + 1] - sub[i] * x[i + 2]) / diag[i];
    }
    x
}

/// `T v` for a symmetric tridiagonal `T`.
pub fn multiply(d: &[f64], e: &[f64], v: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut out: Vec<f64> = d.iter().zip(v).map(|(a, b)| a * b).collect();
    for i in 0..n.saturating_sub(1) {
        out[i] += e[i] * v[i + 1];
        out[i + 1] += e[i] * v[i];
    }
    out
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn project_out(v: &mut [f64], basis: &[&[f64]]) {
    for q in basis {
        let dot: f64 = v.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(q.iter()) {
            *x -= dot * y;
        }
    }
}

/// Eigenvector for the eigenvalue closest to `shift`, orthogonal to the
/// unit vectors in `deflate`. Returns a unit vector.
pub fn inverse_iteration(d: &[f64], e: &[f64], shift: f64, deflate: &[&[f64]]) -> Result<Vec<f64>> {
    let n = d.len();
    // Deterministic, generic start vector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).sin()).collect();
    project_out(&mut v, deflate);
    if normalize(&mut v) == 0.0 {
        return Err(Error::Numerical("inverse iteration start vector vanished".into()));
    }
    for _ in 0..8 {
        let mut next = solve_shifted(d, e, shift, &v);
        project_out(&mut next, deflate);
        if !next.iter().all(|x| x.is_finite()) || normalize(&mut next) == 0.0 {
            return Err(Error::Numerical("inverse iteration diverged".into()));
        }
        let change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let flipped: f64 = next.iter().zip(&v).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        v = next;
        if change.min(flipped) < 1e-13 {
            break;
        }
    }
    Ok(v)
}
