use nalgebra::{DMatrix, DVector};

/// Minimum of `Σ r_S v_S` over covers by enumerating every vertex of the
/// feasible polyhedron.
pub fn vertex_lp(n: usize, v: &[f64]) -> f64 {
    let vars = (1usize << n) - 1;
    // Rows: n coverage constraints, then x_j >= 0.
    let mut rows: Vec<(Vec<f64>, f64)> =
        (0..n).map(|i| ((1..=vars).map(|m| if m & (1 << i) != 0 { 1.0 } else { 0.0 }).collect(), 1.0)).collect();
    for j in 0..vars {
        let mut e = vec![0.0; vars];
        e[j] = 1.0;
        rows.push((e, 0.0));
    }
    let mut best = f64::INFINITY;
    let mut pick = Vec::new();
    enumerate(rows.len(), vars, 0, &mut pick, &mut |idx| {
        let a = DMatrix::from_fn(vars, vars, |r, c| rows[idx[r]].0[c]);
        let b = DVector::from_fn(vars, |r, _| rows[idx[r]].1);
        let Some(x) = a.lu().solve(&b) else { return };
        let feasible =
            rows.iter().all(|(row, rhs)| row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() >= rhs - 1e-9);
        if feasible {
            best = best.min(x.iter().zip(&v[1..]).map(|(p, q)| p * q).sum());
        }
    });
    best
}

fn enumerate(total: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..total {
        pick.push(i);
        enumerate(total, k, i + 1, pick, f);
        pick.pop();
    }
}
