//! Vertex enumeration for small polytopes `{x : E x = e, G x >= g}`.
//!
//! Brute force over active sets: every choice of `dim - rank(E)` inequality
//! rows that together with `E` has full rank gives a candidate point, which is
//! kept if it satisfies all constraints. Fine for the handful of dimensions a
//! stage game has.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

/// A linear row `coeffs · x (=|>=) rhs`.
#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.rhs
    }
}

const RANK_EPS: f64 = 1e-10;
const SNAP_EPS: f64 = 1e-12;

fn rank(rows: &[&Row], dim: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].coeffs[j]);
    m.rank(RANK_EPS)
}

/// All vertices of the polytope, deduplicated within `tol`.
pub fn vertices(dim: usize, eqs: &[Row], ineqs: &[Row], tol: f64) -> Vec<Vec<f64>> {
    let eq_refs: Vec<&Row> = eqs.iter().collect();
    let r = rank(&eq_refs, dim);
    let k = dim.saturating_sub(r);
    let mut out: Vec<Vec<f64>> = Vec::new();
    if k > ineqs.len() {
        return out;
    }
    for combo in (0..ineqs.len()).combinations(k) {
        let rows: Vec<&Row> = eq_refs
            .iter()
            .copied()
            .chain(combo.iter().map(|&i| &ineqs[i]))
            .collect();
        let a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].coeffs[j]);
        if a.rank(RANK_EPS) < dim {
            continue;
        }
        let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.rhs));
        let svd = a.svd(true, true);
        let Ok(sol) = svd.solve(&rhs, RANK_EPS) else {
            continue;
        };
        // snap solver noise around zero so vertices on a facet sit on it
        let x: Vec<f64> = sol
            .iter()
            .map(|&v| if v.abs() < SNAP_EPS { 0.0 } else { v })
            .collect();
        let feasible =
            eqs.iter().all(|e| e.eval(&x).abs() <= tol) && ineqs.iter().all(|g| g.eval(&x) >= -tol);
        if !feasible {
            continue;
        }
        let dup = out
            .iter()
            .any(|v| v.iter().zip(&x).all(|(p, q)| (p - q).abs() <= tol));
        if !dup {
            out.push(x);
        }
    }
    out
}

/// Simplex rows for `dim` coordinates: `sum x = 1` and `x >= 0`.
pub fn simplex_rows(dim: usize) -> (Row, Vec<Row>) {
    let sum = Row::new(vec![1.0; dim], 1.0);
    let nonneg = (0..dim)
        .map(|i| {
            let mut c = vec![0.0; dim];
            c[i] = 1.0;
            Row::new(c, 0.0)
        })
        .collect();
    (sum, nonneg)
}
