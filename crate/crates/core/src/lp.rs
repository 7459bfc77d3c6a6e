//! Dense phase-one simplex for `A x = b, x ≥ 0`.
//!
//! Bland's rule throughout: lowest-index entering column with negative
//! reduced cost, ratio ties broken by the lowest basic variable index.
//! Pivot order depends only on the input, so repeated solves agree bit for bit.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOneOutcome {
    pub feasible: bool,
    /// A basic solution of the auxiliary problem restricted to the
    /// structural columns. Satisfies `A x = b` when feasible.
    pub x: Vec<f64>,
    /// Optimal sum of artificial variables.
    pub infeasibility: f64,
    /// Dual multipliers `y` of the original rows: `Aᵀy ≤ 0` and
    /// `bᵀy = infeasibility` at optimality, a Farkas certificate when positive.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

/// Minimizes the sum of artificials over `A x + a = b`, `x, a ≥ 0`.
///
/// `a` is row-major with `b.len()` rows of equal length.
pub fn phase_one(a: &[Vec<f64>], b: &[f64], tol: f64) -> Result<PhaseOneOutcome> {
    let m = b.len();
    if a.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} constraint rows but {} right-hand sides",
            a.len(),
            m
        )));
    }
    let n = a.first().map_or(0, Vec::len);
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::ShapeMismatch("ragged constraint matrix".into()));
    }

    let width = n + m + 1;
    let rhs = n + m;
    let mut tab = vec![0.0f64; m * width];
    let mut flipped = vec![false; m];
    for r in 0..m {
        let sign = if b[r] < 0.0 {
            flipped[r] = true;
            -1.0
        } else {
            1.0
        };
        let row = &mut tab[r * width..(r + 1) * width];
        for (dst, &v) in row[..n].iter_mut().zip(&a[r]) {
            *dst = sign * v;
        }
        row[n + r] = 1.0;
        row[rhs] = sign * b[r];
    }

    // reduced costs; the last entry holds −(objective value)
    let mut cost = vec![0.0f64; width];
    for r in 0..m {
        let row = &tab[r * width..(r + 1) * width];
        for j in 0..n {
            cost[j] -= row[j];
        }
        cost[rhs] -= row[rhs];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 50 * (n + m).max(1) + 1000;
    let mut pivots = 0usize;
    while let Some(enter) = (0..n + m).find(|&j| cost[j] < -PIVOT_EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let coef = tab[r * width + enter];
            if coef <= PIVOT_EPS {
                continue;
            }
            let ratio = tab[r * width + rhs] / coef;
            leave = match leave {
                None => Some((r, ratio)),
                Some((best, best_ratio)) => {
                    if ratio < best_ratio - PIVOT_EPS
                        || (ratio <= best_ratio + PIVOT_EPS && basis[r] < basis[best])
                    {
                        Some((r, ratio))
                    } else {
                        Some((best, best_ratio))
                    }
                }
            };
        }
        let Some((row, _)) = leave else {
            // the auxiliary objective is bounded below by zero
            return Err(Error::Precondition(
                "phase-one problem reported unbounded; constraint data is not finite".into(),
            ));
        };
        pivot(&mut tab, &mut cost, width, m, row, enter);
        basis[row] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Precondition(format!(
                "simplex exceeded {max_pivots} pivots"
            )));
        }
    }

    let infeasibility = (-cost[rhs]).max(0.0);
    let mut x = vec![0.0f64; n];
    for (r, &var) in basis.iter().enumerate() {
        if var < n {
            x[var] = tab[r * width + rhs].max(0.0);
        }
    }
    let duals = (0..m)
        .map(|r| {
            let y = 1.0 - cost[n + r];
            if flipped[r] {
                -y
            } else {
                y
            }
        })
        .collect();
    Ok(PhaseOneOutcome {
        feasible: infeasibility <= tol,
        x,
        infeasibility,
        duals,
        pivots,
    })
}

fn pivot(tab: &mut [f64], cost: &mut [f64], width: usize, m: usize, row: usize, col: usize) {
    let p = tab[row * width + col];
    for v in &mut tab[row * width..(row + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = tab[row * width..(row + 1) * width].to_vec();
    for r in (0..m).filter(|&r| r != row) {
        let factor = tab[r * width + col];
        if factor != 0.0 {
            for (v, &pv) in tab[r * width..(r + 1) * width].iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            tab[r * width + col] = 0.0;
        }
    }
    let factor = cost[col];
    if factor != 0.0 {
        for (v, &pv) in cost.iter_mut().zip(&pivot_row) {
            *v -= factor * pv;
        }
        cost[col] = 0.0;
    }
}
