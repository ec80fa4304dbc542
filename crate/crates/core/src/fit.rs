//! Linearized least-squares fit of a sampled row `(f1, …, fk)` by rational
//! functions with a shared denominator `q`, `q(0) = 1`.

use std::f64::consts::PI;

use nalgebra::{DVector, SVD};
use serde::Serialize;

use crate::error::Result;
use crate::hardy::{RationalFunction, C64};
use crate::linalg::{c, CMat};
use crate::operators::{char_fn_eval, OperatorMatrix};

pub const MAX_FIT_DEGREE: usize = 12;
pub const FIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct RowFit {
    pub degree: usize,
    #[serde(skip)]
    pub functions: Vec<RationalFunction>,
    /// Max deviation on validation points.
    pub residual: f64,
}

/// Fit points: three circles `0.3, 0.5, 0.7` with 32 angles each.
pub fn fit_points() -> Vec<C64> {
    ring_points(0.0)
}

/// Validation points: the same circles rotated by half a step.
pub fn validation_points() -> Vec<C64> {
    ring_points(0.5)
}

fn ring_points(offset: f64) -> Vec<C64> {
    let mut pts = Vec::with_capacity(96);
    for &r in &[0.3, 0.5, 0.7] {
        for k in 0..32 {
            pts.push(C64::from_polar(r, 2.0 * PI * (k as f64 + offset) / 32.0));
        }
    }
    pts
}

fn solve_degree(points: &[C64], rows: &[Vec<C64>], d: usize) -> Option<Vec<RationalFunction>> {
    let k = rows[0].len();
    let unknowns = k * (d + 1) + d;
    let eqs = points.len() * k;
    let mut a = CMat::zeros(eqs, unknowns);
    let mut rhs = DVector::<C64>::zeros(eqs);
    for (i, &z) in points.iter().enumerate() {
        let pw: Vec<C64> = (0..=d).scan(c(1.0, 0.0), |acc, _| {
            let v = *acc;
            *acc *= z;
            Some(v)
        }).collect();
        for j in 0..k {
            let r = i * k + j;
            let f = rows[i][j];
            for p in 0..=d {
                a[(r, j * (d + 1) + p)] = pw[p];
            }
            for q in 1..=d {
                a[(r, k * (d + 1) + q - 1)] = -f * pw[q];
            }
            rhs[r] = f;
        }
    }
    let x = SVD::new(a, true, true).solve(&rhs, 1e-13).ok()?;
    let mut den = vec![c(1.0, 0.0)];
    den.extend((0..d).map(|q| x[k * (d + 1) + q]));
    (0..k)
        .map(|j| RationalFunction::new(x.as_slice()[j * (d + 1)..(j + 1) * (d + 1)].to_vec(), den.clone()).ok())
        .collect()
}

/// Lowest degree `≤ max_degree` whose validation residual is below `tol`;
/// otherwise the best fit found.  `None` if no degree gives an admissible
/// denominator.
pub fn fit_row(sample: impl Fn(&[C64]) -> Result<Vec<Vec<C64>>>, max_degree: usize, tol: f64) -> Result<Option<RowFit>> {
    let pts = fit_points();
    let vpts = validation_points();
    let rows = sample(&pts)?;
    let vrows = sample(&vpts)?;
    if rows.is_empty() || rows[0].is_empty() {
        return Ok(None);
    }
    let mut best: Option<RowFit> = None;
    for d in 0..=max_degree {
        let Some(functions) = solve_degree(&pts, &rows, d) else { continue };
        let residual = vpts
            .iter()
            .zip(&vrows)
            .flat_map(|(&z, row)| functions.iter().zip(row).map(move |(f, v)| (f.eval(z) - v).norm()))
            .fold(0.0, f64::max);
        let better = best.as_ref().is_none_or(|b| residual < b.residual);
        if better {
            best = Some(RowFit { degree: d, functions, residual });
        }
        if residual < tol {
            break;
        }
    }
    Ok(best)
}

/// Rational fit of the 1×2 characteristic function of `t`.
pub fn fit_char_fn_row(t: &OperatorMatrix) -> Result<Option<RowFit>> {
    fit_row(
        |pts| {
            let s = char_fn_eval(t, pts)?;
            Ok(s.values.iter().map(|v| v.row(0).iter().copied().collect()).collect())
        },
        MAX_FIT_DEGREE,
        FIT_TOL,
    )
}
