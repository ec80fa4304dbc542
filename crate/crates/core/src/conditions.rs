//! Conditions (C1)–(C4) for a contraction to be unitarily equivalent to some
//! `Y_b`, decided exactly for rational characteristic rows.
//!
//! (C3) is tested on `φ1, φ2` rather than on `φ̃1, φ̃2`: the zeros of `f̃` are
//! the conjugates of the zeros of `f`, so common zeros of one pair match
//! common zeros of the other.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::dbr_model::{operator_profile, DefectProfile};
use crate::dilation::{aligned_defect_bases, xi_for_target_e, XiSolution};
use crate::error::{Error, Result};
use crate::factorization::{
    common_inner_divisor_rational, disc_zeros, extremality_test, Extremality, ExtremalityConfig, InnerDivisor,
    DEFAULT_MATCH_TOL,
};
use crate::fit::{fit_char_fn_row, RowFit, FIT_TOL};
use crate::hardy::{synthesize, AnalyticFn, RationalFunction, C64};
use crate::linalg::c;
use crate::operators::{
    build_from_inner_column_with, default_points, is_pure_row, star_inner_residual, strong_stability_check,
    CharFnSamples, OperatorMatrix, StabilityReport,
};

/// Pairs farther than this from `*-inner` are rejected.
pub const STAR_INNER_GATE: f64 = 1e-6;
/// Innermost disc zero beyond this radius marks a near miss.
pub const NEAR_MISS_RADIUS: f64 = 0.97;

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Undecided,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    EquivalentToSomeYb,
    NotEquivalent,
    Undecided,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct C1Report {
    pub status: Status,
    pub defect: usize,
    pub codefect: usize,
    pub kernel: usize,
}

pub fn check_c1(t: &OperatorMatrix) -> Result<C1Report> {
    let DefectProfile { defect, codefect, kernel } = operator_profile(t)?;
    let ok = (defect, codefect, kernel) == (2, 1, 1);
    Ok(C1Report { status: if ok { Status::Pass } else { Status::Fail }, defect, codefect, kernel })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct C2Report {
    pub status: Status,
    pub stability: StabilityReport,
}

pub fn check_c2(t: &OperatorMatrix, n_max: usize, tol: f64) -> C2Report {
    let stability = strong_stability_check(t, n_max, tol);
    C2Report { status: if stability.stable { Status::Pass } else { Status::Fail }, stability }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct C3Report {
    pub status: Status,
    pub divisor: InnerDivisor,
}

fn star_gate(phi1: &RationalFunction, phi2: &RationalFunction) -> Result<f64> {
    let res = star_inner_residual(&phi1.clone().into(), &phi2.clone().into(), 1024)?;
    if res > STAR_INNER_GATE {
        return Err(Error::NotStarInner(res));
    }
    Ok(res)
}

/// (C3): no common inner divisor.
pub fn check_c3_rational(phi1: &RationalFunction, phi2: &RationalFunction) -> Result<C3Report> {
    star_gate(phi1, phi2)?;
    // a zero entry shares every inner factor of the other one
    let divisor = match (phi1.is_zero(), phi2.is_zero()) {
        (true, false) | (false, true) => {
            let g = if phi1.is_zero() { phi2 } else { phi1 };
            let z = disc_zeros(g)?;
            if z.is_empty() {
                InnerDivisor::Trivial
            } else {
                InnerDivisor::Nontrivial { shared: z.into_iter().map(|w| (w, w)).collect() }
            }
        }
        _ => common_inner_divisor_rational(phi1, phi2, DEFAULT_MATCH_TOL)?,
    };
    let status = if divisor == InnerDivisor::Trivial { Status::Pass } else { Status::Fail };
    Ok(C3Report { status, divisor })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct C4Report {
    pub status: Status,
    /// `(α1, α2)` with `α1 φ1 + α2 φ2` outer.
    #[serde(with = "opt_pair")]
    pub alpha: Option<[C64; 2]>,
    pub theta_grid: usize,
    pub psi_grid: usize,
    /// Minimum over the grid of the number of zeros in the disc.
    pub min_zero_count: usize,
    pub near_misses: usize,
    pub refined: bool,
}

mod opt_pair {
    use super::C64;
    use serde::{Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[C64; 2]>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|p| [[p[0].re, p[0].im], [p[1].re, p[1].im]]).serialize(s)
    }
}

fn alpha_at(theta: f64, psi: f64) -> [C64; 2] {
    [c(theta.cos(), 0.0), C64::from_polar(theta.sin(), psi)]
}

/// Disc zeros of `α1 φ1 + α2 φ2`; `None` for the zero function.
fn combo_zeros(phi1: &RationalFunction, phi2: &RationalFunction, a: [C64; 2]) -> Option<Vec<C64>> {
    let f = phi1.combine(a[0], phi2, a[1]);
    if f.is_zero() {
        return None;
    }
    disc_zeros(&f).ok()
}

/// (C4): scan `α1 = cos θ`, `α2 = sin θ e^{iψ}` for an outer combination.
/// `θ_i = (π/2) i/n_θ` for `i = 0..=n_θ` (so refining by a factor nests the
/// grid), `ψ_j = 2π j/n_ψ`.  The reported hit is the first in `(i, j)` order.
pub fn check_c4_outer_search(
    phi1: &RationalFunction,
    phi2: &RationalFunction,
    theta_grid: usize,
    psi_grid: usize,
) -> Result<C4Report> {
    star_gate(phi1, phi2)?;
    let row = CharFnSamples::row(&default_points(), &[&phi1.clone().into(), &phi2.clone().into()])?;
    if !is_pure_row(&row)? {
        return Err(Error::NotPure);
    }
    if theta_grid == 0 || psi_grid == 0 {
        return Err(Error::InvalidInput("grid sizes must be positive".into()));
    }
    let cells: Vec<(usize, f64)> = (0..(theta_grid + 1) * psi_grid)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / psi_grid, idx % psi_grid);
            let a = alpha_at(PI / 2.0 * i as f64 / theta_grid as f64, 2.0 * PI * j as f64 / psi_grid as f64);
            match combo_zeros(phi1, phi2, a) {
                Some(z) => (z.len(), z.iter().map(|w| w.norm()).fold(f64::INFINITY, f64::min)),
                None => (usize::MAX, 0.0),
            }
        })
        .collect();
    let base = C4Report {
        status: Status::Fail,
        alpha: None,
        theta_grid,
        psi_grid,
        min_zero_count: cells.iter().map(|c| c.0).min().unwrap_or(usize::MAX),
        near_misses: 0,
        refined: false,
    };
    let at = |idx: usize| {
        alpha_at(
            PI / 2.0 * (idx / psi_grid) as f64 / theta_grid as f64,
            2.0 * PI * (idx % psi_grid) as f64 / psi_grid as f64,
        )
    };
    if let Some(idx) = cells.iter().position(|c| c.0 == 0) {
        return Ok(C4Report { status: Status::Pass, alpha: Some(at(idx)), ..base });
    }
    let mut near: Vec<usize> =
        (0..cells.len()).filter(|&k| cells[k].0 != usize::MAX && cells[k].1 > NEAR_MISS_RADIUS).collect();
    if near.is_empty() {
        return Ok(base);
    }
    near.sort_by(|&x, &y| cells[y].1.total_cmp(&cells[x].1).then(x.cmp(&y)));
    let n_near = near.len();
    let depth = |p: &[f64]| match combo_zeros(phi1, phi2, alpha_at(p[0], p[1])) {
        Some(z) => z.iter().map(|w| 1.0 - w.norm()).sum::<f64>(),
        None => 1.0,
    };
    let step = PI / 2.0 / theta_grid as f64;
    for &idx in near.iter().take(8) {
        let p0 = [PI / 2.0 * (idx / psi_grid) as f64 / theta_grid as f64, 2.0 * PI * (idx % psi_grid) as f64 / psi_grid as f64];
        let (x, v) = crate::linalg::nelder_mead(depth, &p0, step, 500, 0.0);
        if v == 0.0 {
            return Ok(C4Report {
                status: Status::Pass,
                alpha: Some(alpha_at(x[0], x[1])),
                near_misses: n_near,
                refined: true,
                ..base
            });
        }
    }
    Ok(C4Report { status: Status::Undecided, near_misses: n_near, ..base })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructedB {
    pub b: AnalyticFn,
    pub b_tilde: AnalyticFn,
    pub a_tilde: AnalyticFn,
    pub star_residual: f64,
    pub log_integral: f64,
}

/// Completes `(α1, α2)` to the unitary `[[α1, α3], [α2, α4]]` with
/// `α3 = −ᾱ2`, `α4 = ᾱ1` and returns `b = (α3 φ1 + α4 φ2)~`.
pub fn reconstruct_b(phi1: &RationalFunction, phi2: &RationalFunction, alpha: [C64; 2]) -> Result<ReconstructedB> {
    let (a1, a2) = (alpha[0], alpha[1]);
    let (a3, a4) = (-a2.conj(), a1.conj());
    // columns orthonormal
    let unit = ((a1.norm_sqr() + a2.norm_sqr() - 1.0).abs())
        .max((a3.norm_sqr() + a4.norm_sqr() - 1.0).abs())
        .max((a1.conj() * a3 + a2.conj() * a4).norm());
    if unit > 1e-12 {
        return Err(Error::NotUnitaryCompletion(unit));
    }
    let at = phi1.combine(a1, phi2, a2);
    let bt = phi1.combine(a3, phi2, a4);
    let b = bt.tilde();
    let star_residual = star_inner_residual(&at.clone().into(), &bt.clone().into(), 1024)?;
    if star_residual > 1e-8 {
        return Err(Error::NotStarInner(star_residual));
    }
    let grid = synthesize(&b.clone().into(), 1024)?;
    let v = extremality_test(&grid, &ExtremalityConfig::default())?;
    if v.verdict == Extremality::Extreme {
        return Err(Error::ExtremeInput { log_integral: v.log_integral, clipped_fraction: v.clipped_fraction });
    }
    Ok(ReconstructedB {
        b: b.into(),
        b_tilde: bt.into(),
        a_tilde: at.into(),
        star_residual,
        log_integral: v.log_integral,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsOptions {
    pub truncation: usize,
    pub n_max: usize,
    pub stability_tol: f64,
    pub theta_grid: usize,
    pub psi_grid: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self { truncation: 64, n_max: 256, stability_tol: 1e-6, theta_grid: 720, psi_grid: 720 }
    }
}

#[derive(Debug, Clone)]
pub enum DiagnosticsInput {
    Pair(RationalFunction, RationalFunction),
    Operator(OperatorMatrix),
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentC3 {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<C3Report>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionDiagnostics {
    pub c1: C1Report,
    pub c2: C2Report,
    pub c3: ComponentC3,
    pub c4: Option<C4Report>,
    pub c4_status: Status,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstructed_b: Option<ReconstructedB>,
    /// `ξ` with `e_ξ` equal to the normalized `(α1, α2)`, when it exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_xi: Option<XiSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<RowFit>,
    pub notes: Vec<String>,
}

fn verdict_of(all: &[Status]) -> Verdict {
    if all.iter().all(|&s| s == Status::Pass) {
        Verdict::EquivalentToSomeYb
    } else if all.contains(&Status::Fail) {
        Verdict::NotEquivalent
    } else {
        Verdict::Undecided
    }
}

pub fn full_diagnostics(input: &DiagnosticsInput, opts: &DiagnosticsOptions) -> Result<ContractionDiagnostics> {
    let mut notes = Vec::new();
    let (t, pair) = match input {
        DiagnosticsInput::Pair(p1, p2) => {
            star_gate(p1, p2)?;
            let cm = build_from_inner_column_with(&p1.clone().into(), &p2.clone().into(), opts.truncation, STAR_INNER_GATE)?;
            (cm.op, Some((p1.clone(), p2.clone())))
        }
        DiagnosticsInput::Operator(t) => (t.clone(), None),
    };
    let c1 = check_c1(&t)?;
    let c2 = check_c2(&t, opts.n_max, opts.stability_tol);
    let (pair, fit) = match pair {
        Some(p) => (Some(p), None),
        None if c1.status != Status::Pass => {
            notes.push("characteristic function is not a 1x2 row; (C3)/(C4) not evaluated".into());
            (None, None)
        }
        None => match fit_char_fn_row(&t)? {
            Some(f) if f.residual <= FIT_TOL && f.functions.len() == 2 => {
                let p = (f.functions[0].clone(), f.functions[1].clone());
                match star_gate(&p.0, &p.1) {
                    Ok(_) => (Some(p), Some(f)),
                    Err(e) => {
                        notes.push(format!("fitted row rejected: {e}"));
                        (None, Some(f))
                    }
                }
            }
            other => {
                notes.push(format!(
                    "no rational fit of degree <= 12 within {FIT_TOL:.0e}; (C3)/(C4) undecided"
                ));
                (None, other)
            }
        },
    };
    let (c3, c4, c4_status) = match &pair {
        Some((p1, p2)) => {
            let r3 = check_c3_rational(p1, p2)?;
            let r4 = check_c4_outer_search(p1, p2, opts.theta_grid, opts.psi_grid)?;
            let s4 = r4.status;
            (ComponentC3 { status: r3.status, report: Some(r3) }, Some(r4), s4)
        }
        None => (ComponentC3 { status: Status::Undecided, report: None }, None, Status::Undecided),
    };
    let verdict = verdict_of(&[c1.status, c2.status, c3.status, c4_status]);
    let mut reconstructed_b = None;
    let mut witness_xi = None;
    if let (Verdict::EquivalentToSomeYb, Some((p1, p2)), Some(alpha)) = (verdict, &pair, c4.as_ref().and_then(|r| r.alpha)) {
        reconstructed_b = Some(reconstruct_b(p1, p2, alpha)?);
        if let Ok((_, _, a)) = aligned_defect_bases(&t) {
            witness_xi = xi_for_target_e(a, &alpha).ok();
            if witness_xi.is_none() {
                notes.push("no xi with e_xi = (alpha1, alpha2) found".into());
            }
        }
    }
    Ok(ContractionDiagnostics { c1, c2, c3, c4, c4_status, verdict, reconstructed_b, witness_xi, fit, notes })
}
