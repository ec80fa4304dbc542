//! Outer functions and zero counting.
//!
//! Logarithms of boundary moduli are integrated with the grid trapezoid rule.
//! A grid node where the modulus vanishes (an isolated boundary zero of
//! integer order `p`) gets the corrected value `log g(t0) - p·log n`, where
//! `g = v / |1 - e^{i(t-t0)}|^p` is estimated from the neighbours.  With that
//! node value the discrete mean of `log|1 - e^{it}|` is exactly zero, so the
//! Szegő mean of functions with simple boundary zeros stays spectrally
//! accurate instead of picking up an `O(log(floor)/n)` bias.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardy::{
    fourier_coeffs, fourier_synthesis, poly_roots, poly_trim, AnalyticFn, BoundaryGrid,
    RationalFunction, TaylorCoeffs, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityConfig {
    /// Values of `1 - |b|²` below this are clipped before taking logs.
    pub floor: f64,
    /// Grid-average log below this is read as `-∞`.
    pub threshold: f64,
    /// Clipped fraction above this is read as `-∞`.
    pub clip_limit: f64,
}

impl Default for ExtremalityConfig {
    fn default() -> Self {
        Self {
            floor: 1e-14,
            threshold: -25.0,
            clip_limit: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extremality {
    Extreme,
    Nonextreme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityVerdict {
    pub verdict: Extremality,
    pub log_integral: f64,
    pub clipped_fraction: f64,
}

/// Logs of nonnegative samples with floor clipping and isolated-zero
/// correction.  Returns the logs and the number of clipped nodes.
pub fn corrected_log(values: &[f64], floor: f64) -> (Vec<f64>, usize) {
    let n = values.len();
    let clipped: Vec<bool> = values.iter().map(|&v| v < floor).collect();
    let mut logs: Vec<f64> = values.iter().map(|&v| v.max(floor).ln()).collect();
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let chord = 2.0 * (h / 2.0).sin();
    let growth = (2.0 * (h / 2.0).cos()).ln();
    for k in 0..n {
        if !clipped[k] {
            continue;
        }
        let idx = |off: isize| ((k as isize + off).rem_euclid(n as isize)) as usize;
        if [-2, -1, 1, 2].iter().any(|&o| clipped[idx(o)]) {
            continue;
        }
        // order of the zero from v(t0 ± 2h) / v(t0 ± h) ≈ (2 cos(h/2))^p
        let p_est = 0.5
            * ((values[idx(2)] / values[idx(1)]).ln() + (values[idx(-2)] / values[idx(-1)]).ln())
            / growth;
        let p = p_est.round();
        if !(1.0..=8.0).contains(&p) || (p_est - p).abs() > 0.25 {
            continue;
        }
        let g0 = 0.5 * (values[idx(1)] + values[idx(-1)]) / chord.powf(p);
        logs[k] = g0.ln() - p * (n as f64).ln();
    }
    (logs, clipped.iter().filter(|&&c| c).count())
}

/// Grid test of `∫ log(1 - |b|²) > -∞`.
pub fn extremality_test(b: &BoundaryGrid, cfg: &ExtremalityConfig) -> Result<ExtremalityVerdict> {
    let sup = b.sup_abs();
    if sup > 1.0 + 1e-9 {
        return Err(Error::ModulusExceedsOne(sup));
    }
    let v: Vec<f64> = b.samples().iter().map(|s| (1.0 - s.norm_sqr()).max(0.0)).collect();
    let (logs, clipped) = corrected_log(&v, cfg.floor);
    let log_integral = logs.iter().sum::<f64>() / logs.len() as f64;
    let clipped_fraction = clipped as f64 / logs.len() as f64;
    let verdict = if log_integral < cfg.threshold || clipped_fraction > cfg.clip_limit {
        Extremality::Extreme
    } else {
        Extremality::Nonextreme
    };
    Ok(ExtremalityVerdict {
        verdict,
        log_integral,
        clipped_fraction,
    })
}

/// Taylor coefficients of `exp(h)` from those of `h`, via `n a_n = Σ k h_k a_{n-k}`.
pub fn series_exp(h: &[C64], order: usize) -> Vec<C64> {
    let mut a = vec![C64::new(0.0, 0.0); order.max(1)];
    a[0] = h[0].exp();
    for n in 1..a.len() {
        let mut acc = C64::new(0.0, 0.0);
        for k in 1..=n.min(h.len() - 1) {
            acc += h[k] * a[n - k] * k as f64;
        }
        a[n] = acc / n as f64;
    }
    a
}

/// An outer function built from boundary log-modulus samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterFunction {
    pub coeffs: TaylorCoeffs,
    /// Boundary values `exp(h(e^{i t_k}))` of the constructed function.
    pub boundary: Vec<C64>,
    pub clipped_fraction: f64,
}

fn outer_from_logs(logs: &[f64], order: usize) -> OuterFunction {
    let n = logs.len();
    let u: Vec<C64> = logs.iter().map(|&l| C64::new(l, 0.0)).collect();
    let uh = fourier_coeffs(&u);
    // analytic completion: h_0 = û_0, h_k = 2û_k, Re h = u on the grid
    let mut h = vec![C64::new(0.0, 0.0); n];
    h[0] = C64::new(uh[0].re, 0.0);
    for k in 1..n / 2 {
        h[k] = uh[k] * 2.0;
    }
    h[n / 2] = uh[n / 2];
    let boundary: Vec<C64> = fourier_synthesis(&h).into_iter().map(|x| x.exp()).collect();
    let coeffs = series_exp(&h[..n / 2], order.min(n / 2));
    OuterFunction {
        coeffs: TaylorCoeffs::new(coeffs).expect("finite exp series"),
        boundary,
        clipped_fraction: 0.0,
    }
}

/// Default number of Taylor coefficients returned for a grid of `size`.
pub fn default_order(size: usize) -> usize {
    (size / 2).min(1024)
}

/// Outer function with `|a| = w` on the grid and `a(0) > 0`.
///
/// `w` must be real and nonnegative.  `normalize_positive = false` skips the
/// final `a(0) > 0` assertion (the construction produces a positive `a(0)`).
pub fn outer_from_modulus(
    w: &BoundaryGrid,
    normalize_positive: bool,
    cfg: &ExtremalityConfig,
    order: Option<usize>,
) -> Result<OuterFunction> {
    let mut vals = Vec::with_capacity(w.size());
    for s in w.samples() {
        if s.im.abs() > 1e-12 * (1.0 + s.re.abs()) || s.re < -1e-12 {
            return Err(Error::InvalidInput(format!("modulus sample {s} is not real nonnegative")));
        }
        vals.push(s.re.max(0.0));
    }
    let (logs, clipped) = corrected_log(&vals, cfg.floor);
    let frac = clipped as f64 / vals.len() as f64;
    if frac > cfg.clip_limit {
        return Err(Error::LogNotIntegrable(frac));
    }
    let mut out = outer_from_logs(&logs, order.unwrap_or_else(|| default_order(w.size())));
    out.clipped_fraction = frac;
    if normalize_positive {
        debug_assert!(out.coeffs.coeff(0).re > 0.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PythagoreanMate {
    pub a: TaylorCoeffs,
    pub verdict: ExtremalityVerdict,
    /// `max_k | |a|² + |b|² - 1 |` with `a` the constructed boundary values.
    pub residual: f64,
    /// Same residual with `a` resynthesized from the truncated Taylor series.
    pub taylor_residual: f64,
}

/// The outer `a` with `|a|² + |b|² = 1` on the grid and `a(0) > 0`.
pub fn pythagorean_mate(
    b: &BoundaryGrid,
    cfg: &ExtremalityConfig,
    order: Option<usize>,
) -> Result<PythagoreanMate> {
    let verdict = extremality_test(b, cfg)?;
    if verdict.verdict == Extremality::Extreme {
        return Err(Error::ExtremeInput {
            log_integral: verdict.log_integral,
            clipped_fraction: verdict.clipped_fraction,
        });
    }
    let v: Vec<f64> = b.samples().iter().map(|s| (1.0 - s.norm_sqr()).max(0.0)).collect();
    let (logs, _) = corrected_log(&v, cfg.floor);
    let half: Vec<f64> = logs.iter().map(|l| 0.5 * l).collect();
    let n = b.size();
    let outer = outer_from_logs(&half, order.unwrap_or_else(|| default_order(n)));
    let residual = outer
        .boundary
        .iter()
        .zip(b.samples())
        .map(|(a, b)| (a.norm_sqr() + b.norm_sqr() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut padded = outer.coeffs.coeffs().to_vec();
    padded.resize(n, C64::new(0.0, 0.0));
    let taylor_residual = fourier_synthesis(&padded)
        .iter()
        .zip(b.samples())
        .map(|(a, b)| (a.norm_sqr() + b.norm_sqr() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(PythagoreanMate {
        a: outer.coeffs,
        verdict,
        residual,
        taylor_residual,
    })
}

pub const DEFAULT_CONTOUR_SAMPLES: usize = 4096;
const MAX_CONTOUR_SAMPLES: usize = 1 << 20;

/// Number of zeros of `f` in `|z| < radius` from the winding number of
/// `t ↦ f(radius·e^{it})`.
pub fn zero_count_in_disc(f: &AnalyticFn, radius: f64, samples: Option<usize>) -> Result<i64> {
    if radius <= 0.0 {
        return Err(Error::InvalidInput("radius must be positive".into()));
    }
    if matches!(f, AnalyticFn::Taylor(_)) && radius >= 1.0 {
        return Err(Error::InvalidInput("Taylor contour radius must be < 1".into()));
    }
    let mut m = samples.unwrap_or(DEFAULT_CONTOUR_SAMPLES).max(8);
    loop {
        let vals: Vec<C64> = (0..m)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                f.eval(C64::from_polar(radius, t))
            })
            .collect();
        let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::ZeroFunction);
        }
        let min = vals.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if min < 1e-6 * scale {
            return Err(Error::ZeroNearContour { distance: min / scale });
        }
        let mut total = 0.0;
        let mut resolved = true;
        for k in 0..m {
            let step = (vals[(k + 1) % m] / vals[k]).arg();
            if step.abs() > std::f64::consts::FRAC_PI_2 {
                resolved = false;
                break;
            }
            total += step;
        }
        if resolved {
            return Ok((total / (2.0 * std::f64::consts::PI)).round() as i64);
        }
        if m >= MAX_CONTOUR_SAMPLES {
            return Err(Error::InsufficientSamples(m));
        }
        m *= 2;
    }
}

/// Zeros of a numerator closer than this to the circle count as boundary zeros.
pub const BOUNDARY_MARGIN: f64 = 1e-9;

/// Zeros of `f` in the open disc (numerator roots with `|z| < 1 - margin`).
pub fn disc_zeros(f: &RationalFunction) -> Result<Vec<C64>> {
    let num = poly_trim(f.num(), 1e-14);
    if num.is_empty() {
        return Err(Error::ZeroFunction);
    }
    if num.len() == 1 {
        return Ok(Vec::new());
    }
    Ok(poly_roots(&num)?
        .roots
        .into_iter()
        .filter(|r| r.norm() < 1.0 - BOUNDARY_MARGIN)
        .collect())
}

/// A rational function is outer iff it has no zeros in the open disc:
/// it has no singular inner part and boundary zeros are log-integrable.
pub fn is_outer_rational(f: &RationalFunction) -> Result<bool> {
    Ok(disc_zeros(f)?.is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InnerDivisor {
    Trivial,
    /// Matched zero pairs `(zero of f, zero of g)`.
    Nontrivial {
        #[serde(with = "pair_list")]
        shared: Vec<(C64, C64)>,
    },
}

mod pair_list {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[(C64, C64)], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<[[f64; 2]; 2]> = v.iter().map(|(a, b)| [[a.re, a.im], [b.re, b.im]]).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(C64, C64)>, D::Error> {
        let raw: Vec<[[f64; 2]; 2]> = Vec::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|[a, b]| (C64::new(a[0], a[1]), C64::new(b[0], b[1])))
            .collect())
    }
}

pub const DEFAULT_MATCH_TOL: f64 = 1e-7;

/// Common zeros in the disc, matched within `tol`.  A common inner divisor
/// of two rational functions is a Blaschke product over these zeros.
pub fn common_inner_divisor_rational(
    f: &RationalFunction,
    g: &RationalFunction,
    tol: f64,
) -> Result<InnerDivisor> {
    let zf = disc_zeros(f)?;
    let mut zg = disc_zeros(g)?;
    let mut shared = Vec::new();
    for a in zf {
        if let Some((idx, _)) = zg
            .iter()
            .enumerate()
            .map(|(i, b)| (i, (a - b).norm()))
            .filter(|(_, d)| *d <= tol)
            .min_by(|x, y| x.1.total_cmp(&y.1))
        {
            shared.push((a, zg.remove(idx)));
        }
    }
    Ok(if shared.is_empty() {
        InnerDivisor::Trivial
    } else {
        InnerDivisor::Nontrivial { shared }
    })
}
