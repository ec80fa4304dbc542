//! Truncated Hardy-space substrate.
//!
//! Functions on the disc are carried either as truncated Taylor series
//! ([`TaylorCoeffs`]) or as exact rational functions ([`RationalFunction`]).
//! Boundary values live on a uniform power-of-two grid ([`BoundaryGrid`]);
//! conversions go through the FFT.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ANALYTIC_TOL: f64 = 1e-8;
/// Denominator roots closer than this to the closed disc are rejected.
pub const DEN_MARGIN: f64 = 1e-9;

/// Serde helper: complex numbers as `[re, im]` pairs.
pub mod cpairs {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

/// Serde helper for a single complex number.
pub mod cpair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &C64, s: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

/// Serde helper for a complex 2-vector.
pub mod cpair_array {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64; 2], s: S) -> Result<S::Ok, S::Error> {
        [[v[0].re, v[0].im], [v[1].re, v[1].im]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[C64; 2], D::Error> {
        let [[a, b], [x, y]] = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok([C64::new(a, b), C64::new(x, y)])
    }
}

pub fn is_pow2_grid(size: usize) -> bool {
    size >= 8 && size.is_power_of_two()
}

pub fn check_grid(size: usize) -> Result<()> {
    if is_pow2_grid(size) {
        Ok(())
    } else {
        Err(Error::BadGridSize(size))
    }
}

/// Grid angle `t_k = 2πk/size`.
pub fn grid_angle(k: usize, size: usize) -> f64 {
    2.0 * PI * k as f64 / size as f64
}

pub fn grid_point(k: usize, size: usize) -> C64 {
    C64::from_polar(1.0, grid_angle(k, size))
}

/// Forward DFT normalized so that output `k` is the Fourier coefficient of
/// frequency `k` (taken mod `n`).
pub fn fourier_coeffs(samples: &[C64]) -> Vec<C64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Inverse of [`fourier_coeffs`]: samples from coefficients.
pub fn fourier_synthesis(coeffs: &[C64]) -> Vec<C64> {
    let mut buf = coeffs.to_vec();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

// ---------------------------------------------------------------------------
// polynomial helpers (coefficients low to high)

pub fn horner(p: &[C64], z: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

pub fn poly_derivative(p: &[C64]) -> Vec<C64> {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

pub fn poly_mul(p: &[C64], q: &[C64]) -> Vec<C64> {
    if p.is_empty() || q.is_empty() {
        return Vec::new();
    }
    let mut out = vec![C64::new(0.0, 0.0); p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

pub fn poly_add(p: &[C64], q: &[C64]) -> Vec<C64> {
    let n = p.len().max(q.len());
    (0..n)
        .map(|k| p.get(k).copied().unwrap_or_default() + q.get(k).copied().unwrap_or_default())
        .collect()
}

pub fn poly_scale(p: &[C64], s: C64) -> Vec<C64> {
    p.iter().map(|&c| c * s).collect()
}

/// Drops trailing coefficients with modulus `<= rel * max|c|`.
pub fn poly_trim(p: &[C64], rel: f64) -> Vec<C64> {
    let scale = p.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut out = p.to_vec();
    while let Some(last) = out.last() {
        if last.norm() <= rel * scale {
            out.pop();
        } else {
            break;
        }
    }
    out
}

/// `f̃(z) = conj(f(conj z))`: conjugates every coefficient.
pub fn conj_coeffs(p: &[C64]) -> Vec<C64> {
    p.iter().map(|c| c.conj()).collect()
}

// ---------------------------------------------------------------------------

/// Boundary values on the uniform grid `t_k = 2πk/size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    #[serde(with = "cpairs")]
    samples: Vec<C64>,
}

impl BoundaryGrid {
    pub fn new(samples: Vec<C64>) -> Result<Self> {
        check_grid(samples.len())?;
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite grid sample".into()));
        }
        Ok(Self { samples })
    }

    pub fn from_fn(size: usize, f: impl Fn(C64) -> C64) -> Result<Self> {
        check_grid(size)?;
        Self::new((0..size).map(|k| f(grid_point(k, size))).collect())
    }

    pub fn from_real(values: Vec<f64>) -> Result<Self> {
        Self::new(values.into_iter().map(|v| C64::new(v, 0.0)).collect())
    }

    pub fn size(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn sup_abs(&self) -> f64 {
        self.samples.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Result<Self> {
        Self::new(self.samples.iter().map(|&c| f(c)).collect())
    }
}

/// Truncated power series `c_0 + c_1 z + … + c_{N-1} z^{N-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorCoeffs {
    #[serde(with = "cpairs")]
    coeffs: Vec<C64>,
}

impl TaylorCoeffs {
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("empty coefficient list".into()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self {
            coeffs: coeffs.iter().map(|&c| C64::new(c, 0.0)).collect(),
        }
    }

    pub fn constant(c: C64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Coefficient `k`, zero past the truncation.
    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn eval(&self, z: C64) -> C64 {
        horner(&self.coeffs, z)
    }

    /// Energy `Σ_{k>=from} |c_k|²`.
    pub fn tail_energy(&self, from: usize) -> f64 {
        self.coeffs.iter().skip(from).map(|c| c.norm_sqr()).sum()
    }

    pub fn tilde(&self) -> Self {
        Self {
            coeffs: conj_coeffs(&self.coeffs),
        }
    }

    pub fn truncated(&self, order: usize) -> Self {
        let mut coeffs: Vec<C64> = self.coeffs.iter().take(order).copied().collect();
        coeffs.resize(order.max(1), C64::new(0.0, 0.0));
        Self { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == C64::new(0.0, 0.0))
    }
}

/// `num(z) / den(z)` with `den(0) = 1` and no zeros of `den` on the closed disc.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalFunction {
    #[serde(with = "cpairs")]
    num: Vec<C64>,
    #[serde(with = "cpairs")]
    den: Vec<C64>,
}

impl RationalFunction {
    pub fn new(num: Vec<C64>, den: Vec<C64>) -> Result<Self> {
        let den = poly_trim(&den, 0.0);
        if den.is_empty() {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        let d0 = den[0];
        if d0.norm() == 0.0 {
            return Err(Error::DenominatorZero {
                root: C64::new(0.0, 0.0),
                modulus: 0.0,
            });
        }
        let den: Vec<C64> = den.iter().map(|&c| c / d0).collect();
        let mut num: Vec<C64> = num.iter().map(|&c| c / d0).collect();
        if num.is_empty() {
            num.push(C64::new(0.0, 0.0));
        }
        if den.len() > 1 {
            let roots = poly_roots(&den)?;
            for r in roots.roots {
                if r.norm() < 1.0 + DEN_MARGIN {
                    return Err(Error::DenominatorZero {
                        root: r,
                        modulus: r.norm(),
                    });
                }
            }
        }
        Ok(Self { num, den })
    }

    pub fn polynomial(coeffs: Vec<C64>) -> Self {
        Self {
            num: if coeffs.is_empty() {
                vec![C64::new(0.0, 0.0)]
            } else {
                coeffs
            },
            den: vec![C64::new(1.0, 0.0)],
        }
    }

    pub fn from_real(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(
            num.iter().map(|&c| C64::new(c, 0.0)).collect(),
            den.iter().map(|&c| C64::new(c, 0.0)).collect(),
        )
    }

    /// Blaschke-type factor `(z - w) / (1 - conj(w) z)`, `|w| < 1`.
    pub fn blaschke(w: C64) -> Result<Self> {
        Self::new(vec![-w, C64::new(1.0, 0.0)], vec![C64::new(1.0, 0.0), -w.conj()])
    }

    pub fn num(&self) -> &[C64] {
        &self.num
    }

    pub fn den(&self) -> &[C64] {
        &self.den
    }

    pub fn eval(&self, z: C64) -> C64 {
        horner(&self.num, z) / horner(&self.den, z)
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|c| c.norm() == 0.0)
    }

    pub fn tilde(&self) -> Self {
        Self {
            num: conj_coeffs(&self.num),
            den: conj_coeffs(&self.den),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            num: poly_scale(&self.num, s),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            num: poly_mul(&self.num, &other.num),
            den: poly_mul(&self.den, &other.den),
        }
    }

    /// `α·self + β·other` over the common denominator (shared when equal).
    pub fn combine(&self, alpha: C64, other: &Self, beta: C64) -> Self {
        if self.den == other.den {
            Self {
                num: poly_add(&poly_scale(&self.num, alpha), &poly_scale(&other.num, beta)),
                den: self.den.clone(),
            }
        } else {
            let a = poly_mul(&poly_scale(&self.num, alpha), &other.den);
            let b = poly_mul(&poly_scale(&other.num, beta), &self.den);
            Self {
                num: poly_add(&a, &b),
                den: poly_mul(&self.den, &other.den),
            }
        }
    }

    /// First `order` Taylor coefficients by series division (`den(0) = 1`).
    pub fn taylor(&self, order: usize) -> TaylorCoeffs {
        let mut c = vec![C64::new(0.0, 0.0); order.max(1)];
        for k in 0..c.len() {
            let mut acc = self.num.get(k).copied().unwrap_or_default();
            for j in 1..self.den.len().min(k + 1) {
                acc -= self.den[j] * c[k - j];
            }
            c[k] = acc;
        }
        TaylorCoeffs { coeffs: c }
    }
}

impl<'de> Deserialize<'de> for RationalFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(with = "cpairs")]
            num: Vec<C64>,
            #[serde(with = "cpairs")]
            den: Vec<C64>,
        }
        let raw = Raw::deserialize(d)?;
        RationalFunction::new(raw.num, raw.den).map_err(serde::de::Error::custom)
    }
}

/// Either representation, in the JSON form
/// `{"type":"rational","num":…,"den":…}` / `{"type":"taylor","coeffs":…}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AnalyticFn {
    Rational(RationalFunction),
    Taylor(TaylorCoeffs),
}

impl AnalyticFn {
    pub fn eval(&self, z: C64) -> C64 {
        match self {
            AnalyticFn::Rational(r) => r.eval(z),
            AnalyticFn::Taylor(t) => t.eval(z),
        }
    }

    pub fn to_taylor(&self, order: usize) -> TaylorCoeffs {
        match self {
            AnalyticFn::Rational(r) => r.taylor(order),
            AnalyticFn::Taylor(t) => t.truncated(order.max(t.order())),
        }
    }

    pub fn tilde(&self) -> Self {
        match self {
            AnalyticFn::Rational(r) => AnalyticFn::Rational(r.tilde()),
            AnalyticFn::Taylor(t) => AnalyticFn::Taylor(t.tilde()),
        }
    }
}

impl From<RationalFunction> for AnalyticFn {
    fn from(r: RationalFunction) -> Self {
        AnalyticFn::Rational(r)
    }
}

impl From<TaylorCoeffs> for AnalyticFn {
    fn from(t: TaylorCoeffs) -> Self {
        AnalyticFn::Taylor(t)
    }
}

/// Boundary samples `f(e^{i t_k})`.
pub fn synthesize(f: &AnalyticFn, size: usize) -> Result<BoundaryGrid> {
    check_grid(size)?;
    match f {
        AnalyticFn::Taylor(t) => {
            if size < 2 * t.order() {
                return Err(Error::GridTooSmall {
                    size,
                    order: t.order(),
                });
            }
            let mut buf = t.coeffs.clone();
            buf.resize(size, C64::new(0.0, 0.0));
            BoundaryGrid::new(fourier_synthesis(&buf))
        }
        AnalyticFn::Rational(r) => {
            if r.den.len() > 1 {
                for root in poly_roots(&r.den)?.roots {
                    if (root.norm() - 1.0).abs() < DEN_MARGIN || root.norm() < 1.0 {
                        return Err(Error::DenominatorZero {
                            root,
                            modulus: root.norm(),
                        });
                    }
                }
            }
            BoundaryGrid::from_fn(size, |z| r.eval(z))
        }
    }
}

/// Result of [`analyze`].
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub coeffs: TaylorCoeffs,
    /// Energy in frequencies `size/2..size` (read as negative) over total energy.
    pub negative_energy_ratio: f64,
}

/// Fourier analysis of boundary samples; frequencies `0..size/2` are the
/// Taylor part, the upper half is read as negative frequencies.
pub fn analyze(g: &BoundaryGrid, tol: f64) -> Result<Analysis> {
    let n = g.size();
    let c = fourier_coeffs(&g.samples);
    let total: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    let neg: f64 = c[n / 2..].iter().map(|x| x.norm_sqr()).sum();
    let ratio = if total > 0.0 { neg / total } else { 0.0 };
    if ratio > tol {
        return Err(Error::NotAnalytic { ratio, tol });
    }
    Ok(Analysis {
        coeffs: TaylorCoeffs {
            coeffs: c[..n / 2].to_vec(),
        },
        negative_energy_ratio: ratio,
    })
}

/// Horner evaluation inside the disc.  Taylor series are only trusted for
/// `|z| < 1`; the truncation error grows quickly past `|z| ≈ 0.9`.
pub fn eval_disc(f: &AnalyticFn, z: C64) -> Result<C64> {
    if let AnalyticFn::Taylor(_) = f {
        if z.norm() >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "Taylor series evaluated at |z| = {} >= 1",
                z.norm()
            )));
        }
    }
    Ok(f.eval(z))
}

/// Roots with residuals `|p(root)|` after polishing.
#[derive(Debug, Clone, PartialEq)]
pub struct RootReport {
    pub roots: Vec<C64>,
    pub residuals: Vec<f64>,
}

impl RootReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// All roots (with multiplicity) from the eigenvalues of the companion
/// matrix, followed by one Newton step per root.
pub fn poly_roots(p: &[C64]) -> Result<RootReport> {
    let p = poly_trim(p, 0.0);
    if p.len() < 2 {
        return Err(Error::DegreeZero);
    }
    let deg = p.len() - 1;
    let lead = p[deg];
    // exact zeros at the origin are split off so the companion matrix stays small
    let zeros_at_origin = p.iter().take_while(|c| c.norm() == 0.0).count();
    let q = &p[zeros_at_origin..];
    let qdeg = q.len() - 1;
    let mut roots = vec![C64::new(0.0, 0.0); zeros_at_origin];
    if qdeg == 1 {
        roots.push(-q[0] / q[1]);
    } else if qdeg > 1 {
        let mut comp = DMatrix::<C64>::zeros(qdeg, qdeg);
        for i in 1..qdeg {
            comp[(i, i - 1)] = C64::new(1.0, 0.0);
        }
        for i in 0..qdeg {
            comp[(i, qdeg - 1)] = -q[i] / lead;
        }
        let t = match Schur::try_new(comp.clone(), 1e-15, 10_000) {
            Some(s) => s.unpack().1,
            None => Schur::new(comp).unpack().1,
        };
        roots.extend(t.diagonal().iter().copied());
    }
    let dp = poly_derivative(&p);
    let mut residuals = Vec::with_capacity(deg);
    for r in roots.iter_mut() {
        let d = horner(&dp, *r);
        let v = horner(&p, *r);
        if d.norm() > 0.0 && v.norm() > 0.0 {
            let cand = *r - v / d;
            if horner(&p, cand).norm() < v.norm() {
                *r = cand;
            }
        }
        residuals.push(horner(&p, *r).norm());
    }
    Ok(RootReport { roots, residuals })
}
