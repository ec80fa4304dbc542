//! Finite-dimensional contractions: defects, kernel, stability, characteristic
//! functions, coincidence, and the model contraction of an inner column.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardy::{AnalyticFn, C64};
use crate::linalg::{self, c, CMat};

pub const DEFECT_TOL: f64 = 1e-7;
pub const CONTRACTION_SLACK: f64 = 1e-8;
pub const MAX_COINCIDE_ROUNDS: usize = 200;
pub const PURITY_TOL: f64 = 1e-6;
pub const STAR_INNER_TOL: f64 = 1e-8;

/// Dense operator between labeled finite-dimensional spaces.
///
/// `interior`, when present, is an isometry (columns orthonormal) spanning the
/// part of the domain away from a truncation edge; rank checks use it.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub entries: CMat,
    pub domain_label: String,
    pub codomain_label: String,
    pub interior: Option<CMat>,
}

impl OperatorMatrix {
    pub fn new(entries: CMat, domain_label: &str, codomain_label: &str) -> Self {
        Self {
            entries,
            domain_label: domain_label.to_string(),
            codomain_label: codomain_label.to_string(),
            interior: None,
        }
    }

    pub fn square(entries: CMat, label: &str) -> Self {
        Self::new(entries, label, label)
    }

    pub fn with_interior(mut self, interior: CMat) -> Self {
        self.interior = Some(interior);
        self
    }

    pub fn dim_in(&self) -> usize {
        self.entries.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_square(&self) -> bool {
        self.dim_in() == self.dim_out()
    }

    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.entries)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
            domain_label: self.codomain_label.clone(),
            codomain_label: self.domain_label.clone(),
            interior: self.interior.clone(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::square(linalg::identity(n), "C^n")
    }

    /// Truncated forward shift on polynomials of degree < n.
    pub fn shift(n: usize) -> Self {
        Self::square(
            CMat::from_fn(n, n, |i, j| if i == j + 1 { c(1.0, 0.0) } else { c(0.0, 0.0) }),
            "H2_N",
        )
    }

    /// Truncated backward shift.
    pub fn backward_shift(n: usize) -> Self {
        Self::shift(n).adjoint()
    }

    pub fn direct_sum(&self, other: &Self) -> Self {
        let (r1, c1) = self.entries.shape();
        let (r2, c2) = other.entries.shape();
        let mut m = CMat::zeros(r1 + r2, c1 + c2);
        m.view_mut((0, 0), (r1, c1)).copy_from(&self.entries);
        m.view_mut((r1, c1), (r2, c2)).copy_from(&other.entries);
        Self::new(
            m,
            &format!("{}+{}", self.domain_label, other.domain_label),
            &format!("{}+{}", self.codomain_label, other.codomain_label),
        )
    }

    fn interior_or_identity(&self) -> CMat {
        self.interior.clone().unwrap_or_else(|| linalg::identity(self.dim_in()))
    }
}

#[derive(Serialize, Deserialize)]
struct Labels {
    domain: String,
    codomain: String,
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    dim_in: usize,
    dim_out: usize,
    entries: Vec<[f64; 2]>,
    labels: Labels,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interior: Option<InteriorJson>,
}

#[derive(Serialize, Deserialize)]
struct InteriorJson {
    cols: usize,
    entries: Vec<[f64; 2]>,
}

fn row_major(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

fn from_row_major(rows: usize, cols: usize, e: &[[f64; 2]]) -> std::result::Result<CMat, String> {
    if e.len() != rows * cols {
        return Err(format!("expected {} entries, got {}", rows * cols, e.len()));
    }
    if e.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err("non-finite entry".into());
    }
    Ok(CMat::from_fn(rows, cols, |i, j| c(e[i * cols + j][0], e[i * cols + j][1])))
}

impl Serialize for OperatorMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorJson {
            dim_in: self.dim_in(),
            dim_out: self.dim_out(),
            entries: row_major(&self.entries),
            labels: Labels { domain: self.domain_label.clone(), codomain: self.codomain_label.clone() },
            interior: self.interior.as_ref().map(|v| InteriorJson { cols: v.ncols(), entries: row_major(v) }),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OperatorMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = OperatorJson::deserialize(d)?;
        let entries = from_row_major(j.dim_out, j.dim_in, &j.entries).map_err(D::Error::custom)?;
        let interior = match j.interior {
            Some(v) => {
                let m = from_row_major(j.dim_in, v.cols, &v.entries).map_err(D::Error::custom)?;
                if linalg::isometry_defect(&m) > 1e-8 {
                    return Err(D::Error::custom("interior basis is not orthonormal"));
                }
                Some(m)
            }
            None => None,
        };
        Ok(Self { entries, domain_label: j.labels.domain, codomain_label: j.labels.codomain, interior })
    }
}

/// `D_T` with a basis of the defect space.
#[derive(Debug, Clone)]
pub struct DefectData {
    pub defect_matrix: OperatorMatrix,
    pub rank: usize,
    pub basis: CMat,
    /// Eigenvalues of `I - T*T` (or its interior compression), descending.
    pub eigenvalues: Vec<f64>,
    pub tol: f64,
}

fn defect_of(entries: &CMat, interior: Option<&CMat>, tol: f64) -> Result<DefectData> {
    let n = entries.ncols();
    let m = linalg::identity(n) - entries.adjoint() * entries;
    let (vals, vecs) = linalg::herm_eigen(&m);
    let min = vals.last().copied().unwrap_or(0.0);
    if min < -CONTRACTION_SLACK {
        return Err(Error::NotAContraction(min));
    }
    let mut d = CMat::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        if s > 0.0 {
            let col = vecs.column(k);
            d += col * col.adjoint() * c(s, 0.0);
        }
    }
    let (eigenvalues, basis) = match interior {
        Some(v) => {
            let comp = v.adjoint() * &m * v;
            let (cv, cw) = linalg::herm_eigen(&comp);
            let k = cv.iter().filter(|&&x| x > tol).count();
            (cv, v * cw.columns(0, k))
        }
        None => {
            let k = vals.iter().filter(|&&x| x > tol).count();
            (vals, vecs.columns(0, k).into_owned())
        }
    };
    Ok(DefectData {
        defect_matrix: OperatorMatrix::square(d, "defect"),
        rank: basis.ncols(),
        basis,
        eigenvalues,
        tol,
    })
}

/// Defect operator `D_T = (I - T*T)^{1/2}`.
pub fn defect(t: &OperatorMatrix, tol: f64) -> Result<DefectData> {
    defect_of(&t.entries, t.interior.as_ref(), tol)
}

/// Defect of `T*`; interior compressions use the same interior subspace.
pub fn co_defect(t: &OperatorMatrix, tol: f64) -> Result<DefectData> {
    let interior = if t.is_square() { t.interior.as_ref() } else { None };
    defect_of(&t.entries.adjoint(), interior, tol)
}

pub fn kernel_dim(t: &OperatorMatrix, tol: f64) -> usize {
    let m = match &t.interior {
        Some(v) => &t.entries * v,
        None => t.entries.clone(),
    };
    let sv = linalg::singular_values(&m);
    let missing = m.ncols().saturating_sub(sv.len());
    missing + sv.iter().filter(|&&s| s < tol).count()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    pub n_max: usize,
    pub tol: f64,
    /// `max_i ‖T^n e_i‖` over interior basis vectors.
    pub worst_norm: f64,
    /// Index of the worst basis vector.
    pub witness: usize,
}

pub fn strong_stability_check(t: &OperatorMatrix, n_max: usize, tol: f64) -> StabilityReport {
    let p = linalg::matrix_power(&t.entries, n_max) * t.interior_or_identity();
    let mut worst = (0.0, 0usize);
    for j in 0..p.ncols() {
        let nrm = p.column(j).norm();
        if nrm > worst.0 {
            worst = (nrm, j);
        }
    }
    StabilityReport { stable: worst.0 < tol, n_max, tol, worst_norm: worst.0, witness: worst.1 }
}

/// Samples of a matrix-valued analytic function.
#[derive(Debug, Clone)]
pub struct CharFnSamples {
    pub points: Vec<C64>,
    pub values: Vec<CMat>,
    pub domain_basis: Option<CMat>,
    pub codomain_basis: Option<CMat>,
}

impl CharFnSamples {
    pub fn from_fn(points: &[C64], f: impl Fn(C64) -> CMat) -> Self {
        Self {
            points: points.to_vec(),
            values: points.iter().map(|&z| f(z)).collect(),
            domain_basis: None,
            codomain_basis: None,
        }
    }

    /// Samples of the row `(f1, …, fk)`.
    pub fn row(points: &[C64], fs: &[&AnalyticFn]) -> Result<Self> {
        let mut values = Vec::with_capacity(points.len());
        for &z in points {
            let mut row = CMat::zeros(1, fs.len());
            for (j, f) in fs.iter().enumerate() {
                row[(0, j)] = crate::hardy::eval_disc(f, z)?;
            }
            values.push(row);
        }
        Ok(Self { points: points.to_vec(), values, domain_basis: None, codomain_basis: None })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.first().map(|v| v.shape()).unwrap_or((0, 0))
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    /// Same samples with each value replaced by `u · Θ · v`.
    pub fn transformed(&self, u: &CMat, v: &CMat) -> Self {
        Self {
            points: self.points.clone(),
            values: self.values.iter().map(|x| u * x * v).collect(),
            domain_basis: None,
            codomain_basis: None,
        }
    }
}

#[derive(Serialize)]
struct SampleJson {
    point: [f64; 2],
    rows: usize,
    cols: usize,
    value: Vec<[f64; 2]>,
}

impl Serialize for CharFnSamples {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let samples: Vec<SampleJson> = self
            .points
            .iter()
            .zip(&self.values)
            .map(|(p, v)| SampleJson { point: [p.re, p.im], rows: v.nrows(), cols: v.ncols(), value: row_major(v) })
            .collect();
        samples.serialize(s)
    }
}

/// 16 points: 8 equally spaced angles on each of |λ| = 0.3 and |λ| = 0.7.
pub fn default_points() -> Vec<C64> {
    let mut pts = Vec::with_capacity(16);
    for &r in &[0.3, 0.7] {
        for k in 0..8 {
            pts.push(C64::from_polar(r, 2.0 * PI * k as f64 / 8.0));
        }
    }
    pts
}

/// `Θ_T(λ) = −T + λ D_{T*}(I − λT*)^{-1} D_T`, compressed to the defect bases.
pub fn char_fn_eval(t: &OperatorMatrix, points: &[C64]) -> Result<CharFnSamples> {
    if !t.is_square() {
        return Err(Error::ShapeMismatch(format!("{}x{} operator is not square", t.dim_out(), t.dim_in())));
    }
    if let Some(p) = points.iter().find(|p| p.norm() > 0.95 + 1e-12) {
        return Err(Error::InvalidInput(format!("sample point {p} outside |z| <= 0.95")));
    }
    let dt = defect(t, DEFECT_TOL)?;
    let dts = co_defect(t, DEFECT_TOL)?;
    let n = t.dim_in();
    let a = &t.entries;
    let d_dom = &dt.defect_matrix.entries * &dt.basis;
    let base = -(dts.basis.adjoint() * a * &dt.basis);
    let left = dts.basis.adjoint() * &dts.defect_matrix.entries;
    let mut values = Vec::with_capacity(points.len());
    for &lam in points {
        let m = linalg::identity(n) - a.adjoint() * lam;
        let x = m.lu().solve(&d_dom).ok_or(Error::SolveFailure(lam))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure(lam));
        }
        values.push(&base + &left * x * lam);
    }
    Ok(CharFnSamples {
        points: points.to_vec(),
        values,
        domain_basis: Some(dt.basis),
        codomain_basis: Some(dts.basis),
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Coincidence {
    pub coincide: bool,
    #[serde(skip)]
    pub tau: CMat,
    #[serde(skip)]
    pub tau_prime: CMat,
    /// Root-mean-square Frobenius residual over the samples.
    pub residual: f64,
    pub rounds: usize,
}

fn rms_residual(a: &CharFnSamples, b: &CharFnSamples, tau: &CMat, tau_p: &CMat) -> f64 {
    let m = a.values.len().max(1) as f64;
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| linalg::fro(&(y - tau * x * tau_p)).powi(2)).sum();
    (s / m).sqrt()
}

/// Best unitaries `τ, τ′` with `Θ′ ≈ τ Θ τ′`, by alternating Procrustes steps.
pub fn coincide(theta: &CharFnSamples, theta_p: &CharFnSamples, tol: f64) -> Result<Coincidence> {
    if theta.points.len() != theta_p.points.len()
        || theta.points.iter().zip(&theta_p.points).any(|(p, q)| (p - q).norm() > 1e-12)
    {
        return Err(Error::SampleMismatch);
    }
    let (r, k) = theta.shape();
    if theta_p.shape() != (r, k) || theta.values.iter().chain(&theta_p.values).any(|v| v.shape() != (r, k)) {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", theta.shape(), theta_p.shape())));
    }
    let mut tau = linalg::identity(r);
    let mut tau_p = linalg::identity(k);
    let mut res = rms_residual(theta, theta_p, &tau, &tau_p);
    let mut rounds = 0;
    while rounds < MAX_COINCIDE_ROUNDS {
        rounds += 1;
        // τ′ step: maximize Re tr(τ′* Σ (τΘ)* Θ′)
        let mut g = CMat::zeros(k, k);
        for (x, y) in theta.values.iter().zip(&theta_p.values) {
            g += (&tau * x).adjoint() * y;
        }
        tau_p = linalg::polar_unitary(&g);
        // τ step: maximize Re tr(τ* Σ Θ′ (Θτ′)*)
        let mut h = CMat::zeros(r, r);
        for (x, y) in theta.values.iter().zip(&theta_p.values) {
            h += y * (x * &tau_p).adjoint();
        }
        tau = linalg::polar_unitary(&h);
        let next = rms_residual(theta, theta_p, &tau, &tau_p);
        let improvement = res - next;
        res = next;
        if improvement <= 1e-12 * res.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(Coincidence { coincide: res < tol, tau, tau_prime: tau_p, residual: res, rounds })
}

/// A 1×2 row is pure unless it coincides with a constant `(0, κ)`.
pub fn is_pure_row(theta: &CharFnSamples) -> Result<bool> {
    if theta.shape() != (1, 2) {
        return Err(Error::ShapeMismatch(format!("expected 1x2 values, got {:?}", theta.shape())));
    }
    let constant = CharFnSamples::from_fn(&theta.points, |_| CMat::from_row_slice(1, 2, &[c(0.0, 0.0), c(1.0, 0.0)]));
    Ok(!coincide(&constant, theta, PURITY_TOL)?.coincide)
}

/// Model contraction on `K_N = (H²_N ⊕ H²_N) ⊖ Θ H²_N` for a column `Θ = (θ1; θ2)`.
#[derive(Debug, Clone)]
pub struct ColumnModel {
    pub op: OperatorMatrix,
    /// Orthonormal basis of `K_N` in `H²_N ⊕ H²_N` coordinates (2N rows).
    pub basis: CMat,
    /// Number of trailing levels excluded from rank checks.
    pub edge: usize,
}

pub fn edge_width(n: usize) -> usize {
    n.div_ceil(8)
}

/// Upper-triangular `T_θ*` (N×N) from Taylor coefficients.
fn toeplitz_adjoint(coeffs: &[C64], n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if j >= i { coeffs.get(j - i).copied().unwrap_or_default().conj() } else { c(0.0, 0.0) })
}

/// Basis of `{(f, g) : T_θ1* f + T_θ2* g = 0}` at truncation `n`.
fn kernel_basis(c1: &[C64], c2: &[C64], n: usize) -> CMat {
    let a1 = toeplitz_adjoint(c1, n);
    let a2 = toeplitz_adjoint(c2, n);
    let p1 = c1.first().copied().unwrap_or_default().norm();
    let p2 = c2.first().copied().unwrap_or_default().norm();
    // eliminate through the column with the larger constant term when that is well conditioned
    let (piv, other, second) = if p2 >= p1 { (&a2, &a1, true) } else { (&a1, &a2, false) };
    if p1.max(p2) > 1e-8 {
        if let Some(m) = piv.solve_upper_triangular(other) {
            let m = -m;
            let big = m.iter().map(|x| x.norm()).fold(0.0, f64::max);
            if big.is_finite() && big < 1e6 {
                let mut e = CMat::zeros(2 * n, n);
                let (free, dep) = if second { (0, n) } else { (n, 0) };
                e.view_mut((free, 0), (n, n)).copy_from(&linalg::identity(n));
                e.view_mut((dep, 0), (n, n)).copy_from(&m);
                return e;
            }
        }
    }
    let mut a = CMat::zeros(n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&a1);
    a.view_mut((0, n), (n, n)).copy_from(&a2);
    linalg::null_space(&a, 1e-6)
}

fn embed(x: &CMat, from: usize, to: usize) -> CMat {
    let mut out = CMat::zeros(2 * to, x.ncols());
    out.view_mut((0, 0), (from, x.ncols())).copy_from(&x.rows(0, from));
    out.view_mut((to, 0), (from, x.ncols())).copy_from(&x.rows(from, from));
    out
}

/// Restriction of `S* ⊕ S*` to `K_N`; `K_N` is invariant, so this is exact.
pub fn column_model(c1: &[C64], c2: &[C64], n: usize) -> Result<ColumnModel> {
    if n < 8 {
        return Err(Error::InvalidInput(format!("truncation {n} below 8")));
    }
    let edge = edge_width(n);
    let raw = kernel_basis(c1, c2, n);
    if raw.ncols() == 0 {
        return Err(Error::InvalidInput("model space is trivial".into()));
    }
    let k = linalg::orthonormalize(&raw);
    let inner_raw = if raw.ncols() == n && raw.nrows() == 2 * n && is_elimination(&raw, n) {
        raw.columns(0, n - edge).into_owned()
    } else {
        embed(&kernel_basis(c1, c2, n - edge), n - edge, n)
    };
    let interior = linalg::orthonormalize(&(k.adjoint() * inner_raw));
    let t = k.adjoint() * backward_shift_pair(&k, n);
    Ok(ColumnModel { op: OperatorMatrix::square(t, "K_N").with_interior(interior), basis: k, edge })
}

/// `(S* ⊕ S*) x` for columns `x` of length `2n`.
pub fn backward_shift_pair(x: &CMat, n: usize) -> CMat {
    let mut shifted = CMat::zeros(2 * n, x.ncols());
    for blk in [0, n] {
        shifted.view_mut((blk, 0), (n - 1, x.ncols())).copy_from(&x.rows(blk + 1, n - 1));
    }
    shifted
}

fn is_elimination(raw: &CMat, n: usize) -> bool {
    // the elimination basis has an identity block in one half
    let one = c(1.0, 0.0);
    (0..n).all(|i| raw[(i, i)] == one) || (0..n).all(|i| raw[(n + i, i)] == one)
}

/// Max of `| |φ1|² + |φ2|² − 1 |` on a boundary grid.
pub fn star_inner_residual(phi1: &AnalyticFn, phi2: &AnalyticFn, size: usize) -> Result<f64> {
    let g1 = crate::hardy::synthesize(phi1, size)?;
    let g2 = crate::hardy::synthesize(phi2, size)?;
    Ok(g1
        .samples()
        .iter()
        .zip(g2.samples())
        .map(|(x, y)| (x.norm_sqr() + y.norm_sqr() - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Contraction whose characteristic function coincides with the row `(φ1 φ2)`.
pub fn build_from_inner_column(phi1: &AnalyticFn, phi2: &AnalyticFn, n: usize) -> Result<ColumnModel> {
    build_from_inner_column_with(phi1, phi2, n, STAR_INNER_TOL)
}

/// As [`build_from_inner_column`] with an explicit `*-inner` tolerance.
pub fn build_from_inner_column_with(phi1: &AnalyticFn, phi2: &AnalyticFn, n: usize, star_tol: f64) -> Result<ColumnModel> {
    let res = star_inner_residual(phi1, phi2, 1024)?;
    if res > star_tol {
        return Err(Error::NotStarInner(res));
    }
    let row = CharFnSamples::row(&default_points(), &[phi1, phi2])?;
    if !is_pure_row(&row)? {
        return Err(Error::NotPure);
    }
    let c1 = phi1.tilde().to_taylor(n);
    let c2 = phi2.tilde().to_taylor(n);
    column_model(c1.coeffs(), c2.coeffs(), n)
}
