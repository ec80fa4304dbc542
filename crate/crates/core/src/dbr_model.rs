//! Truncated de Branges–Rovnyak model: `T_b`, `T_a`, the isometry `B`, the
//! model space `K_B = (H² ⊕ H²) ⊖ B H²` and the model operator `Y_b`.

use nalgebra::SVD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorization::{pythagorean_mate, ExtremalityConfig, ExtremalityVerdict};
use crate::hardy::{fourier_coeffs, synthesize, AnalyticFn, TaylorCoeffs, C64};
use crate::linalg::{self, c, CMat};
use crate::operators::{
    self, backward_shift_pair, char_fn_eval, co_defect, coincide, column_model, defect, kernel_dim,
    CharFnSamples, Coincidence, OperatorMatrix, DEFECT_TOL,
};

/// Grid used to factor `1 - |b|²`.
pub const MODEL_GRID: usize = 65536;
pub const KERNEL_DIM_TOL: f64 = 1e-7;

/// Lower-triangular Toeplitz matrix with entries `c_{i-j}`.
pub fn toeplitz_analytic(f: &TaylorCoeffs, n: usize) -> OperatorMatrix {
    toeplitz_rect(f.coeffs(), n, n)
}

fn toeplitz_rect(coeffs: &[C64], rows: usize, cols: usize) -> OperatorMatrix {
    OperatorMatrix::new(
        CMat::from_fn(rows, cols, |i, j| {
            if i >= j {
                coeffs.get(i - j).copied().unwrap_or_default()
            } else {
                c(0.0, 0.0)
            }
        }),
        "H2_N",
        "H2_N",
    )
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LedgerEntry {
    pub name: String,
    pub half: f64,
    pub full: f64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ModelResiduals {
    /// `‖B*B − I‖` with rows extended past the truncation.
    pub isometry: f64,
    /// `max |K*K − I|`.
    pub k_orthonormality: f64,
    /// `‖K* B_N‖`.
    pub k_perp_b: f64,
    /// `‖(I − KK*)(S*⊕S*)K‖` on the interior block.
    pub invariance: f64,
    /// Smallest singular value of the first-coordinate block of `K`.
    pub first_block_min_sv: f64,
    pub first_block_cond: f64,
    /// `max | |a|² + |b|² − 1 |` on the factorization grid.
    pub mate: f64,
}

#[derive(Debug, Clone)]
pub struct DbrModel {
    pub b_fn: AnalyticFn,
    pub b: TaylorCoeffs,
    pub a: TaylorCoeffs,
    pub n: usize,
    pub tb: OperatorMatrix,
    pub ta: OperatorMatrix,
    pub b_op: OperatorMatrix,
    pub k_basis: CMat,
    pub yb: OperatorMatrix,
    pub verdict: ExtremalityVerdict,
    pub residuals: ModelResiduals,
    pub ledger: Vec<LedgerEntry>,
}

struct Invariants {
    isometry: f64,
    k_orthonormality: f64,
    k_perp_b: f64,
    invariance: f64,
    first_min: f64,
    first_cond: f64,
    model: operators::ColumnModel,
}

fn invariants(b: &[C64], a: &[C64], n: usize) -> Result<Invariants> {
    let ext = b.len().min(a.len());
    let tb = toeplitz_rect(b, ext, n).entries;
    let ta = toeplitz_rect(a, ext, n).entries;
    let gram = tb.adjoint() * &tb + ta.adjoint() * &ta;
    let isometry = linalg::op_norm(&(gram - linalg::identity(n)));
    let neg_a: Vec<C64> = a.iter().map(|x| -x).collect();
    let model = column_model(b, &neg_a, n)?;
    let k = &model.basis;
    let mut bn = CMat::zeros(2 * n, n);
    bn.view_mut((0, 0), (n, n)).copy_from(&tb.rows(0, n));
    bn.view_mut((n, 0), (n, n)).copy_from(&(-ta.rows(0, n)));
    let k_perp_b = linalg::op_norm(&(k.adjoint() * bn));
    let kv = k * model.op.interior.as_ref().expect("column model has interior");
    let sk = backward_shift_pair(&kv, n);
    let invariance = linalg::op_norm(&(&sk - k * (k.adjoint() * &sk)));
    let sv = linalg::singular_values(&k.rows(0, n).into_owned());
    let first_min = sv.last().copied().unwrap_or(0.0);
    let first_cond = sv.first().copied().unwrap_or(0.0) / first_min;
    Ok(Invariants {
        isometry,
        k_orthonormality: linalg::isometry_defect(k),
        k_perp_b,
        invariance,
        first_min,
        first_cond,
        model,
    })
}

pub fn build_model(b: &AnalyticFn, n: usize) -> Result<DbrModel> {
    build_model_with(b, n, MODEL_GRID)
}

/// Model at truncation `n`, factoring `1 − |b|²` on a grid of `grid` points.
pub fn build_model_with(b: &AnalyticFn, n: usize, grid: usize) -> Result<DbrModel> {
    if !n.is_power_of_two() || n < 32 {
        return Err(Error::InvalidInput(format!("truncation {n} must be a power of two >= 32")));
    }
    let order = (2 * n).max(512);
    if grid < 2 * order {
        return Err(Error::GridTooSmall { size: grid, order });
    }
    let bt = b.to_taylor(order);
    if bt.coeffs().iter().all(|x| x.norm() < 1e-300) {
        return Err(Error::ZeroB);
    }
    let bg = synthesize(b, grid)?;
    let mate = pythagorean_mate(&bg, &ExtremalityConfig::default(), Some(order))?;
    let a = mate.a.clone();
    let full = invariants(bt.coeffs(), a.coeffs(), n)?;
    if full.isometry > 1e-9 {
        return Err(Error::IsometryResidualTooLarge(full.isometry));
    }
    let half = invariants(bt.coeffs(), a.coeffs(), n / 2)?;
    let ledger = vec![
        LedgerEntry { name: "isometry".into(), half: half.isometry, full: full.isometry },
        LedgerEntry { name: "k_orthonormality".into(), half: half.k_orthonormality, full: full.k_orthonormality },
        LedgerEntry { name: "k_perp_b".into(), half: half.k_perp_b, full: full.k_perp_b },
        LedgerEntry { name: "invariance".into(), half: half.invariance, full: full.invariance },
        LedgerEntry { name: "first_block_min_sv".into(), half: half.first_min, full: full.first_min },
    ];
    let tb = toeplitz_analytic(&bt, n);
    let ta = toeplitz_analytic(&a, n);
    let mut bm = CMat::zeros(2 * n, n);
    bm.view_mut((0, 0), (n, n)).copy_from(&tb.entries);
    bm.view_mut((n, 0), (n, n)).copy_from(&(-&ta.entries));
    Ok(DbrModel {
        b_fn: b.clone(),
        b: bt,
        a,
        n,
        tb,
        ta,
        b_op: OperatorMatrix::new(bm, "H2_N", "H2_N+H2_N"),
        k_basis: full.model.basis.clone(),
        yb: full.model.op.clone(),
        verdict: mate.verdict,
        residuals: ModelResiduals {
            isometry: full.isometry,
            k_orthonormality: full.k_orthonormality,
            k_perp_b: full.k_perp_b,
            invariance: full.invariance,
            first_block_min_sv: full.first_min,
            first_block_cond: full.first_cond,
            mate: mate.residual,
        },
        ledger,
    })
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub struct DefectProfile {
    pub defect: usize,
    pub codefect: usize,
    pub kernel: usize,
}

impl DefectProfile {
    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.defect, self.codefect, self.kernel)
    }
}

/// `(dim D_T, dim D_T*, dim ker T)` on the interior block.
pub fn operator_profile(t: &OperatorMatrix) -> Result<DefectProfile> {
    Ok(DefectProfile {
        defect: defect(t, DEFECT_TOL)?.rank,
        codefect: co_defect(t, DEFECT_TOL)?.rank,
        kernel: kernel_dim(t, KERNEL_DIM_TOL),
    })
}

pub fn defect_profile(m: &DbrModel) -> Result<DefectProfile> {
    operator_profile(&m.yb)
}

#[derive(Debug, Clone)]
pub struct ModelCharFn {
    pub computed: CharFnSamples,
    /// `(ã(λ), b̃(λ))` at the same points.
    pub closed_form: CharFnSamples,
    /// `None` when the shapes differ: for constant `b` the row `(ã b̃)` is
    /// constant and `Y_b` reduces to a backward shift with one defect.
    pub coincidence: Option<Coincidence>,
}

/// Characteristic function of `Y_b` next to the closed form `(ã b̃)`.
pub fn char_fn_of_model(m: &DbrModel, points: &[C64], tol: f64) -> Result<ModelCharFn> {
    let computed = char_fn_eval(&m.yb, points)?;
    let at = m.a.tilde();
    let bt = m.b_fn.tilde();
    let closed_form = CharFnSamples::from_fn(points, |z| CMat::from_row_slice(1, 2, &[at.eval(z), bt.eval(z)]));
    let coincidence = if computed.shape() == closed_form.shape() {
        Some(coincide(&computed, &closed_form, tol)?)
    } else {
        None
    };
    Ok(ModelCharFn { computed, closed_form, coincidence })
}

/// Two-sided model on `H²_N ⊕ L²` with `L²` truncated to modes `−M..N−1`.
#[derive(Debug, Clone)]
pub struct TildeModel {
    pub n: usize,
    pub m: usize,
    /// Orthonormal basis of the truncated `K̃_b` in ambient coordinates.
    pub kt_basis: CMat,
    /// `𝐘_b` in `kt_basis` coordinates.
    pub ybold: OperatorMatrix,
    /// `J_b` in `kt_basis` coordinates.
    pub j_basis: CMat,
    /// `K_b` (the complement of `J_b`) in `kt_basis` coordinates.
    pub k_part: CMat,
    /// `‖P_K (S*⊕Z*)|K̃ − 𝐘_b‖`: leakage of the truncated space.
    pub invariance_leak: f64,
}

fn two_sided_delta(b: &AnalyticFn, n: usize, m: usize) -> Result<CMat> {
    let size = (8 * (n + m)).next_power_of_two().max(1024);
    let g = synthesize(b, size)?;
    let d: Vec<C64> = g.samples().iter().map(|s| c((1.0 - s.norm_sqr()).max(0.0).sqrt(), 0.0)).collect();
    let dh = fourier_coeffs(&d);
    let at = |k: i64| dh[k.rem_euclid(size as i64) as usize];
    Ok(CMat::from_fn(n + m, n, |p, j| at(p as i64 - m as i64 - j as i64)))
}

pub fn build_tilde_model(base: &DbrModel, m: usize) -> Result<TildeModel> {
    let n = base.n;
    if 2 * m < n {
        return Err(Error::InvalidInput(format!("M = {m} below N/2")));
    }
    let dim = 2 * n + m;
    let dmat = two_sided_delta(&base.b_fn, n, m)?;
    let mut phi = CMat::zeros(dim, n);
    phi.view_mut((0, 0), (n, n)).copy_from(&base.tb.entries);
    phi.view_mut((n, 0), (n + m, n)).copy_from(&dmat);
    let kt = linalg::null_space(&phi.adjoint(), 1e-6);
    // range of Δ-multiplication, cut at 1e-8
    let svd = SVD::new(dmat.clone(), true, false);
    let u = svd.u.expect("u requested");
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-8).collect();
    let ud = CMat::from_fn(n + m, keep.len(), |r, k| u[(r, keep[k])]);
    let comp = linalg::null_space(&ud.adjoint(), 1e-6);
    let mut j_amb = CMat::zeros(dim, comp.ncols());
    j_amb.view_mut((n, 0), (n + m, comp.ncols())).copy_from(&comp);
    let j_basis = linalg::orthonormalize(&(kt.adjoint() * &j_amb));
    let k_part = linalg::null_space(&j_basis.adjoint(), 1e-6);
    // S* on the first block, Z* (mode p → p−1, lowest mode dropped) on the second
    let mut shift = CMat::zeros(dim, dim);
    for i in 0..n - 1 {
        shift[(i, i + 1)] = c(1.0, 0.0);
    }
    for p in 0..n + m - 1 {
        shift[(n + p, n + p + 1)] = c(1.0, 0.0);
    }
    let sk = &shift * &kt;
    let ybold = kt.adjoint() * &sk;
    let invariance_leak = linalg::op_norm(&(&sk - &kt * &ybold));
    Ok(TildeModel {
        n,
        m,
        kt_basis: kt,
        ybold: OperatorMatrix::square(ybold, "K~_N"),
        j_basis,
        k_part,
        invariance_leak,
    })
}

impl TildeModel {
    /// `max_{n ≤ n_max} ‖Y^n − P_K 𝐘^n|K‖` with `Y = P_K 𝐘|K`.
    pub fn dilation_residual(&self, n_max: usize) -> f64 {
        let k = &self.k_part;
        let y = k.adjoint() * &self.ybold.entries * k;
        let mut yn = linalg::identity(k.ncols());
        let mut bn = linalg::identity(self.ybold.dim_in());
        let mut worst: f64 = 0.0;
        for _ in 0..n_max {
            yn = &y * yn;
            bn = &self.ybold.entries * bn;
            worst = worst.max(linalg::op_norm(&(&yn - k.adjoint() * &bn * k)));
        }
        worst
    }

    /// `‖(𝐘x)*(𝐘x) − I‖` over `x ∈ J_b` with no weight on the lowest mode.
    pub fn j_isometry_residual(&self) -> f64 {
        let row = self.kt_basis.rows(self.n, 1) * &self.j_basis;
        let sub = &self.j_basis * linalg::null_space(&row, 1e-9);
        let y = &self.ybold.entries * &sub;
        linalg::op_norm(&(y.adjoint() * &y - linalg::identity(sub.ncols())))
    }

    /// Random unit vectors in `K_b` must lose norm under `𝐘_b` powers.
    pub fn isometric_escape(&self, trials: usize, delta: f64, seed: u64) -> EscapeReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.k_part.ncols();
        let steps = 4 * self.n;
        let mut escaped = 0;
        let mut worst_final: f64 = 0.0;
        for _ in 0..trials {
            let v = CMat::from_fn(d, 1, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let mut x = &self.k_part * (&v / c(v.norm(), 0.0));
            let mut hit = false;
            for _ in 0..steps {
                x = &self.ybold.entries * x;
                if x.norm() < 1.0 - delta {
                    hit = true;
                    break;
                }
            }
            worst_final = worst_final.max(x.norm());
            escaped += hit as usize;
        }
        EscapeReport { trials, escaped, worst_final_norm: worst_final }
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct EscapeReport {
    pub trials: usize,
    pub escaped: usize,
    pub worst_final_norm: f64,
}

/// Gram matrix of the `H(b)` reproducing kernel.
#[derive(Debug, Clone)]
pub struct KernelGram {
    pub points: Vec<C64>,
    pub gram: CMat,
    pub min_eigenvalue: f64,
}

pub fn kernel_gram(b: &AnalyticFn, points: &[C64]) -> Result<KernelGram> {
    for (i, p) in points.iter().enumerate() {
        if p.norm() > 0.9 + 1e-12 {
            return Err(Error::InvalidInput(format!("point {p} outside |w| <= 0.9")));
        }
        if points[..i].iter().any(|q| (p - q).norm() < 1e-12) {
            return Err(Error::InvalidInput(format!("repeated point {p}")));
        }
    }
    let bv: Vec<C64> = points.iter().map(|&w| b.eval(w)).collect();
    let one = c(1.0, 0.0);
    let gram = CMat::from_fn(points.len(), points.len(), |i, j| {
        (one - bv[j].conj() * bv[i]) / (one - points[j].conj() * points[i])
    });
    let (vals, _) = linalg::herm_eigen(&gram);
    let min_eigenvalue = vals.last().copied().unwrap_or(0.0);
    if min_eigenvalue < -1e-9 {
        return Err(Error::NotPsd(min_eigenvalue));
    }
    Ok(KernelGram { points: points.to_vec(), gram, min_eigenvalue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardy::RationalFunction;
    use crate::operators::{default_points, strong_stability_check};
    use std::f64::consts::FRAC_1_SQRT_2 as S2;

    fn poly(c: &[f64]) -> AnalyticFn {
        AnalyticFn::Taylor(TaylorCoeffs::from_real(c))
    }

    #[test]
    fn toeplitz_basics() {
        let id = toeplitz_analytic(&TaylorCoeffs::from_real(&[1.0]), 5);
        assert_eq!(id.entries, linalg::identity(5));
        let s = toeplitz_analytic(&TaylorCoeffs::from_real(&[0.0, 1.0]), 5);
        assert_eq!(s.entries, OperatorMatrix::shift(5).entries);
    }

    #[test]
    fn toeplitz_multiplicative_away_from_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let f: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // product coefficients by direct convolution
            let mut fg = vec![0.0; 8];
            for (i, x) in f.iter().enumerate() {
                for (j, y) in g.iter().enumerate() {
                    fg[i + j] += x * y;
                }
            }
            let n = 16;
            let tf = toeplitz_analytic(&TaylorCoeffs::from_real(&f), n).entries;
            let tg = toeplitz_analytic(&TaylorCoeffs::from_real(&g), n).entries;
            let tfg = toeplitz_analytic(&TaylorCoeffs::from_real(&fg), n).entries;
            assert!(linalg::fro(&(tf * tg - tfg)) < 1e-12);
        }
    }

    #[test]
    fn model_sqrt2() {
        let m = build_model(&poly(&[0.0, S2]), 128).unwrap();
        assert!(m.residuals.isometry < 1e-9);
        assert_eq!(m.k_basis.ncols(), 128);
        assert!(m.residuals.k_orthonormality < 1e-10);
        assert!(m.residuals.k_perp_b < 1e-9);
        assert!(m.residuals.invariance < 1e-8);
        assert!(m.residuals.first_block_min_sv > 0.1);
        assert_eq!(defect_profile(&m).unwrap().as_tuple(), (2, 1, 1));
        let cf = char_fn_of_model(&m, &default_points(), 1e-3).unwrap();
        let r = cf.coincidence.unwrap();
        assert!(r.coincide, "{}", r.residual);
        assert_eq!(m.ledger.len(), 5);
    }

    #[test]
    fn model_constant_b() {
        let m = build_model(&poly(&[0.6]), 32).unwrap();
        let cf = char_fn_of_model(&m, &default_points(), 1e-3).unwrap();
        for v in &cf.closed_form.values {
            assert!((v[(0, 0)] - c(0.8, 0.0)).norm() < 1e-10);
            assert!((v[(0, 1)] - c(0.6, 0.0)).norm() < 1e-14);
        }
        assert!(cf.coincidence.is_none());
        assert_eq!(defect_profile(&m).unwrap().as_tuple(), (1, 0, 1));
    }

    #[test]
    fn model_one_minus_z() {
        let m = build_model(&poly(&[0.5, -0.5]), 256).unwrap();
        assert!(m.residuals.isometry < 1e-9, "{}", m.residuals.isometry);
        assert!(m.residuals.k_perp_b < 1e-9);
        assert_eq!(defect_profile(&m).unwrap().as_tuple(), (2, 1, 1));
        assert!(strong_stability_check(&m.yb, 400, 1e-6).stable);
    }

    #[test]
    fn model_rejections() {
        assert_eq!(build_model(&poly(&[0.0]), 32).unwrap_err(), Error::ZeroB);
        assert!(matches!(build_model(&poly(&[0.0, 1.0]), 32), Err(Error::ExtremeInput { .. })));
        assert!(matches!(build_model(&poly(&[0.0, 0.5]), 48), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn profile_stable_across_truncations() {
        for n in [64, 128, 256] {
            let m = build_model(&poly(&[0.5, -0.5]), n).unwrap();
            assert_eq!(defect_profile(&m).unwrap().as_tuple(), (2, 1, 1), "N = {n}");
        }
    }

    #[test]
    fn tilde_model_dilation() {
        let base = build_model(&poly(&[0.0, S2]), 64).unwrap();
        let tm = build_tilde_model(&base, 64).unwrap();
        assert_eq!(tm.k_part.ncols(), 64);
        assert_eq!(tm.j_basis.ncols(), 64);
        assert!(tm.dilation_residual(8) < 1e-6);
        assert!(tm.j_isometry_residual() < 1e-8);
        let esc = tm.isometric_escape(100, 1e-4, 7);
        assert_eq!(esc.escaped, 100);
    }

    #[test]
    fn kernel_gram_examples() {
        let pts = [c(0.0, 0.0), c(0.5, 0.0)];
        let g = kernel_gram(&poly(&[0.0]), &pts).unwrap();
        assert!((g.gram[(1, 1)] - c(4.0 / 3.0, 0.0)).norm() < 1e-14);
        assert!((g.gram[(0, 1)] - c(1.0, 0.0)).norm() < 1e-14);
        let g = kernel_gram(&poly(&[0.0, 1.0]), &pts).unwrap();
        assert!(g.gram.iter().all(|x| (x - c(1.0, 0.0)).norm() < 1e-14));
        let pts: Vec<C64> = (0..6).map(|k| C64::from_polar(0.2 + 0.1 * k as f64, k as f64)).collect();
        assert!(kernel_gram(&poly(&[0.0, S2]), &pts).unwrap().min_eigenvalue > 0.0);
        assert!(matches!(kernel_gram(&poly(&[0.0, 2.0]), &pts), Err(Error::NotPsd(_))));
    }

    #[test]
    fn rational_b_model() {
        let b = AnalyticFn::Rational(RationalFunction::from_real(&[0.3, 0.2], &[1.0, -0.4]).unwrap());
        let m = build_model(&b, 64).unwrap();
        assert_eq!(defect_profile(&m).unwrap().as_tuple(), (2, 1, 1));
        let cf = char_fn_of_model(&m, &default_points(), 1e-3).unwrap();
        let r = cf.coincidence.unwrap();
        assert!(r.coincide, "{}", r.residual);
    }
}
