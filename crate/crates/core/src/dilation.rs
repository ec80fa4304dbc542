//! One-step dilations `T_ξ` of a contraction with defect dims (2, 1) and
//! the underlying 2×2 lemma.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dbr_model::{operator_profile, DefectProfile};
use crate::error::{Error, Result};
use crate::factorization::{extremality_test, ExtremalityConfig, ExtremalityVerdict};
use crate::hardy::{BoundaryGrid, C64};
use crate::linalg::{self, c, CMat};
use crate::operators::{char_fn_eval, co_defect, defect, edge_width, CharFnSamples, OperatorMatrix, DEFECT_TOL};

pub const XI_TOL: f64 = 1e-9;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

fn check_unit(xi: &[C64; 2]) -> Result<()> {
    let n = xi[0].norm_sqr() + xi[1].norm_sqr();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("|xi|^2 = {n}, expected 1")));
    }
    Ok(())
}

/// `[[α, 0], [a ξ̄1, a ξ̄2]]`.
pub fn lemma_matrix(alpha: f64, a: f64, xi: &[C64; 2]) -> CMat {
    CMat::from_row_slice(2, 2, &[c(alpha, 0.0), c(0.0, 0.0), xi[0].conj() * a, xi[1].conj() * a])
}

/// `a_ξ = ((1 − α²)/(1 − α²|ξ2|²))^{1/2}` and the matrix `A_ξ`.
pub fn a_xi(alpha: f64, xi: &[C64; 2]) -> Result<(f64, CMat)> {
    check_alpha(alpha)?;
    check_unit(xi)?;
    let a = ((1.0 - alpha * alpha) / (1.0 - alpha * alpha * xi[1].norm_sqr())).sqrt();
    Ok((a, lemma_matrix(alpha, a, xi)))
}

/// Unit vector spanning `ker(I − A*A)`, first nonzero coordinate positive.
pub fn e_xi(a: &CMat) -> Result<[C64; 2]> {
    let m = linalg::identity(2) - a.adjoint() * a;
    let (vals, vecs) = linalg::herm_eigen(&m);
    if vals[1] < -1e-8 {
        return Err(Error::NotAContraction(vals[1]));
    }
    let dim = vals.iter().filter(|v| v.abs() < 1e-8).count();
    if dim != 1 {
        return Err(Error::KernelDimNotOne(dim));
    }
    let mut e = [vecs[(0, 1)], vecs[(1, 1)]];
    let lead = if e[0].norm() > 1e-12 { e[0] } else { e[1] };
    let ph = lead.conj() / lead.norm();
    e[0] *= ph;
    e[1] *= ph;
    Ok(e)
}

/// `min_{|ω|=1} ‖e − ω η‖`.
pub fn phase_distance(e: &[C64; 2], eta: &[C64; 2]) -> f64 {
    let ip = eta[0].conj() * e[0] + eta[1].conj() * e[1];
    let ph = if ip.norm() > 0.0 { ip / ip.norm() } else { c(1.0, 0.0) };
    ((e[0] - eta[0] * ph).norm_sqr() + (e[1] - eta[1] * ph).norm_sqr()).sqrt()
}

fn xi_of(theta: f64, psi: f64) -> [C64; 2] {
    [c(theta.cos(), 0.0), C64::from_polar(theta.sin(), psi)]
}

fn e_of(alpha: f64, theta: f64, psi: f64) -> Option<[C64; 2]> {
    let xi = xi_of(theta, psi);
    a_xi(alpha, &xi).ok().and_then(|(_, a)| e_xi(&a).ok())
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct XiSolution {
    #[serde(with = "crate::hardy::cpair_array")]
    pub xi: [C64; 2],
    pub residual: f64,
}

/// `ξ` with `e_ξ = η` up to phase: coarse 64×64 scan of
/// `ξ = (cos θ, sin θ e^{iψ})`, then Nelder–Mead.
pub fn xi_for_target_e(alpha: f64, eta: &[C64; 2]) -> Result<XiSolution> {
    check_alpha(alpha)?;
    let norm = (eta[0].norm_sqr() + eta[1].norm_sqr()).sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidInput("eta must be nonzero".into()));
    }
    let eta = [eta[0] / norm, eta[1] / norm];
    let obj = |p: &[f64]| match e_of(alpha, p[0], p[1]) {
        Some(e) => phase_distance(&e, &eta).powi(2),
        None => 4.0,
    };
    let mut starts: Vec<(f64, [f64; 2])> = Vec::with_capacity(64 * 64);
    for i in 0..64 {
        for j in 0..64 {
            let p = [PI / 2.0 * i as f64 / 63.0, 2.0 * PI * j as f64 / 64.0];
            starts.push((obj(&p), p));
        }
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for (_, p) in starts.iter().take(4) {
        let (x, v) = linalg::nelder_mead(obj, p, 0.02, 4000, 0.0);
        if v < best.0 {
            best = (v, [x[0], x[1]]);
        }
        if v.sqrt() < XI_TOL {
            break;
        }
    }
    let xi = xi_of(best.1[0], best.1[1]);
    let residual = best.0.sqrt();
    if residual >= XI_TOL {
        return Err(Error::NoConvergence(residual));
    }
    Ok(XiSolution { xi, residual })
}

#[derive(Debug, Clone)]
pub struct XiDilation {
    pub t: OperatorMatrix,
    /// Coordinates of `ξ` in the rotated defect basis.
    pub xi: [C64; 2],
    pub alpha: f64,
    pub a_xi: f64,
    pub e_xi: [C64; 2],
    pub m: usize,
    pub t_xi: OperatorMatrix,
    /// Defect basis of `T` rotated so that `T_d = (α 0)`.
    pub defect_basis: CMat,
    pub codefect_vector: CMat,
    pub profile: DefectProfile,
}

/// Rotated defect bases with `c* T d = (α, 0)`.
pub fn aligned_defect_bases(t: &OperatorMatrix) -> Result<(CMat, CMat, f64)> {
    let d = defect(t, DEFECT_TOL)?;
    let dc = co_defect(t, DEFECT_TOL)?;
    if d.rank != 2 || dc.rank != 1 {
        return Err(Error::C1Violated(d.rank, dc.rank, crate::operators::kernel_dim(t, 1e-7)));
    }
    let td = dc.basis.adjoint() * &t.entries * &d.basis;
    let (t1, t2) = (td[(0, 0)], td[(0, 1)]);
    let alpha = (t1.norm_sqr() + t2.norm_sqr()).sqrt();
    // columns: td*/α and its orthogonal complement, so td·v = (α, 0)
    let v = if alpha > 0.0 {
        CMat::from_row_slice(2, 2, &[t1.conj() / alpha, -t2 / alpha, t2.conj() / alpha, t1 / alpha])
    } else {
        linalg::identity(2)
    };
    let basis = &d.basis * v;
    Ok((basis, dc.basis, alpha))
}

/// `T_ξ` on `H ⊕ ℂ^m`: `T` on `H`, the row `a_ξ ⟨·, ξ⟩` into the first chain
/// coordinate, then the unit chain.
pub fn build_t_xi(t: &OperatorMatrix, xi: &[C64; 2], m: usize) -> Result<XiDilation> {
    check_unit(xi)?;
    if m < 4 {
        return Err(Error::InvalidInput(format!("chain length {m} below 4")));
    }
    let p = operator_profile(t)?;
    if p.as_tuple() != (2, 1, 1) {
        return Err(Error::C1Violated(p.defect, p.codefect, p.kernel));
    }
    let (basis, cvec, alpha) = aligned_defect_bases(t)?;
    let (a, amat) = a_xi(alpha, xi)?;
    let e = e_xi(&amat)?;
    let n = t.dim_in();
    let xi_vec = &basis * CMat::from_column_slice(2, 1, xi);
    let dim = n + m;
    let mut big = CMat::zeros(dim, dim);
    big.view_mut((0, 0), (n, n)).copy_from(&t.entries);
    big.view_mut((n, 0), (1, n)).copy_from(&(xi_vec.adjoint() * c(a, 0.0)));
    for j in 0..m - 1 {
        big[(n + j + 1, n + j)] = c(1.0, 0.0);
    }
    let v_h = t.interior.clone().unwrap_or_else(|| linalg::identity(n));
    let keep = m - edge_width(m);
    let mut interior = CMat::zeros(dim, v_h.ncols() + keep);
    interior.view_mut((0, 0), (n, v_h.ncols())).copy_from(&v_h);
    for j in 0..keep {
        interior[(n + j, v_h.ncols() + j)] = c(1.0, 0.0);
    }
    let t_xi = OperatorMatrix::square(big, "H+C^m").with_interior(interior);
    let dp = operator_profile(&t_xi)?;
    if (dp.defect, dp.codefect) != (1, 1) {
        return Err(Error::DefectProfileUnexpected(dp.defect, dp.codefect));
    }
    Ok(XiDilation {
        t: t.clone(),
        xi: *xi,
        alpha,
        a_xi: a,
        e_xi: e,
        m,
        t_xi,
        defect_basis: basis,
        codefect_vector: cvec,
        profile: dp,
    })
}

impl XiDilation {
    /// `max_{1 ≤ k ≤ n_max} ‖P_H T_ξ^k|H − T^k‖`.
    pub fn dilation_residual(&self, n_max: usize) -> f64 {
        let n = self.t.dim_in();
        let mut big = linalg::identity(self.t_xi.dim_in());
        let mut small = linalg::identity(n);
        let mut worst: f64 = 0.0;
        for _ in 0..n_max {
            big = &self.t_xi.entries * big;
            small = &self.t.entries * small;
            worst = worst.max(linalg::op_norm(&(big.view((0, 0), (n, n)) - &small)));
        }
        worst
    }

    /// `max |G − I|` for the Gram matrix of `T_ξ` applied to the chain
    /// coordinates that stay inside the chain.
    pub fn chain_isometry_residual(&self) -> f64 {
        let n = self.t.dim_in();
        let cols = self.t_xi.entries.columns(n, self.m - 1).into_owned();
        linalg::isometry_defect(&cols)
    }

    pub fn norm(&self) -> f64 {
        self.t_xi.norm()
    }
}

#[derive(Debug, Clone)]
pub struct BXi {
    pub samples: CharFnSamples,
    /// Estimated boundary moduli on the estimation grid.
    pub boundary_modulus: Vec<f64>,
    /// `max |b(0.95 e^{it}) − b(0.9 e^{it})|` in modulus: size of the
    /// extrapolation step.
    pub extrapolation_step: f64,
    pub verdict: ExtremalityVerdict,
}

pub const B_XI_GRID: usize = 256;

/// Scalar characteristic function of `T_ξ` and an extremality verdict from
/// moduli at `r = 0.95`, `0.9` extrapolated linearly to `r = 1`.
pub fn char_fn_b_xi(d: &XiDilation, points: &[C64]) -> Result<BXi> {
    let samples = char_fn_eval(&d.t_xi, points)?;
    if samples.shape() != (1, 1) {
        return Err(Error::DefectProfileUnexpected(samples.shape().1, samples.shape().0));
    }
    let ring = |r: f64| -> Vec<C64> { (0..B_XI_GRID).map(|k| C64::from_polar(r, 2.0 * PI * k as f64 / B_XI_GRID as f64)).collect() };
    let outer = char_fn_eval(&d.t_xi, &ring(0.95))?;
    let inner = char_fn_eval(&d.t_xi, &ring(0.9))?;
    let mut step: f64 = 0.0;
    let modulus: Vec<f64> = outer
        .values
        .iter()
        .zip(&inner.values)
        .map(|(o, i)| {
            let (mo, mi) = (o[(0, 0)].norm(), i[(0, 0)].norm());
            step = step.max((mo - mi).abs());
            (2.0 * mo - mi).clamp(0.0, 1.0)
        })
        .collect();
    let grid = BoundaryGrid::from_real(modulus.clone())?;
    let verdict = extremality_test(&grid, &ExtremalityConfig::default())?;
    Ok(BXi { samples, boundary_modulus: modulus, extrapolation_step: step, verdict })
}
