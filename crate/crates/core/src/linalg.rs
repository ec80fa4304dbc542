//! Small dense complex linear-algebra helpers over `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::hardy::C64;

pub type CMat = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Eigenvalues (descending) and matching eigenvectors of a Hermitian matrix.
pub fn herm_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    // symmetrize against roundoff
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (vals, vecs)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the column span of a full-column-rank matrix.
pub fn orthonormalize(m: &CMat) -> CMat {
    if m.ncols() == 0 {
        return m.clone();
    }
    m.clone().qr().q()
}

/// Orthonormal basis of `ker a`, from eigenvectors of `a* a` with
/// eigenvalue below `tol²·max(1, ‖a‖²)`.
pub fn null_space(a: &CMat, tol: f64) -> CMat {
    let g = a.adjoint() * a;
    let (vals, vecs) = herm_eigen(&g);
    let scale = vals.first().copied().unwrap_or(0.0).max(1.0);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] < tol * tol * scale).collect();
    CMat::from_fn(g.nrows(), cols.len(), |r, k| vecs[(r, cols[k])])
}

/// Unitary polar factor `U V*` of `m = U Σ V*` (square `m`).
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    u * v_t
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn matrix_power(m: &CMat, n: usize) -> CMat {
    let mut result = identity(m.nrows());
    let mut base = m.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `max |U*U - I|` entrywise.
pub fn isometry_defect(u: &CMat) -> f64 {
    let g = u.adjoint() * u;
    let n = g.nrows();
    (g - identity(n)).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Random unitary from QR of a Gaussian-ish matrix (phases fixed by R's diagonal).
pub fn random_unitary(n: usize, rng: &mut impl rand::Rng) -> CMat {
    let m = CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let qr = m.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let ph = d / d.norm();
            for i in 0..n {
                q[(i, j)] *= ph;
            }
        }
    }
    q
}

/// Nelder–Mead minimization from `x0` with initial simplex step `step`.
/// Returns the best point and value.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_iter: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[d].1 - simplex[0].1).abs() <= ftol {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].0.clone();
        let refl = lerp(&centroid, &worst, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = lerp(&centroid, &worst, -2.0);
            let fe = f(&exp);
            simplex[d] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (refl, fr);
        } else {
            let con = lerp(&centroid, &worst, 0.5);
            let fc = f(&con);
            if fc < simplex[d].1 {
                simplex[d] = (con, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = lerp(&best, &item.0, 0.5);
                    let v = f(&x);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
