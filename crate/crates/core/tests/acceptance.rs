//! End-to-end acceptance run.  Each criterion prints one PASS/FAIL line to
//! stdout (uncaptured) and the test fails if any criterion fails.

use std::f64::consts::{FRAC_1_SQRT_2 as S2, PI};
use std::io::Write;
use std::time::{Duration, Instant};

use debranges_lab::cli::{self, RunConfig};
use debranges_lab::conditions::{full_diagnostics, DiagnosticsInput, DiagnosticsOptions, Status, Verdict};
use debranges_lab::dbr_model::{build_model, build_tilde_model, char_fn_of_model, defect_profile};
use debranges_lab::dilation::{a_xi, build_t_xi, char_fn_b_xi, e_xi, lemma_matrix};
use debranges_lab::factorization::{pythagorean_mate, Extremality, ExtremalityConfig};
use debranges_lab::fit;
use debranges_lab::hardy::{analyze, poly_roots, synthesize, AnalyticFn, BoundaryGrid, RationalFunction, TaylorCoeffs, C64};
use debranges_lab::linalg::{self, c, CMat};
use debranges_lab::operators::{char_fn_eval, coincide, default_points, strong_stability_check, CharFnSamples};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn poly(p: &[f64]) -> AnalyticFn {
    RationalFunction::from_real(p, &[1.0]).unwrap().into()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> [C64; 2] {
    let v = [c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))];
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

/// `(N+L)×N` Toeplitz block of a coefficient list, long enough that no
/// column loses mass.
fn long_toeplitz(coeffs: &[C64], n: usize) -> CMat {
    let rows = n + coeffs.len();
    CMat::from_fn(rows, n, |i, j| if i >= j && i - j < coeffs.len() { coeffs[i - j] } else { c(0.0, 0.0) })
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let cfg = RunConfig { grid: Some(512), ..Default::default() };
    let start = Instant::now();
    let r = cli::factor_report(&poly(&[0.0, S2]), &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    // |b| = 1/√2 on the circle, so the outer mate is the constant 1/√2
    let dev = (0..512)
        .map(|k| (r.a.eval(C64::from_polar(1.0, 2.0 * PI * k as f64 / 512.0)) - c(S2, 0.0)).norm())
        .fold(0.0, f64::max);
    ensure(dev < 1e-8, || format!("max |a - 1/sqrt2| = {dev:.3e}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("runtime {elapsed:?}"))?;
    Ok(format!("max |a - 1/sqrt2| = {dev:.2e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut worst_iso: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for b in [poly(&[0.0, S2]), poly(&[0.5, -0.5]), poly(&[0.3, 0.4])] {
        let start = Instant::now();
        let m = build_model(&b, 256).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        let tb = long_toeplitz(m.b.coeffs(), 256);
        let ta = long_toeplitz(m.a.coeffs(), 256);
        let iso = linalg::op_norm(&(tb.adjoint() * &tb + ta.adjoint() * &ta - linalg::identity(256)));
        worst_iso = worst_iso.max(iso);
        ensure(iso < 1e-9, || format!("|B*B - I| = {iso:.3e}"))?;
        let p = defect_profile(&m).map_err(|e| e.to_string())?;
        ensure(p.as_tuple() == (2, 1, 1), || format!("defect profile {:?}", p.as_tuple()))?;
        let st = strong_stability_check(&m.yb, 4 * 256, 1e-6);
        ensure(st.stable, || format!("not strongly stable: worst norm {:.3e}", st.worst_norm))?;
        ensure(elapsed < Duration::from_secs(5), || format!("model build took {elapsed:?}"))?;
    }
    Ok(format!("|B*B - I| <= {worst_iso:.2e}, profiles (2,1,1), stable, slowest build {slowest:.2?}"))
}

// ---------------------------------------------------------------- 3

/// Roundoff floor for comparing two residuals that both sit at machine
/// precision; below it "N=256 no worse than N=128" cannot be resolved.
const RESIDUAL_NOISE: f64 = 1e-13;

fn criterion_3() -> Outcome {
    let b = poly(&[0.0, S2]);
    let pts = default_points();
    let residual = |n: usize| -> Result<f64, String> {
        let m = build_model(&b, n).map_err(|e| e.to_string())?;
        let cf = char_fn_of_model(&m, &pts, 1e-3).map_err(|e| e.to_string())?;
        // the closed form (ã, b̃) = (1/√2, λ/√2), sampled independently
        let oracle = CharFnSamples::from_fn(&pts, |z| CMat::from_row_slice(1, 2, &[c(S2, 0.0), z * S2]));
        let r = coincide(&cf.computed, &oracle, 1e-3).map_err(|e| e.to_string())?;
        Ok(r.residual)
    };
    let r128 = residual(128)?;
    let r256 = residual(256)?;
    ensure(r128 < 1e-3, || format!("residual at N=128 is {r128:.3e}"))?;
    ensure(r256 <= r128 + RESIDUAL_NOISE, || format!("residual grew: {r128:.3e} -> {r256:.3e}"))?;
    Ok(format!("residual N=128 {r128:.2e}, N=256 {r256:.2e}"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let m = build_model(&poly(&[0.0, S2]), 64).map_err(|e| e.to_string())?;
    let t = build_tilde_model(&m, 64).map_err(|e| e.to_string())?;
    // compress the two-sided shift to the K-part and compare powers directly
    let k = &t.k_part;
    let y = k.adjoint() * &t.ybold.entries * k;
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        let lhs = linalg::matrix_power(&y, n);
        let rhs = k.adjoint() * linalg::matrix_power(&t.ybold.entries, n) * k;
        worst = worst.max(linalg::op_norm(&(lhs - rhs)));
    }
    ensure(worst < 1e-6, || format!("dilation residual {worst:.3e}"))?;
    // the compression must be the model operator itself, up to unitary change of basis
    let sv_y = linalg::singular_values(&y);
    let sv_m = linalg::singular_values(&m.yb.entries);
    let spec = sv_y.iter().zip(&sv_m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(sv_y.len() == sv_m.len() && spec < 1e-8, || format!("compression differs from Y_b (sv gap {spec:.3e})"))?;
    Ok(format!("max_(n<=8) residual {worst:.2e}"))
}

// ---------------------------------------------------------------- 5

fn rank_of_defect(a: &CMat) -> Option<usize> {
    let (vals, _) = linalg::herm_eigen(&(linalg::identity(2) - a.adjoint() * a));
    if vals.iter().any(|&v| v < -1e-12) {
        None
    } else {
        Some(vals.iter().filter(|&&v| v > 1e-12).count())
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let alpha: f64 = rng.gen_range(0.05..0.95);
        let xi = random_unit(&mut rng);
        let closed = ((1.0 - alpha * alpha) / (1.0 - alpha * alpha * xi[1].norm_sqr())).sqrt();
        let (lib, amat) = a_xi(alpha, &xi).map_err(|e| e.to_string())?;
        ensure((lib - closed).abs() < 1e-12, || format!("trial {trial}: a_xi {lib} vs {closed}"))?;
        ensure(rank_of_defect(&amat) == Some(1), || format!("trial {trial}: rank at a_xi is {:?}", rank_of_defect(&amat)))?;
        let step = 1e-3;
        let top = ((closed / step).floor() as usize) + 100;
        for k in 0..=top {
            let a = k as f64 * step;
            let r = rank_of_defect(&lemma_matrix(alpha, a, &xi));
            let cell_hi = a + step;
            if cell_hi <= closed {
                ensure(r == Some(2), || format!("trial {trial}: a = {a:.3} below a_xi has rank {r:?}"))?;
            } else if a > closed {
                ensure(r.is_none(), || format!("trial {trial}: a = {a:.3} above a_xi is a contraction"))?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("runtime {elapsed:?}"))?;
    Ok(format!("50/50 trials, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let m = build_model(&poly(&[0.0, S2]), 64).map_err(|e| e.to_string())?;
    let t = &m.yb;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut xis = vec![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.6, 0.0), c(0.0, 0.8)]];
    xis.extend((0..3).map(|_| random_unit(&mut rng)));
    let mut worst: f64 = 0.0;
    for xi in &xis {
        let d = build_t_xi(t, xi, 64).map_err(|e| e.to_string())?;
        ensure((d.profile.defect, d.profile.codefect) == (1, 1), || format!("profile {:?}", d.profile.as_tuple()))?;
        let n = t.dim_in();
        for p in 1..=8 {
            let big = linalg::matrix_power(&d.t_xi.entries, p);
            let small = linalg::matrix_power(&t.entries, p);
            worst = worst.max(linalg::op_norm(&(big.view((0, 0), (n, n)) - small)));
        }
        ensure(worst < 1e-10, || format!("dilation residual {worst:.3e}"))?;
        let bx = char_fn_b_xi(&d, &default_points()).map_err(|e| e.to_string())?;
        ensure(bx.verdict.verdict == Extremality::Nonextreme, || format!("b_xi judged extreme for xi = {xi:?}"))?;
    }
    Ok(format!("{} xi: profile (1,1), residual {worst:.2e}, b_xi nonextreme", xis.len()))
}

// ---------------------------------------------------------------- 7

/// Zeros of a rational combination in `|z| < r` from the roots of its numerator.
fn root_count(f: &RationalFunction, r: f64) -> i64 {
    let rep = poly_roots(f.num()).unwrap();
    rep.roots.iter().filter(|z| z.norm() < r).count() as i64
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    ensure((cfg.theta_grid, cfg.psi_grid) == (720, 720), || "default scan grid is not 720x720".into())?;
    let rep = cli::counterexample_report(&cfg).map_err(|e| e.to_string())?;
    for case in &rep.cases {
        let (p1, p2) = cli::counterexample_pair(case.a);
        for (sw, expect) in [(&case.unimodular, None), (&case.small, Some(2)), (&case.large, Some(1))] {
            for (k, cnt) in sw.counts.iter().enumerate() {
                let cnt = cnt.ok_or_else(|| format!("a = {}: contour unresolved at sample {k}", case.a))?;
                let al = C64::from_polar(sw.modulus, 2.0 * PI * k as f64 / sw.samples as f64);
                let oracle = root_count(&p1.combine(c(1.0, 0.0), &p2, al), sw.radius);
                ensure(cnt == oracle, || format!("a = {}, alpha = {al}: winding {cnt} vs roots {oracle}", case.a))?;
                match expect {
                    Some(e) => ensure(cnt == e, || format!("a = {}, |alpha| = {}: count {cnt}", case.a, sw.modulus))?,
                    None => ensure(cnt >= 1, || format!("a = {}, unimodular alpha = {al}: no zero in |z| < 1/2", case.a))?,
                }
            }
        }
        ensure(case.c4.status == Status::Fail, || format!("a = {}: C4 status {:?}", case.a, case.c4.status))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("runtime {elapsed:?}"))?;
    Ok(format!("3 values of a, counts match, C4 fails at 720x720, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    // the closed forms satisfy (ã2, b̃2) = (ã1, b̃1) M with M from the worked example
    let m = [[S2, S2], [S2, -S2]];
    for z in [c(0.3, 0.1), c(-0.5, 0.4)] {
        let row1 = [c(S2, 0.0), z * S2];
        let row2 = [(c(1.0, 0.0) + z) * 0.5, (c(1.0, 0.0) - z) * 0.5];
        for j in 0..2 {
            let v = row1[0] * m[0][j] + row1[1] * m[1][j];
            ensure((v - row2[j]).norm() < 1e-15, || "closed-form relation fails".into())?;
        }
    }
    let cfg = RunConfig { truncation: 256, ..Default::default() };
    let r = cli::equivalent_models_report(&cfg).map_err(|e| e.to_string())?;
    ensure(r.coincidence.residual < 1e-2, || format!("coincidence residual {:.3e}", r.coincidence.residual))?;
    let mut dist: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let got = c(r.recovered[i][j][0], r.recovered[i][j][1]);
            dist = dist.max((got - c(m[i][j], 0.0)).norm());
        }
    }
    ensure(dist < 1e-2, || format!("recovered unitary off by {dist:.3e}"))?;
    Ok(format!("residual {:.2e}, recovered matrix within {dist:.2e}", r.coincidence.residual))
}

// ---------------------------------------------------------------- 9

fn random_pair(rng: &mut ChaCha8Rng) -> Result<(RationalFunction, RationalFunction), String> {
    let deg = rng.gen_range(1..=3);
    let raw: Vec<C64> = (0..=deg).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let sup = (0..4096)
        .map(|k| {
            let z = C64::from_polar(1.0, 2.0 * PI * k as f64 / 4096.0);
            raw.iter().rev().fold(c(0.0, 0.0), |acc, x| acc * z + x).norm()
        })
        .fold(0.0, f64::max);
    let target = rng.gen_range(0.5..0.9);
    let b = RationalFunction::polynomial(raw.iter().map(|x| x * (target / sup)).collect());
    let grid = synthesize(&AnalyticFn::from(b.clone()), 65536).map_err(|e| e.to_string())?;
    let mate = pythagorean_mate(&grid, &ExtremalityConfig::default(), None).map_err(|e| e.to_string())?;
    let a = mate.a;
    let af = fit::fit_row(|pts| Ok(pts.iter().map(|&z| vec![a.eval(z)]).collect()), 12, 1e-8)
        .map_err(|e| e.to_string())?
        .filter(|f| f.residual <= 1e-8)
        .ok_or("no rational fit of the mate")?;
    let (at, bt) = (af.functions[0].tilde(), b.tilde());
    let u = linalg::random_unitary(2, rng);
    Ok((at.combine(u[(0, 0)], &bt, u[(1, 0)]), at.combine(u[(0, 1)], &bt, u[(1, 1)])))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pts = default_points();
    let mut worst: f64 = 0.0;
    for case in 0..10 {
        let (p1, p2) = random_pair(&mut rng)?;
        let d = full_diagnostics(&DiagnosticsInput::Pair(p1.clone(), p2.clone()), &DiagnosticsOptions::default())
            .map_err(|e| format!("case {case}: {e}"))?;
        ensure(d.verdict == Verdict::EquivalentToSomeYb, || format!("case {case}: verdict {:?}", d.verdict))?;
        let b = d.reconstructed_b.ok_or(format!("case {case}: no reconstructed b"))?.b;
        let m = build_model(&b, 64).map_err(|e| format!("case {case}: {e}"))?;
        let computed = char_fn_eval(&m.yb, &pts).map_err(|e| e.to_string())?;
        let input = CharFnSamples::from_fn(&pts, |z| CMat::from_row_slice(1, 2, &[p1.eval(z), p2.eval(z)]));
        let r = coincide(&computed, &input, 1e-2).map_err(|e| e.to_string())?;
        worst = worst.max(r.residual);
        ensure(r.residual < 1e-2, || format!("case {case}: residual {:.3e}", r.residual))?;
    }
    Ok(format!("10/10 positive, worst coincidence residual {worst:.2e}"))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // analyze ∘ synthesize is the identity on short Taylor series
    for case in 0..1000 {
        let len = rng.gen_range(1..=24);
        let coeffs: Vec<C64> = (0..len).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let t = TaylorCoeffs::new(coeffs.clone()).unwrap();
        let g = synthesize(&AnalyticFn::from(t), 64).map_err(|e| e.to_string())?;
        // direct sum at the nodes as the oracle for synthesis
        for k in [0usize, 17, 40] {
            let z = C64::from_polar(1.0, 2.0 * PI * k as f64 / 64.0);
            let direct: C64 = coeffs.iter().enumerate().map(|(j, x)| x * z.powu(j as u32)).sum();
            ensure((g.samples()[k] - direct).norm() < 1e-12, || format!("synthesis case {case}"))?;
        }
        let back = analyze(&BoundaryGrid::new(g.samples().to_vec()).unwrap(), 1e-20).map_err(|e| e.to_string())?;
        for (j, x) in coeffs.iter().enumerate() {
            ensure((back.coeffs.coeff(j) - x).norm() < 1e-12, || format!("round trip case {case}, coeff {j}"))?;
        }
    }
    // e_ξ: unit, ‖A e‖ = 1, and A a contraction
    for case in 0..1000 {
        let alpha: f64 = rng.gen_range(0.01..0.99);
        let xi = random_unit(&mut rng);
        let (_, a) = a_xi(alpha, &xi).map_err(|e| e.to_string())?;
        let e = e_xi(&a).map_err(|e| e.to_string())?;
        let ev = CMat::from_column_slice(2, 1, &e);
        let norm_e = ev.norm();
        let norm_ae = (&a * &ev).norm();
        ensure((norm_e - 1.0).abs() < 1e-12 && (norm_ae - 1.0).abs() < 1e-10, || {
            format!("e_xi case {case}: |e| = {norm_e}, |Ae| = {norm_ae}")
        })?;
        // 2x2 singular values from trace and determinant of A*A
        let g = a.adjoint() * &a;
        let tr = (g[(0, 0)] + g[(1, 1)]).re;
        let det = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).re;
        let top = 0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt());
        ensure(top < 1.0 + 1e-10, || format!("e_xi case {case}: |A|^2 = {top}"))?;
    }
    // coincide: reflexive on unitary transforms, symmetric, and detects a perturbation
    for case in 0..1000 {
        let (r, k) = if case % 2 == 0 { (1, 2) } else { (2, 2) };
        let pts: Vec<C64> = (0..8).map(|j| C64::from_polar(0.5, 2.0 * PI * j as f64 / 8.0)).collect();
        let vals: Vec<CMat> =
            pts.iter().map(|_| CMat::from_fn(r, k, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect();
        let theta = CharFnSamples { points: pts.clone(), values: vals, domain_basis: None, codomain_basis: None };
        let tau = linalg::random_unitary(r, &mut rng);
        let tau_p = linalg::random_unitary(k, &mut rng);
        let moved = theta.transformed(&tau, &tau_p);
        let fwd = coincide(&theta, &moved, 1e-8).map_err(|e| e.to_string())?;
        let back = coincide(&moved, &theta, 1e-8).map_err(|e| e.to_string())?;
        ensure(fwd.coincide && back.coincide, || {
            format!("coincide case {case}: residuals {:.3e}, {:.3e}", fwd.residual, back.residual)
        })?;
        let mut bumped = moved.clone();
        bumped.values[0][(0, 0)] += c(0.5, 0.0);
        let off = coincide(&theta, &bumped, 1e-8).map_err(|e| e.to_string())?;
        ensure(!off.coincide, || format!("coincide case {case}: perturbation not detected"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("runtime {elapsed:?}"))?;
    Ok(format!("3 x 1000 cases, {elapsed:.2?}"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("1 pythagorean mate of z/sqrt2", criterion_1),
        ("2 model invariants", criterion_2),
        ("3 characteristic function law", criterion_3),
        ("4 two-sided dilation identity", criterion_4),
        ("5 2x2 lemma trichotomy", criterion_5),
        ("6 T_xi construction", criterion_6),
        ("7 outer-combination counterexample", criterion_7),
        ("8 equivalent models z/sqrt2 and (1-z)/2", criterion_8),
        ("9 end-to-end soundness", criterion_9),
        ("10 round-trip property suites", criterion_10),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (name, f) in criteria {
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let line = match &res {
            Ok(detail) => format!("PASS criterion {name}: {detail}"),
            Err(why) => format!("FAIL criterion {name}: {why}"),
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
        if res.is_err() {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
