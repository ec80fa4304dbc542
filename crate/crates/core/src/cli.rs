//! Command-line surface.  Every subcommand has a report function here so the
//! same code path backs the binary and the integration tests.
//!
//! Exit codes: `0` success / positive verdict, `1` negative verdict, `2`
//! undecided, `3` extreme input, `4` any other error.  Errors still produce a
//! JSON report.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::conditions::{self, C4Report, ContractionDiagnostics, DiagnosticsInput, DiagnosticsOptions, Verdict};
use crate::dbr_model::{self, DefectProfile, EscapeReport, LedgerEntry, ModelResiduals, MODEL_GRID};
use crate::dilation;
use crate::error::{Error, Result};
use crate::factorization::{self, ExtremalityConfig, ExtremalityVerdict};
use crate::fit;
use crate::hardy::{self, AnalyticFn, RationalFunction, TaylorCoeffs, C64};
use crate::linalg::{c, CMat};
use crate::operators::{self, CharFnSamples, Coincidence, OperatorMatrix, StabilityReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 2;
pub const EXIT_EXTREME: i32 = 3;
pub const EXIT_ERROR: i32 = 4;

pub const DEFAULT_TRUNCATION: usize = 128;
pub const DEFAULT_FACTOR_GRID: usize = 512;
pub const DEFAULT_SCAN_GRID: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Every numeric default in one place; `--print-config` dumps it.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub truncation: usize,
    /// Factorization grid; `None` means the command default (512 for
    /// `factor`, 65536 for model builds and `question8`).
    pub grid: Option<usize>,
    pub theta_grid: usize,
    pub psi_grid: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tolerances = [
            ("coincide", 1e-6),
            ("stability", 1e-6),
            ("extremality_floor", 1e-14),
            ("log_threshold", 25.0),
            ("clip_limit", 0.02),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            truncation: DEFAULT_TRUNCATION,
            grid: None,
            theta_grid: DEFAULT_SCAN_GRID,
            psi_grid: DEFAULT_SCAN_GRID,
            tolerances,
            seed: 0,
            threads: None,
            output: None,
            format: Format::Json,
        }
    }
}

impl RunConfig {
    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    /// Sets a known tolerance from `NAME=VAL`.
    pub fn set_tol(&mut self, spec: &str) -> Result<()> {
        let (name, val) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("tolerance `{spec}` is not NAME=VAL")))?;
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("tolerance value `{val}` is not a number")))?;
        let slot = self
            .tolerances
            .get_mut(name.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown tolerance `{name}`")))?;
        *slot = val;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.truncation.is_power_of_two() || self.truncation < 8 {
            return Err(Error::InvalidInput(format!("truncation {} must be a power of two >= 8", self.truncation)));
        }
        if let Some(g) = self.grid {
            hardy::check_grid(g)?;
        }
        if self.theta_grid == 0 || self.psi_grid == 0 {
            return Err(Error::InvalidInput("scan grids must be positive".into()));
        }
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!("tolerance {k} = {v} must be positive")));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn extremality(&self) -> ExtremalityConfig {
        ExtremalityConfig {
            floor: self.tol("extremality_floor"),
            threshold: -self.tol("log_threshold"),
            clip_limit: self.tol("clip_limit"),
        }
    }

    pub fn n_max(&self) -> usize {
        4 * self.truncation
    }

    pub fn diagnostics(&self) -> DiagnosticsOptions {
        DiagnosticsOptions {
            truncation: self.truncation,
            n_max: self.n_max(),
            stability_tol: self.tol("stability"),
            theta_grid: self.theta_grid,
            psi_grid: self.psi_grid,
        }
    }
}

/// Input of `check` and `dilate`: a `*`-inner pair or an explicit operator.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ContractionSpec {
    Pair { phi1: AnalyticFn, phi2: AnalyticFn },
    Operator { operator: OperatorMatrix },
}

fn as_rational(f: &AnalyticFn) -> RationalFunction {
    match f {
        AnalyticFn::Rational(r) => r.clone(),
        AnalyticFn::Taylor(t) => RationalFunction::polynomial(t.coeffs().to_vec()),
    }
}

fn cpair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn csv_samples(header: &str, s: &CharFnSamples) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (p, v) in s.points.iter().zip(&s.values) {
        out.push_str(&format!("{},{}", p.re, p.im));
        for x in v.iter() {
            out.push_str(&format!(",{},{}", x.re, x.im));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- factor

#[derive(Debug, Clone, Serialize)]
pub struct FactorReport {
    pub command: &'static str,
    pub grid: usize,
    pub extremality: ExtremalityVerdict,
    pub a: TaylorCoeffs,
    /// `max | |a|² + |b|² − 1 |` on the grid.
    pub residual: f64,
    /// Same with `a` resynthesized from its Taylor coefficients.
    pub taylor_residual: f64,
}

pub fn factor_report(b: &AnalyticFn, cfg: &RunConfig) -> Result<FactorReport> {
    let grid = cfg.grid.unwrap_or(DEFAULT_FACTOR_GRID);
    let g = hardy::synthesize(b, grid)?;
    let mate = factorization::pythagorean_mate(&g, &cfg.extremality(), None)?;
    Ok(FactorReport {
        command: "factor",
        grid,
        extremality: mate.verdict,
        a: mate.a,
        residual: mate.residual,
        taylor_residual: mate.taylor_residual,
    })
}

// ---------------------------------------------------------------- model

#[derive(Debug, Clone, Serialize)]
pub struct CharFnSummary {
    pub coincide: bool,
    pub residual: f64,
    pub rounds: usize,
}

impl From<&Coincidence> for CharFnSummary {
    fn from(c: &Coincidence) -> Self {
        Self { coincide: c.coincide, residual: c.residual, rounds: c.rounds }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TildeReport {
    pub m: usize,
    /// `max_{n ≤ 8} ‖Y_b^n − P 𝐘^n|K‖`.
    pub dilation_residual: f64,
    pub j_isometry_residual: f64,
    pub invariance_leak: f64,
    pub escape: EscapeReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub command: &'static str,
    pub truncation: usize,
    pub grid: usize,
    pub extremality: ExtremalityVerdict,
    pub profile: DefectProfile,
    pub residuals: ModelResiduals,
    pub ledger: Vec<LedgerEntry>,
    pub stability: StabilityReport,
    /// Coincidence of the computed characteristic function with `(ã b̃)`;
    /// absent when the shapes differ (constant `b`).
    pub char_fn: Option<CharFnSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilde: Option<TildeReport>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub samples: Option<CharFnSamples>,
}

pub fn model_report(b: &AnalyticFn, tilde: Option<usize>, cfg: &RunConfig) -> Result<ModelReport> {
    let grid = cfg.grid.unwrap_or(MODEL_GRID);
    let m = dbr_model::build_model_with(b, cfg.truncation, grid)?;
    let profile = dbr_model::defect_profile(&m)?;
    let stability = operators::strong_stability_check(&m.yb, cfg.n_max(), cfg.tol("stability"));
    let cf = dbr_model::char_fn_of_model(&m, &operators::default_points(), cfg.tol("coincide"))?;
    let mut notes = Vec::new();
    if cf.coincidence.is_none() {
        notes.push(format!(
            "characteristic function has shape {:?}, closed form {:?}; no coincidence computed",
            cf.computed.shape(),
            cf.closed_form.shape()
        ));
    }
    let tilde = match tilde {
        Some(mm) => {
            let t = dbr_model::build_tilde_model(&m, mm)?;
            Some(TildeReport {
                m: mm,
                dilation_residual: t.dilation_residual(8),
                j_isometry_residual: t.j_isometry_residual(),
                invariance_leak: t.invariance_leak,
                escape: t.isometric_escape(16, 1e-3, cfg.seed),
            })
        }
        None => None,
    };
    Ok(ModelReport {
        command: "model",
        truncation: cfg.truncation,
        grid,
        extremality: m.verdict,
        profile,
        residuals: m.residuals,
        ledger: m.ledger.clone(),
        stability,
        char_fn: cf.coincidence.as_ref().map(CharFnSummary::from),
        tilde,
        notes,
        samples: Some(cf.computed),
    })
}

// ---------------------------------------------------------------- check

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub command: &'static str,
    pub input_kind: &'static str,
    pub truncation: usize,
    pub diagnostics: ContractionDiagnostics,
}

impl CheckReport {
    pub fn exit_code(&self) -> i32 {
        match self.diagnostics.verdict {
            Verdict::EquivalentToSomeYb => EXIT_OK,
            Verdict::NotEquivalent => EXIT_NEGATIVE,
            Verdict::Undecided => EXIT_UNDECIDED,
        }
    }
}

pub fn check_report(spec: &ContractionSpec, cfg: &RunConfig) -> Result<CheckReport> {
    let (input, kind) = match spec {
        ContractionSpec::Pair { phi1, phi2 } => (DiagnosticsInput::Pair(as_rational(phi1), as_rational(phi2)), "pair"),
        ContractionSpec::Operator { operator } => (DiagnosticsInput::Operator(operator.clone()), "operator"),
    };
    let diagnostics = conditions::full_diagnostics(&input, &cfg.diagnostics())?;
    Ok(CheckReport { command: "check", input_kind: kind, truncation: cfg.truncation, diagnostics })
}

// ---------------------------------------------------------------- dilate

#[derive(Debug, Clone, Serialize)]
pub struct BXiSummary {
    pub extremality: ExtremalityVerdict,
    pub extrapolation_step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DilateReport {
    pub command: &'static str,
    pub truncation: usize,
    pub m: usize,
    pub alpha: f64,
    #[serde(with = "crate::hardy::cpair_array")]
    pub xi: [C64; 2],
    pub a_xi: f64,
    #[serde(with = "crate::hardy::cpair_array")]
    pub e_xi: [C64; 2],
    pub profile: DefectProfile,
    /// `max_{n ≤ 8} ‖P_H T_ξ^n|H − T^n‖`.
    pub dilation_residual: f64,
    pub chain_isometry_residual: f64,
    pub norm: f64,
    pub b_xi: BXiSummary,
    #[serde(skip)]
    pub samples: Option<CharFnSamples>,
}

fn spec_operator(spec: &ContractionSpec, n: usize) -> Result<OperatorMatrix> {
    match spec {
        ContractionSpec::Pair { phi1, phi2 } => Ok(operators::build_from_inner_column(phi1, phi2, n)?.op),
        ContractionSpec::Operator { operator } => Ok(operator.clone()),
    }
}

pub fn dilate_report(spec: &ContractionSpec, xi: [C64; 2], m: usize, cfg: &RunConfig) -> Result<DilateReport> {
    let norm = (xi[0].norm_sqr() + xi[1].norm_sqr()).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidInput("xi must be a nonzero vector".into()));
    }
    let xi = [xi[0] / norm, xi[1] / norm];
    let t = spec_operator(spec, cfg.truncation)?;
    let d = dilation::build_t_xi(&t, &xi, m)?;
    let bx = dilation::char_fn_b_xi(&d, &operators::default_points())?;
    Ok(DilateReport {
        command: "dilate",
        truncation: t.dim_in(),
        m,
        alpha: d.alpha,
        xi,
        a_xi: d.a_xi,
        e_xi: d.e_xi,
        profile: d.profile,
        dilation_residual: d.dilation_residual(8),
        chain_isometry_residual: d.chain_isometry_residual(),
        norm: d.norm(),
        b_xi: BXiSummary { extremality: bx.verdict, extrapolation_step: bx.extrapolation_step },
        samples: Some(bx.samples),
    })
}

// ---------------------------------------------------------------- reproduce

pub const COUNTEREXAMPLE_PARAMS: [f64; 3] = [0.01, 0.05, 0.1];
pub const COUNTEREXAMPLE_SAMPLES: usize = 360;

/// `(z²/√2, (z − a)/(√2 (1 − a z)))`.
pub fn counterexample_pair(a: f64) -> (RationalFunction, RationalFunction) {
    let s = FRAC_1_SQRT_2;
    (
        RationalFunction::from_real(&[0.0, 0.0, s], &[1.0]).expect("polynomial"),
        RationalFunction::from_real(&[-a * s, s], &[1.0, -a]).expect("pole outside the disc"),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroCountSweep {
    /// `|α|` of the sampled coefficients.
    pub modulus: f64,
    pub radius: f64,
    pub samples: usize,
    /// Zero count of `φ1 + α φ2` in `|z| < radius` per sample, `null` when
    /// the contour could not be resolved.
    pub counts: Vec<Option<i64>>,
    pub min: Option<i64>,
    pub max: Option<i64>,
}

fn sweep(p1: &RationalFunction, p2: &RationalFunction, modulus: f64, radius: f64) -> ZeroCountSweep {
    let counts: Vec<Option<i64>> = (0..COUNTEREXAMPLE_SAMPLES)
        .map(|k| {
            let al = C64::from_polar(modulus, 2.0 * PI * k as f64 / COUNTEREXAMPLE_SAMPLES as f64);
            let f = AnalyticFn::Rational(p1.combine(c(1.0, 0.0), p2, al));
            factorization::zero_count_in_disc(&f, radius, None).ok()
        })
        .collect();
    let ok = || counts.iter().flatten().copied();
    ZeroCountSweep {
        modulus,
        radius,
        samples: COUNTEREXAMPLE_SAMPLES,
        min: ok().min(),
        max: ok().max(),
        counts,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleCase {
    pub a: f64,
    /// `|α| = 1` on `|z| = 1/2`.
    pub unimodular: ZeroCountSweep,
    /// `|α| = 1` on `|z| = 1/4`; recorded, not asserted.
    pub unimodular_quarter: ZeroCountSweep,
    /// `|α| = 1/2`: Rouché with `φ1` dominant.
    pub small: ZeroCountSweep,
    /// `|α| = 2`: Rouché with `φ2` dominant.
    pub large: ZeroCountSweep,
    pub c4: C4Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub command: &'static str,
    pub name: &'static str,
    pub cases: Vec<CounterexampleCase>,
}

pub fn counterexample_report(cfg: &RunConfig) -> Result<CounterexampleReport> {
    let mut cases = Vec::new();
    for &a in &COUNTEREXAMPLE_PARAMS {
        let (p1, p2) = counterexample_pair(a);
        cases.push(CounterexampleCase {
            a,
            unimodular: sweep(&p1, &p2, 1.0, 0.5),
            unimodular_quarter: sweep(&p1, &p2, 1.0, 0.25),
            small: sweep(&p1, &p2, 0.5, 0.99),
            large: sweep(&p1, &p2, 2.0, 0.99),
            c4: conditions::check_c4_outer_search(&p1, &p2, cfg.theta_grid, cfg.psi_grid)?,
        });
    }
    Ok(CounterexampleReport { command: "reproduce", name: "example-4", cases })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalentModelsReport {
    pub command: &'static str,
    pub name: &'static str,
    pub truncation: usize,
    /// Each model against its own closed form `(ã b̃)`.
    pub closed_form_residuals: [f64; 2],
    /// Computed characteristic functions against each other.
    pub coincidence: CharFnSummary,
    /// Right unitary carrying `(ã1 b̃1)` to `(ã2 b̃2)`, phase-normalized.
    pub recovered: [[[f64; 2]; 2]; 2],
    pub expected: [[[f64; 2]; 2]; 2],
    /// Max entrywise distance to `expected` after the best global phase.
    pub distance: f64,
}

fn mat2(m: &CMat) -> [[[f64; 2]; 2]; 2] {
    [[cpair(m[(0, 0)]), cpair(m[(0, 1)])], [cpair(m[(1, 0)]), cpair(m[(1, 1)])]]
}

/// `min_{|ω|=1} max_{ij} |ω u_ij − m_ij|` with `ω` aligned in least squares;
/// also returns `ω u`.
pub fn phase_aligned(u: &CMat, m: &CMat) -> (f64, CMat) {
    let ip: C64 = u.iter().zip(m.iter()).map(|(x, y)| x.conj() * y).sum();
    let w = if ip.norm() > 0.0 { ip / ip.norm() } else { c(1.0, 0.0) };
    let aligned = u * w;
    let d = aligned.iter().zip(m.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    (d, aligned)
}

pub fn equivalent_models_report(cfg: &RunConfig) -> Result<EquivalentModelsReport> {
    let b1: AnalyticFn = RationalFunction::from_real(&[0.0, FRAC_1_SQRT_2], &[1.0])?.into();
    let b2: AnalyticFn = RationalFunction::from_real(&[0.5, -0.5], &[1.0])?.into();
    let grid = cfg.grid.unwrap_or(MODEL_GRID);
    let pts = operators::default_points();
    let tol = cfg.tol("coincide");
    let cf = |b: &AnalyticFn| -> Result<_> {
        let m = dbr_model::build_model_with(b, cfg.truncation, grid)?;
        let cf = dbr_model::char_fn_of_model(&m, &pts, tol)?;
        let co = cf.coincidence.clone().ok_or_else(|| Error::ShapeMismatch("model char fn is not 1x2".into()))?;
        Ok((cf, co))
    };
    let (cf1, co1) = cf(&b1)?;
    let (cf2, co2) = cf(&b2)?;
    let co = operators::coincide(&cf1.computed, &cf2.computed, tol)?;
    // closed_i ≈ t_i Θ_i t′_i and Θ2 ≈ τ Θ1 τ′ give closed_2 ≈ (scalar) closed_1 t′_1* τ′ t′_2
    let u = co1.tau_prime.adjoint() * &co.tau_prime * &co2.tau_prime;
    let s = FRAC_1_SQRT_2;
    let expected = CMat::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]);
    let (distance, aligned) = phase_aligned(&u, &expected);
    Ok(EquivalentModelsReport {
        command: "reproduce",
        name: "section-8",
        truncation: cfg.truncation,
        closed_form_residuals: [co1.residual, co2.residual],
        coincidence: CharFnSummary::from(&co),
        recovered: mat2(&aligned),
        expected: mat2(&expected),
        distance,
    })
}

// ---------------------------------------------------------------- question8

#[derive(Debug, Clone, Serialize)]
pub struct ScanCell {
    pub theta: f64,
    pub psi: f64,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct Question8Report {
    pub command: &'static str,
    pub exploratory: bool,
    pub note: &'static str,
    pub extremality: ExtremalityVerdict,
    /// Degree and validation residual of the rational fit of `a`.
    pub a_fit: Option<fit::RowFit>,
    /// `true` when `a` had no rational fit and outerness was judged by
    /// counting zeros in `|z| < 0.995`.
    pub heuristic: bool,
    pub theta_grid: usize,
    pub psi_grid: usize,
    pub cells: usize,
    /// Whether `a` itself (the `β = 0` column) tested outer.
    pub beta_zero_outer: bool,
    /// Every cell with `β ≠ 0` where `α a + β b` tested outer.
    pub outer_cells: Vec<ScanCell>,
    #[serde(skip)]
    pub table: Vec<(ScanCell, bool)>,
}

const HEURISTIC_RADIUS: f64 = 0.995;

pub fn question8_report(b: &AnalyticFn, theta_grid: usize, psi_grid: usize, cfg: &RunConfig) -> Result<Question8Report> {
    if theta_grid == 0 || psi_grid == 0 {
        return Err(Error::InvalidInput("scan grids must be positive".into()));
    }
    // a fine grid keeps the rational fit of `a` exact when `a` has boundary zeros
    let grid = cfg.grid.unwrap_or(MODEL_GRID);
    let mate = factorization::pythagorean_mate(&hardy::synthesize(b, grid)?, &cfg.extremality(), None)?;
    let a = mate.a.clone();
    let a_fit = fit::fit_row(|pts| Ok(pts.iter().map(|&z| vec![a.eval(z)]).collect()), fit::MAX_FIT_DEGREE, fit::FIT_TOL)?;
    let rational_a = a_fit.as_ref().filter(|f| f.residual <= fit::FIT_TOL).map(|f| f.functions[0].clone());
    let heuristic = rational_a.is_none();
    let b_rat = as_rational(b);
    let b_taylor = b.to_taylor(a.order());
    let outer = |al: C64, be: C64| -> bool {
        match &rational_a {
            Some(ar) => {
                let f = ar.combine(al, &b_rat, be);
                !f.is_zero() && factorization::is_outer_rational(&f).unwrap_or(false)
            }
            None => {
                let coeffs = (0..a.order()).map(|k| al * a.coeff(k) + be * b_taylor.coeff(k)).collect();
                match TaylorCoeffs::new(coeffs) {
                    Ok(t) => factorization::zero_count_in_disc(&t.into(), HEURISTIC_RADIUS, None) == Ok(0),
                    Err(_) => false,
                }
            }
        }
    };
    let mut table = Vec::new();
    for i in 0..=theta_grid {
        for j in 0..psi_grid {
            let theta = PI / 2.0 * i as f64 / theta_grid as f64;
            let psi = 2.0 * PI * j as f64 / psi_grid as f64;
            let (al, be) = (c(theta.cos(), 0.0), C64::from_polar(theta.sin(), psi));
            let cell = ScanCell { theta, psi, alpha: cpair(al), beta: cpair(be) };
            table.push((cell, outer(al, be)));
        }
    }
    let beta_zero_outer = outer(c(1.0, 0.0), c(0.0, 0.0));
    let outer_cells = table.iter().filter(|(c, o)| *o && c.theta > 0.0).map(|(c, _)| c.clone()).collect();
    Ok(Question8Report {
        command: "question8",
        exploratory: true,
        note: "exploratory scan of outer combinations; no claim about the open question",
        extremality: mate.verdict,
        a_fit,
        heuristic,
        theta_grid,
        psi_grid,
        cells: table.len(),
        beta_zero_outer,
        outer_cells,
        table,
    })
}

// ---------------------------------------------------------------- clap

#[derive(Debug, Parser)]
#[command(name = "debranges-lab", version, about = "Model operators, characteristic functions and dilations for de Branges-Rovnyak spaces")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON input file (`-` for stdin).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub truncation: Option<usize>,
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub theta_grid: Option<usize>,
    #[arg(long, global = true)]
    pub psi_grid: Option<usize>,
    /// Override a tolerance, e.g. `--tol coincide=1e-8`.
    #[arg(long = "tol", value_name = "NAME=VAL", global = true)]
    pub tol: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, env = "DEBRANGES_LAB_THREADS", global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Example {
    #[value(name = "example-4")]
    OuterCounterexample,
    #[value(name = "section-8")]
    EquivalentModels,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pythagorean mate of b.
    Factor,
    /// Model operator Y_b: defects, invariants, characteristic function.
    Model {
        /// Also build the two-sided model with L² modes down to -M.
        #[arg(long, value_name = "M")]
        tilde: Option<usize>,
    },
    /// Conditions (C1)-(C4) for a pair or an operator.
    Check,
    /// One-dimensional-defect dilation T_xi.
    Dilate {
        /// xi as `re1,im1,re2,im2` (normalized).
        #[arg(long, allow_hyphen_values = true)]
        xi: String,
        #[arg(long, default_value_t = 64)]
        m: usize,
    },
    /// Worked examples.
    Reproduce {
        #[arg(value_enum)]
        name: Example,
    },
    /// Scan (alpha, beta) for outer combinations alpha a + beta b.
    Question8 {
        #[arg(long, default_value_t = 90)]
        scan_theta: usize,
        #[arg(long, default_value_t = 90)]
        scan_psi: usize,
    },
}

impl GlobalArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(n) = self.truncation {
            cfg.truncation = n;
        }
        cfg.grid = self.grid;
        if let Some(t) = self.theta_grid {
            cfg.theta_grid = t;
        }
        if let Some(p) = self.psi_grid {
            cfg.psi_grid = p;
        }
        for t in &self.tol {
            cfg.set_tol(t)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.threads = self.threads;
        cfg.output = self.output.clone();
        if let Some(f) = self.format {
            cfg.format = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Report plus optional CSV table and exit code.
pub struct Outcome {
    pub json: Value,
    pub csv: Option<String>,
    pub exit: i32,
}

fn to_value<T: Serialize>(r: &T) -> Value {
    serde_json::to_value(r).expect("reports serialize")
}

fn read_input<T: for<'de> Deserialize<'de>>(path: Option<&PathBuf>) -> Result<T> {
    let path = path.ok_or_else(|| Error::InvalidInput("--input is required".into()))?;
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)
            .map_err(|e| Error::InvalidInput(format!("stdin: {e}")))?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
    };
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("input JSON: {e}")))
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Factor => "factor",
        Command::Model { .. } => "model",
        Command::Check => "check",
        Command::Dilate { .. } => "dilate",
        Command::Reproduce { .. } => "reproduce",
        Command::Question8 { .. } => "question8",
    }
}

fn error_kind(e: &Error) -> String {
    let d = format!("{e:?}");
    d.split(|ch: char| !ch.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

pub fn error_report(command: &str, e: &Error) -> Outcome {
    let mut details = json!({});
    let exit = match e {
        Error::ExtremeInput { log_integral, clipped_fraction } => {
            details = json!({ "verdict": "Extreme", "log_integral": log_integral, "clipped_fraction": clipped_fraction });
            EXIT_EXTREME
        }
        _ => EXIT_ERROR,
    };
    Outcome {
        json: json!({
            "command": command,
            "status": "error",
            "error": { "kind": error_kind(e), "message": e.to_string() },
            "details": details,
        }),
        csv: None,
        exit,
    }
}

fn no_csv(command: &str) -> Error {
    Error::InvalidInput(format!("`{command}` produces a structural report; CSV output is not available"))
}

/// Runs one subcommand against a resolved configuration.
pub fn execute(cmd: &Command, input: Option<&PathBuf>, cfg: &RunConfig) -> Result<Outcome> {
    let csv = cfg.format == Format::Csv;
    match cmd {
        Command::Factor => {
            let b: AnalyticFn = read_input(input)?;
            let r = factor_report(&b, cfg)?;
            let table = csv.then(|| {
                let mut s = String::from("k,re_a,im_a\n");
                for (k, x) in r.a.coeffs().iter().enumerate() {
                    s.push_str(&format!("{k},{},{}\n", x.re, x.im));
                }
                s
            });
            Ok(Outcome { json: to_value(&r), csv: table, exit: EXIT_OK })
        }
        Command::Model { tilde } => {
            let b: AnalyticFn = read_input(input)?;
            let r = model_report(&b, *tilde, cfg)?;
            let table = match (&r.samples, csv) {
                (Some(s), true) => Some(csv_samples("re_lambda,im_lambda,entries(re,im)...", s)),
                _ => None,
            };
            Ok(Outcome { json: to_value(&r), csv: table, exit: EXIT_OK })
        }
        Command::Check => {
            if csv {
                return Err(no_csv("check"));
            }
            let spec: ContractionSpec = read_input(input)?;
            let r = check_report(&spec, cfg)?;
            Ok(Outcome { json: to_value(&r), csv: None, exit: r.exit_code() })
        }
        Command::Dilate { xi, m } => {
            let spec: ContractionSpec = read_input(input)?;
            let xi = parse_xi(xi)?;
            let r = dilate_report(&spec, xi, *m, cfg)?;
            let table = match (&r.samples, csv) {
                (Some(s), true) => Some(csv_samples("re_lambda,im_lambda,re_b_xi,im_b_xi", s)),
                _ => None,
            };
            Ok(Outcome { json: to_value(&r), csv: table, exit: EXIT_OK })
        }
        Command::Reproduce { name: Example::OuterCounterexample } => {
            let r = counterexample_report(cfg)?;
            let table = csv.then(|| {
                let mut s = String::from("a,modulus,radius,k,count\n");
                for case in &r.cases {
                    for sw in [&case.unimodular, &case.unimodular_quarter, &case.small, &case.large] {
                        for (k, cnt) in sw.counts.iter().enumerate() {
                            let cnt = cnt.map(|v| v.to_string()).unwrap_or_default();
                            s.push_str(&format!("{},{},{},{k},{cnt}\n", case.a, sw.modulus, sw.radius));
                        }
                    }
                }
                s
            });
            Ok(Outcome { json: to_value(&r), csv: table, exit: EXIT_OK })
        }
        Command::Reproduce { name: Example::EquivalentModels } => {
            if csv {
                return Err(no_csv("reproduce section-8"));
            }
            let r = equivalent_models_report(cfg)?;
            Ok(Outcome { json: to_value(&r), csv: None, exit: EXIT_OK })
        }
        Command::Question8 { scan_theta, scan_psi } => {
            let b: AnalyticFn = read_input(input)?;
            let r = question8_report(&b, *scan_theta, *scan_psi, cfg)?;
            let table = csv.then(|| {
                let mut s = String::from("theta,psi,re_alpha,im_alpha,re_beta,im_beta,outer\n");
                for (cell, o) in &r.table {
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        cell.theta, cell.psi, cell.alpha[0], cell.alpha[1], cell.beta[0], cell.beta[1], o
                    ));
                }
                s
            });
            Ok(Outcome { json: to_value(&r), csv: table, exit: EXIT_OK })
        }
    }
}

fn parse_xi(s: &str) -> Result<[C64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidInput(format!("xi `{s}` is not a list of numbers")))?;
    match v.as_slice() {
        [a, b, c2, d] => Ok([c(*a, *b), c(*c2, *d)]),
        _ => Err(Error::InvalidInput(format!("xi needs 4 numbers, got {}", v.len()))),
    }
}

fn emit(out: &Outcome, target: Option<&PathBuf>) -> std::io::Result<()> {
    let body = match &out.csv {
        Some(s) => s.clone(),
        None => {
            let mut s = serde_json::to_string_pretty(&out.json).expect("json");
            s.push('\n');
            s
        }
    };
    match target {
        Some(p) => std::fs::write(p, body),
        None => std::io::stdout().write_all(body.as_bytes()),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let name = cli.command.as_ref().map(command_name).unwrap_or("config");
    let out = match cli.global.config() {
        Err(e) => error_report(name, &e),
        Ok(cfg) => {
            if let Some(t) = cfg.threads {
                // an already-initialized pool keeps its size
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            match (&cli.command, cli.global.print_config) {
                (_, true) => Outcome { json: to_value(&cfg), csv: None, exit: EXIT_OK },
                (None, false) => error_report(name, &Error::InvalidInput("no subcommand given".into())),
                (Some(cmd), false) => {
                    execute(cmd, cli.global.input.as_ref(), &cfg).unwrap_or_else(|e| error_report(name, &e))
                }
            }
        }
    };
    let target = cli.global.output.as_ref();
    if let Err(e) = emit(&out, target) {
        eprintln!("debranges-lab: cannot write report: {e}");
        return EXIT_ERROR;
    }
    out.exit
}
