use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("grid size {0} is not a power of two >= 8")]
    BadGridSize(usize),
    #[error("grid size {size} too small for {order} coefficients")]
    GridTooSmall { size: usize, order: usize },
    #[error("denominator vanishes at {root} (|root| = {modulus:.3e}), inside or too close to the closed unit disc")]
    DenominatorZero { root: num_complex::Complex64, modulus: f64 },
    #[error("negative-frequency energy ratio {ratio:.3e} exceeds tolerance {tol:.1e}")]
    NotAnalytic { ratio: f64, tol: f64 },
    #[error("polynomial has degree 0 (or is identically zero)")]
    DegreeZero,
    #[error("function is identically zero")]
    ZeroFunction,
    #[error("sup |b| = {0} exceeds 1 on the grid")]
    ModulusExceedsOne(f64),
    #[error("log of the modulus is not integrable on the grid (clipped fraction {0:.3})")]
    LogNotIntegrable(f64),
    #[error("input is extreme in the unit ball (log integral {log_integral:.3}, clipped fraction {clipped_fraction:.3})")]
    ExtremeInput { log_integral: f64, clipped_fraction: f64 },
    #[error("contour passes within {distance:.2e} of a zero")]
    ZeroNearContour { distance: f64 },
    #[error("phase increments not resolved with {0} samples")]
    InsufficientSamples(usize),
    #[error("operator is not a contraction (min eigenvalue of I - T*T = {0:.3e})")]
    NotAContraction(f64),
    #[error("resolvent system is singular at lambda = {0}")]
    SolveFailure(num_complex::Complex64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sample points of the two characteristic functions differ")]
    SampleMismatch,
    #[error("pair is not *-inner: max | |phi1|^2 + |phi2|^2 - 1 | = {0:.3e}")]
    NotStarInner(f64),
    #[error("pair is not pure (coincides with a constant row (0, kappa))")]
    NotPure,
    #[error("b is identically zero")]
    ZeroB,
    #[error("isometry residual |B*B - I| = {0:.3e} too large")]
    IsometryResidualTooLarge(f64),
    #[error("Gram matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("alpha = {0} outside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("dim ker(I - A*A) = {0}, expected 1")]
    KernelDimNotOne(usize),
    #[error("local search did not converge (best residual {0:.3e})")]
    NoConvergence(f64),
    #[error("condition C1 violated: defect dims ({0}, {1}), kernel dim {2}")]
    C1Violated(usize, usize, usize),
    #[error("dilation defect profile ({0}, {1}) differs from (1, 1)")]
    DefectProfileUnexpected(usize, usize),
    #[error("unitary completion failed (residual {0:.3e})")]
    NotUnitaryCompletion(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
