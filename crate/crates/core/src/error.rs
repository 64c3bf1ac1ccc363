use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("Fock cutoff must retain at least 2 levels, got {dim}")]
    InvalidCutoff { dim: usize },

    #[error("number state |{l}> does not fit in a cutoff of {dim} levels")]
    NumberExceedsCutoff { l: usize, dim: usize },

    /// Probability mass above the cutoff exceeded the allowed budget.
    #[error("truncation loss in {context}: retained mass {retained:.3e}")]
    TruncationLoss { context: String, retained: f64 },

    #[error("state vector is not normalized (norm^2 = {norm_sq})")]
    NotNormalized { norm_sq: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("polynomial degree {degree} exceeds the supported maximum {max}")]
    DegreeTooLarge { degree: usize, max: usize },

    #[error("Gaussian integral diverges (Re zeta >= 0 or indefinite form) and continuation was not requested")]
    DivergentWithoutContinuation,

    #[error("singular denominator zeta^2 - 4fg = {value:e}")]
    SingularDenominator { value: f64 },

    #[error("Kraus operator M_({m},{n}) is undefined at zero channel time")]
    ZeroTimeNontrivialIndex { m: usize, n: usize },

    #[error("cutoff of {dim} levels is too small for Kraus order {max_index}")]
    CutoffTooSmall { dim: usize, max_index: usize },

    #[error("neither overall sign gives unit trace (+: {plus:.6e}, -: {minus:.6e})")]
    SignResolutionFailed { plus: f64, minus: f64 },

    #[error("quadrature not converged: refinement estimate {estimate:.3e} > {tolerance:.1e}")]
    QuadratureNotConverged { estimate: f64, tolerance: f64 },

    #[error("integrand does not decay: boundary magnitude {boundary:.3e} vs peak {peak:.3e}")]
    NotDecayed { boundary: f64, peak: f64 },

    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    #[error("integrator step too large: kappa*dt = {kappa_dt}")]
    StepTooLarge { kappa_dt: f64 },

    #[error("operation requires a strictly positive channel time")]
    ZeroTime,

    #[error("finite-difference stencil out of range: {0}")]
    StencilOutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
