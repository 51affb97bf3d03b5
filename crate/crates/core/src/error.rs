use thiserror::Error;

/// Errors raised by the simulation, estimation and constants layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("explicit stability guard violated: step*rate = {ratio:.4} > {limit}")]
    StabilityViolation { ratio: f64, limit: f64 },

    #[error("non-finite value at step {step}, component {component}")]
    NumericalBlowup { step: usize, component: usize },

    #[error("batch-means standard error {se:.3e} exceeds tolerance {tol:.3e}")]
    NonConvergence { se: f64, tol: f64 },

    #[error("boundary-cell mass {mass:.3e} exceeds the tail tolerance")]
    TailMassTooLarge { mass: f64 },

    #[error("density vanishes on the whole quadrature grid")]
    DegenerateDensity,

    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooHigh { dim: usize, max: usize },

    #[error("slow drift is not affine in x (coordinate {coordinate})")]
    NotAffine { coordinate: usize },

    #[error("all smoothing weights underflow at this point; outside the trusted region")]
    AllWeightsUnderflow,

    #[error("argument outside the formula's domain: {0}")]
    DomainError(String),

    #[error("beta = {beta} exceeds gamma/4 = {limit}")]
    BetaTooLarge { beta: f64, limit: f64 },

    #[error("covariance matrix is not symmetric positive semidefinite")]
    AsymmetricCovariance,

    #[error("log-Sobolev denominator is nonpositive ({value:.4e}); outside the theorem's regime")]
    DenominatorNonpositive { value: f64 },

    #[error("moment order p = {p} is not admissible (need 1 <= p <= {p_max})")]
    PNotAdmissible { p: f64, p_max: f64 },

    #[error("slow diffusion is singular at step {step} (smallest singular value {smallest:.3e})")]
    SingularSigmaY { step: usize, smallest: f64 },

    #[error("stochastic exponential left the representable range at step {step}")]
    WeightOutOfRange { step: usize },

    #[error("gamma = {gamma:.4} does not exceed 2; the Girsanov density is not known to be a martingale")]
    NovikovRegime { gamma: f64 },

    #[error("histogram cell with positive sample mass has zero reference density")]
    ZeroDensityCell,

    #[error("probe {index} has zero variance or zero Dirichlet energy")]
    DegenerateProbe { index: usize },

    #[error("dt refinement ratio {ratio:.4} is outside 1 +/- 3*{se:.4}")]
    DtBiasTooLarge { ratio: f64, se: f64 },

    #[error("{fraction:.2} of replicas left the domain within the first 10 steps")]
    ImmediateExit { fraction: f64 },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
