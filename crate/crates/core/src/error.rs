use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("delay {h} lies outside [-{max_delay}, 0]")]
    DelayOutOfRange { h: f64, max_delay: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid system spec: {0}")]
    InvalidSpec(String),

    #[error("history is not sampled on the canonical grid: {0}")]
    GridMismatch(String),

    #[error("characteristic matrix is numerically singular at lambda = {lambda} (sigma_min = {sigma_min:e})")]
    SingularCharacteristicMatrix { lambda: Complex64, sigma_min: f64 },

    #[error("B has an eigenvalue at distance {distance:e} from the line Re(lambda) = {alpha}")]
    EigenvalueOnLine { alpha: f64, distance: f64 },

    #[error("alpha = {alpha} must lie in (spectral abscissa of B = {abscissa}, 0]")]
    AlphaOutOfRange { alpha: f64, abscissa: f64 },

    #[error("delay matrix does not commute with B (||BC - CB|| = {defect:e})")]
    NotCommuting { defect: f64 },

    #[error("B is not exponentially stable (spectral abscissa {abscissa})")]
    BNotStable { abscissa: f64 },

    #[error("mu = {mu} equals -d; the construction needs mu + d != 0")]
    MuEqualsMinusD { mu: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("i*omega = {omega}i is an eigenvalue of B + C")]
    ResonantOmega { omega: f64 },

    #[error("B + C is not exponentially stable (spectral abscissa {abscissa})")]
    BCNotStable { abscissa: f64 },

    #[error("B + C is not hyperbolic (eigenvalue at distance {distance:e} from the imaginary axis)")]
    BCNotHyperbolic { distance: f64 },

    #[error("Newton iteration did not converge from seed {seed} after {iterations} iterations")]
    NoConvergence { seed: Complex64, iterations: usize },

    #[error("contour passes through or too close to a characteristic root (winding estimate {winding})")]
    ContourThroughRoot { winding: f64 },

    #[error("no sign change of the spectral abscissa for tau in [{lo}, {hi}]")]
    NoCrossingInRange { lo: f64, hi: f64 },

    #[error("delay {delay} is not an integer multiple of the step {step}; try step {suggested}")]
    MisalignedDelay { delay: f64, step: f64, suggested: f64 },

    #[error("trajectory is identically zero in the fit window")]
    DegenerateTrajectory,

    #[error("{0}")]
    Config(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
