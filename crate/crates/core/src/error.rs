use thiserror::Error;

pub type Result<T> = std::result::Result<T, SfsError>;

#[derive(Debug, Error)]
pub enum SfsError {
    #[error("Fock order {n} exceeds the supported maximum {max}")]
    FockOrderTooLarge { n: usize, max: usize },

    #[error("quadrature order {order} outside [{min}, {max}]")]
    QuadratureOrder { order: usize, min: usize, max: usize },

    #[error("a_i must exceed 1 (a[{index}] = {value})")]
    FreeParameter { index: usize, value: f64 },

    #[error("a scheme needs at least 2 modes, got {0}")]
    TooFewModes(usize),

    #[error("expected {expected} free parameters for {n_modes} modes, got {found}")]
    FreeParameterCount {
        n_modes: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("detection pattern has {found} counts but the scheme has {expected} detectors")]
    PatternLength { expected: usize, found: usize },

    #[error("universal parameter X must exceed 1, got {0}")]
    UniversalParameter(f64),

    #[error("detection efficiency must lie in (0, 1], got {0}")]
    Efficiency(f64),

    #[error("transmittance must lie strictly inside (0, 1), got {0}")]
    Transmittance(f64),

    #[error("beam splitter modes ({k}, {l}) invalid for {n_modes} modes")]
    SplitterModes { k: usize, l: usize, n_modes: usize },

    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("{quantity} did not converge under order doubling (change {change:.3e} > {tolerance:.1e})")]
    Convergence {
        quantity: &'static str,
        change: f64,
        tolerance: f64,
    },

    #[error("heralded output is not normalizable (norm {0:.3e}); grid too coarse or event impossible")]
    NonNormalizable(f64),

    #[error("no parameters reached fidelity {threshold} (best {best:.6})")]
    Infeasible { best: f64, threshold: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
