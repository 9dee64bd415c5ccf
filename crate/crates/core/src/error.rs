use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("amplitude {amplitude} exceeds the saturation cap {cap}")]
    Saturation { amplitude: f64, cap: f64 },

    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("amplitude bracket [{lo}, {hi}] does not straddle the ground state: {detail}")]
    Bracket { lo: f64, hi: f64, detail: String },

    #[error("ground-state selection failed: {0}")]
    GroundState(String),

    #[error("Newton iteration did not converge after {iterations} steps (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("decay fit window: {0}")]
    DecayWindow(String),

    #[error("operator is near-singular (smallest eigenvalue magnitude {smallest:e})")]
    Conditioning { smallest: f64 },

    #[error("right-hand side is not orthogonal to the kernel guard (relative overlap {overlap:e})")]
    NotOrthogonal { overlap: f64 },

    #[error("eigen iteration hit its limit (best residual {residual:e})")]
    IterationLimit { residual: f64 },

    #[error("Morse count inconclusive: sector l = {l_max} still has negative eigenvalues")]
    Inconclusive { l_max: u32 },

    #[error("no growing mode found: the linearized flow looks spectrally stable")]
    StabilityDetected,

    #[error("more than one growing mode in sector 0 (second eigenvalue {second:e})")]
    Multiplicity { second: f64 },

    #[error("initial data has |grad u0|^2 = {0} which is not below the threshold 1")]
    Threshold(f64),

    #[error("perturbation never reached the fit window before t = {horizon}")]
    Horizon { horizon: f64 },

    #[error("need at least {needed} samples, got {got}")]
    Sampling { needed: usize, got: usize },

    #[error("inconsistent spectral report: {0}")]
    Verdict(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
