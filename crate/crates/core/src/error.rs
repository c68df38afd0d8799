use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("negative argument {0} (domain is [0, inf))")]
    NegativeArgument(f64),

    #[error("time step {dt:e} exceeds the stability bound {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("negative value {value:e} below clamp tolerance {tolerance:e} at t = {t}")]
    Instability { t: f64, value: f64, tolerance: f64 },

    #[error("blow-up guard: max u = {u_max} at t = {t}")]
    BlowUpGuard { t: f64, u_max: f64 },

    #[error("multiple downward crossings ({count}) of the ignition level; profile is not symmetric-decreasing")]
    MultipleCrossings { count: usize },

    #[error("front is thinner than {needed} cells")]
    ThinFront { needed: usize },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("root not bracketed: {0}")]
    NotBracketed(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("profile turned negative at y = {y}")]
    ProfileNegative { y: f64 },

    #[error("far-field plateau not reached (relative slope {slope:e} over the last decade)")]
    PlateauNotReached { slope: f64 },

    #[error("outside validity window: {0}")]
    OutsideValidity(String),

    #[error("fit window too short: {0}")]
    WindowTooShort(String),

    #[error("correction below grid resolution on the whole window")]
    Unresolved,

    #[error("target {target} below the range of L(b) (minimum {minimum})")]
    BelowRange { target: f64, minimum: f64 },

    #[error("monotonicity violated: {0}")]
    NonMonotone(String),

    #[error("bracket seeding failed after {0} doublings")]
    BracketSeeding(usize),

    #[error("verdict fired at t = {t}, before 10% of horizon {horizon}")]
    OffsetTooLarge { t: f64, horizon: f64 },

    #[error("grids not alignable: {0}")]
    NotAlignable(String),

    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code: 1 usage, 2 validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::InvalidParameter { .. } | Error::NegativeArgument(_) | Error::Config(_) => 2,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}
