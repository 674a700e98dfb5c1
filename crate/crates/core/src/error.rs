use num_complex::Complex64;

/// Errors produced by the numerical pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("weight not subharmonic: cell ({r:.6}, {theta:.6}) has curvature mass {mass:.3e}")]
    NotSubharmonic { r: f64, theta: f64, mass: f64 },

    #[error("Gram matrix too ill-conditioned at degree {degree}: condition {condition:.3e} \
             exceeds 1e12; max safe degree for this schedule is {max_safe_degree}")]
    IllConditioned {
        degree: usize,
        condition: f64,
        max_safe_degree: usize,
    },

    #[error("degree {degree} exceeds the configured cap {cap} for {path} Gram assembly")]
    DegreeCap {
        degree: usize,
        cap: usize,
        path: &'static str,
    },

    #[error("operation requires a smooth weight, got {smoothness}")]
    NonSmoothWeight { smoothness: String },

    #[error("finite-difference instability in c3_norm: Richardson levels disagree by \
             {disagreement:.2}% (> 5%) on derivative order {order}")]
    FdInstability { disagreement: f64, order: usize },

    #[error("total-mass mismatch: {lhs:.12e} vs {rhs:.12e} (relative {rel:.3e} > 1e-9)")]
    MassMismatch { lhs: f64, rhs: f64, rel: f64 },

    #[error("test function undefined at ∞ but measure carries infinity_mass {mass:.3e}")]
    UndefinedAtInfinity { mass: f64 },

    #[error("root finder did not converge after {iterations} iterations \
             ({converged} of {total} roots stable)")]
    RootsDiverged {
        iterations: usize,
        converged: usize,
        total: usize,
        partial: Vec<Complex64>,
    },

    #[error("section is identically zero")]
    ZeroSection,

    #[error("schedule rejected: {0}")]
    Schedule(String),

    #[error("unsupported weight configuration: {0}")]
    UnsupportedWeight(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("verdict failure: {0}")]
    Verdict(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
