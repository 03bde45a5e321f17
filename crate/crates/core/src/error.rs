use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("denominator vanishes at s = {s}")]
    PoleHit { s: Complex64 },

    #[error("s = {s} lies on the branch cut of a fractional power")]
    BranchCut { s: Complex64 },

    #[error("transfer function has a pole at the origin: DC gain is infinite")]
    InfiniteDcGain,

    #[error("plant carries no non-minimum-phase zero metadata")]
    MissingNmpZero,

    #[error("no proportional gain in [{k_min}, {k_max}] reaches PM {target_deg} deg on the {loop_name} loop")]
    NoSolution {
        loop_name: &'static str,
        target_deg: f64,
        k_min: f64,
        k_max: f64,
    },

    #[error("no canceller order n <= {n_max} reaches PM {target_deg} deg (best: {best_pm_deg} deg at n = {best_n})")]
    NoCancellerOrder {
        n_max: u32,
        target_deg: f64,
        best_n: u32,
        best_pm_deg: f64,
    },

    #[error("plant is not stable: {0}")]
    UnstablePlant(String),

    #[error("impulse response not evaluable at t = {t}")]
    NotEvaluable { t: f64 },

    #[error("FIR taps sum to zero")]
    ZeroTapSum,

    #[error("closed loop diverged at t = {time_s} s")]
    Divergence { time_s: f64 },

    #[error("step metrics undefined: {0}")]
    UndefinedMetrics(String),
}
