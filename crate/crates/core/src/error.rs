use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("node ({s}, {h}) is out of range: h must satisfy 1 <= h <= 2^s")]
    InvalidNode { s: u32, h: u64 },

    #[error("scale {0} is too deep: 2^s overflows the node index type")]
    ScaleOverflow(u32),

    #[error("ancestor scale {r} is deeper than node scale {s}")]
    AncestorOutOfRange { r: u32, s: u32 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("calibration failed for delta = {delta}, target = {target}: {reason}")]
    Calibration {
        delta: f64,
        target: f64,
        reason: String,
    },

    #[error("truncated normal sampling failed on [{lo}, {hi}] (mean {mean}, variance {variance}): {reason}")]
    TruncatedSampling {
        lo: f64,
        hi: f64,
        mean: f64,
        variance: f64,
        reason: &'static str,
    },

    #[error("truncated sampling failed at node ({s}, {h}): {source}")]
    NodeSampling {
        s: u32,
        h: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("data are constant; cannot standardize")]
    ConstantData,

    #[error("no observations")]
    NoObservations,

    #[error("unknown group {0}")]
    UnknownGroup(usize),

    #[error("likelihood entry at sweep {sweep}, observation {obs} is not positive ({value})")]
    NonPositiveLikelihood { sweep: usize, obs: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
