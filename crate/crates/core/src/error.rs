use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("insufficient data: {have} samples, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("out-of-order sample: t={t} is older than newest t={newest}")]
    OutOfOrder { t: f64, newest: f64 },

    #[error("class absent from training data: {0}")]
    ClassAbsent(&'static str),

    #[error("class {class} has {have} examples, need at least {need}")]
    TooFewExamples {
        class: &'static str,
        have: usize,
        need: usize,
    },

    #[error("pixel ({x}, {y}) lies outside the {width}x{height} screen")]
    OutsideScreen { x: f64, y: f64, width: u32, height: u32 },

    #[error("field weights are all zero: no field influence")]
    NoFieldInfluence,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("successes ({successes}) exceed trials ({trials})")]
    SuccessesExceedTrials { successes: u64, trials: u64 },

    #[error("{0}")]
    Statistics(String),
}
