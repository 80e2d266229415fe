use thiserror::Error;

/// Errors raised by the calculus engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("not representable in the coefficient ring: {0}")]
    Ring(String),

    #[error("ellipticity fails at x={x:?}, xi={xi:?}: |a|={value:e}")]
    Ellipticity { x: Vec<f64>, xi: Vec<f64>, value: f64 },

    #[error("positivity fails at x={x:?}, xi={xi:?}: a={value}")]
    Positivity { x: Vec<f64>, xi: Vec<f64>, value: String },

    #[error("operator is not self-adjoint: defect {defect:e} exceeds {tolerance:e}")]
    NotSelfAdjoint { defect: f64, tolerance: f64 },

    #[error("dense cap exceeded: {rows} rows > {cap}")]
    DenseCap { rows: usize, cap: usize },

    #[error("frequency {frequency} aliases on a grid with {points} points per axis")]
    Aliasing { frequency: i64, points: usize },

    #[error("trajectory left the domain at t={time} (point {point:?})")]
    Escape { time: f64, point: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
