use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows} rows, widest row {cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular matrix")]
    Singular,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("time {t} outside the pulse window [0, {gate_time}]")]
    TimeOutOfRange { t: f64, gate_time: f64 },

    #[error("step size underflow at t = {t} μs (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("amplitude |{amplitude}| exceeds 1 for input state {state}: unphysical gate")]
    Unphysical { state: &'static str, amplitude: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
