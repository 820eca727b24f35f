use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("support box does not fit inside the periodic domain with margin {margin}: {detail}")]
    SupportOutsideDomain { margin: f64, detail: String },

    #[error(
        "eps-resolution violated: eps = {eps}, n = {n} gives dx = {dx}, need dx <= {dx_max} \
         (minimal admissible n = {min_n})"
    )]
    Underresolved {
        eps: f64,
        n: usize,
        dx: f64,
        dx_max: f64,
        min_n: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("split-step instability at t = {time}: sup norm grew by a factor {growth}")]
    Instability { time: f64, growth: f64 },

    #[error("non-finite values produced at t = {time}")]
    NonFinite { time: f64 },

    #[error("gradient blow-up at t = {time}: |grad v|_inf = {grad_norm}, filter-band fraction = {band_fraction}")]
    BlowUp {
        time: f64,
        grad_norm: f64,
        band_fraction: f64,
    },

    #[error("classical flow invalid past t = {horizon} (requested {requested})")]
    PastHorizon { requested: f64, horizon: f64 },

    #[error("Newton inversion of the classical flow failed at t = {time}, target {target:?} (near caustic)")]
    NewtonFailure { time: f64, target: Vec<f64> },

    #[error("modes {first} and {second} have overlapping supports or cutoffs")]
    OverlappingModes { first: usize, second: usize },

    #[error("resonance completion is not closed after one pass: {0}")]
    ResonanceClosure(String),

    #[error("no lambda up to {cap} reaches the threshold {threshold} (best {best})")]
    CounterexampleSearch { cap: f64, threshold: f64, best: f64 },

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
