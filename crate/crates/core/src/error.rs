use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Dahl state |f| = {force} exceeds the limit friction force {limit}")]
    InvalidDahlState { force: f64, limit: f64 },

    #[error("harmonic {harmonic} aliases on a grid of {samples} samples")]
    Aliasing { harmonic: usize, samples: usize },

    #[error("Dahl hysteresis not periodic after {cycles} cycles (mismatch {mismatch:.3e})")]
    DahlNotPeriodic { cycles: usize, mismatch: f64 },

    #[error("Newton solver did not converge at a = {amplitude:.6e} after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        amplitude: f64,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("overdamped mode at a = {amplitude:.6e}: damping ratio {delta:.4}")]
    Overdamped { amplitude: f64, delta: f64 },

    #[error("continuation stopped at a = {failed_at:.6e} after {converged} converged entries: {reason}")]
    PartialTable {
        converged: usize,
        failed_at: f64,
        reason: String,
        table: Box<crate::nma::ModalTable>,
    },

    #[error("empty modal table")]
    EmptyTable,

    #[error("perturbation too strong at a = {amplitude:.6e}: modified squared frequency {omega_sq:.6e} <= 0")]
    NegativeFrequency { amplitude: f64, omega_sq: f64 },

    #[error("step size collapsed to {step:.3e} at t = {time:.6e}{}", hint.as_deref().map(|h| format!(" ({h})")).unwrap_or_default())]
    StepSizeCollapse {
        time: f64,
        step: f64,
        hint: Option<String>,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("incompatible artifacts: {0}")]
    Incompatible(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
