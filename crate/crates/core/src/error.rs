use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cell: {0}")]
    InvalidCell(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("coincident atoms {0} and {1}: pair direction undefined")]
    CoincidentAtoms(usize, usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("packing infeasible after {attempts} attempts: {hint}")]
    PackingInfeasible { attempts: usize, hint: String },

    #[error("rank-deficient volume fit: {0}")]
    RankDeficient(String),

    #[error("relaxation diverged at step {step}: {reason}")]
    RelaxDiverged {
        step: usize,
        reason: String,
        /// Energies and coordinates visited before the failure.
        trajectory: Vec<(f64, Vec<f64>)>,
    },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainDiverged { epoch: usize, reason: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
