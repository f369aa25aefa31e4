use thiserror::Error;

use crate::scenario::config::ConfigViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the mesh, kernel, law and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("degenerate kernel: no positive tap on a grid with dx = {dx}")]
    DegenerateKernel { dx: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("CFL violated at step {step}: courant number {courant} > 1")]
    CflViolation { step: usize, courant: f64 },

    #[error(
        "solver diverged at step {step} (t = {t}); last good snapshot at t = {last_good_time}"
    )]
    Divergence {
        step: usize,
        t: f64,
        last_good_time: f64,
    },

    #[error("frozen state at t = {t}: global maximal speed is zero before t_final")]
    Frozen { t: f64 },

    #[error("evaluation outside the trajectory time range: t = {t} not in [{lo}, {hi}]")]
    TimeDomain { t: f64, lo: f64, hi: f64 },

    #[error("fixed-point iteration did not converge on [{t_start}, {t_end}] after {iterations} iterations (residual {residual:e})")]
    MaxIterations {
        t_start: f64,
        t_end: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("no contraction found: subinterval shrank below {min_length} at t = {t_start}")]
    NoContraction { t_start: f64, min_length: f64 },

    #[error("{} configuration violation(s): {}", .0.len(), join_violations(.0))]
    Config(Vec<ConfigViolation>),

    #[error("scenario {scenario} ({solver}): {source}")]
    Run {
        scenario: String,
        solver: String,
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[ConfigViolation]) -> String {
    v.iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidConfig(_)
            | Error::InvalidKernel(_)
            | Error::Json(_) => 1,
            Error::DegenerateKernel { .. } | Error::Shape(_) => 1,
            Error::Run { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
