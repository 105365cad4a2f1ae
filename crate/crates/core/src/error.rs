use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid mesh resolution n={n}: {reason}")]
    Resolution { n: usize, reason: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("truncation target unreachable: best achievable energy ratio is {achievable:.6}")]
    TruncationUnreachable { achievable: f64 },
    #[error("no admissible conductivity after {attempts} draws for sample {sample}")]
    Inadmissible { sample: usize, attempts: usize },
    #[error("constraint on DOF {dof} is not supported: {reason}")]
    Constraint { dof: usize, reason: String },
    #[error("unsupported geometry: {0}")]
    Unsupported(String),
    #[error("singular matrix near DOF {dof}: {detail} (pressure pinning may help)")]
    Singular { dof: usize, detail: String },
    #[error("sample {sample}: solve failed: {detail}")]
    SampleSolve { sample: usize, detail: String },
    #[error("sample {sample}: capacitance matrix near singular (condition estimate {cond:.3e})")]
    Capacitance { sample: usize, cond: f64 },
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
