use thiserror::Error;

use crate::model::Finding;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("t = {time} is outside segment {segment} window [{t_start}, {t_end}]")]
    OutsideWindow {
        segment: usize,
        time: f64,
        t_start: f64,
        t_end: f64,
    },
    #[error("instance parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported instance file version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid instance: {}", join(.0))]
    Invalid(Vec<Finding>),
}

fn join(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("variable index {index} out of range for a model with {len} variables")]
    VarOutOfRange { index: usize, len: usize },
    #[error("variable {0} is not binary")]
    NotBinary(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum RecoveryError {
    #[error("assignment has {got} entries, model has {expected} variables")]
    Length { got: usize, expected: usize },
    #[error("model is missing variable {0}")]
    MissingLabel(String),
    #[error("selected edges do not form vertex-disjoint depot paths: {0}")]
    Structure(String),
    #[error("position mismatch at segment {segment}: recomputed {expected}, encoded {found}")]
    Position {
        segment: usize,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("brute force refuses {what} = {got} (limit {limit})")]
    TooLarge {
        what: &'static str,
        got: usize,
        limit: usize,
    },
    #[error("no feasible visiting plan exists")]
    Infeasible,
    #[error("fixed-sequence subproblem failed: {0:?}")]
    Solver(crate::socp::RelaxStatus),
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("no feasible instance after {0} trajectory draws")]
    Exhausted(usize),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
