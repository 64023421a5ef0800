use std::fmt;

use thiserror::Error;

/// A single broken invariant in a parameter set, with its location.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Where the violation sits, e.g. `"transition row 0"` or `"emission[1][2]"`.
    pub location: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    ZeroStates,
    ZeroSymbols,
    WrongLength { expected: usize, found: usize },
    NegativeProbability(f64),
    ProbabilityAboveOne(f64),
    NotFinite(f64),
    BadRowSum(f64),
    DuplicateLabel(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::ZeroStates => {
                write!(f, "{}: num_states must be at least 1", self.location)
            }
            ViolationKind::ZeroSymbols => {
                write!(f, "{}: num_symbols must be at least 1", self.location)
            }
            ViolationKind::WrongLength { expected, found } => {
                write!(
                    f,
                    "{}: expected length {expected}, found {found}",
                    self.location
                )
            }
            ViolationKind::NegativeProbability(v) => {
                write!(f, "{}: negative probability {v}", self.location)
            }
            ViolationKind::ProbabilityAboveOne(v) => {
                write!(f, "{}: probability {v} exceeds 1", self.location)
            }
            ViolationKind::NotFinite(v) => write!(f, "{}: non-finite value {v}", self.location),
            ViolationKind::BadRowSum(s) => write!(f, "{} sums to {s}", self.location),
            ViolationKind::DuplicateLabel(l) => {
                write!(f, "{}: duplicate label {l:?}", self.location)
            }
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("invalid model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("sequence has zero probability under the model (first impossible step {step})")]
    ZeroProbabilitySequence { step: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("symbol {symbol} at position {position} is out of range for {num_symbols} symbols")]
    SymbolOutOfRange {
        position: usize,
        symbol: usize,
        num_symbols: usize,
    },

    #[error("state {state} at position {position} is out of range for {num_states} states")]
    StateOutOfRange {
        position: usize,
        state: usize,
        num_states: usize,
    },

    #[error("empty sequence")]
    EmptySequence,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("sequence {sequence} has zero probability under the model")]
    DegenerateCorpus { sequence: usize },

    #[error("{matrix} row {row} has no expected counts and smoothing is disabled")]
    DegenerateRow { matrix: &'static str, row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HmmError>;
