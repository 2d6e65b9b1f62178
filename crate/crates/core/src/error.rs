use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("rendered clause is empty")]
    EmptyClause,
    #[error("unknown rule code `{0}`")]
    UnknownRule(String),
    #[error("unknown negation style `{0}` (expected `no` or `not`)")]
    UnknownNegationStyle(String),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field `{field}` is empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: duplicate statement id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("template error: {0}")]
    Template(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("rule list is empty")]
    NoRules,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("run log {path}: {source}")]
    LogIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run log {path}, line {line}: {message}")]
    LogParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("endpoint config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("judgment log is empty")]
    EmptyLog,
    #[error("cell ({rule}, {model}) has no TRUE/FALSE verdicts")]
    UndefinedCell { rule: String, model: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
}
