//! Measures how language models judge the eight polarity arrangements of
//! accepted implications, and trains a toy judge under an
//! affirmation-plus-denial objective.
//!
//! * [`logic`]: rule taxonomy and variant generation
//! * [`corpus`]: statement files and prompt rendering
//! * [`eval`]: endpoint client, verdict parsing, resumable run log
//! * [`metrics`]: TRUE fractions, error column, table rendering
//! * [`dual`]: dual-objective losses, gradients, training and the two-arm
//!   distinguishability experiment
//! * [`manifest`]: provenance records written next to every artifact

pub mod corpus;
pub mod dual;
pub mod error;
pub mod eval;
pub mod exec;
pub mod logic;
pub mod manifest;
pub mod metrics;

pub use error::{CorpusError, EvalError, LogicError, MetricsError, QueryError, TrainError};
