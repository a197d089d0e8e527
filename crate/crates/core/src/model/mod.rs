//! Shared domain records and their line-oriented persistence.
//!
//! Every record type implements [`Record`]; invariants are checked when a
//! record is read, so downstream stages only ever see valid values.

mod jsonl;
mod label;
mod records;
pub mod sft;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use jsonl::{read_records, to_canonical_line, write_records, JsonlWriter, RecordError, RecordReader};
pub use label::{InvalidLabel, Label, OptionMap, MAX_OPTIONS};
pub use records::*;

/// A record invariant violation, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {reason}")]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl FieldError {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        FieldError {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// A JSONL-persisted record kind.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn validate(&self) -> Result<(), FieldError> {
        Ok(())
    }
}
