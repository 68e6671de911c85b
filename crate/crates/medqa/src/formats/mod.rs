//! On-disk formats: raw corpora, prepared splits, tokenizer models, the
//! tensor container used for checkpoints and indexes, and JSON-lines logs.

mod corpus;
mod jsonl;
mod lexicon;
mod tensors;
mod tokenizer;

pub use corpus::{parse_corpus, read_split, write_split, CorpusFormat, ParseMode, SplitRecord};
pub use jsonl::{read_jsonl, to_jsonl};
pub use lexicon::{load_lexicon, load_pivot};
pub use tensors::{
    decode_checkpoint, decode_index, encode_checkpoint, encode_index, ArrayEntry, ArtifactMeta, Header, MAGIC,
    TENSOR_FORMAT_VERSION,
};
pub use tokenizer::{load_tokenizer, save_tokenizer, TokenizerFile, TOKENIZER_FORMAT_VERSION};

use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("input is not valid UTF-8 (byte {0})")]
    Utf8(usize),
    #[error("malformed record at line {0}")]
    MalformedRecord(usize),
    #[error("duplicate id {id:?} at line {line}")]
    DuplicateId { line: usize, id: String },
    #[error("not a medqa tensor file")]
    BadMagic,
    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion { what: &'static str, found: u32, expected: u32 },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from the core crate surfaced while decoding.
#[derive(Debug)]
pub struct ModelError(pub String);

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ModelError {}

impl From<medqa_core::nn::NnError> for FormatError {
    fn from(e: medqa_core::nn::NnError) -> Self {
        FormatError::Model(ModelError(e.to_string()))
    }
}

impl From<medqa_core::tokenizer::TokenizerError> for FormatError {
    fn from(e: medqa_core::tokenizer::TokenizerError) -> Self {
        FormatError::Model(ModelError(e.to_string()))
    }
}

impl From<medqa_core::pipeline::PipelineError> for FormatError {
    fn from(e: medqa_core::pipeline::PipelineError) -> Self {
        FormatError::Model(ModelError(e.to_string()))
    }
}
