//! Core of a desk-scale medical question-answering pipeline.
//!
//! Everything in this crate is pure computation over in-memory values and
//! needs only `alloc`: corpus cleaning and templating, a byte-level BPE
//! tokenizer, text and vector augmentation, a small transformer with exact
//! analytic gradients, the training loop, retrieval-augmented prompt
//! construction, and precision/perplexity evaluation.
//!
//! File formats, configuration and the command-line driver live in the
//! `medqa` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod augment;
pub mod corpus;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod text;
pub mod tokenizer;
pub mod train;

pub use corpus::{Corpus, CorpusStats, Provenance, QAPair};
pub use nn::{ArchConfig, Head, ModelParams};
pub use tokenizer::TokenizerModel;
pub use train::{Schedule, TrainConfig, TrainLog};
