//! Subcommands. Every artifact lands under the output directory:
//!
//! ```text
//! data/{train,val,test}.jsonl  data/stats.json        prepare
//! tokenizer.json                                      train --stage tokenizer
//! encoder.ckpt                 logs/encoder*.json*    train --stage encoder
//! decoder.ckpt                 logs/decoder*.json*    train --stage decoder
//! index.bin  prompts.jsonl                            train --stage prompts
//! finetuned.ckpt               logs/finetune*.json*   train --stage finetune
//! reports/<mode>.{json,txt}  reports/<mode>_trace.jsonl   eval --mode <mode>
//! report.json  report.txt                             report
//! ```

mod eval;
mod prepare;
mod train;

use std::fmt;
use std::path::{Path, PathBuf};

use medqa_core::corpus::Corpus;
use medqa_core::nn::ModelParams;
use medqa_core::pipeline::EmbeddingIndex;
use medqa_core::rng::{derive_seed, fnv1a};
use medqa_core::tokenizer::TokenizerModel;
use serde::{Deserialize, Serialize};

pub use eval::{cmd_eval, cmd_report, EvalModeArg};
pub use prepare::{cmd_prepare, split_sizes};
pub use train::{cmd_train, Stage};

use crate::config::{sha256_hex, ConfigError, LoadedConfig};
use crate::formats::{self, ArtifactMeta, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {reason}")]
    MissingInput { path: PathBuf, reason: String },
    #[error("stage {stage} needs {path}, which does not exist; run `{hint}` first")]
    MissingPrerequisite { stage: String, path: PathBuf, hint: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("{stage}: {message}")]
    Stage { stage: String, message: String, user: bool },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    /// 2 for problems with the user's input or invocation, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_)
            | CliError::MissingInput { .. }
            | CliError::MissingPrerequisite { .. }
            | CliError::Mismatch(_) => 2,
            CliError::Stage { user, .. } => {
                if *user {
                    2
                } else {
                    1
                }
            }
            CliError::Internal(_) => 1,
        }
    }

    pub(crate) fn user(stage: &str, e: impl fmt::Display) -> Self {
        CliError::Stage { stage: stage.to_string(), message: e.to_string(), user: true }
    }

    pub(crate) fn internal(stage: &str, e: impl fmt::Display) -> Self {
        CliError::Stage { stage: stage.to_string(), message: e.to_string(), user: false }
    }
}

/// Loaded configuration plus output location.
pub struct Run {
    pub cfg: LoadedConfig,
    pub out: PathBuf,
    /// Leave existing artifacts untouched instead of rewriting them.
    pub no_overwrite: bool,
}

pub(crate) const TRAIN_SPLIT: &str = "data/train.jsonl";
pub(crate) const VAL_SPLIT: &str = "data/val.jsonl";
pub(crate) const TEST_SPLIT: &str = "data/test.jsonl";
pub(crate) const STATS: &str = "data/stats.json";
pub(crate) const TOKENIZER: &str = "tokenizer.json";
pub(crate) const ENCODER: &str = "encoder.ckpt";
pub(crate) const DECODER: &str = "decoder.ckpt";
pub(crate) const INDEX: &str = "index.bin";
pub(crate) const PROMPTS: &str = "prompts.jsonl";
pub(crate) const FINETUNED: &str = "finetuned.ckpt";

impl Run {
    pub fn new(cfg: LoadedConfig, out: PathBuf) -> Self {
        Self { cfg, out, no_overwrite: false }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Per-purpose seed derived from the run seed.
    pub(crate) fn seed(&self, purpose: &str) -> u64 {
        derive_seed(self.cfg.config.seed, fnv1a(purpose.as_bytes()))
    }

    pub(crate) fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(rel);
        if self.no_overwrite && path.exists() {
            return Ok(());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
    }

    /// Read an artifact produced by an earlier stage.
    pub(crate) fn require(&self, stage: &str, rel: &str, hint: &str) -> Result<Vec<u8>, CliError> {
        let path = self.path(rel);
        std::fs::read(&path).map_err(|_| CliError::MissingPrerequisite {
            stage: stage.to_string(),
            path,
            hint: hint.to_string(),
        })
    }

    pub(crate) fn meta(&self, stage: &str, step: usize, tokenizer_hash: &str) -> ArtifactMeta {
        ArtifactMeta {
            stage: stage.to_string(),
            step,
            config_hash: self.cfg.hash.clone(),
            tokenizer_hash: tokenizer_hash.to_string(),
        }
    }

    pub(crate) fn split(&self, stage: &str, rel: &str) -> Result<Corpus, CliError> {
        let bytes = self.require(stage, rel, "medqa prepare")?;
        let text = String::from_utf8(bytes).map_err(|e| CliError::user(stage, e))?;
        formats::read_split(&text).map_err(|e| CliError::user(stage, format!("{rel}: {e}")))
    }

    /// The tokenizer and the hash every downstream artifact records.
    pub(crate) fn tokenizer(&self, stage: &str) -> Result<(TokenizerModel, String), CliError> {
        let bytes = self.require(stage, TOKENIZER, "medqa train --stage tokenizer")?;
        let hash = sha256_hex(&bytes);
        let text = String::from_utf8(bytes).map_err(|e| CliError::user(stage, e))?;
        let tok = formats::load_tokenizer(&text).map_err(|e| CliError::user(stage, format!("{TOKENIZER}: {e}")))?;
        Ok((tok, hash))
    }

    /// A checkpoint, refused unless it was built with the current tokenizer.
    pub(crate) fn checkpoint(
        &self,
        stage: &str,
        rel: &str,
        hint: &str,
        tokenizer_hash: &str,
    ) -> Result<ModelParams, CliError> {
        let bytes = self.require(stage, rel, hint)?;
        let (params, meta) =
            formats::decode_checkpoint(&bytes).map_err(|e| CliError::user(stage, format!("{rel}: {e}")))?;
        check_tokenizer(rel, &meta, tokenizer_hash)?;
        Ok(params)
    }

    pub(crate) fn index(&self, stage: &str, tokenizer_hash: &str) -> Result<EmbeddingIndex, CliError> {
        let bytes = self.require(stage, INDEX, "medqa train --stage prompts")?;
        let (index, meta) =
            formats::decode_index(&bytes).map_err(|e| CliError::user(stage, format!("{INDEX}: {e}")))?;
        check_tokenizer(INDEX, &meta, tokenizer_hash)?;
        Ok(index)
    }

    pub(crate) fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }
}

fn check_tokenizer(rel: &str, meta: &ArtifactMeta, tokenizer_hash: &str) -> Result<(), CliError> {
    if meta.tokenizer_hash != tokenizer_hash {
        return Err(CliError::Mismatch(format!(
            "{rel} was built with tokenizer {} but {TOKENIZER} is {tokenizer_hash}; retrain the stages after the tokenizer",
            short(&meta.tokenizer_hash)
        )));
    }
    Ok(())
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

pub(crate) fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::MissingInput { path: path.to_path_buf(), reason: e.to_string() })
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Internal(e.to_string())
    }
}

/// Summary written next to each stage's per-step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub steps: usize,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
    pub initial_heldout_perplexity: Option<f64>,
    pub final_heldout_perplexity: Option<f64>,
    pub epochs: Vec<medqa_core::train::EpochRecord>,
    pub config_hash: String,
    pub tokenizer_hash: String,
}
