//! Run configuration: one TOML document, overridable key by key.

use std::path::{Path, PathBuf};

use medqa_core::eval::{EvalConfig, MatchRule, DEFAULT_F1_THRESHOLD};
use medqa_core::nn::{ArchConfig, Head, DEFAULT_MAX_LENGTH};
use medqa_core::tokenizer::{DEFAULT_VOCAB, MIN_VOCAB};
use medqa_core::train::{Schedule, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::formats::CorpusFormat;

pub const SEED_ENV: &str = "MEDQA_SEED";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("bad override {0:?}: expected key.path=value")]
    BadOverride(String),
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    BadSeed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label of this configuration in reports.
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    pub encoder: ModelShape,
    pub decoder: ModelShape,
    pub train: StagesConfig,
    #[serde(default)]
    pub prompts: PromptConfig,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Relative paths resolve against the config file's directory.
    pub path: String,
    pub format: CorpusFormat,
    #[serde(default = "yes")]
    pub strict: bool,
    /// Train / validation / test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    None,
    /// Pad minority question types with synonym-augmented copies.
    Text,
    /// Oversample minority question types in embedding space.
    Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default)]
    pub synonym_lexicon: Option<String>,
    #[serde(default = "default_rate")]
    pub synonym_rate: f64,
    /// Synonym-replaced copies per training pair.
    #[serde(default)]
    pub synonym_copies: usize,
    #[serde(default)]
    pub pivot_dictionary: Option<String>,
    #[serde(default)]
    pub back_translate: bool,
    #[serde(default = "default_balance")]
    pub balance: BalanceMode,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            synonym_lexicon: None,
            synonym_rate: default_rate(),
            synonym_copies: 0,
            pivot_dictionary: None,
            back_translate: false,
            balance: BalanceMode::None,
            smote_k: default_smote_k(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerConfig {
    pub vocab_size: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { vocab_size: DEFAULT_VOCAB }
    }
}

/// Architecture without the vocabulary (taken from the tokenizer) or head
/// (fixed by the role).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
}

impl ModelShape {
    pub fn arch(&self, vocab_size: usize, head: Head) -> ArchConfig {
        ArchConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagesConfig {
    pub encoder: StageConfig,
    pub decoder: StageConfig,
    pub finetune: StageConfig,
}

/// Training hyperparameters of one stage; its seed derives from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub init_lr: f64,
    pub total_steps: usize,
    #[serde(default)]
    pub warmup_steps: usize,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default = "one")]
    pub clip_c: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "one")]
    pub keep_prob: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl StageConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            init_lr: self.init_lr,
            total_steps: self.total_steps,
            warmup_steps: self.warmup_steps,
            schedule: self.schedule,
            clip_c: self.clip_c,
            batch_size: self.batch_size,
            keep_prob: self.keep_prob,
            seed,
            weight_decay: self.weight_decay,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    /// Retrieved exemplars per prompt.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Only the first `limit` training pairs get prompts (all when absent).
    #[serde(default)]
    pub limit: Option<usize>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { k: default_k(), limit: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRuleName {
    ExactId,
    TokenF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub threshold: f64,
    #[serde(default = "default_rule")]
    pub match_rule: MatchRuleName,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    /// Synonym-replacement rate applied to test questions before retrieval.
    #[serde(default = "default_rate")]
    pub query_perturbation: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            match_rule: default_rule(),
            theta: default_theta(),
            max_length: default_max_length(),
            query_perturbation: default_rate(),
        }
    }
}

impl EvalSection {
    pub fn retrieval_config(&self) -> EvalConfig {
        let match_rule = match self.match_rule {
            MatchRuleName::ExactId => MatchRule::ExactId,
            MatchRuleName::TokenF1 => MatchRule::TokenF1 { theta: self.theta },
        };
        EvalConfig { threshold: self.threshold, match_rule }
    }
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}
fn default_rate() -> f64 {
    medqa_core::augment::DEFAULT_SYNONYM_RATE
}
fn default_balance() -> BalanceMode {
    BalanceMode::None
}
fn default_smote_k() -> usize {
    medqa_core::augment::DEFAULT_SMOTE_K
}
fn default_schedule() -> Schedule {
    Schedule::Linear
}
fn default_batch() -> usize {
    8
}
fn default_k() -> usize {
    2
}
fn default_rule() -> MatchRuleName {
    MatchRuleName::ExactId
}
fn default_theta() -> f64 {
    DEFAULT_F1_THRESHOLD
}
fn default_max_length() -> usize {
    DEFAULT_MAX_LENGTH
}

/// A validated config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
    /// SHA-256 of the effective configuration.
    pub hash: String,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &str) -> PathBuf {
        self.base_dir.join(p)
    }
}

/// Read `path`, apply `key.path=value` overrides in order, then the seed
/// from the environment value (if any), and validate.
pub fn load(path: &Path, overrides: &[String], env_seed: Option<&str>) -> Result<LoadedConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = from_str(&text, overrides, env_seed)?;
    let hash = config_hash(&config);
    Ok(LoadedConfig { config, base_dir, hash })
}

pub fn from_str(text: &str, overrides: &[String], env_seed: Option<&str>) -> Result<RunConfig, ConfigError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut config: RunConfig =
        toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    if let Some(s) = env_seed {
        config.seed = s.trim().parse().map_err(|_| ConfigError::BadSeed(s.to_string()))?;
    }
    config.validate()?;
    Ok(config)
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::BadOverride(spec.to_string());
    let (key, raw) = spec.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    // TOML literal if it parses as one, otherwise a bare string
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, path) = parts.split_last().ok_or_else(bad)?;
    let mut table = doc;
    for p in path {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(bad)?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Hex SHA-256 of the configuration's canonical JSON rendering.
pub fn config_hash(c: &RunConfig) -> String {
    let json = serde_json::to_vec(c).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let s = self.corpus.split;
        if s.iter().any(|r| !(0.0..=1.0).contains(r)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid(format!("corpus.split {s:?} must be nonnegative and sum to 1"));
        }
        let a = &self.augment;
        if !(0.0..=1.0).contains(&a.synonym_rate) || !(0.0..=1.0).contains(&self.eval.query_perturbation) {
            return invalid(String::from("synonym rates must lie in [0, 1]"));
        }
        if a.synonym_copies > 0 && a.synonym_lexicon.is_none() {
            return invalid(String::from("augment.synonym_copies needs augment.synonym_lexicon"));
        }
        if a.back_translate && a.pivot_dictionary.is_none() {
            return invalid(String::from("augment.back_translate needs augment.pivot_dictionary"));
        }
        if a.balance == BalanceMode::Vector && a.smote_k == 0 {
            return invalid(String::from("augment.smote_k must be positive"));
        }
        if self.tokenizer.vocab_size < MIN_VOCAB {
            return invalid(format!("tokenizer.vocab_size must be at least {MIN_VOCAB}"));
        }
        for (role, shape, head) in [("encoder", &self.encoder, Head::Mlm), ("decoder", &self.decoder, Head::Causal)] {
            shape
                .arch(self.tokenizer.vocab_size, head)
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("{role}: {e}")))?;
        }
        let t = &self.train;
        for (stage, c) in [("encoder", &t.encoder), ("decoder", &t.decoder), ("finetune", &t.finetune)] {
            c.train_config(0).validate().map_err(|e| ConfigError::Invalid(format!("train.{stage}: {e}")))?;
        }
        self.eval.retrieval_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.eval.theta > 0.0 && self.eval.theta <= 1.0) {
            return invalid(String::from("eval.theta must lie in (0, 1]"));
        }
        if self.eval.max_length < 2 {
            return invalid(String::from("eval.max_length must be at least 2"));
        }
        Ok(())
    }
}
