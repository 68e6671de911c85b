use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

/// What the network's final states are used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Bidirectional attention, logits over the vocabulary.
    Mlm,
    /// Lower-triangular attention, logits over the vocabulary.
    Causal,
    /// Bidirectional attention, mean-pooled final states (one vector per row).
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cache does not belong to these parameters or output gradient")]
    CacheMismatch,
    #[error("batch has no masked positions")]
    NoMaskedPositions,
    #[error("sequences must have at least two tokens")]
    SequenceTooShort,
    #[error("operation requires the {expected:?} head, model has {actual:?}")]
    WrongHead { expected: Head, actual: Head },
    #[error("invalid generation length: {0}")]
    InvalidLength(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub head: Head,
}

impl ArchConfig {
    /// Defaults for the desk-scale model: 2 layers, width 64, 4 heads.
    pub fn small(vocab_size: usize, head: Head) -> Self {
        Self { vocab_size, d_model: 64, n_heads: 4, n_layers: 2, d_ff: 256, max_seq_len: 128, head }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [self.vocab_size, self.d_model, self.n_heads, self.n_layers, self.d_ff];
        if dims.contains(&0) {
            return Err(NnError::InvalidArch(String::from("all dimensions must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(NnError::InvalidArch(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(NnError::InvalidArch(String::from("max_seq_len must be at least 2")));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ArchConfig::small(300, Head::Causal).validate().is_ok());
        let mut a = ArchConfig::small(300, Head::Causal);
        a.n_heads = 5;
        assert!(matches!(a.validate(), Err(NnError::InvalidArch(_))));
        a = ArchConfig::small(300, Head::Causal);
        a.max_seq_len = 1;
        assert!(a.validate().is_err());
        a = ArchConfig::small(0, Head::Causal);
        assert!(a.validate().is_err());
    }
}
