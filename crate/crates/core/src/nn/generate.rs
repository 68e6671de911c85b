use alloc::format;
use alloc::vec::Vec;

use super::arch::{Head, NnError};
use super::dropout::DropoutConfig;
use super::model::{forward, Batch};
use super::params::ModelParams;

pub const DEFAULT_MAX_LENGTH: usize = 100;

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding: append the argmax next token until `eos` is produced or
/// the sequence holds `max_length` tokens. Returns prompt plus continuation.
pub fn greedy_generate(params: &ModelParams, prompt: &[u32], max_length: usize, eos: u32) -> Result<Vec<u32>, NnError> {
    if params.arch.head != Head::Causal {
        return Err(NnError::WrongHead { expected: Head::Causal, actual: params.arch.head });
    }
    if prompt.is_empty() || prompt.len() >= max_length || max_length > params.arch.max_seq_len {
        return Err(NnError::InvalidLength(format!(
            "need 0 < prompt length ({}) < max_length ({}) <= max_seq_len ({})",
            prompt.len(),
            max_length,
            params.arch.max_seq_len
        )));
    }
    let mut seq = prompt.to_vec();
    while seq.len() < max_length {
        let batch = Batch::from_sequences(core::slice::from_ref(&seq), 0);
        let out = forward(params, &batch, &DropoutConfig::eval())?;
        let next = argmax(out.logits_row(seq.len() - 1)) as u32;
        seq.push(next);
        if next == eos {
            break;
        }
    }
    Ok(seq)
}
