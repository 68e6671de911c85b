//! Byte-level BPE tokenizer.
//!
//! Id layout: the five special tokens first, then one symbol per byte value,
//! then one symbol per learned merge in rank order. Text is pretokenized on
//! Unicode whitespace; whitespace itself is encoded byte by byte and merges
//! never cross a pretoken boundary, so every string round-trips exactly.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Special {
    Pad,
    Unk,
    Mask,
    Bos,
    Eos,
}

impl Special {
    pub const ALL: [Special; 5] = [Special::Pad, Special::Unk, Special::Mask, Special::Bos, Special::Eos];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            Special::Pad => "PAD",
            Special::Unk => "UNK",
            Special::Mask => "MASK",
            Special::Bos => "BOS",
            Special::Eos => "EOS",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

pub const NUM_SPECIALS: u32 = Special::ALL.len() as u32;
pub const BYTE_OFFSET: u32 = NUM_SPECIALS;
/// Smallest vocabulary that can hold one learned merge.
pub const MIN_VOCAB: usize = 256 + NUM_SPECIALS as usize + 1;
pub const DEFAULT_VOCAB: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("vocab size {requested} is below the minimum of {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("token id {id} is out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("merge {index} refers to a symbol that is not yet defined or is special")]
    BadMerge { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerModel {
    merges: Vec<(u32, u32)>,
    symbols: Vec<Vec<u8>>,
    ranks: BTreeMap<(u32, u32), u32>,
}

impl TokenizerModel {
    /// Model with no merges: specials plus the byte alphabet.
    pub fn bytes_only() -> Self {
        let mut symbols: Vec<Vec<u8>> = (0..NUM_SPECIALS).map(|_| Vec::new()).collect();
        symbols.extend((0..=255u8).map(|b| alloc::vec![b]));
        Self { merges: Vec::new(), symbols, ranks: BTreeMap::new() }
    }

    /// Rebuild a model from its ordered merge list, checking that every merge
    /// only uses symbols defined before it.
    pub fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self, TokenizerError> {
        let mut m = Self::bytes_only();
        for (index, &(l, r)) in merges.iter().enumerate() {
            let n = m.symbols.len() as u32;
            if l < BYTE_OFFSET || r < BYTE_OFFSET || l >= n || r >= n {
                return Err(TokenizerError::BadMerge { index });
            }
            m.push_merge(l, r);
        }
        Ok(m)
    }

    fn push_merge(&mut self, l: u32, r: u32) -> u32 {
        let id = self.symbols.len() as u32;
        let mut bytes = self.symbols[l as usize].clone();
        bytes.extend_from_slice(&self.symbols[r as usize]);
        self.symbols.push(bytes);
        self.ranks.insert((l, r), id);
        self.merges.push((l, r));
        id
    }

    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn special(&self, s: Special) -> u32 {
        s.id()
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < NUM_SPECIALS
    }

    /// Byte string of a symbol; empty for specials.
    pub fn symbol_bytes(&self, id: u32) -> Option<&[u8]> {
        self.symbols.get(id as usize).map(Vec::as_slice)
    }

    pub fn byte_id(b: u8) -> u32 {
        BYTE_OFFSET + u32::from(b)
    }

    pub fn encode(&self, text: &str, add_bos_eos: bool) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len() + 2);
        if add_bos_eos {
            out.push(Special::Bos.id());
        }
        for (is_space, seg) in segments(text) {
            if is_space {
                out.extend(seg.bytes().map(Self::byte_id));
            } else {
                self.encode_word(seg.as_bytes(), &mut out);
            }
        }
        if add_bos_eos {
            out.push(Special::Eos.id());
        }
        out
    }

    fn encode_word(&self, word: &[u8], out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = word.iter().map(|&b| Self::byte_id(b)).collect();
        loop {
            let best = syms.windows(2).filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&id| (id, w[0], w[1]))).min();
            let Some((new_id, l, r)) = best else { break };
            syms = merge_pair(&syms, l, r, new_id);
        }
        out.extend_from_slice(&syms);
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            let sym = self
                .symbols
                .get(id as usize)
                .ok_or(TokenizerError::IdOutOfRange { id, vocab_size: self.vocab_size() })?;
            bytes.extend_from_slice(sym);
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }
}

/// Split into maximal non-whitespace runs and single whitespace characters.
fn segments(text: &str) -> impl Iterator<Item = (bool, &str)> {
    let mut rest = text;
    core::iter::from_fn(move || {
        let c = rest.chars().next()?;
        let end = if c.is_whitespace() { c.len_utf8() } else { rest.find(char::is_whitespace).unwrap_or(rest.len()) };
        let (seg, tail) = rest.split_at(end);
        rest = tail;
        Some((c.is_whitespace(), seg))
    })
}

fn merge_pair(syms: &[u32], l: u32, r: u32, new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
            out.push(new_id);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

/// Greedy pair-frequency BPE over whitespace-pretokenized text.
///
/// Ties on frequency go to the lexicographically smallest pair of symbol byte
/// strings; training stops at `vocab_size` or when no pair occurs twice.
/// `_seed` is accepted for interface stability; greedy BPE draws nothing.
pub fn train_tokenizer<'a, I>(texts: I, vocab_size: usize, _seed: u64) -> Result<TokenizerModel, TokenizerError>
where
    I: IntoIterator<Item = &'a str>,
{
    if vocab_size < MIN_VOCAB {
        return Err(TokenizerError::VocabTooSmall { requested: vocab_size, minimum: MIN_VOCAB });
    }
    let mut word_counts: BTreeMap<&[u8], u64> = BTreeMap::new();
    for text in texts {
        for w in text.split_whitespace() {
            *word_counts.entry(w.as_bytes()).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(Vec<u32>, u64)> =
        word_counts.into_iter().map(|(w, n)| (w.iter().map(|&b| TokenizerModel::byte_id(b)).collect(), n)).collect();

    let mut model = TokenizerModel::bytes_only();
    while model.vocab_size() < vocab_size {
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for (syms, n) in &words {
            for w in syms.windows(2) {
                *counts.entry((w[0], w[1])).or_insert(0) += n;
            }
        }
        let mut best: Option<((u32, u32), u64)> = None;
        for (&pair, &n) in &counts {
            let better = match best {
                None => true,
                Some((bp, bn)) => n > bn || (n == bn && model.pair_bytes(pair) < model.pair_bytes(bp)),
            };
            if better {
                best = Some((pair, n));
            }
        }
        let Some(((l, r), n)) = best else { break };
        if n < 2 {
            break;
        }
        let id = model.push_merge(l, r);
        for (syms, _) in words.iter_mut() {
            if syms.len() >= 2 {
                *syms = merge_pair(syms, l, r, id);
            }
        }
    }
    Ok(model)
}

impl TokenizerModel {
    fn pair_bytes(&self, (l, r): (u32, u32)) -> (&[u8], &[u8]) {
        (&self.symbols[l as usize], &self.symbols[r as usize])
    }
}
