use medqa_core::tokenizer::{Special, TokenizerModel};
use serde::{Deserialize, Serialize};

use super::FormatError;

pub const TOKENIZER_FORMAT_VERSION: u32 = 1;

/// `merges` is in rank order; each merge names its two symbol ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerFile {
    pub version: u32,
    pub specials: Vec<String>,
    pub merges: Vec<[u32; 2]>,
}

pub fn save_tokenizer(t: &TokenizerModel) -> Result<String, FormatError> {
    let file = TokenizerFile {
        version: TOKENIZER_FORMAT_VERSION,
        specials: Special::ALL.iter().map(|s| s.name().to_string()).collect(),
        merges: t.merges().iter().map(|&(l, r)| [l, r]).collect(),
    };
    let mut s = serde_json::to_string(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn load_tokenizer(text: &str) -> Result<TokenizerModel, FormatError> {
    let file: TokenizerFile = serde_json::from_str(text)?;
    if file.version != TOKENIZER_FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            what: "tokenizer",
            found: file.version,
            expected: TOKENIZER_FORMAT_VERSION,
        });
    }
    let expected: Vec<&str> = Special::ALL.iter().map(|s| s.name()).collect();
    if file.specials != expected {
        return Err(FormatError::Corrupt(format!("special tokens {:?}, expected {:?}", file.specials, expected)));
    }
    Ok(TokenizerModel::from_merges(file.merges.iter().map(|m| (m[0], m[1])).collect())?)
}
