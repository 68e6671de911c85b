use std::collections::BTreeMap;

use medqa_core::augment::{PivotDictionary, SynonymLexicon};

use super::FormatError;

/// JSON object mapping a word to its list of synonyms.
pub fn load_lexicon(text: &str) -> Result<SynonymLexicon, FormatError> {
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
    Ok(SynonymLexicon::new(raw))
}

/// JSON object mapping a word to its pivot-language word; the way back is
/// the inverse map.
pub fn load_pivot(text: &str) -> Result<PivotDictionary, FormatError> {
    let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
    Ok(PivotDictionary::new(raw))
}
