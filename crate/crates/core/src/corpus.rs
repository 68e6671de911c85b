//! Question–answer records, corpus cleaning and the prompt template.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::fnv1a;
use crate::text::{fold, normalize_whitespace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    SynonymAug,
    BackTransAug,
    SyntheticBalance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub qtype: Option<String>,
    pub provenance: Provenance,
}

impl QAPair {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            answer: answer.into(),
            qtype: None,
            provenance: Provenance::Original,
        }
    }

    pub fn with_qtype(mut self, qtype: impl Into<String>) -> Self {
        self.qtype = Some(qtype.into());
        self
    }

    /// Key under which two pairs count as duplicates.
    pub fn dedup_key(&self) -> String {
        let mut key = fold(&self.question);
        key.push('\u{1f}');
        key.push_str(&fold(&self.answer));
        key
    }

    pub fn is_complete(&self) -> bool {
        !self.question.trim().is_empty() && !self.answer.trim().is_empty()
    }
}

/// Identifier derived from record content, used when the input carries no id.
pub fn content_id(question: &str, answer: &str) -> String {
    let mut bytes = Vec::with_capacity(question.len() + answer.len() + 1);
    bytes.extend_from_slice(question.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(answer.as_bytes());
    format!("{:016x}", fnv1a(&bytes))
}

/// Bookkeeping for a corpus. `total` counts every record ever seen, so
/// `total == pairs.len() + dropped_incomplete + dropped_duplicate` holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub dropped_incomplete: usize,
    pub dropped_duplicate: usize,
    pub per_qtype: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub pairs: Vec<QAPair>,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("question and answer must both be nonempty (pair {0:?})")]
    InvalidPair(String),
}

impl Corpus {
    /// Build a corpus from already-parsed pairs plus drop counts from parsing.
    pub fn from_parts(pairs: Vec<QAPair>, dropped_incomplete: usize, dropped_duplicate: usize) -> Self {
        let mut stats = CorpusStats {
            total: pairs.len() + dropped_incomplete + dropped_duplicate,
            dropped_incomplete,
            dropped_duplicate,
            per_qtype: BTreeMap::new(),
        };
        stats.per_qtype = qtype_counts(&pairs);
        Corpus { pairs, stats }
    }

    pub fn from_pairs(pairs: Vec<QAPair>) -> Self {
        Self::from_parts(pairs, 0, 0)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QAPair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    /// Append records, keeping `total` consistent.
    pub fn extend(&mut self, extra: impl IntoIterator<Item = QAPair>) {
        for p in extra {
            self.stats.total += 1;
            self.pairs.push(p);
        }
        self.stats.per_qtype = qtype_counts(&self.pairs);
    }

    /// Sub-corpus with the given pairs; drop counters are not carried over.
    pub fn subset(&self, pairs: Vec<QAPair>) -> Self {
        Self::from_pairs(pairs)
    }
}

pub fn qtype_counts(pairs: &[QAPair]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for p in pairs {
        if let Some(t) = &p.qtype {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Normalize whitespace, drop incomplete records and drop duplicates
/// (first occurrence wins). Idempotent.
pub fn clean(c: &Corpus) -> Corpus {
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(c.pairs.len());
    let mut stats = c.stats.clone();
    for p in &c.pairs {
        let mut p = p.clone();
        p.question = normalize_whitespace(&p.question);
        p.answer = normalize_whitespace(&p.answer);
        p.qtype = p.qtype.map(|t| normalize_whitespace(&t)).filter(|t| !t.is_empty());
        if !p.is_complete() {
            stats.dropped_incomplete += 1;
            continue;
        }
        if !seen.insert(p.dedup_key()) {
            stats.dropped_duplicate += 1;
            continue;
        }
        pairs.push(p);
    }
    stats.per_qtype = qtype_counts(&pairs);
    Corpus { pairs, stats }
}

/// Render the training template `Question: <q> ; Answer: <a>`.
///
/// Delimiters inside the fields are passed through verbatim; nothing parses
/// the rendered template back.
pub fn format_template(p: &QAPair) -> Result<String, CorpusError> {
    if !p.is_complete() {
        return Err(CorpusError::InvalidPair(p.id.clone()));
    }
    Ok(format!("Question: {} ; Answer: {}", p.question, p.answer))
}

/// The template with the answer left open, used as a generation prompt.
pub fn format_question_prompt(question: &str) -> String {
    format!("Question: {} ; Answer:", question)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pair(id: &str, q: &str, a: &str) -> QAPair {
        QAPair::new(id, q, a)
    }

    #[test]
    fn duplicate_dropped() {
        let c = Corpus::from_pairs(vec![pair("1", "Q?", "A."), pair("2", "Q?", "A.")]);
        let out = clean(&c);
        assert_eq!(out.len(), 1);
        assert_eq!(out.pairs[0].id, "1");
        assert_eq!(out.stats.dropped_duplicate, 1);
    }

    #[test]
    fn duplicates_are_case_and_space_insensitive() {
        let c = Corpus::from_pairs(vec![pair("1", "What is  X?", "A."), pair("2", "what is x?", " a. ")]);
        assert_eq!(clean(&c).len(), 1);
    }

    #[test]
    fn incomplete_dropped() {
        let c = Corpus::from_pairs(vec![pair("1", "Q?", ""), pair("2", "Q2?", "A")]);
        let out = clean(&c);
        assert_eq!(out.len(), 1);
        assert_eq!(out.stats.dropped_incomplete, 1);
        assert_eq!(out.stats.total, 2);
    }

    #[test]
    fn whitespace_only_answer_is_incomplete() {
        let c = Corpus::from_pairs(vec![pair("1", "Q?", " \t\n")]);
        assert_eq!(clean(&c).stats.dropped_incomplete, 1);
    }

    #[test]
    fn template_exact() {
        let p = pair("1", "What causes X?", "Y causes X.");
        assert_eq!(format_template(&p).unwrap(), "Question: What causes X? ; Answer: Y causes X.");
        assert_eq!(format_template(&pair("2", "Q", "A")).unwrap(), "Question: Q ; Answer: A");
    }

    #[test]
    fn template_passes_delimiters_through() {
        let p = pair("1", "a ; b", "c");
        assert_eq!(format_template(&p).unwrap(), "Question: a ; b ; Answer: c");
    }

    #[test]
    fn template_rejects_empty() {
        assert!(matches!(format_template(&pair("9", "", "A")), Err(CorpusError::InvalidPair(id)) if id == "9"));
    }

    #[test]
    fn content_id_is_stable() {
        assert_eq!(content_id("q", "a"), content_id("q", "a"));
        assert_ne!(content_id("q", "a"), content_id("qa", ""));
        assert_eq!(content_id("q", "a").len(), 16);
    }

    fn arb_pair() -> impl Strategy<Value = QAPair> {
        ("[a-c ]{0,6}", "[a-c ]{0,6}", proptest::option::of("[xy]"))
            .prop_map(|(q, a, t)| QAPair { qtype: t, ..pair("", &q, &a) })
    }

    proptest! {
        #[test]
        fn clean_is_idempotent_and_consistent(raw in proptest::collection::vec(arb_pair(), 0..20)) {
            let pairs: Vec<QAPair> = raw.into_iter().enumerate()
                .map(|(i, mut p)| { p.id = format!("{i}"); p }).collect();
            let once = clean(&Corpus::from_pairs(pairs));
            let twice = clean(&once);
            prop_assert_eq!(&once, &twice);
            let s = &once.stats;
            prop_assert_eq!(s.total, once.len() + s.dropped_incomplete + s.dropped_duplicate);
            let keys: BTreeSet<String> = once.pairs.iter().map(QAPair::dedup_key).collect();
            prop_assert_eq!(keys.len(), once.len());
            for p in &once.pairs {
                let t = format_template(p).unwrap();
                prop_assert!(t.starts_with("Question: "));
            }
        }
    }
}
