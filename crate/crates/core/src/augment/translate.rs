use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use crate::corpus::{Provenance, QAPair};
use crate::text::{match_case, pieces, Piece};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Source language into the pivot language.
    Forward,
    /// Pivot language back into the source language.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("translator failed: {0}")]
pub struct TranslatorError(pub String);

/// Pluggable translation backend. Implementations must be callable from
/// several threads at once.
pub trait Translator: Sync {
    fn translate(&self, text: &str, direction: Direction) -> Result<String, TranslatorError>;
}

pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _direction: Direction) -> Result<String, TranslatorError> {
        Ok(String::from(text))
    }
}

/// Word-by-word dictionary translation through a pivot language.
///
/// Built from a one-way word map; the backward table is its inverse. When
/// several source words share a pivot word the smallest source word wins on
/// the way back, which is where paraphrases come from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PivotDictionary {
    forward: BTreeMap<String, String>,
    backward: BTreeMap<String, String>,
}

impl PivotDictionary {
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut forward = BTreeMap::new();
        for (a, b) in pairs {
            let (a, b) = (a.as_ref().trim().to_lowercase(), b.as_ref().trim().to_lowercase());
            if !a.is_empty() && !b.is_empty() {
                forward.insert(a, b);
            }
        }
        let mut backward: BTreeMap<String, String> = BTreeMap::new();
        // forward iterates in key order, so the first writer is the smallest source word.
        for (a, b) in &forward {
            backward.entry(b.clone()).or_insert_with(|| a.clone());
        }
        Self { forward, backward }
    }

    fn table(&self, direction: Direction) -> &BTreeMap<String, String> {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }
}

impl Translator for PivotDictionary {
    fn translate(&self, text: &str, direction: Direction) -> Result<String, TranslatorError> {
        let table = self.table(direction);
        let mut out = String::with_capacity(text.len());
        for piece in pieces(text) {
            match piece {
                Piece::Word(w) => match table.get(&w.to_lowercase()) {
                    Some(t) => out.push_str(&match_case(w, t)),
                    None => out.push_str(w),
                },
                Piece::Sep(s) => out.push_str(s),
            }
        }
        Ok(out)
    }
}

/// Paraphrase the question by a forward and a backward translation pass.
pub fn back_translate(p: &QAPair, t: &dyn Translator) -> Result<QAPair, TranslatorError> {
    let pivot = t.translate(&p.question, Direction::Forward)?;
    let question = t.translate(&pivot, Direction::Backward)?;
    Ok(QAPair {
        id: format!("{}~bt", p.id),
        question,
        answer: p.answer.clone(),
        qtype: p.qtype.clone(),
        provenance: Provenance::BackTransAug,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Failing;
    impl Translator for Failing {
        fn translate(&self, _: &str, _: Direction) -> Result<String, TranslatorError> {
            Err(TranslatorError(String::from("offline")))
        }
    }

    #[test]
    fn identity_keeps_question() {
        let p = QAPair::new("a", "What causes X?", "Y");
        let out = back_translate(&p, &IdentityTranslator).unwrap();
        assert_eq!(out.question, p.question);
        assert_eq!(out.provenance, Provenance::BackTransAug);
    }

    #[test]
    fn pivot_matches_two_manual_passes() {
        let d = PivotDictionary::new([("causes", "verursacht")]);
        let p = QAPair::new("a", "What causes X?", "Y");
        // pass 1 by hand: "What verursacht X?"; pass 2 by hand: "What causes X?"
        assert_eq!(d.translate("What causes X?", Direction::Forward).unwrap(), "What verursacht X?");
        assert_eq!(back_translate(&p, &d).unwrap().question, "What causes X?");
    }

    #[test]
    fn shared_pivot_produces_paraphrase() {
        let d = PivotDictionary::new([("causes", "verursacht"), ("triggers", "verursacht")]);
        let p = QAPair::new("a", "What triggers X?", "Y");
        assert_eq!(back_translate(&p, &d).unwrap().question, "What causes X?");
    }

    #[test]
    fn failure_propagates() {
        let p = QAPair::new("a", "q", "a");
        assert_eq!(back_translate(&p, &Failing), Err(TranslatorError(String::from("offline"))));
    }
}
