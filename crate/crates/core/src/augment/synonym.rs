use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{Provenance, QAPair};
use crate::rng::rng_for;
use crate::text::{match_case, pieces, Piece};

pub const DEFAULT_SYNONYM_RATE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LexiconError {
    #[error("replacement rate {0} is outside [0, 1]")]
    BadRate(f64),
}

/// Case-folded word → synonyms. Lists are deduplicated, never contain the
/// headword itself, and words left with no synonyms are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn new<I, S, L>(raw: I) -> Self
    where
        I: IntoIterator<Item = (S, L)>,
        S: AsRef<str>,
        L: IntoIterator,
        L::Item: AsRef<str>,
    {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (word, syns) in raw {
            let key = word.as_ref().trim().to_lowercase();
            if key.is_empty() {
                continue;
            }
            let list = entries.entry(key.clone()).or_default();
            for s in syns {
                let s = s.as_ref().trim();
                if !s.is_empty() && s.to_lowercase() != key && !list.iter().any(|x| x == s) {
                    list.push(String::from(s));
                }
            }
        }
        entries.retain(|_, v| !v.is_empty());
        Self { entries }
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> BTreeSet<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

/// Replace each lexicon word in the question independently with probability
/// `rate`, picking uniformly among its synonyms. The answer is untouched.
pub fn synonym_replace(p: &QAPair, lex: &SynonymLexicon, rate: f64, seed: u64) -> Result<QAPair, LexiconError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(LexiconError::BadRate(rate));
    }
    let mut rng = rng_for(seed, &p.id);
    let mut question = String::with_capacity(p.question.len());
    for piece in pieces(&p.question) {
        match piece {
            Piece::Word(w) => match lex.get(w) {
                Some(syns) => {
                    let draw: f64 = rng.gen();
                    let pick = rng.gen_range(0..syns.len());
                    if draw < rate {
                        question.push_str(&match_case(w, &syns[pick]));
                    } else {
                        question.push_str(w);
                    }
                }
                None => question.push_str(w),
            },
            Piece::Sep(s) => question.push_str(s),
        }
    }
    Ok(QAPair {
        id: format!("{}~syn{}", p.id, seed),
        question,
        answer: p.answer.clone(),
        qtype: p.qtype.clone(),
        provenance: Provenance::SynonymAug,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lex() -> SynonymLexicon {
        SynonymLexicon::new([("causes", vec!["leads to"])])
    }

    #[test]
    fn forced_substitution() {
        let p = QAPair::new("p1", "What causes X?", "Y causes X.");
        let out = synonym_replace(&p, &lex(), 1.0, 3).unwrap();
        assert_eq!(out.question, "What leads to X?");
        assert_eq!(out.answer, "Y causes X.");
        assert_eq!(out.provenance, Provenance::SynonymAug);
        assert_eq!(out.id, "p1~syn3");
    }

    #[test]
    fn zero_rate_keeps_text() {
        let p = QAPair::new("p1", "What causes X?", "A");
        let out = synonym_replace(&p, &lex(), 0.0, 3).unwrap();
        assert_eq!(out.question, p.question);
        assert_ne!(out.id, p.id);
    }

    #[test]
    fn absent_word_unchanged() {
        let p = QAPair::new("p1", "Who treats Y?", "A");
        assert_eq!(synonym_replace(&p, &lex(), 1.0, 0).unwrap().question, "Who treats Y?");
    }

    #[test]
    fn capitalization_follows_original() {
        let p = QAPair::new("p1", "Causes of X", "A");
        assert_eq!(synonym_replace(&p, &lex(), 1.0, 0).unwrap().question, "Leads to of X");
    }

    #[test]
    fn bad_rate() {
        let p = QAPair::new("p1", "q", "a");
        assert!(synonym_replace(&p, &lex(), 1.5, 0).is_err());
    }

    #[test]
    fn lexicon_normalization() {
        let l = SynonymLexicon::new([("Pain", vec!["pain", "ache", "ache"]), ("self", vec!["SELF"])]);
        assert_eq!(l.get("pain").unwrap(), &[String::from("ache")]);
        assert!(l.get("self").is_none());
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn seeded_choice_is_reproducible() {
        let l = SynonymLexicon::new([("big", vec!["large", "huge", "vast"])]);
        let p = QAPair::new("p", "big big big big", "a");
        let a = synonym_replace(&p, &l, 0.5, 11).unwrap();
        let b = synonym_replace(&p, &l, 0.5, 11).unwrap();
        assert_eq!(a, b);
    }
}
