use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::synonym::{synonym_replace, LexiconError, SynonymLexicon};
use crate::corpus::{Corpus, Provenance, QAPair};
use crate::rng::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BalanceError {
    #[error("pair {0:?} has no question type")]
    MissingLabel(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

/// Pad every question type up to the majority count with synonym-augmented
/// copies of uniformly chosen members. Originals are kept in place; copies
/// are appended class by class.
pub fn balance_by_duplication(c: &Corpus, lex: &SynonymLexicon, rate: f64, seed: u64) -> Result<Corpus, BalanceError> {
    let mut by_class: BTreeMap<&str, Vec<&QAPair>> = BTreeMap::new();
    for p in &c.pairs {
        let t = p.qtype.as_deref().ok_or_else(|| BalanceError::MissingLabel(p.id.clone()))?;
        by_class.entry(t).or_default().push(p);
    }
    let majority = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut extra = Vec::new();
    for (class, members) in &by_class {
        let mut rng = rng_for(seed, class);
        for n in 0..majority - members.len() {
            let parent = members[rng.gen_range(0..members.len())];
            let mut copy = synonym_replace(parent, lex, rate, derive_seed(seed, n as u64))?;
            copy.id = format!("{}~bal{}", parent.id, n);
            copy.provenance = Provenance::SyntheticBalance;
            extra.push(copy);
        }
    }
    let mut out = c.clone();
    out.extend(extra);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn labeled(id: &str, t: &str) -> QAPair {
        QAPair::new(id, format!("What is {id}?"), "It is.").with_qtype(t)
    }

    #[test]
    fn equalizes_counts() {
        let c = Corpus::from_pairs(vec![
            labeled("a1", "A"),
            labeled("a2", "A"),
            labeled("a3", "A"),
            labeled("a4", "A"),
            labeled("b1", "B"),
            labeled("b2", "B"),
        ]);
        let out = balance_by_duplication(&c, &SynonymLexicon::default(), 0.15, 1).unwrap();
        assert_eq!(out.stats.per_qtype["A"], 4);
        assert_eq!(out.stats.per_qtype["B"], 4);
        assert_eq!(&out.pairs[..6], &c.pairs[..]);
        assert!(out.pairs[6..].iter().all(|p| p.provenance == Provenance::SyntheticBalance));
        assert_eq!(out.stats.total, 8);
    }

    #[test]
    fn balanced_is_unchanged() {
        let c = Corpus::from_pairs(vec![labeled("a", "A"), labeled("b", "B")]);
        assert_eq!(balance_by_duplication(&c, &SynonymLexicon::default(), 0.15, 1).unwrap(), c);
    }

    #[test]
    fn missing_label() {
        let c = Corpus::from_pairs(vec![labeled("a", "A"), QAPair::new("x", "q", "a")]);
        assert_eq!(
            balance_by_duplication(&c, &SynonymLexicon::default(), 0.15, 1),
            Err(BalanceError::MissingLabel(String::from("x")))
        );
    }
}
