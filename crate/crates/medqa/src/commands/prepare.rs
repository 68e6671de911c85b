use std::collections::BTreeMap;

use medqa_core::augment::{back_translate, balance_by_duplication, synonym_replace, PivotDictionary, SynonymLexicon};
use medqa_core::corpus::{clean, Corpus, CorpusStats, Provenance};
use medqa_core::rng::rng_from;
use rand::seq::SliceRandom;
use serde::Serialize;

use super::{read_input, CliError, Run, STATS, TEST_SPLIT, TRAIN_SPLIT, VAL_SPLIT};
use crate::config::BalanceMode;
use crate::formats::{self, ParseMode};

#[derive(Serialize)]
struct PrepareStats {
    parsed: CorpusStats,
    cleaned: CorpusStats,
    split: [usize; 3],
    train: CorpusStats,
    train_provenance: BTreeMap<String, usize>,
    config_hash: String,
}

/// Train / validation / test sizes: the first two rounded, the rest to test.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((ratios[0] * n as f64).round() as usize).min(n);
    let val = ((ratios[1] * n as f64).round() as usize).min(n - train);
    [train, val, n - train - val]
}

pub(crate) fn lexicon(run: &Run, stage: &str) -> Result<Option<SynonymLexicon>, CliError> {
    let Some(p) = &run.cfg.config.augment.synonym_lexicon else { return Ok(None) };
    let path = run.cfg.resolve(p);
    let text = String::from_utf8(read_input(&path)?).map_err(|e| CliError::user(stage, e))?;
    formats::load_lexicon(&text).map(Some).map_err(|e| CliError::user(stage, format!("{}: {e}", path.display())))
}

fn pivot(run: &Run) -> Result<Option<PivotDictionary>, CliError> {
    let Some(p) = &run.cfg.config.augment.pivot_dictionary else { return Ok(None) };
    let path = run.cfg.resolve(p);
    let text = String::from_utf8(read_input(&path)?).map_err(|e| CliError::user("prepare", e))?;
    formats::load_pivot(&text).map(Some).map_err(|e| CliError::user("prepare", format!("{}: {e}", path.display())))
}

/// parse → clean → seeded split of the cleaned originals → augmentation and
/// balancing of the training split only, so no paraphrase of an evaluation
/// pair ever reaches training.
pub fn cmd_prepare(run: &Run) -> Result<String, CliError> {
    let c = &run.cfg.config;
    let path = run.cfg.resolve(&c.corpus.path);
    let bytes = read_input(&path)?;
    let mode = if c.corpus.strict { ParseMode::Strict } else { ParseMode::Lenient };
    let parsed = formats::parse_corpus(&bytes, c.corpus.format, mode)
        .map_err(|e| CliError::user("prepare", format!("{}: {e}", path.display())))?;
    let cleaned = clean(&parsed);

    let sizes = split_sizes(cleaned.len(), c.corpus.split);
    let mut order: Vec<usize> = (0..cleaned.len()).collect();
    order.shuffle(&mut rng_from(run.seed("split")));
    let mut parts = Vec::new();
    let mut start = 0;
    for n in sizes {
        let mut idx = order[start..start + n].to_vec();
        idx.sort_unstable();
        parts.push(cleaned.subset(idx.into_iter().map(|i| cleaned.pairs[i].clone()).collect()));
        start += n;
    }
    let test = parts.pop().expect("three parts");
    let val = parts.pop().expect("three parts");
    let train = augment(run, parts.pop().expect("three parts"))?;

    let mut provenance = BTreeMap::new();
    for p in &train.pairs {
        *provenance.entry(format!("{:?}", p.provenance)).or_insert(0) += 1;
    }
    run.write(TRAIN_SPLIT, formats::write_split(&train)?.as_bytes())?;
    run.write(VAL_SPLIT, formats::write_split(&val)?.as_bytes())?;
    run.write(TEST_SPLIT, formats::write_split(&test)?.as_bytes())?;
    run.write_json(
        STATS,
        &PrepareStats {
            parsed: parsed.stats.clone(),
            cleaned: cleaned.stats.clone(),
            split: sizes,
            train: train.stats.clone(),
            train_provenance: provenance,
            config_hash: run.cfg.hash.clone(),
        },
    )?;
    Ok(format!(
        "prepared {} pairs ({} incomplete, {} duplicate dropped): train {} (+{} augmented), val {}, test {}",
        cleaned.len(),
        cleaned.stats.dropped_incomplete,
        cleaned.stats.dropped_duplicate,
        sizes[0],
        train.len() - sizes[0],
        sizes[1],
        sizes[2]
    ))
}

fn augment(run: &Run, train: Corpus) -> Result<Corpus, CliError> {
    let a = &run.cfg.config.augment;
    let lex = lexicon(run, "prepare")?;
    let piv = pivot(run)?;
    let base_seed = run.seed("augment");
    let mut extra = Vec::new();
    for p in &train.pairs {
        if let Some(lex) = &lex {
            for copy in 0..a.synonym_copies {
                let q = synonym_replace(p, lex, a.synonym_rate, base_seed.wrapping_add(copy as u64))
                    .map_err(|e| CliError::user("prepare", e))?;
                extra.push(q);
            }
        }
        if a.back_translate {
            if let Some(piv) = &piv {
                extra.push(back_translate(p, piv).map_err(|e| CliError::internal("prepare", e))?);
            }
        }
    }
    let originals = train.len();
    let mut out = train;
    out.extend(extra);
    // augmentations that changed nothing duplicate their source
    let mut out = clean(&out);
    debug_assert!(out.pairs[..originals].iter().all(|p| p.provenance == Provenance::Original));
    if a.balance == BalanceMode::Text {
        let lex = lex.unwrap_or_else(|| SynonymLexicon::new(Vec::<(String, Vec<String>)>::new()));
        out = balance_by_duplication(&out, &lex, a.synonym_rate, run.seed("balance"))
            .map_err(|e| CliError::user("prepare", e))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(10, [0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(split_sizes(50, [0.8, 0.1, 0.1]), [40, 5, 5]);
        assert_eq!(split_sizes(0, [0.8, 0.1, 0.1]), [0, 0, 0]);
        assert_eq!(split_sizes(3, [1.0, 0.0, 0.0]), [3, 0, 0]);
    }
}
