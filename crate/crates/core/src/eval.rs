//! Precision under a retrieval-with-abstention protocol, perplexity, and
//! comparison reports.
//!
//! Protocol: each test question is embedded and matched against the index;
//! the top-1 hit is a prediction only when its cosine score reaches the
//! threshold τ, otherwise the question is abstained on. A prediction is a
//! true positive when the match rule accepts it (`ExactId`: the retrieved
//! id is the gold id; `TokenF1(θ)`: the retrieved answer overlaps the gold
//! answer with token F1 ≥ θ), and a false positive otherwise. Precision is
//! `tp / (tp + fp)` and is absent when nothing was predicted.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::nn::ModelParams;
use crate::pipeline::{answer, Answerer, Embedder, EmbeddingIndex, PipelineError};
use crate::text::word_tokens;
use crate::train::{causal_nll, Example, TrainError};

pub const DEFAULT_F1_THRESHOLD: f64 = 0.8;
pub const REFERENCE_LABEL: &str = "paper-reported, not reproduced";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("embedding dimension {actual} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("report needs at least one row")]
    NoRows,
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub fn precision(tp: usize, fp: usize) -> Option<f64> {
    (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatchRule {
    ExactId,
    TokenF1 { theta: f64 },
}

impl MatchRule {
    pub fn name(&self) -> String {
        match self {
            MatchRule::ExactId => String::from("ExactId"),
            MatchRule::TokenF1 { theta } => format!("TokenF1({theta})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Minimum cosine score for a prediction, in [-1, 1].
    pub threshold: f64,
    pub match_rule: MatchRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { threshold: 0.0, match_rule: MatchRule::ExactId }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(EvalError::InvalidConfig(format!("threshold {} outside [-1, 1]", self.threshold)));
        }
        if let MatchRule::TokenF1 { theta } = self.match_rule {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(EvalError::InvalidConfig(format!("theta {theta} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Harmonic mean of token precision and recall over lowercased words,
/// counting repeated tokens with multiplicity. Two empty texts score 1.
pub fn token_f1(predicted: &str, gold: &str) -> f64 {
    let p = word_tokens(predicted);
    let g = word_tokens(gold);
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &g {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let prec = common as f64 / p.len() as f64;
    let rec = common as f64 / g.len() as f64;
    2.0 * prec * rec / (prec + rec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    pub id: String,
    pub question: String,
    /// Index id of the correct pair, absent when the index lacks it.
    pub gold_id: Option<String>,
    pub gold_answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Tp,
    Fp,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub id: String,
    /// Retrieved id (retrieval) or generated text (generation).
    pub predicted: Option<String>,
    pub score: Option<f64>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: usize,
    pub fp: usize,
    pub abstained: usize,
    /// Sorted by test item id.
    pub trace: Vec<TraceEntry>,
}

impl EvalCounts {
    pub fn precision(&self) -> Option<f64> {
        precision(self.tp, self.fp)
    }

    fn record(&mut self, entry: TraceEntry) {
        match entry.outcome {
            Outcome::Tp => self.tp += 1,
            Outcome::Fp => self.fp += 1,
            Outcome::Abstain => self.abstained += 1,
        }
        self.trace.push(entry);
    }

    fn finish(mut self) -> Self {
        self.trace.sort_by(|a, b| a.id.cmp(&b.id));
        self
    }
}

/// Top-1 retrieval with abstention below `cfg.threshold`. Retrieved
/// answers for `TokenF1` come from `answers`; ids without text there (such
/// as synthetic vectors) are false positives.
pub fn evaluate_retrieval(
    embedder: &dyn Embedder,
    index: &EmbeddingIndex,
    answers: &Corpus,
    testset: &[TestItem],
    cfg: &EvalConfig,
) -> Result<EvalCounts, EvalError> {
    cfg.validate()?;
    if embedder.dim() != index.dim {
        return Err(EvalError::DimensionMismatch { expected: index.dim, actual: embedder.dim() });
    }
    let questions: Vec<&str> = testset.iter().map(|t| t.question.as_str()).collect();
    let vectors = embedder.embed(&questions)?;
    let mut counts = EvalCounts::default();
    for (item, v) in testset.iter().zip(&vectors) {
        if v.len() != index.dim {
            return Err(EvalError::DimensionMismatch { expected: index.dim, actual: v.len() });
        }
        let top = index.search(v, 1)?.pop();
        let entry = match top {
            Some(hit) if hit.score >= cfg.threshold => {
                let ok = match cfg.match_rule {
                    MatchRule::ExactId => item.gold_id.as_deref() == Some(hit.id.as_str()),
                    MatchRule::TokenF1 { theta } => {
                        answers.get(&hit.id).is_some_and(|p| token_f1(&p.answer, &item.gold_answer) >= theta)
                    }
                };
                TraceEntry {
                    id: item.id.clone(),
                    predicted: Some(hit.id),
                    score: Some(hit.score),
                    outcome: if ok { Outcome::Tp } else { Outcome::Fp },
                }
            }
            other => TraceEntry {
                id: item.id.clone(),
                predicted: None,
                score: other.map(|h| h.score),
                outcome: Outcome::Abstain,
            },
        };
        counts.record(entry);
    }
    Ok(counts.finish())
}

/// Generated answers graded by token F1 against the gold answer; an empty
/// generation counts as an abstention.
pub fn evaluate_generation(
    a: &Answerer<'_>,
    testset: &[TestItem],
    k: usize,
    max_length: usize,
    theta: f64,
) -> Result<EvalCounts, EvalError> {
    EvalConfig { threshold: 0.0, match_rule: MatchRule::TokenF1 { theta } }.validate()?;
    let mut counts = EvalCounts::default();
    for item in testset {
        let text = answer(a, &item.question, k, max_length)?;
        let entry = if text.is_empty() {
            TraceEntry { id: item.id.clone(), predicted: None, score: None, outcome: Outcome::Abstain }
        } else {
            let f1 = token_f1(&text, &item.gold_answer);
            TraceEntry {
                id: item.id.clone(),
                predicted: Some(text),
                score: Some(f1),
                outcome: if f1 >= theta { Outcome::Tp } else { Outcome::Fp },
            }
        };
        counts.record(entry);
    }
    Ok(counts.finish())
}

/// `exp` of the mean per-token causal NLL over all targets of the test set.
pub fn evaluate_perplexity(decoder: &ModelParams, testset: &[Example]) -> Result<f64, EvalError> {
    let (total, count) = causal_nll(decoder, testset, 8)?;
    if count == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    Ok(libm::exp(total / count as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Retrieval,
    Generation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub name: String,
    pub precision: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub abstained: usize,
    pub perplexity: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub mode: EvalMode,
    pub match_rule: MatchRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRow {
    pub name: String,
    pub precision: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub reference: Vec<ReferenceRow>,
}

/// Published precision of the large-model configurations.
pub fn reference_rows() -> Vec<ReferenceRow> {
    [
        ("Sentence-T5", 0.702),
        ("Phi-3 + LoRA", 0.718),
        ("Gemma-2b + LoRA", 0.721),
        ("Sentence-T5 + Mistral 7B + Pretrain", 0.762),
    ]
    .into_iter()
    .map(|(name, precision)| ReferenceRow { name: name.to_string(), precision, label: REFERENCE_LABEL.to_string() })
    .collect()
}

/// Rows sorted by precision, highest first (stable; absent precision last),
/// with the reference block attached.
pub fn emit_report(rows: &[ReportRow]) -> Result<Report, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRows);
    }
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| match (a.precision, b.precision) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => core::cmp::Ordering::Less,
        (None, Some(_)) => core::cmp::Ordering::Greater,
        (None, None) => core::cmp::Ordering::Equal,
    });
    Ok(Report { rows, reference: reference_rows() })
}

fn fmt_precision(p: Option<f64>) -> String {
    p.map_or_else(|| String::from("n/a"), |v| format!("{v:.3}"))
}

fn two_columns(out: &mut String, header: (&str, &str), rows: &[(String, String)]) {
    let w0 = rows.iter().map(|r| r.0.chars().count()).chain([header.0.len()]).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).chain([header.1.len()]).max().unwrap_or(0);
    let _ = writeln!(out, "{:<w0$} | {:>w1$}", header.0, header.1);
    let _ = writeln!(out, "{}-+-{}", "-".repeat(w0), "-".repeat(w1));
    for (a, b) in rows {
        let pad = w0 - a.chars().count();
        let _ = writeln!(out, "{a}{} | {b:>w1$}", " ".repeat(pad));
    }
}

/// Aligned plain-text rendering: measured rows, then the reference block.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let measured: Vec<(String, String)> =
        report.rows.iter().map(|r| (r.name.clone(), fmt_precision(r.precision))).collect();
    two_columns(&mut out, ("Model", "Precision"), &measured);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{}: mode={} rule={} tp={} fp={} abstained={} perplexity={} seed={} config={}",
            r.name,
            match r.mode {
                EvalMode::Retrieval => "retrieval",
                EvalMode::Generation => "generation",
            },
            r.match_rule.name(),
            r.tp,
            r.fp,
            r.abstained,
            r.perplexity.map_or_else(|| String::from("n/a"), |p| format!("{p:.3}")),
            r.seed,
            r.config_hash,
        );
    }
    out.push('\n');
    let _ = writeln!(out, "Reference ({REFERENCE_LABEL}):");
    let reference: Vec<(String, String)> =
        report.reference.iter().map(|r| (r.name.clone(), format!("{:.3}", r.precision))).collect();
    two_columns(&mut out, ("Model", "Precision"), &reference);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchConfig, Head};
    use alloc::vec;

    #[test]
    fn precision_values() {
        assert_eq!(precision(3, 1), Some(0.75));
        assert_eq!(precision(0, 0), None);
        assert_eq!(precision(0, 4), Some(0.0));
        assert!((precision(762, 238).unwrap() - 0.762).abs() < 1e-15);
    }

    #[test]
    fn precision_monotone() {
        for tp in 0..20 {
            for fp in 0..20 {
                if tp + fp == 0 {
                    continue;
                }
                let p = precision(tp, fp).unwrap();
                assert!(precision(tp + 1, fp).unwrap() >= p);
                assert!(precision(tp, fp + 1).unwrap() <= p);
            }
        }
    }

    #[test]
    fn token_f1_values() {
        assert_eq!(token_f1("the cat sat", "the cat sat"), 1.0);
        assert_eq!(token_f1("The  Cat", "the cat"), 1.0);
        assert_eq!(token_f1("dog", "cat"), 0.0);
        // 2 common of 3 predicted and 4 gold: P = 2/3, R = 1/2
        assert!((token_f1("a b c", "a b d e") - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(token_f1("a a", "a"), 2.0 * 0.5 * 1.0 / 1.5);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("", "x"), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        assert!(EvalConfig { threshold: 1.5, ..EvalConfig::default() }.validate().is_err());
        let f1 = |theta| EvalConfig { threshold: 0.0, match_rule: MatchRule::TokenF1 { theta } };
        assert!(f1(0.0).validate().is_err());
        assert!(f1(1.0).validate().is_ok());
    }

    #[test]
    fn zero_decoder_perplexity_is_vocab() {
        let arch = ArchConfig {
            vocab_size: 1024,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 8,
            max_seq_len: 16,
            head: Head::Causal,
        };
        let p = ModelParams::zeros(arch).unwrap();
        let data = vec![Example::new(vec![3, 100, 200, 4]), Example::new(vec![3, 7])];
        assert!((evaluate_perplexity(&p, &data).unwrap() - 1024.0).abs() < 1e-9);
        assert_eq!(evaluate_perplexity(&p, &[]), Err(EvalError::EmptyTestSet));
    }

    fn row(name: &str, precision: Option<f64>) -> ReportRow {
        ReportRow {
            name: name.to_string(),
            precision,
            tp: 0,
            fp: 0,
            abstained: 0,
            perplexity: None,
            seed: 0,
            config_hash: String::from("h"),
            mode: EvalMode::Retrieval,
            match_rule: MatchRule::ExactId,
        }
    }

    #[test]
    fn report_sorting_is_stable() {
        let rows = [row("a", Some(0.5)), row("b", None), row("c", Some(0.9)), row("d", Some(0.5))];
        let r = emit_report(&rows).unwrap();
        let names: Vec<&str> = r.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["c", "a", "d", "b"]);
        assert_eq!(emit_report(&[]), Err(EvalError::NoRows));
    }

    #[test]
    fn reference_block() {
        let r = emit_report(&[row("toy", Some(0.25))]).unwrap();
        let vals: Vec<f64> = r.reference.iter().map(|r| r.precision).collect();
        assert_eq!(vals, [0.702, 0.718, 0.721, 0.762]);
        let text = render_table(&r);
        assert!(text.contains("paper-reported, not reproduced"));
        assert!(text.contains("Sentence-T5 + Mistral 7B + Pretrain |     0.762"));
        assert!(text.lines().next().unwrap().starts_with("Model"));
        assert!(text.contains("toy   |     0.250"));
    }
}
