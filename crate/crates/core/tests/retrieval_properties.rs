use medqa_core::corpus::{Corpus, QAPair};
use medqa_core::eval::{evaluate_retrieval, precision, EvalConfig, MatchRule, TestItem};
use medqa_core::pipeline::{Embedder, EmbeddingIndex, PipelineError};
use proptest::prelude::*;

/// Question texts are `"v:<index>"` into a fixed vector list.
struct Lookup(Vec<Vec<f64>>);

impl Embedder for Lookup {
    fn dim(&self) -> usize {
        self.0[0].len()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, PipelineError> {
        Ok(texts.iter().map(|t| self.0[t[2..].parse::<usize>().unwrap()].clone()).collect())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

fn nonzero(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn setup() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<(Vec<f64>, usize)>)> {
    (1usize..5).prop_flat_map(|dim| {
        (proptest::collection::vec(nonzero(dim), 1..30), proptest::collection::vec((nonzero(dim), 0usize..30), 1..20))
    })
}

fn run(stored: &[Vec<f64>], queries: &[(Vec<f64>, usize)], cfg: &EvalConfig) -> (usize, usize, usize) {
    let mut idx = EmbeddingIndex::new(stored[0].len());
    let mut pairs = Vec::new();
    for (i, v) in stored.iter().enumerate() {
        let id = format!("p{i:02}");
        idx.insert(id.clone(), v).unwrap();
        pairs.push(QAPair::new(id, format!("q{i}"), format!("answer {}", i % 3)));
    }
    let embedder = Lookup(queries.iter().map(|q| q.0.clone()).collect());
    let items: Vec<TestItem> = queries
        .iter()
        .enumerate()
        .map(|(j, (_, gold))| TestItem {
            id: format!("t{j:02}"),
            question: format!("v:{j}"),
            gold_id: Some(format!("p{:02}", gold % stored.len())),
            gold_answer: format!("answer {}", gold % 3),
        })
        .collect();
    let c = evaluate_retrieval(&embedder, &idx, &Corpus::from_pairs(pairs), &items, cfg).unwrap();
    assert_eq!(c.trace.len(), items.len());
    (c.tp, c.fp, c.abstained)
}

proptest! {
    #[test]
    fn counts_match_a_brute_force_scan((stored, queries) in setup(), tau in -1.0f64..1.0) {
        let cfg = EvalConfig { threshold: tau, match_rule: MatchRule::ExactId };
        let (mut tp, mut fp, mut ab) = (0, 0, 0);
        for (q, gold) in &queries {
            // first index wins ties, matching id order
            let (best, score) = stored.iter().enumerate().map(|(i, v)| (i, cosine(q, v))).fold((0, f64::NEG_INFINITY), |acc, x| {
                if x.1 > acc.1 { x } else { acc }
            });
            if score < tau {
                ab += 1;
            } else if best == gold % stored.len() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        prop_assert_eq!(run(&stored, &queries, &cfg), (tp, fp, ab));
    }

    #[test]
    fn raising_the_threshold_never_adds_predictions((stored, queries) in setup(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for rule in [MatchRule::ExactId, MatchRule::TokenF1 { theta: 0.8 }] {
            let (tp1, fp1, _) = run(&stored, &queries, &EvalConfig { threshold: lo, match_rule: rule });
            let (tp2, fp2, _) = run(&stored, &queries, &EvalConfig { threshold: hi, match_rule: rule });
            prop_assert!(tp2 + fp2 <= tp1 + fp1);
        }
    }

    #[test]
    fn precision_is_monotone(tp in 0usize..50, fp in 0usize..50) {
        if let Some(p) = precision(tp, fp) {
            prop_assert!(precision(tp + 1, fp).unwrap() >= p);
            prop_assert!(precision(tp, fp + 1).unwrap() <= p);
        } else {
            prop_assert_eq!(tp + fp, 0);
        }
    }
}
