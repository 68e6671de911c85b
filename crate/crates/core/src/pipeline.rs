//! The staged workflow: encoder pretraining (masked LM), decoder
//! pretraining (causal LM over templated pairs), retrieval-augmented prompt
//! generation, answer-only fine-tuning, and greedy answering.
//!
//! A "prompt" is a few-shot rendering: up to `k` retrieved neighbours as
//! complete `Question: … ; Answer: …` lines, then the target question with
//! its answer left open. Retrieval is exhaustive cosine search over
//! mean-pooled encoder states, ties going to the smaller id.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{format_question_prompt, format_template, Corpus, CorpusError, QAPair};
use crate::nn::{embed, greedy_generate, Head, ModelParams, NnError};
use crate::text::fold;
use crate::tokenizer::{Special, TokenizerError, TokenizerModel};
use crate::train::{fit, Example, Objective, TrainConfig, TrainError, TrainLog};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("embedding dimension {actual} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cannot index a zero vector (entry {0:?})")]
    ZeroVector(String),
    #[error("duplicate index id {0:?}")]
    DuplicateId(String),
    #[error("pair {0:?} has no vector in the index")]
    MissingFromIndex(String),
    #[error("prompt record {0:?} carries no target answer")]
    MissingAnswer(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Maps texts to fixed-size vectors.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, PipelineError>;
}

const EMBED_CHUNK: usize = 16;

/// Mean-pooled final hidden states of a transformer over BPE tokens.
pub struct TransformerEmbedder<'a> {
    pub params: &'a ModelParams,
    pub tokenizer: &'a TokenizerModel,
}

impl Embedder for TransformerEmbedder<'_> {
    fn dim(&self) -> usize {
        self.params.arch.d_model
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, PipelineError> {
        let max = self.params.arch.max_seq_len;
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_CHUNK) {
            let seqs: Vec<Vec<u32>> = chunk
                .iter()
                .map(|t| {
                    let mut ids = self.tokenizer.encode(t, true);
                    ids.truncate(max);
                    ids
                })
                .collect();
            out.extend(embed(self.params, &seqs)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Exhaustive-scan cosine index over unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub dim: usize,
    pub entries: Vec<IndexEntry>,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EmbeddingIndex {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Store `vector / ‖vector‖` under `id`.
    pub fn insert(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<(), PipelineError> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(PipelineError::DimensionMismatch { expected: self.dim, actual: vector.len() });
        }
        if self.entries.iter().any(|e| e.id == id) {
            return Err(PipelineError::DuplicateId(id));
        }
        let n = norm(vector);
        if !(n > 0.0 && n.is_finite()) {
            return Err(PipelineError::ZeroVector(id));
        }
        self.entries.push(IndexEntry { id, vector: vector.iter().map(|x| x / n).collect() });
        Ok(())
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.vector.as_slice())
    }

    /// Every entry accepted by `keep`, ranked by cosine to `query`
    /// (descending, ties by smaller id), truncated to `k`.
    pub fn search_filtered<F>(&self, query: &[f64], k: usize, mut keep: F) -> Result<Vec<Hit>, PipelineError>
    where
        F: FnMut(&str) -> bool,
    {
        if query.len() != self.dim {
            return Err(PipelineError::DimensionMismatch { expected: self.dim, actual: query.len() });
        }
        let n = norm(query);
        let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
        let mut hits: Vec<Hit> = self
            .entries
            .iter()
            .filter(|e| keep(&e.id))
            .map(|e| Hit { id: e.id.clone(), score: dot(&e.vector, query) * scale })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k);
        Ok(hits)
    }

    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<Hit>, PipelineError> {
        self.search_filtered(query, k, |_| true)
    }
}

/// Embed every question of `corpus` and index it under the pair id.
pub fn build_index(embedder: &dyn Embedder, corpus: &Corpus) -> Result<EmbeddingIndex, PipelineError> {
    let mut index = EmbeddingIndex::new(embedder.dim());
    let questions: Vec<&str> = corpus.pairs.iter().map(|p| p.question.as_str()).collect();
    let vectors = embedder.embed(&questions)?;
    for (p, v) in corpus.pairs.iter().zip(&vectors) {
        index.insert(p.id.clone(), v)?;
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub target_question: String,
    pub exemplars: Vec<Exemplar>,
    pub rendered: String,
    pub target_answer: Option<String>,
}

/// Exemplar lines, one per line, followed by the open target line.
pub fn render_prompt(target_question: &str, exemplars: &[Exemplar]) -> String {
    let mut out = String::new();
    for e in exemplars {
        out.push_str("Question: ");
        out.push_str(&e.question);
        out.push_str(" ; Answer: ");
        out.push_str(&e.answer);
        out.push('\n');
    }
    out.push_str(&format_question_prompt(target_question));
    out
}

/// Augmented copies carry their parent's id before the first `~`.
fn root_id(id: &str) -> &str {
    id.split('~').next().unwrap_or(id)
}

/// Top-`k` exemplars for a target. Entries are skipped when they are the
/// target (same id or derived from it), repeat the target question, have
/// no corpus text (synthetic vectors), or would put the target question
/// into the prompt a second time.
fn retrieve_exemplars(
    index: &EmbeddingIndex,
    lookup: &BTreeMap<&str, &QAPair>,
    query: &[f64],
    question: &str,
    exclude_roots: &BTreeSet<&str>,
    k: usize,
) -> Result<Vec<Exemplar>, PipelineError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let folded = fold(question);
    let hits = index.search_filtered(query, k, |id| {
        if exclude_roots.contains(root_id(id)) {
            return false;
        }
        match lookup.get(id) {
            None => false,
            Some(p) => fold(&p.question) != folded && !p.question.contains(question) && !p.answer.contains(question),
        }
    })?;
    Ok(hits
        .into_iter()
        .map(|h| {
            let p = lookup[h.id.as_str()];
            Exemplar { id: p.id.clone(), question: p.question.clone(), answer: p.answer.clone() }
        })
        .collect())
}

/// Roots of every pair asking `question`, so none of their paraphrases
/// become exemplars for it.
fn excluded_roots<'c>(corpus: &'c Corpus, question: &str) -> BTreeSet<&'c str> {
    let folded = fold(question);
    corpus.pairs.iter().filter(|p| fold(&p.question) == folded).map(|p| root_id(&p.id)).collect()
}

fn lookup_table(corpus: &Corpus) -> BTreeMap<&str, &QAPair> {
    corpus.pairs.iter().map(|p| (p.id.as_str(), p)).collect()
}

/// One prompt per pair, using the pair's own indexed vector as the query.
pub fn generate_prompts(index: &EmbeddingIndex, corpus: &Corpus, k: usize) -> Result<Vec<PromptRecord>, PipelineError> {
    let lookup = lookup_table(corpus);
    let mut out = Vec::with_capacity(corpus.len());
    for p in &corpus.pairs {
        let query = index.vector(&p.id).ok_or_else(|| PipelineError::MissingFromIndex(p.id.clone()))?;
        let mut roots = excluded_roots(corpus, &p.question);
        roots.insert(root_id(&p.id));
        let exemplars = retrieve_exemplars(index, &lookup, query, &p.question, &roots, k)?;
        out.push(PromptRecord {
            id: p.id.clone(),
            target_question: p.question.clone(),
            rendered: render_prompt(&p.question, &exemplars),
            exemplars,
            target_answer: Some(p.answer.clone()),
        });
    }
    Ok(out)
}

/// `[BOS] template [EOS]` for every pair, cut to `max_len` tokens.
pub fn template_examples(corpus: &Corpus, tok: &TokenizerModel, max_len: usize) -> Result<Vec<Example>, PipelineError> {
    corpus
        .pairs
        .iter()
        .map(|p| {
            let mut ids = tok.encode(&format_template(p)?, true);
            ids.truncate(max_len);
            Ok(Example::new(ids))
        })
        .collect()
}

/// Tokens of a prompt with `BOS` prefixed.
fn prompt_tokens(tok: &TokenizerModel, rendered: &str) -> Vec<u32> {
    let mut ids = vec![Special::Bos.id()];
    ids.extend(tok.encode(rendered, false));
    ids
}

/// Context `answer` keeps free for generation.
pub fn answer_reserve(max_len: usize) -> usize {
    (max_len / 4).max(1)
}

/// Fine-tuning sequence `[BOS] prompt " " answer [EOS]` whose loss mask
/// selects the `" " answer [EOS]` tokens. Exemplars are dropped from the
/// end until the sequence fits and the prompt leaves at least the answer
/// reserve free, which is the rule `answer` applies; the answer is cut only
/// as a last resort.
pub fn finetune_example(rec: &PromptRecord, tok: &TokenizerModel, max_len: usize) -> Result<Example, PipelineError> {
    let answer = rec.target_answer.as_ref().ok_or_else(|| PipelineError::MissingAnswer(rec.id.clone()))?;
    let mut tail = tok.encode(&(String::from(" ") + answer), false);
    tail.push(Special::Eos.id());
    let mut n_ex = rec.exemplars.len();
    let mut prompt = prompt_tokens(tok, &rec.rendered);
    let room = tail.len().max(answer_reserve(max_len));
    while prompt.len() + room > max_len && n_ex > 0 {
        n_ex -= 1;
        prompt = prompt_tokens(tok, &render_prompt(&rec.target_question, &rec.exemplars[..n_ex]));
    }
    let mut mask = vec![false; prompt.len()];
    let mut tokens = prompt;
    tokens.extend(tail);
    mask.resize(tokens.len(), true);
    tokens.truncate(max_len);
    mask.truncate(max_len);
    Ok(Example { tokens, loss_mask: Some(mask) })
}

/// Masked-LM training over templated pairs, starting from `init`.
pub fn pretrain_encoder<F>(
    init: &ModelParams,
    corpus: &Corpus,
    tok: &TokenizerModel,
    cfg: &TrainConfig,
    heldout: Option<&Corpus>,
    on_checkpoint: F,
) -> Result<(ModelParams, TrainLog), PipelineError>
where
    F: FnMut(usize, &ModelParams) -> Result<(), TrainError>,
{
    run_stage(init, corpus, tok, cfg, heldout, Objective::Mlm, on_checkpoint)
}

/// Next-token training over templated pairs, starting from `init`.
pub fn pretrain_decoder<F>(
    init: &ModelParams,
    corpus: &Corpus,
    tok: &TokenizerModel,
    cfg: &TrainConfig,
    heldout: Option<&Corpus>,
    on_checkpoint: F,
) -> Result<(ModelParams, TrainLog), PipelineError>
where
    F: FnMut(usize, &ModelParams) -> Result<(), TrainError>,
{
    run_stage(init, corpus, tok, cfg, heldout, Objective::Causal, on_checkpoint)
}

fn run_stage<F>(
    init: &ModelParams,
    corpus: &Corpus,
    tok: &TokenizerModel,
    cfg: &TrainConfig,
    heldout: Option<&Corpus>,
    objective: Objective,
    on_checkpoint: F,
) -> Result<(ModelParams, TrainLog), PipelineError>
where
    F: FnMut(usize, &ModelParams) -> Result<(), TrainError>,
{
    let max = init.arch.max_seq_len;
    let data = template_examples(corpus, tok, max)?;
    let held = heldout.map(|h| template_examples(h, tok, max)).transpose()?;
    Ok(fit(init, cfg, objective, &data, held.as_deref(), on_checkpoint)?)
}

/// Causal training on prompts with the loss restricted to the answers.
pub fn finetune_decoder<F>(
    decoder: &ModelParams,
    prompts: &[PromptRecord],
    tok: &TokenizerModel,
    cfg: &TrainConfig,
    on_checkpoint: F,
) -> Result<(ModelParams, TrainLog), PipelineError>
where
    F: FnMut(usize, &ModelParams) -> Result<(), TrainError>,
{
    if prompts.is_empty() {
        return Err(TrainError::EmptyTrainingSet.into());
    }
    let max = decoder.arch.max_seq_len;
    let data = prompts.iter().map(|r| finetune_example(r, tok, max)).collect::<Result<Vec<_>, _>>()?;
    Ok(fit(decoder, cfg, Objective::Causal, &data, None, on_checkpoint)?)
}

/// Everything `answer` reads.
pub struct Answerer<'a> {
    pub tokenizer: &'a TokenizerModel,
    pub encoder: &'a ModelParams,
    pub decoder: &'a ModelParams,
    pub index: &'a EmbeddingIndex,
    /// Source of exemplar text for indexed ids.
    pub corpus: &'a Corpus,
}

/// Prompt for a free-standing question. A question that is itself in the
/// corpus gets the exclusions its training prompt had: neither the pair nor
/// anything derived from it serves as an exemplar.
pub fn prompt_for_question(
    embedder: &dyn Embedder,
    index: &EmbeddingIndex,
    corpus: &Corpus,
    question: &str,
    k: usize,
) -> Result<PromptRecord, PipelineError> {
    let exemplars = if k == 0 {
        Vec::new()
    } else {
        let query = embedder.embed(&[question])?.pop().unwrap_or_default();
        retrieve_exemplars(index, &lookup_table(corpus), &query, question, &excluded_roots(corpus, question), k)?
    };
    Ok(PromptRecord {
        id: String::new(),
        target_question: question.to_string(),
        rendered: render_prompt(question, &exemplars),
        exemplars,
        target_answer: None,
    })
}

/// Retrieve exemplars, render the prompt, decode greedily and return the
/// trimmed text generated after the prompt's final `Answer:`.
///
/// `max_length` counts prompt plus continuation and is capped at the
/// decoder's context. Exemplars are dropped from the end while the prompt
/// would leave fewer than a quarter of `max_length` for the answer.
pub fn answer(a: &Answerer<'_>, question: &str, k: usize, max_length: usize) -> Result<String, PipelineError> {
    let embedder = TransformerEmbedder { params: a.encoder, tokenizer: a.tokenizer };
    let rec = prompt_for_question(&embedder, a.index, a.corpus, question, k)?;
    let decoder = a.decoder.with_head(Head::Causal);
    let max_length = max_length.min(decoder.arch.max_seq_len);
    let reserve = answer_reserve(max_length);
    let mut n_ex = rec.exemplars.len();
    let mut prompt = prompt_tokens(a.tokenizer, &rec.rendered);
    while prompt.len() + reserve > max_length && n_ex > 0 {
        n_ex -= 1;
        prompt = prompt_tokens(a.tokenizer, &render_prompt(question, &rec.exemplars[..n_ex]));
    }
    if prompt.len() >= max_length {
        // keep the question end of the prompt
        prompt.drain(1..prompt.len() + 1 - (max_length - 1));
    }
    let out = greedy_generate(&decoder, &prompt, max_length, Special::Eos.id())?;
    let continuation: Vec<u32> = out[prompt.len()..].iter().copied().filter(|&t| t != Special::Eos.id()).collect();
    Ok(a.tokenizer.decode(&continuation)?.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ArchConfig;
    use crate::tokenizer::train_tokenizer;

    /// Looks texts up in a fixed table; unknown texts map to a constant.
    struct TableEmbedder(BTreeMap<String, Vec<f64>>, usize);

    impl Embedder for TableEmbedder {
        fn dim(&self) -> usize {
            self.1
        }
        fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, PipelineError> {
            Ok(texts.iter().map(|t| self.0.get(*t).cloned().unwrap_or_else(|| vec![1.0; self.1])).collect())
        }
    }

    fn toy() -> (Corpus, TableEmbedder) {
        let rows = [
            ("a", "What causes fever?", "Infection.", [1.0, 0.0, 0.0]),
            ("b", "What treats fever?", "Rest.", [0.9, 0.1, 0.0]),
            ("c", "What causes acne?", "Oil.", [0.0, 1.0, 0.0]),
            ("d", "Who gets acne?", "Teens.", [0.1, 0.9, 0.2]),
            ("e", "What is gout?", "Arthritis.", [0.0, 0.0, 1.0]),
        ];
        let pairs = rows.iter().map(|r| QAPair::new(r.0, r.1, r.2)).collect();
        let table = rows.iter().map(|r| (String::from(r.1), r.3.to_vec())).collect();
        (Corpus::from_pairs(pairs), TableEmbedder(table, 3))
    }

    /// Brute-force ranking: all pairs of scores compared directly.
    fn oracle_top(index: &EmbeddingIndex, q: &[f64], k: usize, skip: &str) -> Vec<String> {
        let qn = libm::sqrt(q.iter().map(|x| x * x).sum::<f64>());
        let mut scored: Vec<(f64, &str)> = index
            .entries
            .iter()
            .filter(|e| e.id != skip)
            .map(|e| (e.vector.iter().zip(q).map(|(a, b)| a * b / qn).sum::<f64>(), e.id.as_str()))
            .collect();
        let mut out = Vec::new();
        while out.len() < k && !scored.is_empty() {
            let mut best = 0;
            for i in 1..scored.len() {
                let (s, id) = scored[i];
                if s > scored[best].0 || (s == scored[best].0 && id < scored[best].1) {
                    best = i;
                }
            }
            out.push(scored.remove(best).1.to_string());
        }
        out
    }

    #[test]
    fn index_vectors_are_unit() {
        let (c, e) = toy();
        let idx = build_index(&e, &c).unwrap();
        assert_eq!(idx.len(), 5);
        for entry in &idx.entries {
            assert!((norm(&entry.vector) - 1.0).abs() < 1e-9);
        }
        assert!(build_index(&e, &Corpus::default()).unwrap().is_empty());
    }

    #[test]
    fn index_errors() {
        let mut idx = EmbeddingIndex::new(2);
        assert_eq!(idx.insert("x", &[0.0, 0.0]), Err(PipelineError::ZeroVector(String::from("x"))));
        assert!(matches!(idx.insert("x", &[1.0]), Err(PipelineError::DimensionMismatch { expected: 2, actual: 1 })));
        idx.insert("x", &[3.0, 4.0]).unwrap();
        assert_eq!(idx.vector("x").unwrap(), &[0.6, 0.8]);
        assert!(matches!(idx.insert("x", &[1.0, 0.0]), Err(PipelineError::DuplicateId(_))));
    }

    #[test]
    fn search_ties_go_to_smaller_id() {
        let mut idx = EmbeddingIndex::new(2);
        idx.insert("z", &[1.0, 0.0]).unwrap();
        idx.insert("m", &[2.0, 0.0]).unwrap();
        idx.insert("q", &[0.0, 1.0]).unwrap();
        let ids: Vec<String> = idx.search(&[1.0, 0.0], 3).unwrap().into_iter().map(|h| h.id).collect();
        assert_eq!(ids, ["m", "z", "q"]);
    }

    #[test]
    fn exemplars_match_exhaustive_scan() {
        let (c, e) = toy();
        let idx = build_index(&e, &c).unwrap();
        for k in 0..5 {
            let prompts = generate_prompts(&idx, &c, k).unwrap();
            for rec in &prompts {
                let got: Vec<&str> = rec.exemplars.iter().map(|x| x.id.as_str()).collect();
                let want = oracle_top(&idx, idx.vector(&rec.id).unwrap(), k, &rec.id);
                assert_eq!(got, want);
                assert!(!got.contains(&rec.id.as_str()));
                assert_eq!(rec.rendered.matches(rec.target_question.as_str()).count(), 1);
            }
        }
    }

    #[test]
    fn prompt_shapes() {
        let (c, e) = toy();
        let idx = build_index(&e, &c).unwrap();
        let p0 = generate_prompts(&idx, &c, 0).unwrap();
        assert_eq!(p0[0].rendered, "Question: What causes fever? ; Answer:");
        let p1 = generate_prompts(&idx, &c, 1).unwrap();
        assert_eq!(
            p1[0].rendered,
            "Question: What treats fever? ; Answer: Rest.\nQuestion: What causes fever? ; Answer:"
        );
        let single = c.subset(vec![c.pairs[0].clone()]);
        let idx1 = build_index(&e, &single).unwrap();
        assert!(generate_prompts(&idx1, &single, 1).unwrap()[0].exemplars.is_empty());
    }

    #[test]
    fn augmented_copies_of_target_are_not_exemplars() {
        let (mut c, mut e) = toy();
        let mut copy = c.pairs[0].clone();
        copy.id = String::from("a~syn3");
        copy.question = String::from("What induces fever?");
        e.0.insert(copy.question.clone(), vec![1.0, 0.0, 0.0]);
        c.extend([copy]);
        let idx = build_index(&e, &c).unwrap();
        let recs = generate_prompts(&idx, &c, 2).unwrap();
        let ids: Vec<&str> = recs[0].exemplars.iter().map(|x| x.id.as_str()).collect();
        assert_eq!(ids, ["b", "d"]);
    }

    #[test]
    fn corpus_questions_never_get_their_own_paraphrases() {
        let (mut c, mut e) = toy();
        let mut para = QAPair::new("a~syn1", "What induces fever?", "Infection.");
        para.provenance = crate::corpus::Provenance::SynonymAug;
        c.pairs.push(para);
        e.0.insert(String::from("What induces fever?"), vec![1.0, 0.01, 0.0]);
        e.0.insert(String::from("what causes  FEVER?"), vec![1.0, 0.0, 0.0]);
        let idx = build_index(&e, &c).unwrap();
        let ids = |r: &PromptRecord| r.exemplars.iter().map(|x| x.id.clone()).collect::<Vec<_>>();
        let known = prompt_for_question(&e, &idx, &c, "what causes  FEVER?", 1).unwrap();
        assert_eq!(ids(&known), ["b"]);
        let train = generate_prompts(&idx, &c, 1).unwrap();
        assert_eq!(ids(&train[0]), ["b"]);
        // an unseen question may use any pair
        e.0.insert(String::from("Is fever bad?"), vec![1.0, 0.0, 0.0]);
        assert_eq!(ids(&prompt_for_question(&e, &idx, &c, "Is fever bad?", 1).unwrap()), ["a"]);
    }

    #[test]
    fn finetune_mask_covers_answer_only() {
        let tok = train_tokenizer(["Question: hi ; Answer: yo"], 280, 0).unwrap();
        let rec = PromptRecord {
            id: String::from("a"),
            target_question: String::from("hi"),
            exemplars: Vec::new(),
            rendered: String::from("Question: hi ; Answer:"),
            target_answer: Some(String::from("yo")),
        };
        let ex = finetune_example(&rec, &tok, 64).unwrap();
        let mask = ex.loss_mask.unwrap();
        let n_prompt = 1 + tok.encode("Question: hi ; Answer:", false).len();
        assert!(mask[..n_prompt].iter().all(|m| !m));
        assert!(mask[n_prompt..].iter().all(|&m| m));
        assert_eq!(tok.decode(&ex.tokens[n_prompt..]).unwrap(), " yo");
        assert_eq!(*ex.tokens.last().unwrap(), Special::Eos.id());
    }

    #[test]
    fn finetune_drops_exemplars_to_fit() {
        let tok = TokenizerModel::bytes_only();
        let ex = Exemplar {
            id: String::from("b"),
            question: String::from("long question"),
            answer: String::from("long answer"),
        };
        let rec = PromptRecord {
            id: String::from("a"),
            target_question: String::from("q"),
            rendered: render_prompt("q", core::slice::from_ref(&ex)),
            exemplars: vec![ex],
            target_answer: Some(String::from("x")),
        };
        let e = finetune_example(&rec, &tok, 40).unwrap();
        // [BOS] "Question: q ; Answer:" " x" [EOS]
        assert_eq!(e.tokens.len(), 1 + 21 + 2 + 1);
    }

    #[test]
    fn finetune_keeps_the_answer_reserve() {
        let tok = TokenizerModel::bytes_only();
        let ex = Exemplar {
            id: String::from("b"),
            question: String::from("long question"),
            answer: String::from("long answer"),
        };
        let rec = PromptRecord {
            id: String::from("a"),
            target_question: String::from("q"),
            rendered: render_prompt("q", core::slice::from_ref(&ex)),
            exemplars: vec![ex],
            target_answer: Some(String::from("x")),
        };
        // 68 prompt tokens + 3 would fit in 80, but not with the 20-token reserve
        assert_eq!(finetune_example(&rec, &tok, 80).unwrap().tokens.len(), 25);
        assert_eq!(finetune_example(&rec, &tok, 92).unwrap().tokens.len(), 71);
    }

    #[test]
    fn empty_prompt_list_is_an_error() {
        let p = ModelParams::zeros(ArchConfig::small(300, Head::Causal)).unwrap();
        let err = finetune_decoder(&p, &[], &TokenizerModel::bytes_only(), &TrainConfig::default(), |_, _| Ok(()));
        assert_eq!(err.unwrap_err(), PipelineError::Train(TrainError::EmptyTrainingSet));
    }
}
