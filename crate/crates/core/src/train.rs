//! Optimization loop: learning-rate schedules, global-norm gradient
//! clipping, plain SGD with optional decoupled weight decay, seeded
//! minibatching and held-out perplexity tracking.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    backward, forward, loss_causal, loss_mlm, perplexity, Batch, DropoutConfig, Gradients, Head, MaskedToken,
    ModelParams, NnError, Weights,
};
use crate::rng::{derive_seed, rng_from};
use crate::tokenizer::{Special, NUM_SPECIALS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Mlm,
    Causal,
}

impl Objective {
    pub fn head(self) -> Head {
        match self {
            Objective::Mlm => Head::Mlm,
            Objective::Causal => Head::Causal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub init_lr: f64,
    pub total_steps: usize,
    #[serde(default)]
    pub warmup_steps: usize,
    pub schedule: Schedule,
    pub clip_c: f64,
    pub batch_size: usize,
    /// Dropout keep probability; 1.0 disables dropout.
    pub keep_prob: f64,
    pub seed: u64,
    /// Decoupled weight decay coefficient, applied to matrices only.
    #[serde(default)]
    pub weight_decay: f64,
    /// Call the checkpoint hook every this many steps (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            init_lr: 0.1,
            total_steps: 200,
            warmup_steps: 0,
            schedule: Schedule::Linear,
            clip_c: 1.0,
            batch_size: 8,
            keep_prob: 1.0,
            seed: 0,
            weight_decay: 0.0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("step {step} outside [0, {total}]")]
    StepOutOfRange { step: usize, total: usize },
    #[error("gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("checkpoint hook failed: {0}")]
    Hook(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(String::from(m)));
        if !(self.init_lr > 0.0 && self.init_lr.is_finite()) {
            return bad("init_lr must be positive");
        }
        if self.total_steps > 0 && self.warmup_steps >= self.total_steps {
            return bad("warmup_steps must be below total_steps");
        }
        if !(self.clip_c > 0.0) {
            return bad("clip_c must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep_prob must lie in (0, 1]");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        Ok(())
    }
}

/// Learning rate at step `t`.
///
/// Warm-up ramps linearly from 0 over `warmup_steps`. Afterwards the
/// linear schedule is `init_lr · (1 - t/total_steps)` on the global step,
/// and cosine annealing is `init_lr · ½(1 + cos(π t'/T'))` over the
/// remaining span `t' = t - warmup`, `T' = total - warmup`.
pub fn lr_at(cfg: &TrainConfig, t: usize) -> Result<f64, TrainError> {
    if t > cfg.total_steps {
        return Err(TrainError::StepOutOfRange { step: t, total: cfg.total_steps });
    }
    if cfg.total_steps == 0 {
        return Ok(cfg.init_lr);
    }
    let w = cfg.warmup_steps;
    if t < w {
        return Ok(cfg.init_lr * t as f64 / w as f64);
    }
    Ok(match cfg.schedule {
        Schedule::Linear => cfg.init_lr * (1.0 - t as f64 / cfg.total_steps as f64),
        Schedule::Cosine => {
            let frac = (t - w) as f64 / (cfg.total_steps - w) as f64;
            cfg.init_lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * frac))
        }
    })
}

pub fn global_norm(g: &Gradients) -> f64 {
    libm::sqrt(g.arrays().iter().map(|t| t.sum_sq()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipInfo {
    pub norm_before: f64,
    pub clipped: bool,
}

/// Rescale by `1 / max(1, ‖g‖ / c)` using the norm over all arrays jointly.
/// Gradients already inside the ball are returned bit-for-bit.
pub fn clip_gradients(g: &Gradients, c: f64) -> Result<(Gradients, ClipInfo), TrainError> {
    if !(c > 0.0) {
        return Err(TrainError::InvalidConfig(format!("clip threshold {c} must be positive")));
    }
    if !g.all_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    let norm = global_norm(g);
    if norm <= c {
        return Ok((g.clone(), ClipInfo { norm_before: norm, clipped: false }));
    }
    let mut factor = norm / c;
    loop {
        let mut out = g.clone();
        for t in out.arrays_mut() {
            t.data.iter_mut().for_each(|v| *v /= factor);
        }
        // rounding can leave the result a few ulps above c
        if global_norm(&out) <= c {
            return Ok((out, ClipInfo { norm_before: norm, clipped: true }));
        }
        factor *= 1.0 + f64::EPSILON;
    }
}

/// `params − lr · grads`
pub fn sgd_step(params: &mut Weights, grads: &Gradients, lr: f64) -> Result<(), TrainError> {
    if !params.same_shape(grads) {
        return Err(NnError::ShapeMismatch(String::from("gradient layout differs from parameters")).into());
    }
    params.axpy(-lr, grads);
    Ok(())
}

fn decay_weights(params: &mut Weights, lr: f64, coeff: f64) {
    if coeff == 0.0 {
        return;
    }
    for t in params.arrays_mut() {
        if t.shape.len() == 2 {
            t.data.iter_mut().for_each(|v| *v -= lr * coeff * *v);
        }
    }
}

/// One tokenized training sequence. For causal training an optional mask
/// selects which target tokens contribute to the loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub loss_mask: Option<Vec<bool>>,
}

impl Example {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self { tokens, loss_mask: None }
    }
}

pub const MLM_SELECT_RATE: f64 = 0.15;

/// Masked-LM corruption: pick 15% of non-special positions per sequence (at
/// least one when any exist); of those 80% become MASK, 10% a random
/// non-special token and 10% stay unchanged. All picked positions are targets.
pub fn mlm_batch(seqs: &[Vec<u32>], vocab_size: usize, rng: &mut crate::rng::Rng) -> Batch {
    let mut batch = Batch::from_sequences(seqs, Special::Pad.id());
    for (b, s) in seqs.iter().enumerate() {
        let mut cand: Vec<usize> = (0..s.len()).filter(|&t| s[t] >= NUM_SPECIALS).collect();
        if cand.is_empty() {
            continue;
        }
        let n_pick = libm::round(MLM_SELECT_RATE * cand.len() as f64).max(1.0) as usize;
        let (picked, _) = cand.partial_shuffle(rng, n_pick);
        let mut picked = picked.to_vec();
        picked.sort_unstable();
        for t in picked {
            let row = b * batch.seq_len + t;
            let original = batch.tokens[row];
            let r: f64 = rng.gen();
            if r < 0.8 {
                batch.tokens[row] = Special::Mask.id();
            } else if r < 0.9 {
                batch.tokens[row] = rng.gen_range(NUM_SPECIALS..vocab_size as u32);
            }
            batch.masked.push(MaskedToken { row, original });
        }
    }
    batch
}

/// Padded causal batch carrying per-example loss masks when any are present.
pub fn causal_batch(examples: &[&Example]) -> Batch {
    let seqs: Vec<Vec<u32>> = examples.iter().map(|e| e.tokens.clone()).collect();
    let mut batch = Batch::from_sequences(&seqs, Special::Pad.id());
    if examples.iter().any(|e| e.loss_mask.is_some()) {
        let mut mask = vec![false; batch.rows()];
        for (b, e) in examples.iter().enumerate() {
            for t in 0..e.tokens.len() {
                mask[b * batch.seq_len + t] = e.loss_mask.as_ref().is_none_or(|m| m.get(t).copied().unwrap_or(false));
            }
        }
        batch.loss_mask = Some(mask);
    }
    batch
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm_pre_clip: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the measurement before any update.
    pub epoch: usize,
    pub step: usize,
    pub heldout_perplexity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn initial_perplexity(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.heldout_perplexity)
    }

    pub fn final_perplexity(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.heldout_perplexity)
    }
}

/// Sum of causal negative log-likelihoods and number of targets over a set
/// of examples, honoring loss masks. Evaluation mode (no dropout).
pub fn causal_nll(params: &ModelParams, examples: &[Example], batch_size: usize) -> Result<(f64, usize), TrainError> {
    let p = params.with_head(Head::Causal);
    let mut total = 0.0;
    let mut count = 0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = causal_batch(&refs);
        if batch.seq_len < 2 {
            continue;
        }
        let out = forward(&p, &batch, &DropoutConfig::eval())?;
        match loss_causal(&out.output, &batch, p.arch.vocab_size) {
            Ok(l) => {
                total += l.loss * l.count as f64;
                count += l.count;
            }
            Err(NnError::SequenceTooShort) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok((total, count))
}

/// Masked-LM negative log-likelihood over examples with a fixed masking seed.
pub fn mlm_nll(
    params: &ModelParams,
    examples: &[Example],
    batch_size: usize,
    seed: u64,
) -> Result<(f64, usize), TrainError> {
    let p = params.with_head(Head::Mlm);
    let mut rng = rng_from(seed);
    let mut total = 0.0;
    let mut count = 0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let seqs: Vec<Vec<u32>> = chunk.iter().map(|e| e.tokens.clone()).collect();
        let batch = mlm_batch(&seqs, p.arch.vocab_size, &mut rng);
        if batch.masked.is_empty() {
            continue;
        }
        let out = forward(&p, &batch, &DropoutConfig::eval())?;
        let l = loss_mlm(&out.output, &batch, p.arch.vocab_size)?;
        total += l.loss * l.count as f64;
        count += l.count;
    }
    Ok((total, count))
}

fn heldout_perplexity(
    params: &ModelParams,
    objective: Objective,
    heldout: &[Example],
    cfg: &TrainConfig,
) -> Result<Option<f64>, TrainError> {
    let (total, count) = match objective {
        Objective::Causal => causal_nll(params, heldout, cfg.batch_size)?,
        Objective::Mlm => mlm_nll(params, heldout, cfg.batch_size, derive_seed(cfg.seed, 0xE7A1))?,
    };
    Ok((count > 0).then(|| perplexity(total / count as f64)))
}

/// Train for `cfg.total_steps` SGD steps.
///
/// Each step: forward → loss → backward → clip → `lr_at(step)` → update.
/// Minibatches come from a seeded shuffle reshuffled every epoch. When a
/// held-out set is given its perplexity is logged before training and at
/// the end of every epoch. `on_checkpoint(step, params)` runs every
/// `checkpoint_every` steps and once after the last step.
pub fn fit<F>(
    params: &ModelParams,
    cfg: &TrainConfig,
    objective: Objective,
    data: &[Example],
    heldout: Option<&[Example]>,
    mut on_checkpoint: F,
) -> Result<(ModelParams, TrainLog), TrainError>
where
    F: FnMut(usize, &ModelParams) -> Result<(), TrainError>,
{
    cfg.validate()?;
    params.check()?;
    let mut log = TrainLog::default();
    if cfg.total_steps == 0 {
        return Ok((params.clone(), log));
    }
    if data.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut model = params.with_head(objective.head());
    let vocab = model.arch.vocab_size;
    if let Some(h) = heldout.filter(|h| !h.is_empty()) {
        if let Some(ppl) = heldout_perplexity(&model, objective, h, cfg)? {
            log.epochs.push(EpochRecord { epoch: 0, step: 0, heldout_perplexity: ppl });
        }
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut mask_rng = rng_from(derive_seed(cfg.seed, 0x3A5C));
    let mut epoch = 0;
    let mut cursor = data.len();
    for step in 0..cfg.total_steps {
        if cursor >= data.len() {
            order.sort_unstable();
            order.shuffle(&mut rng_from(derive_seed(cfg.seed, epoch as u64)));
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(data.len());
        let picked: Vec<&Example> = order[cursor..end].iter().map(|&i| &data[i]).collect();
        cursor = end;

        let batch = match objective {
            Objective::Causal => causal_batch(&picked),
            Objective::Mlm => {
                let seqs: Vec<Vec<u32>> = picked.iter().map(|e| e.tokens.clone()).collect();
                mlm_batch(&seqs, vocab, &mut mask_rng)
            }
        };
        let dropout = DropoutConfig::train(cfg.keep_prob, derive_seed(cfg.seed, (1 << 32) + step as u64));
        let out = forward(&model, &batch, &dropout)?;
        let loss = match objective {
            Objective::Causal => loss_causal(&out.output, &batch, vocab)?,
            Objective::Mlm => loss_mlm(&out.output, &batch, vocab)?,
        };
        let grads = backward(&model, &out.cache, &loss.grad)?;
        let (grads, info) = clip_gradients(&grads, cfg.clip_c)?;
        let lr = lr_at(cfg, step)?;
        sgd_step(&mut model.weights, &grads, lr)?;
        decay_weights(&mut model.weights, lr, cfg.weight_decay);
        log.steps.push(StepRecord {
            step: step + 1,
            lr,
            loss: loss.loss,
            grad_norm_pre_clip: info.norm_before,
            clipped: info.clipped,
        });

        let done = step + 1 == cfg.total_steps;
        if cursor >= data.len() || done {
            epoch += 1;
            if let Some(h) = heldout.filter(|h| !h.is_empty()) {
                if let Some(ppl) = heldout_perplexity(&model, objective, h, cfg)? {
                    log.epochs.push(EpochRecord { epoch, step: step + 1, heldout_perplexity: ppl });
                }
            }
        }
        if done || (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
            on_checkpoint(step + 1, &model)?;
        }
    }
    Ok((model.with_head(params.arch.head), log))
}
