use clap::ValueEnum;
use medqa_core::augment::{smote, EmbeddingPoint, PointSource};
use medqa_core::corpus::format_template;
use medqa_core::nn::{Head, ModelParams};
use medqa_core::pipeline::{
    build_index, finetune_decoder, generate_prompts, pretrain_decoder, pretrain_encoder, EmbeddingIndex, PromptRecord,
    TransformerEmbedder,
};
use medqa_core::tokenizer::train_tokenizer;
use medqa_core::train::{TrainError, TrainLog};

use super::{
    CliError, Run, StageSummary, DECODER, ENCODER, FINETUNED, INDEX, PROMPTS, TOKENIZER, TRAIN_SPLIT, VAL_SPLIT,
};
use crate::config::BalanceMode;
use crate::formats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Tokenizer,
    Encoder,
    Decoder,
    Prompts,
    Finetune,
    /// Every stage in order.
    All,
}

impl Stage {
    pub const ORDER: [Stage; 5] = [Stage::Tokenizer, Stage::Encoder, Stage::Decoder, Stage::Prompts, Stage::Finetune];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Tokenizer => "tokenizer",
            Stage::Encoder => "encoder",
            Stage::Decoder => "decoder",
            Stage::Prompts => "prompts",
            Stage::Finetune => "finetune",
            Stage::All => "all",
        }
    }
}

pub fn cmd_train(run: &Run, stage: Stage) -> Result<String, CliError> {
    match stage {
        Stage::Tokenizer => train_tok(run),
        Stage::Encoder => train_encoder(run),
        Stage::Decoder => train_decoder(run),
        Stage::Prompts => make_prompts(run),
        Stage::Finetune => finetune(run),
        Stage::All => {
            let mut out = Vec::new();
            for s in Stage::ORDER {
                out.push(cmd_train(run, s)?);
            }
            Ok(out.join("\n"))
        }
    }
}

fn train_tok(run: &Run) -> Result<String, CliError> {
    let train = run.split("tokenizer", TRAIN_SPLIT)?;
    let texts = train
        .pairs
        .iter()
        .map(format_template)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::user("tokenizer", e))?;
    let vocab = run.cfg.config.tokenizer.vocab_size;
    let tok = train_tokenizer(texts.iter().map(String::as_str), vocab, run.seed("tokenizer"))
        .map_err(|e| CliError::user("tokenizer", e))?;
    run.write(TOKENIZER, formats::save_tokenizer(&tok)?.as_bytes())?;
    Ok(format!("tokenizer: {} symbols ({} merges)", tok.vocab_size(), tok.merges().len()))
}

/// Writes intermediate checkpoints as `checkpoints/<stage>-<step>.ckpt`.
fn checkpoint_hook<'a>(
    run: &'a Run,
    stage: &'a str,
    total: usize,
    tok_hash: &'a str,
) -> impl FnMut(usize, &ModelParams) -> Result<(), TrainError> + 'a {
    move |step, params| {
        if step == total {
            return Ok(());
        }
        let bytes = formats::encode_checkpoint(params, &run.meta(stage, step, tok_hash))
            .map_err(|e| TrainError::Hook(e.to_string()))?;
        run.write(&format!("checkpoints/{stage}-{step:06}.ckpt"), &bytes).map_err(|e| TrainError::Hook(e.to_string()))
    }
}

fn save_stage(
    run: &Run,
    stage: &str,
    rel: &str,
    params: &ModelParams,
    log: &TrainLog,
    tok_hash: &str,
) -> Result<String, CliError> {
    let steps = log.steps.len();
    run.write(rel, &formats::encode_checkpoint(params, &run.meta(stage, steps, tok_hash))?)?;
    run.write(&format!("logs/{stage}.jsonl"), formats::to_jsonl(&log.steps)?.as_bytes())?;
    let summary = StageSummary {
        stage: stage.to_string(),
        steps,
        first_loss: log.steps.first().map(|s| s.loss),
        last_loss: log.steps.last().map(|s| s.loss),
        initial_heldout_perplexity: log.initial_perplexity(),
        final_heldout_perplexity: log.final_perplexity(),
        epochs: log.epochs.clone(),
        config_hash: run.cfg.hash.clone(),
        tokenizer_hash: tok_hash.to_string(),
    };
    run.write_json(&format!("logs/{stage}_summary.json"), &summary)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| String::from("n/a"), |x| format!("{x:.3}"));
    Ok(format!(
        "{stage}: {steps} steps, loss {} -> {}, held-out perplexity {} -> {}",
        fmt(summary.first_loss),
        fmt(summary.last_loss),
        fmt(summary.initial_heldout_perplexity),
        fmt(summary.final_heldout_perplexity)
    ))
}

fn train_encoder(run: &Run) -> Result<String, CliError> {
    let (tok, tok_hash) = run.tokenizer("encoder")?;
    let train = run.split("encoder", TRAIN_SPLIT)?;
    let val = run.split("encoder", VAL_SPLIT)?;
    let c = &run.cfg.config;
    let arch = c.encoder.arch(tok.vocab_size(), Head::Mlm);
    let init = ModelParams::init(arch, run.seed("encoder-init")).map_err(|e| CliError::user("encoder", e))?;
    let cfg = c.train.encoder.train_config(run.seed("encoder-train"));
    let hook = checkpoint_hook(run, "encoder", cfg.total_steps, &tok_hash);
    let (params, log) =
        pretrain_encoder(&init, &train, &tok, &cfg, Some(&val), hook).map_err(|e| CliError::internal("encoder", e))?;
    save_stage(run, "encoder", ENCODER, &params, &log, &tok_hash)
}

fn train_decoder(run: &Run) -> Result<String, CliError> {
    let (tok, tok_hash) = run.tokenizer("decoder")?;
    let train = run.split("decoder", TRAIN_SPLIT)?;
    let val = run.split("decoder", VAL_SPLIT)?;
    let c = &run.cfg.config;
    let arch = c.decoder.arch(tok.vocab_size(), Head::Causal);
    let init = ModelParams::init(arch, run.seed("decoder-init")).map_err(|e| CliError::user("decoder", e))?;
    let cfg = c.train.decoder.train_config(run.seed("decoder-train"));
    let hook = checkpoint_hook(run, "decoder", cfg.total_steps, &tok_hash);
    let (params, log) =
        pretrain_decoder(&init, &train, &tok, &cfg, Some(&val), hook).map_err(|e| CliError::internal("decoder", e))?;
    save_stage(run, "decoder", DECODER, &params, &log, &tok_hash)
}

/// Add SMOTE vectors (ids `smote:<n>`) so every question type reaches the
/// majority count. Pairs without a type are left out of the balancing.
pub(crate) fn add_smote(run: &Run, index: &mut EmbeddingIndex, corpus: &medqa_core::Corpus) -> Result<usize, CliError> {
    let points: Vec<EmbeddingPoint> = corpus
        .pairs
        .iter()
        .filter_map(|p| {
            let label = p.qtype.clone()?;
            let vector = index.vector(&p.id)?.to_vec();
            Some(EmbeddingPoint { vector, class_label: label, source: PointSource::Pair(p.id.clone()) })
        })
        .collect();
    let target = medqa_core::augment::majority_count(&points);
    let k = run.cfg.config.augment.smote_k;
    let synthetic = smote(&points, k, target, run.seed("smote")).map_err(|e| CliError::user("smote", e))?;
    let n = synthetic.len();
    for (i, s) in synthetic.into_iter().enumerate() {
        index.insert(format!("smote:{i:05}"), &s.vector).map_err(|e| CliError::internal("smote", e))?;
    }
    Ok(n)
}

fn make_prompts(run: &Run) -> Result<String, CliError> {
    let (tok, tok_hash) = run.tokenizer("prompts")?;
    let encoder = run.checkpoint("prompts", ENCODER, "medqa train --stage encoder", &tok_hash)?;
    let train = run.split("prompts", TRAIN_SPLIT)?;
    let c = &run.cfg.config;
    let embedder = TransformerEmbedder { params: &encoder, tokenizer: &tok };
    let mut index = build_index(&embedder, &train).map_err(|e| CliError::internal("prompts", e))?;
    let n_smote = if c.augment.balance == BalanceMode::Vector { add_smote(run, &mut index, &train)? } else { 0 };
    let mut prompts = generate_prompts(&index, &train, c.prompts.k).map_err(|e| CliError::internal("prompts", e))?;
    if let Some(limit) = c.prompts.limit {
        prompts.truncate(limit);
    }
    run.write(INDEX, &formats::encode_index(&index, &run.meta("prompts", 0, &tok_hash))?)?;
    run.write(PROMPTS, formats::to_jsonl(&prompts)?.as_bytes())?;
    Ok(format!("prompts: {} prompts, index of {} vectors ({n_smote} synthetic)", prompts.len(), index.len()))
}

fn finetune(run: &Run) -> Result<String, CliError> {
    let (tok, tok_hash) = run.tokenizer("finetune")?;
    let decoder = run.checkpoint("finetune", DECODER, "medqa train --stage decoder", &tok_hash)?;
    let bytes = run.require("finetune", PROMPTS, "medqa train --stage prompts")?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::user("finetune", e))?;
    let prompts: Vec<PromptRecord> =
        formats::read_jsonl(&text).map_err(|e| CliError::user("finetune", format!("{PROMPTS}: {e}")))?;
    let cfg = run.cfg.config.train.finetune.train_config(run.seed("finetune-train"));
    let hook = checkpoint_hook(run, "finetune", cfg.total_steps, &tok_hash);
    let (params, log) =
        finetune_decoder(&decoder, &prompts, &tok, &cfg, hook).map_err(|e| CliError::internal("finetune", e))?;
    save_stage(run, "finetune", FINETUNED, &params, &log, &tok_hash)
}
