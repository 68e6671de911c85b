use clap::ValueEnum;
use medqa_core::augment::synonym_replace;
use medqa_core::corpus::{Corpus, Provenance};
use medqa_core::eval::{
    emit_report, evaluate_generation, evaluate_perplexity, evaluate_retrieval, render_table, EvalCounts, EvalMode,
    MatchRule, Report, ReportRow, TestItem,
};
use medqa_core::nn::ModelParams;
use medqa_core::pipeline::{build_index, template_examples, Answerer, TransformerEmbedder};
use medqa_core::tokenizer::TokenizerModel;

use super::prepare::lexicon;
use super::train::add_smote;
use super::{CliError, Run, DECODER, ENCODER, FINETUNED, TEST_SPLIT, TRAIN_SPLIT, VAL_SPLIT};
use crate::config::BalanceMode;
use crate::formats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalModeArg {
    Retrieval,
    Generation,
}

impl EvalModeArg {
    fn name(self) -> &'static str {
        match self {
            EvalModeArg::Retrieval => "retrieval",
            EvalModeArg::Generation => "generation",
        }
    }
}

fn perplexity(decoder: &ModelParams, tok: &TokenizerModel, test: &Corpus) -> Option<f64> {
    let examples = template_examples(test, tok, decoder.arch.max_seq_len).ok()?;
    evaluate_perplexity(decoder, &examples).ok()
}

/// Retrieval: the index holds every original pair of all splits; each test
/// question, paraphrased by seeded synonym replacement, must retrieve its
/// own pair. Generation: the fine-tuned decoder answers each test question
/// with retrieved training exemplars and is graded by token F1.
pub fn cmd_eval(run: &Run, mode: EvalModeArg) -> Result<String, CliError> {
    let stage = "eval";
    let c = &run.cfg.config;
    let (tok, tok_hash) = run.tokenizer(stage)?;
    let encoder = run.checkpoint(stage, ENCODER, "medqa train --stage encoder", &tok_hash)?;
    let train = run.split(stage, TRAIN_SPLIT)?;
    let test = run.split(stage, TEST_SPLIT)?;
    let embedder = TransformerEmbedder { params: &encoder, tokenizer: &tok };

    let (counts, ppl, match_rule, eval_mode): (EvalCounts, Option<f64>, MatchRule, EvalMode) = match mode {
        EvalModeArg::Retrieval => {
            let val = run.split(stage, VAL_SPLIT)?;
            let originals = Corpus::from_pairs(
                [&train, &val, &test]
                    .iter()
                    .flat_map(|s| s.pairs.iter())
                    .filter(|p| p.provenance == Provenance::Original)
                    .cloned()
                    .collect(),
            );
            let mut index = build_index(&embedder, &originals).map_err(|e| CliError::internal(stage, e))?;
            if c.augment.balance == BalanceMode::Vector {
                add_smote(run, &mut index, &originals)?;
            }
            let lex = lexicon(run, stage)?;
            let seed = run.seed("query-perturbation");
            let items = test
                .pairs
                .iter()
                .map(|p| {
                    let question = match &lex {
                        Some(lex) => {
                            synonym_replace(p, lex, c.eval.query_perturbation, seed)
                                .map_err(|e| CliError::user(stage, e))?
                                .question
                        }
                        None => p.question.clone(),
                    };
                    Ok(TestItem {
                        id: p.id.clone(),
                        question,
                        gold_id: Some(p.id.clone()),
                        gold_answer: p.answer.clone(),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let cfg = c.eval.retrieval_config();
            let counts = evaluate_retrieval(&embedder, &index, &originals, &items, &cfg)
                .map_err(|e| CliError::internal(stage, e))?;
            let ppl = match std::fs::metadata(run.path(DECODER)) {
                Ok(_) => {
                    perplexity(&run.checkpoint(stage, DECODER, "medqa train --stage decoder", &tok_hash)?, &tok, &test)
                }
                Err(_) => None,
            };
            (counts, ppl, cfg.match_rule, EvalMode::Retrieval)
        }
        EvalModeArg::Generation => {
            let decoder = run.checkpoint(stage, FINETUNED, "medqa train --stage finetune", &tok_hash)?;
            let index = run.index(stage, &tok_hash)?;
            let answerer =
                Answerer { tokenizer: &tok, encoder: &encoder, decoder: &decoder, index: &index, corpus: &train };
            let items: Vec<TestItem> = test
                .pairs
                .iter()
                .map(|p| TestItem {
                    id: p.id.clone(),
                    question: p.question.clone(),
                    gold_id: None,
                    gold_answer: p.answer.clone(),
                })
                .collect();
            let theta = c.eval.theta;
            let counts = evaluate_generation(&answerer, &items, c.prompts.k, c.eval.max_length, theta)
                .map_err(|e| CliError::internal(stage, e))?;
            (counts, perplexity(&decoder, &tok, &test), MatchRule::TokenF1 { theta }, EvalMode::Generation)
        }
    };

    let row = ReportRow {
        name: format!("{} ({})", c.name, mode.name()),
        precision: counts.precision(),
        tp: counts.tp,
        fp: counts.fp,
        abstained: counts.abstained,
        perplexity: ppl,
        seed: c.seed,
        config_hash: run.cfg.hash.clone(),
        mode: eval_mode,
        match_rule,
    };
    let report = emit_report(&[row]).map_err(|e| CliError::internal(stage, e))?;
    let name = mode.name();
    run.write(&format!("reports/{name}_trace.jsonl"), formats::to_jsonl(&counts.trace)?.as_bytes())?;
    run.write_json(&format!("reports/{name}.json"), &report)?;
    let table = render_table(&report);
    run.write(&format!("reports/{name}.txt"), table.as_bytes())?;
    Ok(table)
}

/// Merge the rows of every `reports/*.json` into one sorted report.
pub fn cmd_report(run: &Run) -> Result<String, CliError> {
    let dir = run.path("reports");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|_| CliError::MissingPrerequisite {
            stage: String::from("report"),
            path: dir.clone(),
            hint: String::from("medqa eval --mode retrieval"),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| CliError::Internal(format!("{}: {e}", f.display())))?;
        let r: Report =
            serde_json::from_str(&text).map_err(|e| CliError::user("report", format!("{}: {e}", f.display())))?;
        rows.extend(r.rows);
    }
    let report = emit_report(&rows).map_err(|e| CliError::user("report", format!("{e} in {}", dir.display())))?;
    run.write_json("report.json", &report)?;
    let table = render_table(&report);
    run.write("report.txt", table.as_bytes())?;
    Ok(table)
}
