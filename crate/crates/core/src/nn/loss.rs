//! Negative log-likelihood objectives over logits, with their logit gradients.

use alloc::vec;
use alloc::vec::Vec;

use super::arch::NnError;
use super::model::Batch;
use super::ops::log_sum_exp;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean negative log-likelihood over the counted positions.
    pub loss: f64,
    /// Number of positions the mean runs over.
    pub count: usize,
    /// d loss / d logits, same layout as the logits.
    pub grad: Vec<f64>,
}

/// Accumulate `-log softmax(row)[target]` and its gradient `softmax - onehot`.
fn nll_row(row: &[f64], target: usize, grad: &mut [f64], weight: f64) -> f64 {
    let lse = log_sum_exp(row);
    for (g, &z) in grad.iter_mut().zip(row) {
        *g += weight * libm::exp(z - lse);
    }
    grad[target] -= weight;
    lse - row[target]
}

/// Mean over masked positions of `-log P(original | context)`.
pub fn loss_mlm(logits: &[f64], batch: &Batch, vocab_size: usize) -> Result<LossOutput, NnError> {
    if batch.masked.is_empty() {
        return Err(NnError::NoMaskedPositions);
    }
    check_len(logits, batch, vocab_size)?;
    let count = batch.masked.len();
    let w = 1.0 / count as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for m in &batch.masked {
        let r = m.row * vocab_size..(m.row + 1) * vocab_size;
        total += nll_row(&logits[r.clone()], m.original as usize, &mut grad[r], w);
    }
    Ok(LossOutput { loss: total / count as f64, count, grad })
}

/// Mean over real target positions `t ≥ 1` of `-log P(token_t | tokens_<t)`,
/// read from the logits at `t - 1`. A batch loss mask further restricts the
/// counted targets.
pub fn loss_causal(logits: &[f64], batch: &Batch, vocab_size: usize) -> Result<LossOutput, NnError> {
    if batch.seq_len < 2 {
        return Err(NnError::SequenceTooShort);
    }
    check_len(logits, batch, vocab_size)?;
    let targets = causal_targets(batch);
    if targets.is_empty() {
        return Err(NnError::SequenceTooShort);
    }
    let count = targets.len();
    let w = 1.0 / count as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for row in targets {
        let r = (row - 1) * vocab_size..row * vocab_size;
        total += nll_row(&logits[r.clone()], batch.tokens[row] as usize, &mut grad[r], w);
    }
    Ok(LossOutput { loss: total / count as f64, count, grad })
}

/// Flat rows whose token is a causal prediction target.
pub fn causal_targets(batch: &Batch) -> Vec<usize> {
    let mut out = Vec::new();
    for b in 0..batch.batch_size {
        for t in 1..batch.seq_len {
            let row = b * batch.seq_len + t;
            let counted = batch.loss_mask.as_ref().is_none_or(|m| m[row]);
            if batch.valid[row] && counted {
                out.push(row);
            }
        }
    }
    out
}

fn check_len(logits: &[f64], batch: &Batch, vocab_size: usize) -> Result<(), NnError> {
    if logits.len() != batch.rows() * vocab_size {
        return Err(NnError::ShapeMismatch(alloc::format!(
            "expected {} logits, got {}",
            batch.rows() * vocab_size,
            logits.len()
        )));
    }
    Ok(())
}

/// `exp(mean negative log-likelihood)`; lower is better, 1 is perfect.
pub fn perplexity(mean_nll: f64) -> f64 {
    libm::exp(mean_nll)
}

#[cfg(test)]
mod tests {
    use super::super::model::MaskedToken;
    use super::*;
    use alloc::vec;
    use rand::Rng;

    /// Independent scalar evaluation of a single `-log softmax(z)[y]` term:
    /// plain exponentials, no log-sum-exp shift.
    fn scalar_nll(z: &[f64], y: usize) -> f64 {
        let mut s = 0.0;
        for &v in z {
            s += libm::exp(v);
        }
        -libm::log(libm::exp(z[y]) / s)
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let mut b = Batch::from_sequences(&[vec![1, 2, 3]], 0);
        b.masked = vec![MaskedToken { row: 1, original: 2 }];
        let out = loss_mlm(&[0.0; 12], &b, 4).unwrap();
        assert!((out.loss - libm::log(4.0)).abs() < 1e-12);
        assert!((out.loss - 1.386294).abs() < 1e-6);
        let c = loss_causal(&[0.0; 12], &b, 4).unwrap();
        assert!((c.loss - libm::log(4.0)).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_gives_zero_loss() {
        let mut b = Batch::from_sequences(&[vec![1, 2]], 0);
        b.masked = vec![MaskedToken { row: 0, original: 1 }];
        let mut logits = vec![0.0; 8];
        logits[1] = 800.0;
        let m = loss_mlm(&logits, &b, 4).unwrap();
        assert!(m.loss.abs() < 1e-12);
        let mut l2 = vec![0.0; 8];
        l2[2] = 800.0;
        let c = loss_causal(&l2, &b, 4).unwrap();
        assert!(c.loss.abs() < 1e-12 && c.count == 1);
    }

    #[test]
    fn errors() {
        let b = Batch::from_sequences(&[vec![1, 2]], 0);
        assert_eq!(loss_mlm(&[0.0; 8], &b, 4), Err(NnError::NoMaskedPositions));
        let short = Batch::from_sequences(&[vec![1]], 0);
        assert_eq!(loss_causal(&[0.0; 4], &short, 4), Err(NnError::SequenceTooShort));
    }

    #[test]
    fn mlm_matches_scalar_oracle() {
        let mut rng = crate::rng::rng_from(17);
        let v = 5;
        let mut b = Batch::from_sequences(&[vec![1, 2, 3, 4], vec![4, 3]], 0);
        b.masked = vec![
            MaskedToken { row: 0, original: 3 },
            MaskedToken { row: 2, original: 1 },
            MaskedToken { row: 5, original: 4 },
        ];
        let logits: Vec<f64> = (0..b.rows() * v).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let out = loss_mlm(&logits, &b, v).unwrap();
        let mut expect = 0.0;
        for m in &b.masked {
            expect += scalar_nll(&logits[m.row * v..(m.row + 1) * v], m.original as usize);
        }
        expect /= 3.0;
        assert!((out.loss - expect).abs() < 1e-10);
        // gradient is zero away from the masked rows
        assert!(out.grad[v..2 * v].iter().all(|&g| g == 0.0));
        let row0: f64 = out.grad[..v].iter().sum();
        assert!(row0.abs() < 1e-12);
    }

    #[test]
    fn causal_matches_scalar_oracle() {
        // three tokens: targets are tokens 1 and 2 read from rows 0 and 1
        let v = 4;
        let b = Batch::from_sequences(&[vec![0, 3, 1]], 9);
        let logits = vec![0.3, -1.2, 0.8, 2.0, 1.1, 0.5, -0.4, 0.0, 9.0, 9.0, 9.0, 9.0];
        let out = loss_causal(&logits, &b, v).unwrap();
        let expect = (scalar_nll(&logits[0..4], 3) + scalar_nll(&logits[4..8], 1)) / 2.0;
        assert!((out.loss - expect).abs() < 1e-10);
        assert!((perplexity(out.loss) - libm::exp(expect)).abs() < 1e-10);
        assert!(out.grad[8..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn padding_and_loss_mask_excluded() {
        let v = 3;
        let mut b = Batch::from_sequences(&[vec![1, 2, 0], vec![2, 1]], 0);
        assert_eq!(causal_targets(&b), vec![1, 2, 4]);
        b.loss_mask = Some(vec![false, false, true, false, true, false]);
        assert_eq!(causal_targets(&b), vec![2, 4]);
        let out = loss_causal(&vec![0.0; 6 * v], &b, v).unwrap();
        assert_eq!(out.count, 2);
    }

    #[test]
    fn perplexity_values() {
        assert!((perplexity(libm::log(4.0)) - 4.0).abs() < 1e-12);
        assert_eq!(perplexity(0.0), 1.0);
    }
}
