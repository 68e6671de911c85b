//! Forward pass and exact analytic backward pass of the pre-norm transformer.
//!
//! ```text
//! tokens → tok_emb + pos_emb → dropout
//!        → [ x + drop(Attn(LN1 x)) → x + drop(FFN(LN2 x)) ] × n_layers
//!        → LNf → logits = h · tok_embᵀ        (Mlm / Causal)
//!              → mean over valid positions    (Embedding)
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::arch::{ArchConfig, Head, NnError};
use super::dropout::{draw_mask, DropoutConfig};
use super::ops::{
    acc_at_b, acc_col_sum, add_bias, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul, matmul_bt,
    softmax_in_place, LnCache,
};
use super::params::{Gradients, ModelParams, Weights};
use crate::rng::rng_from;

/// One masked-LM target: flat row index `b * seq_len + t` and the original id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedToken {
    pub row: usize,
    pub original: u32,
}

/// A padded minibatch. Rows are right-padded; `valid` marks real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub tokens: Vec<u32>,
    pub valid: Vec<bool>,
    /// Masked-LM targets (empty for causal batches).
    pub masked: Vec<MaskedToken>,
    /// Causal only: restrict the loss to target positions marked true.
    pub loss_mask: Option<Vec<bool>>,
}

impl Batch {
    /// Right-pad sequences to the longest one.
    pub fn from_sequences(seqs: &[Vec<u32>], pad_id: u32) -> Self {
        let seq_len = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(seqs.len() * seq_len);
        let mut valid = Vec::with_capacity(seqs.len() * seq_len);
        for s in seqs {
            tokens.extend_from_slice(s);
            valid.extend(core::iter::repeat_n(true, s.len()));
            tokens.extend(core::iter::repeat_n(pad_id, seq_len - s.len()));
            valid.extend(core::iter::repeat_n(false, seq_len - s.len()));
        }
        Self { batch_size: seqs.len(), seq_len, tokens, valid, masked: Vec::new(), loss_mask: None }
    }

    pub fn rows(&self) -> usize {
        self.batch_size * self.seq_len
    }

    pub fn validate(&self, arch: &ArchConfig) -> Result<(), NnError> {
        let n = self.rows();
        if self.batch_size == 0 || self.seq_len == 0 {
            return Err(NnError::ShapeMismatch(format!("empty batch {}x{}", self.batch_size, self.seq_len)));
        }
        if self.tokens.len() != n || self.valid.len() != n {
            return Err(NnError::ShapeMismatch(format!("tokens/valid must have {n} entries")));
        }
        if self.seq_len > arch.max_seq_len {
            return Err(NnError::ShapeMismatch(format!(
                "sequence length {} exceeds max_seq_len {}",
                self.seq_len, arch.max_seq_len
            )));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t as usize >= arch.vocab_size) {
            return Err(NnError::ShapeMismatch(format!("token id {bad} outside vocabulary of {}", arch.vocab_size)));
        }
        for m in &self.masked {
            if m.row >= n || !self.valid[m.row] || m.original as usize >= arch.vocab_size {
                return Err(NnError::ShapeMismatch(format!("masked position {} is not a real token", m.row)));
            }
        }
        if let Some(lm) = &self.loss_mask {
            if lm.len() != n {
                return Err(NnError::ShapeMismatch(format!("loss mask must have {n} entries")));
            }
        }
        Ok(())
    }
}

struct LayerCache {
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities, indexed `((b * H + h) * T + i) * T + j`.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    mask_attn: Option<Vec<f64>>,
    ln2: LnCache,
    c: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    mask_ffn: Option<Vec<f64>>,
}

/// Activations saved by [`forward`] for [`backward`].
pub struct Cache {
    arch: ArchConfig,
    batch_size: usize,
    seq_len: usize,
    tokens: Vec<u32>,
    valid: Vec<bool>,
    mask_emb: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    final_states: Vec<f64>,
}

pub struct ForwardOutput {
    /// `B × T × vocab_size` logits, or `B × d_model` pooled states for the
    /// Embedding head.
    pub output: Vec<f64>,
    pub cache: Cache,
}

impl ForwardOutput {
    /// Logits at flat row `row` (Mlm / Causal heads only).
    pub fn logits_row(&self, row: usize) -> &[f64] {
        let v = self.cache.arch.vocab_size;
        &self.output[row * v..(row + 1) * v]
    }
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, s) in x.iter_mut().zip(m) {
            *v *= s;
        }
    }
}

fn allowed(head: Head, valid: &[bool], i: usize, j: usize) -> bool {
    valid[j] && (head != Head::Causal || j <= i)
}

pub fn forward(params: &ModelParams, batch: &Batch, dropout: &DropoutConfig) -> Result<ForwardOutput, NnError> {
    params.check()?;
    let arch = params.arch;
    batch.validate(&arch)?;
    if !dropout.is_valid() {
        return Err(NnError::ShapeMismatch(format!("keep probability {} outside (0, 1]", dropout.keep_prob)));
    }
    let w = &params.weights;
    let (bsz, t_len, d) = (batch.batch_size, batch.seq_len, arch.d_model);
    let n = bsz * t_len;
    let (nh, dh) = (arch.n_heads, arch.head_dim());
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut rng = rng_from(dropout.seed);
    let mut mask = |len: usize| dropout.is_active().then(|| draw_mask(len, dropout.keep_prob, &mut rng));

    let mut x = vec![0.0; n * d];
    for r in 0..n {
        let tok = batch.tokens[r] as usize;
        let pos = r % t_len;
        for c in 0..d {
            x[r * d + c] = w.tok_emb.data[tok * d + c] + w.pos_emb.data[pos * d + c];
        }
    }
    let mask_emb = mask(n * d);
    apply_mask(&mut x, &mask_emb);

    let mut layers = Vec::with_capacity(arch.n_layers);
    for lw in &w.layers {
        let (a, ln1) = layer_norm(&x, &lw.ln1_g.data, &lw.ln1_b.data);
        let q = matmul(&a, &lw.wq.data, n, d, d);
        let k = matmul(&a, &lw.wk.data, n, d, d);
        let v = matmul(&a, &lw.wv.data, n, d, d);
        let mut probs = vec![0.0; bsz * nh * t_len * t_len];
        let mut ctx = vec![0.0; n * d];
        let mut scores = vec![0.0; t_len];
        for b in 0..bsz {
            let valid = &batch.valid[b * t_len..(b + 1) * t_len];
            for h in 0..nh {
                let off = h * dh;
                for i in 0..t_len {
                    let qi = &q[(b * t_len + i) * d + off..(b * t_len + i) * d + off + dh];
                    let mut any = false;
                    for j in 0..t_len {
                        scores[j] = if allowed(arch.head, valid, i, j) {
                            any = true;
                            dot(qi, &k[(b * t_len + j) * d + off..(b * t_len + j) * d + off + dh]) * scale
                        } else {
                            f64::NEG_INFINITY
                        };
                    }
                    if !any {
                        continue;
                    }
                    softmax_in_place(&mut scores);
                    let prow = ((b * nh + h) * t_len + i) * t_len;
                    probs[prow..prow + t_len].copy_from_slice(&scores);
                    let out = &mut ctx[(b * t_len + i) * d + off..(b * t_len + i) * d + off + dh];
                    for (j, &p) in scores.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let vj = &v[(b * t_len + j) * d + off..(b * t_len + j) * d + off + dh];
                        for (o, vv) in out.iter_mut().zip(vj) {
                            *o += p * vv;
                        }
                    }
                }
            }
        }
        let mut attn_out = matmul(&ctx, &lw.wo.data, n, d, d);
        let mask_attn = mask(n * d);
        apply_mask(&mut attn_out, &mask_attn);
        for (xv, o) in x.iter_mut().zip(&attn_out) {
            *xv += o;
        }

        let (c, ln2) = layer_norm(&x, &lw.ln2_g.data, &lw.ln2_b.data);
        let mut pre = matmul(&c, &lw.w1.data, n, d, arch.d_ff);
        add_bias(&mut pre, &lw.b1.data);
        let act: Vec<f64> = pre.iter().map(|&z| gelu(z)).collect();
        let mut ffn_out = matmul(&act, &lw.w2.data, n, arch.d_ff, d);
        add_bias(&mut ffn_out, &lw.b2.data);
        let mask_ffn = mask(n * d);
        apply_mask(&mut ffn_out, &mask_ffn);
        for (xv, o) in x.iter_mut().zip(&ffn_out) {
            *xv += o;
        }
        layers.push(LayerCache { ln1, a, q, k, v, probs, ctx, mask_attn, ln2, c, pre, act, mask_ffn });
    }

    let (z, lnf) = layer_norm(&x, &w.lnf_g.data, &w.lnf_b.data);
    let output = match arch.head {
        Head::Mlm | Head::Causal => matmul_bt(&z, &w.tok_emb.data, n, d, arch.vocab_size),
        Head::Embedding => mean_pool(&z, &batch.valid, bsz, t_len, d),
    };
    let cache = Cache {
        arch,
        batch_size: bsz,
        seq_len: t_len,
        tokens: batch.tokens.clone(),
        valid: batch.valid.clone(),
        mask_emb,
        layers,
        lnf,
        final_states: z,
    };
    Ok(ForwardOutput { output, cache })
}

fn mean_pool(z: &[f64], valid: &[bool], bsz: usize, t_len: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; bsz * d];
    for b in 0..bsz {
        let count = valid[b * t_len..(b + 1) * t_len].iter().filter(|&&v| v).count();
        if count == 0 {
            continue;
        }
        for t in (0..t_len).filter(|&t| valid[b * t_len + t]) {
            for c in 0..d {
                out[b * d + c] += z[(b * t_len + t) * d + c];
            }
        }
        for c in 0..d {
            out[b * d + c] /= count as f64;
        }
    }
    out
}

/// Gradients of a scalar loss w.r.t. every parameter, given the gradient of
/// that loss w.r.t. the forward output.
pub fn backward(params: &ModelParams, cache: &Cache, d_output: &[f64]) -> Result<Gradients, NnError> {
    let arch = params.arch;
    if arch != cache.arch || cache.layers.len() != arch.n_layers {
        return Err(NnError::CacheMismatch);
    }
    let w = &params.weights;
    let (bsz, t_len, d) = (cache.batch_size, cache.seq_len, arch.d_model);
    let n = bsz * t_len;
    let expected = match arch.head {
        Head::Mlm | Head::Causal => n * arch.vocab_size,
        Head::Embedding => bsz * d,
    };
    if d_output.len() != expected {
        return Err(NnError::CacheMismatch);
    }
    let (nh, dh) = (arch.n_heads, arch.head_dim());
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut g = w.zeros_like();

    let dz = match arch.head {
        Head::Mlm | Head::Causal => {
            acc_at_b(&mut g.tok_emb.data, d_output, &cache.final_states, n, arch.vocab_size, d);
            matmul(d_output, &w.tok_emb.data, n, arch.vocab_size, d)
        }
        Head::Embedding => {
            let mut dz = vec![0.0; n * d];
            for b in 0..bsz {
                let count = cache.valid[b * t_len..(b + 1) * t_len].iter().filter(|&&v| v).count();
                for t in (0..t_len).filter(|&t| cache.valid[b * t_len + t]) {
                    for c in 0..d {
                        dz[(b * t_len + t) * d + c] = d_output[b * d + c] / count as f64;
                    }
                }
            }
            dz
        }
    };
    let mut dx = layer_norm_backward(&dz, &w.lnf_g.data, &cache.lnf, &mut g.lnf_g.data, &mut g.lnf_b.data);

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let lw = &w.layers[l];
        let gl = &mut g.layers[l];

        // feed-forward sublayer
        let mut d_ffn = dx.clone();
        apply_mask(&mut d_ffn, &lc.mask_ffn);
        acc_at_b(&mut gl.w2.data, &lc.act, &d_ffn, n, arch.d_ff, d);
        acc_col_sum(&mut gl.b2.data, &d_ffn);
        let d_act = matmul_bt(&d_ffn, &lw.w2.data, n, d, arch.d_ff);
        let d_pre: Vec<f64> = d_act.iter().zip(&lc.pre).map(|(g, &z)| g * gelu_grad(z)).collect();
        acc_at_b(&mut gl.w1.data, &lc.c, &d_pre, n, d, arch.d_ff);
        acc_col_sum(&mut gl.b1.data, &d_pre);
        let dc = matmul_bt(&d_pre, &lw.w1.data, n, arch.d_ff, d);
        let dx_ln2 = layer_norm_backward(&dc, &lw.ln2_g.data, &lc.ln2, &mut gl.ln2_g.data, &mut gl.ln2_b.data);
        for (a, b) in dx.iter_mut().zip(&dx_ln2) {
            *a += b;
        }

        // attention sublayer
        let mut d_attn = dx.clone();
        apply_mask(&mut d_attn, &lc.mask_attn);
        acc_at_b(&mut gl.wo.data, &lc.ctx, &d_attn, n, d, d);
        let d_ctx = matmul_bt(&d_attn, &lw.wo.data, n, d, d);
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut dp = vec![0.0; t_len];
        for b in 0..bsz {
            for h in 0..nh {
                let off = h * dh;
                for i in 0..t_len {
                    let prow = ((b * nh + h) * t_len + i) * t_len;
                    let p = &lc.probs[prow..prow + t_len];
                    let ri = (b * t_len + i) * d + off;
                    let dci = &d_ctx[ri..ri + dh];
                    let mut weighted = 0.0;
                    for j in 0..t_len {
                        if p[j] == 0.0 {
                            dp[j] = 0.0;
                            continue;
                        }
                        let rj = (b * t_len + j) * d + off;
                        dp[j] = dot(dci, &lc.v[rj..rj + dh]);
                        weighted += p[j] * dp[j];
                        for c in 0..dh {
                            dv[rj + c] += p[j] * dci[c];
                        }
                    }
                    for j in 0..t_len {
                        if p[j] == 0.0 {
                            continue;
                        }
                        let ds = p[j] * (dp[j] - weighted) * scale;
                        let rj = (b * t_len + j) * d + off;
                        for c in 0..dh {
                            dq[ri + c] += ds * lc.k[rj + c];
                            dk[rj + c] += ds * lc.q[ri + c];
                        }
                    }
                }
            }
        }
        acc_at_b(&mut gl.wq.data, &lc.a, &dq, n, d, d);
        acc_at_b(&mut gl.wk.data, &lc.a, &dk, n, d, d);
        acc_at_b(&mut gl.wv.data, &lc.a, &dv, n, d, d);
        let mut da = matmul_bt(&dq, &lw.wq.data, n, d, d);
        for (src, wt) in [(&dk, &lw.wk.data), (&dv, &lw.wv.data)] {
            for (a, b) in da.iter_mut().zip(matmul_bt(src, wt, n, d, d)) {
                *a += b;
            }
        }
        let dx_ln1 = layer_norm_backward(&da, &lw.ln1_g.data, &lc.ln1, &mut gl.ln1_g.data, &mut gl.ln1_b.data);
        for (a, b) in dx.iter_mut().zip(&dx_ln1) {
            *a += b;
        }
    }

    apply_mask(&mut dx, &cache.mask_emb);
    for r in 0..n {
        let tok = cache.tokens[r] as usize;
        let pos = r % t_len;
        for c in 0..d {
            g.tok_emb.data[tok * d + c] += dx[r * d + c];
            g.pos_emb.data[pos * d + c] += dx[r * d + c];
        }
    }
    Ok(g)
}

/// Mean-pooled final states for each sequence (bypasses the configured head).
pub fn embed(params: &ModelParams, seqs: &[Vec<u32>]) -> Result<Vec<Vec<f64>>, NnError> {
    let p = params.with_head(Head::Embedding);
    let batch = Batch::from_sequences(seqs, crate::tokenizer::Special::Pad.id());
    let out = forward(&p, &batch, &DropoutConfig::eval())?;
    Ok(out.output.chunks(params.arch.d_model).map(<[f64]>::to_vec).collect())
}

impl Weights {
    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Weights) {
        for (a, b) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += alpha * y;
            }
        }
    }
}
