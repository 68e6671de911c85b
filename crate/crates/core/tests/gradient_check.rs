use medqa_core::nn::{
    backward, forward, loss_causal, loss_mlm, ArchConfig, Batch, DropoutConfig, Head, MaskedToken, ModelParams,
};
use medqa_core::rng::rng_from;
use rand::Rng;

fn loss_and_grad(p: &ModelParams, b: &Batch, drop: &DropoutConfig, probe: &[f64]) -> (f64, Vec<f64>) {
    let out = forward(p, b, drop).unwrap();
    match p.arch.head {
        Head::Causal => {
            let l = loss_causal(&out.output, b, p.arch.vocab_size).unwrap();
            (l.loss, l.grad)
        }
        Head::Mlm => {
            let l = loss_mlm(&out.output, b, p.arch.vocab_size).unwrap();
            (l.loss, l.grad)
        }
        Head::Embedding => (out.output.iter().zip(probe).map(|(a, b)| a * b).sum(), probe.to_vec()),
    }
}

/// Random small model, batch with padding, a causal loss mask and MLM targets.
fn case(seed: u64) -> (ModelParams, Batch, DropoutConfig, Vec<f64>) {
    let mut r = rng_from(seed);
    let head = [Head::Causal, Head::Mlm, Head::Embedding][seed as usize % 3];
    let arch = ArchConfig {
        vocab_size: r.gen_range(5..20),
        d_model: [8, 12, 16][r.gen_range(0..3)],
        n_heads: [1, 2, 4][r.gen_range(0..3)],
        n_layers: r.gen_range(1..=2),
        d_ff: r.gen_range(4..32),
        max_seq_len: 8,
        head,
    };
    let p = ModelParams::init(arch, seed).unwrap();
    let seqs: Vec<Vec<u32>> = (0..r.gen_range(1..4))
        .map(|_| (0..r.gen_range(2..=8)).map(|_| r.gen_range(0..arch.vocab_size as u32)).collect())
        .collect();
    let mut b = Batch::from_sequences(&seqs, 0);
    b.masked = vec![MaskedToken { row: 0, original: seqs[0][0] }, MaskedToken { row: 1, original: seqs[0][1] }];
    if r.gen_bool(0.5) {
        let mut mask: Vec<bool> = (0..b.tokens.len()).map(|_| r.gen_bool(0.6)).collect();
        mask[1] = true;
        b.loss_mask = Some(mask);
    }
    let drop = if r.gen_bool(0.5) { DropoutConfig::train(0.8, seed) } else { DropoutConfig::eval() };
    let probe = (0..seqs.len() * arch.d_model).map(|_| r.gen_range(-1.0..1.0)).collect();
    (p, b, drop, probe)
}

#[test]
fn analytic_gradients_match_central_differences() {
    let h = 1e-4;
    for seed in 0..12 {
        let (p, b, drop, probe) = case(seed);
        let (_, d_out) = loss_and_grad(&p, &b, &drop, &probe);
        let out = forward(&p, &b, &drop).unwrap();
        let g = backward(&p, &out.cache, &d_out).unwrap();
        let mut q = p.clone();
        for a in 0..p.weights.arrays().len() {
            let (mut diff, mut scale) = (0.0f64, 0.0f64);
            for i in 0..p.weights.arrays()[a].data.len() {
                let x = p.weights.arrays()[a].data[i];
                q.weights.arrays_mut()[a].data[i] = x + h;
                let up = loss_and_grad(&q, &b, &drop, &probe).0;
                q.weights.arrays_mut()[a].data[i] = x - h;
                let down = loss_and_grad(&q, &b, &drop, &probe).0;
                q.weights.arrays_mut()[a].data[i] = x;
                let fd = (up - down) / (2.0 * h);
                diff = diff.max((fd - g.arrays()[a].data[i]).abs());
                scale = scale.max(fd.abs());
            }
            let rel = diff / scale.max(1e-8);
            assert!(rel < 1e-4, "seed {seed} ({:?}), array {a}: {rel:e}", p.arch);
        }
    }
}
