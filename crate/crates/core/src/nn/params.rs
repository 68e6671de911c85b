use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::arch::{ArchConfig, Head, NnError};
use crate::rng::rng_from;

/// Dense row-major array of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("std is positive");
        Self { shape: shape.to_vec(), data: (0..shape.iter().product()).map(|_| dist.sample(rng)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every learnable array. The output projection is tied to `tok_emb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub layers: Vec<LayerWeights>,
    pub lnf_g: Tensor,
    pub lnf_b: Tensor,
}

/// Gradients have exactly the layout of the weights they differentiate.
pub type Gradients = Weights;

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2)
    };
}

impl Weights {
    pub fn zeros(arch: &ArchConfig) -> Self {
        let (d, f) = (arch.d_model, arch.d_ff);
        let layer = LayerWeights {
            ln1_g: Tensor::zeros(&[d]),
            ln1_b: Tensor::zeros(&[d]),
            wq: Tensor::zeros(&[d, d]),
            wk: Tensor::zeros(&[d, d]),
            wv: Tensor::zeros(&[d, d]),
            wo: Tensor::zeros(&[d, d]),
            ln2_g: Tensor::zeros(&[d]),
            ln2_b: Tensor::zeros(&[d]),
            w1: Tensor::zeros(&[d, f]),
            b1: Tensor::zeros(&[f]),
            w2: Tensor::zeros(&[f, d]),
            b2: Tensor::zeros(&[d]),
        };
        Self {
            tok_emb: Tensor::zeros(&[arch.vocab_size, d]),
            pos_emb: Tensor::zeros(&[arch.max_seq_len, d]),
            layers: vec![layer; arch.n_layers],
            lnf_g: Tensor::zeros(&[d]),
            lnf_b: Tensor::zeros(&[d]),
        }
    }

    /// Arrays in a fixed canonical order, with stable names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![(String::from("tok_emb"), &self.tok_emb), (String::from("pos_emb"), &self.pos_emb)];
        for (i, l) in self.layers.iter().enumerate() {
            macro_rules! push {
                ($($f:ident),*) => { $( out.push((format!("layers.{i}.{}", stringify!($f)), &l.$f)); )* };
            }
            layer_fields!(push);
        }
        out.push((String::from("lnf_g"), &self.lnf_g));
        out.push((String::from("lnf_b"), &self.lnf_b));
        out
    }

    /// Mutable arrays in the same order as [`Weights::named`].
    pub fn arrays_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in self.layers.iter_mut() {
            macro_rules! push {
                ($($f:ident),*) => { $( out.push(&mut l.$f); )* };
            }
            layer_fields!(push);
        }
        out.push(&mut self.lnf_g);
        out.push(&mut self.lnf_b);
        out
    }

    pub fn arrays(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_values(&self) -> usize {
        self.arrays().iter().map(|t| t.len()).sum()
    }

    pub fn same_shape(&self, other: &Weights) -> bool {
        let (a, b) = (self.arrays(), other.arrays());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape == y.shape)
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.arrays_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub weights: Weights,
}

impl ModelParams {
    pub fn zeros(arch: ArchConfig) -> Result<Self, NnError> {
        arch.validate()?;
        Ok(Self { weights: Weights::zeros(&arch), arch })
    }

    /// Seeded random initialization. Layer-norm gains start at one; residual
    /// output projections are scaled down by the depth.
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = rng_from(seed);
        let (d, f) = (arch.d_model, arch.d_ff);
        let proj = 1.0 / libm::sqrt(d as f64);
        let resid = proj / libm::sqrt(2.0 * arch.n_layers as f64);
        let tok_emb = Tensor::normal(&[arch.vocab_size, d], 0.1, &mut rng);
        let pos_emb = Tensor::normal(&[arch.max_seq_len, d], 0.1, &mut rng);
        let layers = (0..arch.n_layers)
            .map(|_| LayerWeights {
                ln1_g: Tensor::filled(&[d], 1.0),
                ln1_b: Tensor::zeros(&[d]),
                wq: Tensor::normal(&[d, d], proj, &mut rng),
                wk: Tensor::normal(&[d, d], proj, &mut rng),
                wv: Tensor::normal(&[d, d], proj, &mut rng),
                wo: Tensor::normal(&[d, d], resid, &mut rng),
                ln2_g: Tensor::filled(&[d], 1.0),
                ln2_b: Tensor::zeros(&[d]),
                w1: Tensor::normal(&[d, f], proj, &mut rng),
                b1: Tensor::zeros(&[f]),
                w2: Tensor::normal(&[f, d], resid / 2.0, &mut rng),
                b2: Tensor::zeros(&[d]),
            })
            .collect();
        let weights =
            Weights { tok_emb, pos_emb, layers, lnf_g: Tensor::filled(&[d], 1.0), lnf_b: Tensor::zeros(&[d]) };
        Ok(Self { arch, weights })
    }

    /// Same weights, different output head.
    pub fn with_head(&self, head: Head) -> Self {
        Self { arch: self.arch.with_head(head), weights: self.weights.clone() }
    }

    /// Check the weights agree with the architecture descriptor.
    pub fn check(&self) -> Result<(), NnError> {
        self.arch.validate()?;
        let expected = Weights::zeros(&self.arch);
        if !expected.same_shape(&self.weights) {
            return Err(NnError::ShapeMismatch(String::from("weights do not match the architecture")));
        }
        Ok(())
    }
}
