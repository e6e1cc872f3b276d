use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError};
use crate::seeds;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
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

    fn normal(shape: &[usize], rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, INIT_STD).expect("valid std");
        let n = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let v: f64 = dist.sample(rng);
            if v.abs() <= 2.0 * INIT_STD {
                data.push(v);
            }
        }
        Self { shape: shape.to_vec(), data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// One encoder block. Projection weights are stored `[in x out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub cfg: ModelConfig,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub seg_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub final_ln_gain: Tensor,
    pub final_ln_bias: Tensor,
    pub mlm_bias: Tensor,
    pub cwp_weight: Tensor,
    pub cwp_bias: Tensor,
    pub dup_weight: Tensor,
    pub dup_bias: Tensor,
}

impl LayerParams {
    fn build(h: usize, f: usize, mut mat: impl FnMut(&[usize]) -> Tensor) -> Self {
        Self {
            ln1_gain: Tensor::filled(&[h], 1.0),
            ln1_bias: Tensor::zeros(&[h]),
            wq: mat(&[h, h]),
            bq: Tensor::zeros(&[h]),
            wk: mat(&[h, h]),
            bk: Tensor::zeros(&[h]),
            wv: mat(&[h, h]),
            bv: Tensor::zeros(&[h]),
            wo: mat(&[h, h]),
            bo: Tensor::zeros(&[h]),
            ln2_gain: Tensor::filled(&[h], 1.0),
            ln2_bias: Tensor::zeros(&[h]),
            w1: mat(&[h, f]),
            b1: Tensor::zeros(&[f]),
            w2: mat(&[f, h]),
            b2: Tensor::zeros(&[h]),
        }
    }

    fn named(&self) -> [(&'static str, &Tensor); 16] {
        [
            ("ln1.gain", &self.ln1_gain),
            ("ln1.bias", &self.ln1_bias),
            ("attn_q.weight", &self.wq),
            ("attn_q.bias", &self.bq),
            ("attn_k.weight", &self.wk),
            ("attn_k.bias", &self.bk),
            ("attn_v.weight", &self.wv),
            ("attn_v.bias", &self.bv),
            ("attn_out.weight", &self.wo),
            ("attn_out.bias", &self.bo),
            ("ln2.gain", &self.ln2_gain),
            ("ln2.bias", &self.ln2_bias),
            ("ffn_in.weight", &self.w1),
            ("ffn_in.bias", &self.b1),
            ("ffn_out.weight", &self.w2),
            ("ffn_out.bias", &self.b2),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 16] {
        [
            ("ln1.gain", &mut self.ln1_gain),
            ("ln1.bias", &mut self.ln1_bias),
            ("attn_q.weight", &mut self.wq),
            ("attn_q.bias", &mut self.bq),
            ("attn_k.weight", &mut self.wk),
            ("attn_k.bias", &mut self.bk),
            ("attn_v.weight", &mut self.wv),
            ("attn_v.bias", &mut self.bv),
            ("attn_out.weight", &mut self.wo),
            ("attn_out.bias", &mut self.bo),
            ("ln2.gain", &mut self.ln2_gain),
            ("ln2.bias", &mut self.ln2_bias),
            ("ffn_in.weight", &mut self.w1),
            ("ffn_in.bias", &mut self.b1),
            ("ffn_out.weight", &mut self.w2),
            ("ffn_out.bias", &mut self.b2),
        ]
    }
}

impl TransformerParams {
    fn build(cfg: &ModelConfig, mut mat: impl FnMut(&[usize]) -> Tensor) -> Self {
        let (k, h, f) = (cfg.vocab_size, cfg.hidden_dim, cfg.ffn_dim);
        let tok_emb = mat(&[k, h]);
        let pos_emb = mat(&[cfg.max_len, h]);
        let seg_emb = mat(&[2, h]);
        let layers = (0..cfg.num_layers).map(|_| LayerParams::build(h, f, &mut mat)).collect();
        let cwp_weight = mat(&[h]);
        let dup_weight = mat(&[h]);
        Self {
            cfg: cfg.clone(),
            tok_emb,
            pos_emb,
            seg_emb,
            layers,
            final_ln_gain: Tensor::filled(&[h], 1.0),
            final_ln_bias: Tensor::zeros(&[h]),
            mlm_bias: Tensor::zeros(&[k]),
            cwp_weight,
            cwp_bias: Tensor::zeros(&[1]),
            dup_weight,
            dup_bias: Tensor::zeros(&[1]),
        }
    }

    /// Same shapes, every entry zero (the gradient accumulator layout).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Every tensor with a stable name, in checkpoint order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("tok_emb.weight".into(), &self.tok_emb),
            ("pos_emb.weight".into(), &self.pos_emb),
            ("seg_emb.weight".into(), &self.seg_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.named().into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.extend([
            ("final_ln.gain".to_string(), &self.final_ln_gain),
            ("final_ln.bias".to_string(), &self.final_ln_bias),
            ("mlm.bias".to_string(), &self.mlm_bias),
            ("cwp.weight".to_string(), &self.cwp_weight),
            ("cwp.bias".to_string(), &self.cwp_bias),
            ("dup.weight".to_string(), &self.dup_weight),
            ("dup.bias".to_string(), &self.dup_bias),
        ]);
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("tok_emb.weight".into(), &mut self.tok_emb),
            ("pos_emb.weight".into(), &mut self.pos_emb),
            ("seg_emb.weight".into(), &mut self.seg_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(l.named_mut().into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.extend([
            ("final_ln.gain".to_string(), &mut self.final_ln_gain),
            ("final_ln.bias".to_string(), &mut self.final_ln_bias),
            ("mlm.bias".to_string(), &mut self.mlm_bias),
            ("cwp.weight".to_string(), &mut self.cwp_weight),
            ("cwp.bias".to_string(), &mut self.cwp_bias),
            ("dup.weight".to_string(), &mut self.dup_weight),
            ("dup.bias".to_string(), &mut self.dup_bias),
        ]);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    /// Whether weight decay applies: weight matrices and embeddings only.
    pub fn decays(name: &str) -> bool {
        name.ends_with(".weight")
    }
}

/// Truncated-normal (±2σ, σ = 0.02) weights, unit gains, zero biases.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<TransformerParams, ModelError> {
    cfg.validate()?;
    let mut rng = seeds::rng(seed, seeds::tag::INIT, 0);
    Ok(TransformerParams::build(cfg, |shape| Tensor::normal(shape, &mut rng)))
}
