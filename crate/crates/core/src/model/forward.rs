use rand::Rng;

use super::ops::{self, LnCache};
use super::{ModelError, TransformerParams};
use crate::sampler::MaskedBatch;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    /// Dropout active, masks drawn from the given seed.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub ln1: LnCache,
    pub n1: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// Softmax output `[rows][heads][cols][cols]`, before dropout.
    pub probs: Vec<f64>,
    pub attn_drop: Option<Vec<f64>>,
    pub ctx: Vec<f64>,
    pub ln2: LnCache,
    pub n2: Vec<f64>,
    pub pre_act: Vec<f64>,
    pub act: Vec<f64>,
    pub ffn_drop: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub rows: usize,
    pub cols: usize,
    /// `num_layers + 1` entries of `[rows x cols x hidden]`. Entry 0 is the
    /// embedding sum, entry `l` the output of block `l`; the last entry has
    /// the final layer norm applied.
    pub hidden_states: Vec<Vec<f64>>,
    /// `[rows x cols x vocab_size]`.
    pub mlm_logits: Vec<f64>,
    pub cwp_logit: Vec<f64>,
    pub dup_logit: Vec<f64>,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) final_ln: LnCache,
}

impl ForwardOutput {
    /// Attention weights of `layer`, laid out `[rows][heads][cols][cols]`.
    pub fn attention(&self, layer: usize) -> &[f64] {
        &self.layers[layer].probs
    }
}

pub(crate) fn check_batch(p: &TransformerParams, batch: &MaskedBatch) -> Result<(), ModelError> {
    let n = batch.rows * batch.cols;
    let bad = |m: String| Err(ModelError::ShapeMismatch(m));
    if batch.input_ids.len() != n
        || batch.segment_ids.len() != n
        || batch.attention_mask.len() != n
        || batch.mlm_targets.len() != n
        || batch.task_labels.len() != batch.rows
        || batch.task_kinds.len() != batch.rows
    {
        return bad(format!("batch buffers disagree with {} x {}", batch.rows, batch.cols));
    }
    if batch.cols == 0 || batch.cols > p.cfg.max_len {
        return bad(format!("sequence length {} outside 1..={}", batch.cols, p.cfg.max_len));
    }
    let k = p.cfg.vocab_size;
    if let Some(id) = batch.input_ids.iter().find(|&&id| id as usize >= k) {
        return bad(format!("token id {id} >= vocab_size {k}"));
    }
    if let Some(t) = batch.mlm_targets.iter().find(|&&t| t >= k as i32 || t < -1) {
        return bad(format!("mlm target {t} outside vocabulary"));
    }
    if batch.segment_ids.iter().any(|&s| s > 1) {
        return bad("segment id above 1".into());
    }
    Ok(())
}

fn dropout_mask(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

/// Encodes `batch`. Pad keys get exactly zero attention weight, so pad
/// columns never influence real positions.
pub fn forward(p: &TransformerParams, batch: &MaskedBatch, mode: Mode) -> Result<ForwardOutput, ModelError> {
    check_batch(p, batch)?;
    let cfg = &p.cfg;
    let (b, t, h) = (batch.rows, batch.cols, cfg.hidden_dim);
    let (heads, dh, f) = (cfg.num_heads, cfg.head_dim(), cfg.ffn_dim);
    let m = b * t;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut rng = match mode {
        Mode::Train { dropout_seed } if cfg.dropout_rate > 0.0 => {
            Some(seeds::rng(dropout_seed, seeds::tag::DROPOUT, 0))
        }
        _ => None,
    };

    let mut x = vec![0.0; m * h];
    for r in 0..m {
        let id = batch.input_ids[r] as usize;
        let pos = r % t;
        let seg = batch.segment_ids[r] as usize;
        let row = &mut x[r * h..(r + 1) * h];
        for c in 0..h {
            row[c] = p.tok_emb.data[id * h + c] + p.pos_emb.data[pos * h + c] + p.seg_emb.data[seg * h + c];
        }
    }
    let mut hidden_states = vec![x.clone()];
    let mut caches = Vec::with_capacity(cfg.num_layers);

    for lp in &p.layers {
        let (n1, ln1) = ops::layer_norm(&x, &lp.ln1_gain.data, &lp.ln1_bias.data);
        let mut q = ops::matmul(&n1, &lp.wq.data, m, h, h);
        ops::add_bias(&mut q, &lp.bq.data);
        let mut k = ops::matmul(&n1, &lp.wk.data, m, h, h);
        ops::add_bias(&mut k, &lp.bk.data);
        let mut v = ops::matmul(&n1, &lp.wv.data, m, h, h);
        ops::add_bias(&mut v, &lp.bv.data);

        let mut probs = vec![0.0; b * heads * t * t];
        for bi in 0..b {
            let keep: Vec<bool> = batch.attention_mask[bi * t..(bi + 1) * t].iter().map(|&a| a == 1).collect();
            for hd in 0..heads {
                for i in 0..t {
                    let qi = &q[(bi * t + i) * h + hd * dh..][..dh];
                    let row = &mut probs[((bi * heads + hd) * t + i) * t..][..t];
                    for (j, s) in row.iter_mut().enumerate() {
                        if keep[j] {
                            *s = ops::dot(qi, &k[(bi * t + j) * h + hd * dh..][..dh]) * scale;
                        }
                    }
                    ops::masked_softmax(row, &keep);
                }
            }
        }
        let attn_drop = rng.as_mut().map(|r| dropout_mask(probs.len(), cfg.dropout_rate, r));

        let mut ctx = vec![0.0; m * h];
        for bi in 0..b {
            for hd in 0..heads {
                for i in 0..t {
                    let base = ((bi * heads + hd) * t + i) * t;
                    let out = &mut ctx[(bi * t + i) * h + hd * dh..][..dh];
                    for j in 0..t {
                        let mut w = probs[base + j];
                        if let Some(d) = &attn_drop {
                            w *= d[base + j];
                        }
                        if w == 0.0 {
                            continue;
                        }
                        for (o, vv) in out.iter_mut().zip(&v[(bi * t + j) * h + hd * dh..][..dh]) {
                            *o += w * vv;
                        }
                    }
                }
            }
        }
        let mut attn_out = ops::matmul(&ctx, &lp.wo.data, m, h, h);
        ops::add_bias(&mut attn_out, &lp.bo.data);
        for (xv, a) in x.iter_mut().zip(&attn_out) {
            *xv += a;
        }

        let (n2, ln2) = ops::layer_norm(&x, &lp.ln2_gain.data, &lp.ln2_bias.data);
        let mut pre_act = ops::matmul(&n2, &lp.w1.data, m, h, f);
        ops::add_bias(&mut pre_act, &lp.b1.data);
        let act: Vec<f64> = pre_act.iter().map(|&z| ops::gelu(z)).collect();
        let mut ffn = ops::matmul(&act, &lp.w2.data, m, f, h);
        ops::add_bias(&mut ffn, &lp.b2.data);
        let ffn_drop = rng.as_mut().map(|r| dropout_mask(ffn.len(), cfg.dropout_rate, r));
        if let Some(d) = &ffn_drop {
            for (y, dv) in ffn.iter_mut().zip(d) {
                *y *= dv;
            }
        }
        for (xv, y) in x.iter_mut().zip(&ffn) {
            *xv += y;
        }

        caches.push(LayerCache { ln1, n1, q, k, v, probs, attn_drop, ctx, ln2, n2, pre_act, act, ffn_drop });
        hidden_states.push(x.clone());
    }

    let (normed, final_ln) = ops::layer_norm(&x, &p.final_ln_gain.data, &p.final_ln_bias.data);
    let kv = cfg.vocab_size;
    let mut mlm_logits = ops::matmul_bt(&normed, &p.tok_emb.data, m, h, kv);
    ops::add_bias(&mut mlm_logits, &p.mlm_bias.data);
    let cls = |bi: usize| &normed[bi * t * h..bi * t * h + h];
    let cwp_logit = (0..b).map(|bi| ops::dot(cls(bi), &p.cwp_weight.data) + p.cwp_bias.data[0]).collect();
    let dup_logit = (0..b).map(|bi| ops::dot(cls(bi), &p.dup_weight.data) + p.dup_bias.data[0]).collect();
    *hidden_states.last_mut().unwrap() = normed;

    Ok(ForwardOutput {
        rows: b,
        cols: t,
        hidden_states,
        mlm_logits,
        cwp_logit,
        dup_logit,
        layers: caches,
        final_ln,
    })
}
