use super::forward::{forward, ForwardOutput, Mode};
use super::loss::{task_loss, LossBreakdown};
use super::ops;
use super::{ModelError, TaskSet, TransformerParams};
use crate::sampler::{MaskedBatch, PairTask, IGNORE_TARGET};

/// Gradient of the combined loss (inference mode, no dropout).
pub fn backward(p: &TransformerParams, batch: &MaskedBatch, tasks: TaskSet) -> Result<TransformerParams, ModelError> {
    loss_and_grad(p, batch, tasks, Mode::Inference).map(|(_, g)| g)
}

/// Forward pass, combined loss and its exact gradient for every tensor.
pub fn loss_and_grad(
    p: &TransformerParams,
    batch: &MaskedBatch,
    tasks: TaskSet,
    mode: Mode,
) -> Result<(LossBreakdown, TransformerParams), ModelError> {
    let out = forward(p, batch, mode)?;
    let lb = task_loss(&out, batch, tasks);
    let grads = grad_from_output(p, batch, tasks, &out, &lb);
    Ok((lb, grads))
}

fn grad_from_output(
    p: &TransformerParams,
    batch: &MaskedBatch,
    tasks: TaskSet,
    out: &ForwardOutput,
    lb: &LossBreakdown,
) -> TransformerParams {
    let cfg = &p.cfg;
    let (b, t, h) = (out.rows, out.cols, cfg.hidden_dim);
    let (heads, dh, f, kv) = (cfg.num_heads, cfg.head_dim(), cfg.ffn_dim, cfg.vocab_size);
    let m = b * t;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut g = p.zeros_like();
    let normed = out.hidden_states.last().expect("at least the embedding layer");

    let mut dnormed = vec![0.0; m * h];
    if tasks.mlm && lb.mlm_count > 0 {
        let inv = 1.0 / lb.mlm_count as f64;
        let mut dlogits = vec![0.0; m * kv];
        for (pos, &target) in batch.mlm_targets.iter().enumerate() {
            if target == IGNORE_TARGET {
                continue;
            }
            let row = &out.mlm_logits[pos * kv..(pos + 1) * kv];
            let lse = ops::log_sum_exp(row);
            let d = &mut dlogits[pos * kv..(pos + 1) * kv];
            for (dv, &z) in d.iter_mut().zip(row) {
                *dv = (z - lse).exp() * inv;
            }
            d[target as usize] -= inv;
        }
        dnormed = ops::matmul(&dlogits, &p.tok_emb.data, m, kv, h);
        ops::matmul_at_acc(&dlogits, normed, &mut g.tok_emb.data, m, kv, h);
        ops::bias_grad_acc(&dlogits, &mut g.mlm_bias.data);
    }
    let heads_spec = [
        (tasks.cwp, PairTask::Cwp, lb.cwp_count, &out.cwp_logit, &p.cwp_weight.data),
        (tasks.dup, PairTask::Dup, lb.dup_count, &out.dup_logit, &p.dup_weight.data),
    ];
    for (enabled, kind, count, logits, w) in heads_spec {
        if !enabled || count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        for r in 0..b {
            if batch.task_kinds[r] != kind {
                continue;
            }
            let y = if batch.task_labels[r] { 1.0 } else { 0.0 };
            let dz = (ops::sigmoid(logits[r]) - y) * inv;
            let cls = r * t * h;
            let (gw, gb) = match kind {
                PairTask::Cwp => (&mut g.cwp_weight.data, &mut g.cwp_bias.data),
                PairTask::Dup => (&mut g.dup_weight.data, &mut g.dup_bias.data),
            };
            for c in 0..h {
                gw[c] += dz * normed[cls + c];
                dnormed[cls + c] += dz * w[c];
            }
            gb[0] += dz;
        }
    }

    let mut dx = ops::layer_norm_backward(
        &dnormed,
        &out.final_ln,
        &p.final_ln_gain.data,
        &mut g.final_ln_gain.data,
        &mut g.final_ln_bias.data,
    );

    for (li, (lp, cache)) in p.layers.iter().zip(&out.layers).enumerate().rev() {
        let lg = &mut g.layers[li];

        // Feed-forward sublayer.
        let mut dffn = dx.clone();
        if let Some(d) = &cache.ffn_drop {
            for (v, dv) in dffn.iter_mut().zip(d) {
                *v *= dv;
            }
        }
        ops::matmul_at_acc(&cache.act, &dffn, &mut lg.w2.data, m, f, h);
        ops::bias_grad_acc(&dffn, &mut lg.b2.data);
        let mut dpre = ops::matmul_bt(&dffn, &lp.w2.data, m, h, f);
        for (d, &z) in dpre.iter_mut().zip(&cache.pre_act) {
            *d *= ops::gelu_grad(z);
        }
        ops::matmul_at_acc(&cache.n2, &dpre, &mut lg.w1.data, m, h, f);
        ops::bias_grad_acc(&dpre, &mut lg.b1.data);
        let dn2 = ops::matmul_bt(&dpre, &lp.w1.data, m, f, h);
        let dres = ops::layer_norm_backward(&dn2, &cache.ln2, &lp.ln2_gain.data, &mut lg.ln2_gain.data, &mut lg.ln2_bias.data);
        for (a, r) in dx.iter_mut().zip(&dres) {
            *a += r;
        }

        // Attention sublayer.
        ops::matmul_at_acc(&cache.ctx, &dx, &mut lg.wo.data, m, h, h);
        ops::bias_grad_acc(&dx, &mut lg.bo.data);
        let dctx = ops::matmul_bt(&dx, &lp.wo.data, m, h, h);
        let mut dq = vec![0.0; m * h];
        let mut dk = vec![0.0; m * h];
        let mut dv = vec![0.0; m * h];
        let mut dp = vec![0.0; t];
        for bi in 0..b {
            for hd in 0..heads {
                for i in 0..t {
                    let base = ((bi * heads + hd) * t + i) * t;
                    let probs = &cache.probs[base..base + t];
                    let dci = &dctx[(bi * t + i) * h + hd * dh..][..dh];
                    for j in 0..t {
                        if probs[j] == 0.0 {
                            dp[j] = 0.0;
                            continue;
                        }
                        let drop = cache.attn_drop.as_ref().map_or(1.0, |d| d[base + j]);
                        let vj = (bi * t + j) * h + hd * dh;
                        dp[j] = ops::dot(dci, &cache.v[vj..vj + dh]) * drop;
                        let w = probs[j] * drop;
                        if w != 0.0 {
                            for (o, c) in dv[vj..vj + dh].iter_mut().zip(dci) {
                                *o += w * c;
                            }
                        }
                    }
                    let inner: f64 = probs.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    let qi = (bi * t + i) * h + hd * dh;
                    for j in 0..t {
                        if probs[j] == 0.0 {
                            continue;
                        }
                        let ds = probs[j] * (dp[j] - inner) * scale;
                        let kj = (bi * t + j) * h + hd * dh;
                        for d in 0..dh {
                            dq[qi + d] += ds * cache.k[kj + d];
                            dk[kj + d] += ds * cache.q[qi + d];
                        }
                    }
                }
            }
        }
        let mut dn1 = vec![0.0; m * h];
        for (dproj, w, bias, gw) in [
            (&dq, &lp.wq, &mut lg.bq, &mut lg.wq),
            (&dk, &lp.wk, &mut lg.bk, &mut lg.wk),
            (&dv, &lp.wv, &mut lg.bv, &mut lg.wv),
        ] {
            ops::matmul_at_acc(&cache.n1, dproj, &mut gw.data, m, h, h);
            ops::bias_grad_acc(dproj, &mut bias.data);
            for (a, v) in dn1.iter_mut().zip(ops::matmul_bt(dproj, &w.data, m, h, h)) {
                *a += v;
            }
        }
        let dres = ops::layer_norm_backward(&dn1, &cache.ln1, &lp.ln1_gain.data, &mut lg.ln1_gain.data, &mut lg.ln1_bias.data);
        for (a, r) in dx.iter_mut().zip(&dres) {
            *a += r;
        }
    }

    for r in 0..m {
        let id = batch.input_ids[r] as usize;
        let pos = r % t;
        let seg = batch.segment_ids[r] as usize;
        let d = &dx[r * h..(r + 1) * h];
        for c in 0..h {
            g.tok_emb.data[id * h + c] += d[c];
            g.pos_emb.data[pos * h + c] += d[c];
            g.seg_emb.data[seg * h + c] += d[c];
        }
    }
    g
}
