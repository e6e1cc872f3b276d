use crate::model::TransformerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

/// One AdamW update on a flat slice. `t` is the 1-based step count used for
/// bias correction. Decay is decoupled and scaled by `lr`.
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    hp: &AdamHyper,
    decay: bool,
) {
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        let mut upd = mhat / (vhat.sqrt() + hp.epsilon);
        if decay {
            upd += hp.weight_decay * param[i];
        }
        param[i] -= lr * upd;
    }
}

/// First and second moments for every tensor, in `named_tensors` order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(p: &TransformerParams) -> Self {
        let zeros: Vec<Vec<f64>> = p.named_tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn apply(&mut self, p: &mut TransformerParams, g: &TransformerParams, lr: f64, hp: &AdamHyper) {
        self.step += 1;
        let grads = g.named_tensors();
        for (i, (name, t)) in p.named_tensors_mut().into_iter().enumerate() {
            let decay = TransformerParams::decays(&name);
            adamw_update(&mut t.data, &grads[i].1.data, &mut self.m[i], &mut self.v[i], self.step, lr, hp, decay);
        }
    }
}

/// Learning rate for 0-based `step`: linear warmup to `peak` over `warmup`
/// steps, then linear decay reaching 0 at `total`.
pub fn learning_rate(step: u64, peak: f64, warmup: u64, total: u64) -> f64 {
    if step < warmup {
        peak * (step + 1) as f64 / warmup as f64
    } else if step >= total {
        0.0
    } else {
        peak * (total - step) as f64 / (total - warmup) as f64
    }
}

pub fn global_norm(g: &TransformerParams) -> f64 {
    g.named_tensors()
        .iter()
        .flat_map(|(_, t)| t.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `g` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(g: &mut TransformerParams, max_norm: f64) -> f64 {
    let norm = global_norm(g);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for (_, t) in g.named_tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
