//! Skip-gram with negative sampling over whole instructions: each normalized
//! instruction is one word and each function one document. Serves as the
//! structure-blind comparator for the transformer embeddings.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::DisasmCorpus;
use crate::model::sigmoid;
use crate::seeds;
use crate::tokenizer::tokenize_normalized;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 64, window: 2, negatives: 5, epochs: 20, learning_rate: 0.025, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SkipGramModel {
    pub words: Vec<String>,
    index: HashMap<String, usize>,
    /// Input (word) vectors, row-major `words.len() × dim`.
    pub vectors: Vec<f64>,
    pub dim: usize,
}

impl SkipGramModel {
    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index.get(key).map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Zero vector for unseen keys, which cosine scoring treats as maximally distant.
    pub fn embed(&self, key: &str) -> Vec<f64> {
        self.get(key).map_or_else(|| vec![0.0; self.dim], <[f64]>::to_vec)
    }
}

/// Normalized instruction keys per function, blocks in corpus order.
pub fn documents(c: &DisasmCorpus) -> Vec<Vec<String>> {
    c.functions()
        .iter()
        .map(|f| f.instructions().filter_map(|i| tokenize_normalized(&i.text).ok()).map(|s| s.key()).collect())
        .filter(|d: &Vec<String>| !d.is_empty())
        .collect()
}

/// (center, context) position pairs within `window` of each other.
pub fn positive_pairs(len: usize, window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..len {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(len.saturating_sub(1));
        out.extend((lo..=hi).filter(|&j| j != i).map(|j| (i, j)));
    }
    out
}

pub fn train_skipgram_baseline(c: &DisasmCorpus, cfg: &SkipGramConfig) -> SkipGramModel {
    let docs = documents(c);
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for w in docs.iter().flatten() {
        *counts.entry(w).or_default() += 1;
    }
    let mut words: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    words.sort();
    let index: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    let noise = WeightedIndex::new(words.iter().map(|w| (counts[w.as_str()] as f64).powf(0.75)))
        .expect("non-empty vocabulary with positive counts");

    let d = cfg.dim;
    let mut rng = seeds::rng(cfg.seed, seeds::tag::SKIPGRAM, 0);
    let mut input: Vec<f64> = (0..words.len() * d).map(|_| (rng.random::<f64>() - 0.5) / d as f64).collect();
    let mut output = vec![0.0; words.len() * d];

    let mut examples: Vec<(usize, usize)> = docs
        .iter()
        .flat_map(|doc| {
            let ids: Vec<usize> = doc.iter().map(|w| index[w]).collect();
            positive_pairs(ids.len(), cfg.window).into_iter().map(move |(i, j)| (ids[i], ids[j]))
        })
        .collect();
    let total = (examples.len() * cfg.epochs).max(1) as f64;
    let mut seen = 0usize;
    let mut grad = vec![0.0; d];
    for _ in 0..cfg.epochs {
        examples.shuffle(&mut rng);
        for &(center, context) in &examples {
            let lr = (cfg.learning_rate * (1.0 - seen as f64 / total)).max(cfg.learning_rate * 1e-4);
            seen += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let targets = std::iter::once((context, 1.0))
                .chain((0..cfg.negatives).map(|_| noise.sample(&mut rng)).filter(|&n| n != context).map(|n| (n, 0.0)));
            for (t, label) in targets {
                let (wi, wo) = (&input[center * d..(center + 1) * d], &mut output[t * d..(t + 1) * d]);
                let z: f64 = wi.iter().zip(wo.iter()).map(|(a, b)| a * b).sum();
                let g = lr * (label - sigmoid(z));
                for k in 0..d {
                    grad[k] += g * wo[k];
                    wo[k] += g * wi[k];
                }
            }
            input[center * d..(center + 1) * d].iter_mut().zip(&grad).for_each(|(w, g)| *w += g);
        }
    }
    SkipGramModel { words, index, vectors: input, dim: d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{block_from_texts, Function};
    use crate::evalkit::outlier::cosine_similarity;

    #[test]
    fn window_one_on_two_words() {
        assert_eq!(positive_pairs(2, 1), vec![(0, 1), (1, 0)]);
        assert_eq!(positive_pairs(1, 3), vec![]);
        assert_eq!(positive_pairs(4, 2).len(), 2 + 3 + 3 + 2);
    }

    #[test]
    fn shared_contexts_end_up_closer() {
        let f = |name: String, texts: &[&str]| {
            Function::new("bin", name, vec![block_from_texts("b", 0x1000, texts, &[])], vec![], 0).unwrap()
        };
        let mut fs = Vec::new();
        for i in 0..20 {
            fs.push(f(format!("a{i}"), &["push rbp", "mov rbp, rsp"]));
            fs.push(f(format!("b{i}"), &["push rbx", "mov rbp, rsp"]));
            fs.push(f(format!("c{i}"), &["xor eax, eax", "retn"]));
        }
        let c = DisasmCorpus::new(fs).unwrap();
        let m = train_skipgram_baseline(&c, &SkipGramConfig { dim: 16, window: 1, epochs: 30, ..Default::default() });
        let v = |k: &str| m.embed(k);
        let within = cosine_similarity(&v("push rbp"), &v("push rbx"));
        let across = cosine_similarity(&v("push rbp"), &v("xor eax eax"));
        assert!(within > across + 0.3, "{within} vs {across}");
        assert_eq!(m.embed("nop"), vec![0.0; 16]);
    }
}
