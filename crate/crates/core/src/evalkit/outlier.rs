use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::categories::{CategoryRules, Taxonomy};
use super::EvalError;
use crate::corpus::DisasmCorpus;
use crate::seeds;
use crate::tokenizer::tokenize_normalized;

pub const SET_SIZE: usize = 5;

/// Four members from one category plus one from another. Members are raw
/// instruction texts with pairwise distinct normalized forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierSet {
    pub members: Vec<String>,
    pub outlier_index: usize,
    pub taxonomy: Taxonomy,
    pub categories: Vec<String>,
}

impl OutlierSet {
    /// Category shared by the four inliers.
    pub fn category(&self) -> &str {
        &self.categories[(self.outlier_index + 1) % SET_SIZE]
    }
}

/// One representative raw text per distinct normalized instruction, grouped
/// by category. Sorted so generation does not depend on corpus order.
pub fn category_pools(c: &DisasmCorpus, rules: &CategoryRules, taxonomy: Taxonomy) -> BTreeMap<&'static str, Vec<String>> {
    let mut pools: BTreeMap<&'static str, BTreeMap<String, String>> = BTreeMap::new();
    for ins in c.instructions() {
        let Ok(cat) = rules.classify(taxonomy, &ins.text) else { continue };
        let Ok(seq) = tokenize_normalized(&ins.text) else { continue };
        let rep = pools.entry(cat).or_default().entry(seq.key()).or_insert_with(|| ins.text.clone());
        if ins.text < *rep {
            *rep = ins.text.clone();
        }
    }
    pools.into_iter().map(|(cat, m)| (cat, m.into_values().collect())).collect()
}

pub fn generate_outlier_sets(
    c: &DisasmCorpus,
    rules: &CategoryRules,
    taxonomy: Taxonomy,
    n: usize,
    seed: u64,
) -> Result<Vec<OutlierSet>, EvalError> {
    let pools = category_pools(c, rules, taxonomy);
    let majority: Vec<&str> = pools.iter().filter(|(_, v)| v.len() >= SET_SIZE - 1).map(|(k, _)| *k).collect();
    let eligible = majority.iter().any(|m| pools.keys().any(|k| k != m));
    if !eligible {
        return Err(EvalError::InsufficientCategories {
            taxonomy,
            found: pools.iter().map(|(k, v)| format!("{k}={}", v.len())).collect::<Vec<_>>().join(", "),
        });
    }
    let all: Vec<&str> = pools.keys().copied().collect();
    let mut rng = seeds::rng(seed, seeds::tag::OUTLIER, 0);
    let mut sets = Vec::with_capacity(n);
    while sets.len() < n {
        let inlier = *majority.choose(&mut rng).expect("checked non-empty");
        let others: Vec<&str> = all.iter().copied().filter(|&k| k != inlier).collect();
        let Some(&odd) = others.choose(&mut rng) else { continue };
        let mut members: Vec<(String, &str)> = pools[inlier]
            .choose_multiple(&mut rng, SET_SIZE - 1)
            .map(|k| (k.clone(), inlier))
            .collect();
        let odd_key = pools[odd].choose(&mut rng).expect("pools are non-empty");
        let outlier_index = rng.random_range(0..SET_SIZE);
        members.insert(outlier_index, (odd_key.clone(), odd));
        sets.push(OutlierSet {
            categories: members.iter().map(|(_, c)| c.to_string()).collect(),
            members: members.into_iter().map(|(k, _)| k).collect(),
            outlier_index,
            taxonomy,
        });
    }
    Ok(sets)
}

/// 1 - cosine similarity; any pair involving a zero vector is as far apart
/// as possible (distance 2).
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 2.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - dot / (na * nb)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_distance(a, b)
}

/// Index of the vector with the largest mean cosine distance to the others;
/// the lowest index wins ties.
pub fn detect_outlier(vectors: &[Vec<f64>]) -> usize {
    let n = vectors.len();
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..n {
        let d: f64 = (0..n).filter(|&j| j != i).map(|j| cosine_distance(&vectors[i], &vectors[j])).sum::<f64>()
            / (n - 1).max(1) as f64;
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub taxonomy: Taxonomy,
    pub sets: usize,
    pub accuracy: f64,
    /// Keyed by the inlier category of each set.
    pub per_category: BTreeMap<String, CategoryAccuracy>,
}

/// Fraction of sets whose outlier is detected. `embed` maps an instruction
/// text to its vector.
pub fn outlier_accuracy(sets: &[OutlierSet], mut embed: impl FnMut(&str) -> Vec<f64>) -> OutlierReport {
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for s in sets {
        let vecs: Vec<Vec<f64>> = s.members.iter().map(|m| embed(m)).collect();
        let hit = detect_outlier(&vecs) == s.outlier_index;
        correct += hit as usize;
        let e = per.entry(s.category().to_string()).or_default();
        e.0 += hit as usize;
        e.1 += 1;
    }
    let ratio = |c: usize, t: usize| if t == 0 { 0.0 } else { c as f64 / t as f64 };
    OutlierReport {
        taxonomy: sets.first().map_or(Taxonomy::Opcode, |s| s.taxonomy),
        sets: sets.len(),
        accuracy: ratio(correct, sets.len()),
        per_category: per
            .into_iter()
            .map(|(k, (c, t))| (k, CategoryAccuracy { correct: c, total: t, accuracy: ratio(c, t) }))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use crate::corpus::{block_from_texts, Function};
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> DisasmCorpus {
        let b = block_from_texts("b0", 0x1000, texts, &[]);
        DisasmCorpus::new(vec![Function::new("bin", "f", vec![b], vec![], 0).unwrap()]).unwrap()
    }

    /// Brute force: mean of 1 - cos over the other four, computed term by term.
    #[test]
    fn worked_example_picks_the_orthogonal_vector() {
        let v: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.99, 0.01], vec![1.0, 0.02], vec![0.98, 0.0], vec![0.0, 1.0]];
        let mut means = Vec::new();
        for i in 0..5 {
            let mut acc = 0.0;
            for j in 0..5 {
                if i != j {
                    let dot = v[i][0] * v[j][0] + v[i][1] * v[j][1];
                    let n = (v[i][0].hypot(v[i][1])) * (v[j][0].hypot(v[j][1]));
                    acc += 1.0 - dot / n;
                }
            }
            means.push(acc / 4.0);
        }
        let oracle = (0..5).max_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap()).unwrap();
        assert_eq!(oracle, 4);
        assert_eq!(detect_outlier(&v), 4);
    }

    #[test]
    fn identical_vectors_tie_to_zero() {
        assert_eq!(detect_outlier(&vec![vec![0.3, -1.0]; 5]), 0);
    }

    #[test]
    fn zero_vector_is_most_distant() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.1], vec![0.9, 0.0], vec![0.0, 1.0]];
        assert_eq!(detect_outlier(&v), 1);
    }

    proptest! {
        #[test]
        fn permutation_and_scale_equivariance(
            raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 5),
            scale in 0.01f64..100.0,
            rot in 0usize..5,
        ) {
            let base = detect_outlier(&raw);
            let scaled: Vec<Vec<f64>> = raw.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
            // Scaling can flip exact float ties, so compare the winning distance instead of the index.
            let d = |vs: &[Vec<f64>], i: usize| (0..5).filter(|&j| j != i).map(|j| cosine_distance(&vs[i], &vs[j])).sum::<f64>();
            prop_assert!((d(&scaled, detect_outlier(&scaled)) - d(&raw, base)).abs() < 1e-9);
            let mut rotated = raw.clone();
            rotated.rotate_left(rot);
            let r = detect_outlier(&rotated);
            prop_assert!((d(&rotated, r) - d(&raw, base)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_category_is_insufficient() {
        let c = corpus(&["mov rax, rbx", "mov rcx, rdx", "push rbp", "pop rbx", "mov rsi, rdi"]);
        let r = generate_outlier_sets(&c, &CategoryRules::default(), Taxonomy::Opcode, 3, 0);
        assert!(matches!(r, Err(EvalError::InsufficientCategories { .. })));
    }

    #[test]
    fn sets_satisfy_four_plus_one() {
        let c = corpus(&[
            "mov rax, rbx", "mov rcx, rdx", "push rbp", "pop rbx", "add rax, 0x1", "sub rsp, 0x18", "xor eax, eax",
            "lea rdi, [rip+0x20]", "cmp rax, rbx", "retn", "jne 0x401000",
        ]);
        let rules = CategoryRules::default();
        let sets = generate_outlier_sets(&c, &rules, Taxonomy::Opcode, 200, 9).unwrap();
        assert_eq!(sets.len(), 200);
        for s in &sets {
            let cats: Vec<&str> = s.members.iter().map(|m| rules.classify_opcode(m).unwrap()).collect();
            let odd = cats[s.outlier_index];
            assert_eq!(cats.iter().filter(|&&c| c != odd).count(), 4);
            assert_eq!(cats.iter().filter(|&&c| c == s.category()).count(), 4);
            let uniq: BTreeSet<&String> = s.members.iter().collect();
            assert_eq!(uniq.len(), 5);
        }
        assert_eq!(generate_outlier_sets(&c, &rules, Taxonomy::Opcode, 200, 9).unwrap(), sets);
    }

    #[test]
    fn indicator_embeddings_are_perfect_and_random_is_near_chance() {
        let c = corpus(&[
            "mov rax, rbx", "mov rcx, rdx", "push rbp", "pop rbx", "add rax, 0x1", "sub rsp, 0x18", "xor eax, eax",
            "lea rdi, [rip+0x20]", "cmp rax, rbx", "test eax, eax", "cmp ecx, 0x3", "retn", "jne 0x401000",
        ]);
        let rules = CategoryRules::default();
        let sets = generate_outlier_sets(&c, &rules, Taxonomy::Opcode, 2000, 1).unwrap();
        let onehot = |k: &str| {
            let cat = rules.classify_opcode(k).unwrap();
            let i = super::super::categories::OPCODE_TABLE.iter().position(|(c, _)| *c == cat).unwrap();
            let mut v = vec![0.0; 12];
            v[i] = 1.0;
            v
        };
        assert_eq!(outlier_accuracy(&sets, onehot).accuracy, 1.0);

        let mut rng = seeds::rng(5, 99, 0);
        let random = |_: &str| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let acc = outlier_accuracy(&sets, random).accuracy;
        assert!((acc - 0.2).abs() < 0.04, "{acc}");
    }
}
