use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::outlier::cosine_similarity;
use super::roc::{roc_auc, RocPoint};
use super::EvalError;
use crate::corpus::{BasicBlock, DisasmCorpus};

/// Blocks compiled from the same source, as `(binary_id, block_id)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockClass {
    pub class: String,
    pub blocks: Vec<(String, String)>,
}

pub fn parse_classes(text: &str) -> Result<Vec<BlockClass>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::MalformedClasses { line: i + 1, reason: e.to_string() })
        })
        .collect()
}

pub fn read_classes(path: &Path) -> Result<Vec<BlockClass>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    parse_classes(&text)
}

pub fn classes_to_jsonl(classes: &[BlockClass]) -> String {
    classes.iter().map(|c| serde_json::to_string(c).expect("serializable") + "\n").collect()
}

/// Candidate pool with ground-truth class ids, resolved against a corpus.
#[derive(Debug, Clone)]
pub struct BlockSearchTask<'c> {
    pub blocks: Vec<&'c BasicBlock>,
    pub class_of: Vec<usize>,
}

impl<'c> BlockSearchTask<'c> {
    pub fn new(c: &'c DisasmCorpus, classes: &[BlockClass]) -> Result<Self, EvalError> {
        let index: HashMap<(&str, &str), &BasicBlock> =
            c.blocks().map(|(f, b)| ((f.binary_id.as_str(), b.id.as_str()), b)).collect();
        let mut blocks = Vec::new();
        let mut class_of = Vec::new();
        let mut seen = HashMap::new();
        for (ci, class) in classes.iter().enumerate() {
            if class.blocks.len() < 2 {
                return Err(EvalError::SingletonClass(class.class.clone()));
            }
            for (bin, id) in &class.blocks {
                let b = index
                    .get(&(bin.as_str(), id.as_str()))
                    .ok_or_else(|| EvalError::UnknownBlock { binary: bin.clone(), block: id.clone() })?;
                if let Some(prev) = seen.insert((bin.as_str(), id.as_str()), ci) {
                    return Err(EvalError::MalformedClasses {
                        line: ci + 1,
                        reason: format!("block {bin}/{id} already listed in class {}", classes[prev].class),
                    });
                }
                blocks.push(*b);
                class_of.push(ci);
            }
        }
        Ok(Self { blocks, class_of })
    }
}

#[derive(Debug, Clone)]
pub struct BlockSearchResult {
    pub curve: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Scores every unordered pair of pool blocks by cosine similarity and
/// labels it positive when both blocks share a class.
pub fn block_search_auc(
    task: &BlockSearchTask<'_>,
    mut embed_block: impl FnMut(&BasicBlock) -> Vec<f64>,
) -> Result<BlockSearchResult, EvalError> {
    let vecs: Vec<Vec<f64>> = task.blocks.iter().map(|b| embed_block(b)).collect();
    let n = vecs.len();
    let mut scores = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut labels = Vec::with_capacity(scores.capacity());
    for i in 0..n {
        for j in i + 1..n {
            scores.push(cosine_similarity(&vecs[i], &vecs[j]));
            labels.push(task.class_of[i] == task.class_of[j]);
        }
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let (curve, auc) = roc_auc(&scores, &labels)?;
    Ok(BlockSearchResult { curve, auc, positives, negatives: labels.len() - positives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{block_from_texts, Function};

    fn corpus() -> DisasmCorpus {
        let f = |bin: &str, texts: [&str; 2]| {
            let a = block_from_texts("a", 0x1000, &texts[..1], &[]);
            let b = block_from_texts("b", 0x2000, &texts[1..], &[]);
            Function::new(bin, "f", vec![a, b], vec![], 0).unwrap()
        };
        DisasmCorpus::new(vec![f("O1", ["mov rax, rbx", "retn"]), f("O2", ["mov rax, rcx", "leave"])]).unwrap()
    }

    fn classes() -> Vec<BlockClass> {
        let pair = |id: &str| vec![("O1".to_string(), id.to_string()), ("O2".to_string(), id.to_string())];
        vec![BlockClass { class: "a".into(), blocks: pair("a") }, BlockClass { class: "b".into(), blocks: pair("b") }]
    }

    #[test]
    fn classes_round_trip() {
        let text = classes_to_jsonl(&classes());
        assert!(text.starts_with(r#"{"class":"a","blocks":[["O1","a"],["O2","a"]]}"#));
        assert_eq!(parse_classes(&text).unwrap(), classes());
        assert!(matches!(parse_classes("{\"class\":1}"), Err(EvalError::MalformedClasses { line: 1, .. })));
    }

    #[test]
    fn pairs_and_labels() {
        let c = corpus();
        let task = BlockSearchTask::new(&c, &classes()).unwrap();
        // Embed by first opcode: perfectly separates the two classes.
        let r = block_search_auc(&task, |b| {
            if b.instructions[0].text.starts_with("mov") { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
        })
        .unwrap();
        assert_eq!((r.positives, r.negatives), (2, 4));
        assert_eq!(r.auc, 1.0);
    }

    #[test]
    fn unresolved_and_singleton_classes_are_rejected() {
        let c = corpus();
        let mut k = classes();
        k[0].blocks[1].1 = "zz".into();
        assert!(matches!(BlockSearchTask::new(&c, &k), Err(EvalError::UnknownBlock { .. })));
        k[0].blocks.pop();
        assert!(matches!(BlockSearchTask::new(&c, &k), Err(EvalError::SingletonClass(_))));
    }
}
