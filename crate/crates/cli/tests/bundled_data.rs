//! The corpora under `data/` are generated; this keeps them in sync with the
//! generator. Run with `ASMLM_REGENERATE=1` to rewrite them.

use std::fs;
use std::path::PathBuf;

use asmlm::demo::{demo_corpus, equivalence_corpus, DEMO_SEED};
use asmlm::evalkit::classes_to_jsonl;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn bundled_corpora_match_generator() {
    let (eq, classes) = equivalence_corpus(DEMO_SEED);
    let files = [
        ("demo_corpus.jsonl", demo_corpus(DEMO_SEED).to_jsonl()),
        ("bbsearch_corpus.jsonl", eq.to_jsonl()),
        ("bbsearch_classes.jsonl", classes_to_jsonl(&classes)),
    ];
    let regenerate = std::env::var_os("ASMLM_REGENERATE").is_some();
    for (name, expected) in files {
        let path = data_dir().join(name);
        if regenerate {
            fs::write(&path, &expected).unwrap();
        }
        let on_disk = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(on_disk == expected, "{name} is stale; rerun with ASMLM_REGENERATE=1");
    }
}
