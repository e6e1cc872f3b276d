//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Runs as a plain binary so the lines are
//! never swallowed by output capture.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use asmlm::corpus::{load_corpus, DisasmCorpus};
use asmlm::embedder::{export_table, EmbeddingTable};
use asmlm::evalkit::{
    block_search_auc, generate_outlier_sets, outlier_accuracy, read_classes, roc_auc, BlockSearchTask, CategoryRules,
    Taxonomy, OPCODE_TABLE, OPERAND_CATEGORIES,
};
use asmlm::model::{
    backward, forward, init_params, total_loss, ModelConfig, Mode, TaskSet, TransformerParams,
};
use asmlm::sampler::{
    apply_mlm_masking, sample_corpus, MaskedBatch, PairSample, PairTask, TokenizedCorpus, IGNORE_TARGET,
};
use asmlm::seeds;
use asmlm::tokenizer::{build_vocab, tokenize_normalized, TokenSequence, Vocabulary, CLS_ID, MASK_ID, SEP_ID};
use asmlm::trainer::{fixed_batches, PairBatches, TrainConfig, TrainMetrics, Trainer};
use rand::Rng;

// Desk-scale training setup shared by the training, evaluation, ablation and
// table criteria.
const DESK_SEED: u64 = 3;
const DESK_HIDDEN: usize = 64;
const DESK_LAYERS: usize = 2;
const DESK_HEADS: usize = 2;
const DESK_FFN: usize = 128;
const DESK_DROPOUT: f64 = 0.1;
const DESK_STEPS: u64 = 2000;
const DESK_BATCH: usize = 128;
const DESK_LR: f64 = 2e-3;
const DESK_PAIRS: usize = 2000;
const HELDOUT_PAIRS: usize = 200;
const HELDOUT_FRACTION: f64 = 0.2;
const MAX_LEN: usize = 40;
const CWP_WINDOW: usize = 4;

struct Outcome {
    pass: bool,
    report_only: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, report_only: false, detail: detail.into() }
    }

    /// Informational line that can never fail the run.
    fn report(detail: impl Into<String>) -> Self {
        Self { pass: true, report_only: true, detail: detail.into() }
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

// ---------------------------------------------------------------------------
// 1. Tokenizer golden suite

/// Hand-normalized expectations, space-joined.
const GOLDEN: [(&str, &str); 50] = [
    ("mov rax, qword [rsp+0x58]", "mov rax qword [ rsp + 0x58 ]"),
    ("jne 0x403a98", "jne [addr]"),
    ("retn", "retn"),
    ("push rbp", "push rbp"),
    ("mov rbp, rsp", "mov rbp rsp"),
    ("sub rsp, 0x20", "sub rsp 0x20"),
    ("xor eax, eax", "xor eax eax"),
    ("mov eax, dword [rbp-0x2c]", "mov eax dword [ rbp - 0x2c ]"),
    ("lea rdi, [rip+0x2d8e]", "lea rdi [ rip + 0x2d8e ]"),
    ("lea rdi, [rip+0x12345]", "lea rdi [ rip + [addr] ]"),
    ("call memcpy", "call memcpy"),
    ("call 0x401130", "call [addr]"),
    ("jmp 0x4011a0", "jmp [addr]"),
    ("cmp dword [rbp-0x14], 0x9", "cmp dword [ rbp - 0x14 ] 0x9"),
    ("imul [edx], ebx, 100", "imul [ edx ] ebx 0x64"),
    ("mov eax, 0xffff", "mov eax 0xffff"),
    ("mov eax, 0x10000", "mov eax [addr]"),
    ("mov edi, 0x4006f4", "mov edi [addr]"),
    ("push \"GET /\"", "push [str]"),
    ("rep stosq qword ptr [rdi], rax", "rep stosq qword [ rdi ] rax"),
    ("mov rax, qword fs:[0x28]", "mov rax qword fs: [ 0x28 ]"),
    ("movzx eax, byte [rbx+rcx*4+0x8]", "movzx eax byte [ rbx + rcx * 0x4 + 0x8 ]"),
    ("MOV RAX, RBX", "mov rax rbx"),
    ("add rsp, 8", "add rsp 0x8"),
    ("shl rax, 0x3", "shl rax 0x3"),
    ("test al, al", "test al al"),
    ("sete al", "sete al"),
    ("cmovne rax, rdx", "cmovne rax rdx"),
    ("movaps xmm0, xmmword [rsp+0x10]", "movaps xmm0 xmmword [ rsp + 0x10 ]"),
    ("pxor xmm1, xmm1", "pxor xmm1 xmm1"),
    ("nop", "nop"),
    ("leave", "leave"),
    ("pop r12", "pop r12"),
    ("mov r8d, 0xffffffff", "mov r8d [addr]"),
    ("and rsp, -16", "and rsp - 0x10"),
    ("mov qword [rbp-0x8], 0x0", "mov qword [ rbp - 0x8 ] 0x0"),
    ("mov rax, qword [rax]", "mov rax qword [ rax ]"),
    ("lea rax, [rdi+rsi*8]", "lea rax [ rdi + rsi * 0x8 ]"),
    ("syscall", "syscall"),
    ("cdqe", "cdqe"),
    ("idiv ecx", "idiv ecx"),
    ("jmp qword [rax*8+0x402010]", "jmp qword [ rax * 0x8 + [addr] ]"),
    ("call qword [rip+0x2fe2]", "call qword [ rip + 0x2fe2 ]"),
    ("lock cmpxchg dword [rdx], ecx", "lock cmpxchg dword [ rdx ] ecx"),
    ("movsd xmm0, qword [rip+0x1234]", "movsd xmm0 qword [ rip + 0x1234 ]"),
    ("mov al, byte [rsi]", "mov al byte [ rsi ]"),
    ("sar edx, 0x1f", "sar edx 0x1f"),
    ("jmp .L3", "jmp .L3"),
    ("mov rax, 0x00000010", "mov rax 0x10"),
    ("mov rax, [rbp-0x12345]", "mov rax [ rbp - [addr] ]"),
];

fn tokenizer_golden() -> Outcome {
    let start = Instant::now();
    let mut wrong = Vec::new();
    for (text, expected) in GOLDEN {
        let got = tokenize_normalized(text).map(|s| s.surfaces().join(" "));
        if got.as_deref() != Ok(expected) {
            wrong.push(format!("{text:?} -> {got:?}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = wrong.is_empty() && secs < 1.0;
    Outcome::new(pass, format!("{}/{} exact, {secs:.3} s {}", GOLDEN.len() - wrong.len(), GOLDEN.len(), wrong.join("; ")))
}

// ---------------------------------------------------------------------------
// 2. Masking statistics

fn masking_statistics() -> Outcome {
    let start = Instant::now();
    // A large vocabulary keeps random replacements from landing on the
    // original token, so the three outcomes can be told apart from the
    // batch alone.
    let k = 100_000u32;
    let mut rng = seeds::rng(1, 100, 0);
    let pairs: Vec<PairSample> = (0..56_000)
        .map(|i| PairSample {
            first: (0..10).map(|_| rng.random_range(SEP_ID + 100..k)).collect(),
            second: (0..9).map(|_| rng.random_range(SEP_ID + 100..k)).collect(),
            task: if i % 2 == 0 { PairTask::Cwp } else { PairTask::Dup },
            label: i % 3 == 0,
        })
        .collect();
    let (mut positions, mut selected, mut masked, mut replaced, mut kept) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for (i, chunk) in pairs.chunks(4096).enumerate() {
        let b = apply_mlm_masking(chunk, k as usize, 24, i as u64).expect("pairs fit");
        for r in 0..b.rows {
            let (first, second) = (&chunk[r].first, &chunk[r].second);
            let originals = first.iter().chain(second);
            let slots = (1..=first.len()).chain(first.len() + 2..first.len() + 2 + second.len());
            for (pos, &orig) in slots.zip(originals) {
                let at = r * b.cols + pos;
                positions += 1;
                if b.mlm_targets[at] == IGNORE_TARGET {
                    continue;
                }
                selected += 1;
                match b.input_ids[at] {
                    MASK_ID => masked += 1,
                    id if id == orig => kept += 1,
                    _ => replaced += 1,
                }
            }
        }
    }
    let frac = |a: u64, b: u64| a as f64 / b as f64;
    let sel = frac(selected, positions);
    let (m, rp, kp) = (frac(masked, selected), frac(replaced, selected), frac(kept, selected));
    let secs = start.elapsed().as_secs_f64();
    let pass = positions >= 1_000_000
        && (0.148..=0.152).contains(&sel)
        && (m - 0.8).abs() <= 0.01
        && (rp - 0.1).abs() <= 0.01
        && (kp - 0.1).abs() <= 0.01
        && secs < 30.0;
    Outcome::new(
        pass,
        format!("{positions} positions, selected {sel:.4}, mask/replace/keep {m:.4}/{rp:.4}/{kp:.4}, {secs:.1} s"),
    )
}

// ---------------------------------------------------------------------------
// 3. Gradient check

fn gradient_batch() -> MaskedBatch {
    let pairs = [
        PairSample { first: vec![7, 8, 9], second: vec![10, 11], task: PairTask::Cwp, label: true },
        PairSample { first: vec![12, 9], second: vec![13, 14, 15, 16], task: PairTask::Cwp, label: false },
        PairSample { first: vec![17, 18], second: vec![19, 7, 7], task: PairTask::Dup, label: true },
        PairSample { first: vec![8], second: vec![11, 12], task: PairTask::Dup, label: false },
    ];
    let mut b = apply_mlm_masking(&pairs, 20, 12, 11).expect("pairs fit");
    for r in 0..b.rows {
        let at = r * b.cols + 1;
        if b.mlm_targets[at] == IGNORE_TARGET {
            b.mlm_targets[at] = b.input_ids[at] as i32;
        }
    }
    b
}

/// Parameters with unit-scale activations, where a 1e-3 step is small
/// relative to every layer-norm input.
fn conditioned_params(cfg: &ModelConfig, seed: u64) -> TransformerParams {
    let mut p = init_params(cfg, seed).expect("valid config");
    let mut rng = seeds::rng(seed, 101, 0);
    let mut u = |scale: f64| (rng.random::<f64>() * 2.0 - 1.0) * scale;
    for (name, t) in p.named_tensors_mut() {
        let fan_in = t.shape[0] as f64;
        for x in t.data.iter_mut() {
            *x = if name.contains("_emb") {
                u(3f64.sqrt())
            } else if name.ends_with(".gain") {
                1.0 + u(0.2)
            } else if name.ends_with(".weight") {
                u((3.0 / fan_in).sqrt())
            } else {
                u(0.1)
            };
        }
    }
    p
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 20,
        hidden_dim: 8,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 32,
        max_len: 12,
        dropout_rate: 0.0,
        task_set: TaskSet::ALL,
    };
    let eps = 1e-3;
    let batch = gradient_batch();
    let p = conditioned_params(&cfg, 17);
    let g = backward(&p, &batch, TaskSet::ALL).expect("valid batch");
    let loss = |q: &TransformerParams| total_loss(&forward(q, &batch, Mode::Inference).unwrap(), &batch, TaskSet::ALL);
    let (mut worst_tensor, mut worst_name, mut worst_coord, mut checked) = (0.0f64, String::new(), 0.0f64, 0usize);
    let mut failures = Vec::new();
    let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (ti, name) in names.iter().enumerate() {
        let analytic = &g.named_tensors()[ti].1.data;
        let mut numeric = vec![0.0; analytic.len()];
        for (i, n) in numeric.iter_mut().enumerate() {
            let mut q = p.clone();
            q.named_tensors_mut()[ti].1.data[i] += eps;
            let up = loss(&q);
            q.named_tensors_mut()[ti].1.data[i] -= 2.0 * eps;
            *n = (up - loss(&q)) / (2.0 * eps);
        }
        checked += numeric.len();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let scale = norm(analytic).max(norm(&numeric));
        for (a, n) in analytic.iter().zip(&numeric) {
            worst_coord = worst_coord.max((a - n).abs() / a.abs().max(n.abs()).max(1e-8));
        }
        // Tensors whose exact gradient vanishes are held to roundoff.
        let ok = if scale < 1e-9 { norm(&diff) <= 1e-9 } else { norm(&diff) / scale <= 1e-4 };
        let rel = if scale < 1e-9 { 0.0 } else { norm(&diff) / scale };
        if rel > worst_tensor {
            worst_tensor = rel;
            worst_name = name.clone();
        }
        if !ok {
            failures.push(format!("{name} rel {rel:.2e}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 300.0;
    Outcome::new(
        pass,
        format!(
            "{checked} coordinates in {} tensors, worst tensor rel. error {worst_tensor:.2e} ({worst_name}), worst single coordinate {worst_coord:.2e}, {secs:.1} s {}",
            names.len(),
            failures.join("; ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 4-6, 8. Desk training

struct DeskRun {
    params: TransformerParams,
    history: Vec<TrainMetrics>,
    heldout: TrainMetrics,
    seconds: f64,
}

struct Desk {
    corpus: DisasmCorpus,
    vocab: Vocabulary,
    train: Vec<PairSample>,
    heldout: Vec<MaskedBatch>,
}

impl Desk {
    fn prepare() -> Self {
        let corpus = load_corpus(&data("demo_corpus.jsonl")).expect("bundled corpus loads");
        let (train_c, held_c) = corpus.split_by_function(HELDOUT_FRACTION, DESK_SEED).expect("corpus splits");
        let vocab = build_vocab(&train_c, 1).expect("vocabulary");
        let train =
            sample_corpus(&TokenizedCorpus::new(&train_c), &vocab, CWP_WINDOW, DESK_PAIRS, DESK_SEED, 1).expect("train pairs");
        let held = sample_corpus(&TokenizedCorpus::new(&held_c), &vocab, CWP_WINDOW, HELDOUT_PAIRS, DESK_SEED + 1, 1)
            .expect("held-out pairs");
        let heldout = fixed_batches(&held, DESK_BATCH, vocab.len(), MAX_LEN, DESK_SEED).expect("held-out batches");
        Self { corpus, vocab, train, heldout }
    }

    fn train(&self, tasks: TaskSet) -> DeskRun {
        let start = Instant::now();
        let mc = ModelConfig {
            vocab_size: self.vocab.len(),
            hidden_dim: DESK_HIDDEN,
            num_layers: DESK_LAYERS,
            num_heads: DESK_HEADS,
            ffn_dim: DESK_FFN,
            max_len: MAX_LEN,
            dropout_rate: DESK_DROPOUT,
            task_set: tasks,
        };
        let tc = TrainConfig {
            batch_size: DESK_BATCH,
            total_steps: DESK_STEPS,
            learning_rate: DESK_LR,
            seed: DESK_SEED,
            task_set: tasks,
            checkpoint_every: 0,
            ..Default::default()
        };
        let mut trainer = Trainer::new(init_params(&mc, DESK_SEED).expect("valid model"), tc).expect("valid config");
        let mut source = PairBatches::new(self.train.clone(), DESK_BATCH, self.vocab.len(), MAX_LEN, DESK_SEED);
        let report = trainer.run(&mut source, Some(&self.heldout)).expect("training runs");
        DeskRun {
            params: trainer.params,
            history: report.history,
            heldout: report.heldout.last().cloned().expect("final held-out evaluation"),
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn training_sanity(desk: &Desk, run: &DeskRun) -> Outcome {
    let mean = |m: &[TrainMetrics]| m.iter().map(|x| x.loss).sum::<f64>() / m.len() as f64;
    let (first, last) = (mean(&run.history[..50]), mean(&run.history[run.history.len() - 50..]));
    let chance = 1.0 / desk.vocab.len() as f64;
    let h = &run.heldout;
    let (mlm, cwp, dup) = (h.mlm_acc.unwrap_or(0.0), h.cwp_acc.unwrap_or(0.0), h.dup_acc.unwrap_or(0.0));
    let pass = last <= 0.5 * first && mlm >= 5.0 * chance && cwp >= 0.80 && dup >= 0.80 && run.seconds <= 900.0;
    Outcome::new(
        pass,
        format!(
            "loss {first:.3} -> {last:.3} (ratio {:.3}), held-out mlm {mlm:.3} (5x chance {:.3}), cwp {cwp:.3}, dup {dup:.3}, {:.0} s",
            last / first,
            5.0 * chance,
            run.seconds
        ),
    )
}

fn block_search(p: &TransformerParams, v: &Vocabulary) -> f64 {
    let c = load_corpus(&data("bbsearch_corpus.jsonl")).expect("equivalence corpus loads");
    let classes = read_classes(&data("bbsearch_classes.jsonl")).expect("classes load");
    let task = BlockSearchTask::new(&c, &classes).expect("classes resolve");
    block_search_auc(&task, |b| asmlm::embedder::embed_block(p, b, v).expect("blocks tokenize")).expect("both labels").auc
}

fn intrinsic_evaluation(desk: &Desk, run: &DeskRun) -> (Outcome, f64) {
    let sets = generate_outlier_sets(&desk.corpus, &CategoryRules::default(), Taxonomy::Opcode, 2000, DESK_SEED)
        .expect("opcode sets");
    let p = &run.params;
    let report = outlier_accuracy(&sets, |t| {
        asmlm::embedder::embed_instruction(p, t, &desk.vocab).expect("members tokenize").vector
    });
    let auc = block_search(p, &desk.vocab);
    let pass = report.accuracy >= 0.40 && auc >= 0.85;
    (Outcome::new(pass, format!("opcode outlier accuracy {:.3} (chance 0.2), block-search AUC {auc:.4}", report.accuracy)), auc)
}

fn ablation(desk: &Desk, full_auc: f64) -> Outcome {
    let m = block_search(&desk.train(TaskSet::MLM).params, &desk.vocab);
    let mc = block_search(&desk.train(TaskSet::MLM_CWP).params, &desk.vocab);
    let ordered = full_auc >= mc && mc >= m;
    Outcome::report(format!(
        "block-search AUC mlm {m:.4}, mlm+cwp {mc:.4}, all {full_auc:.4}; full >= mc >= m holds: {ordered}"
    ))
}

// ---------------------------------------------------------------------------
// 7. AUC oracle

/// Mann-Whitney: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    let pairs = (pos.len() * neg.len()) as f64;
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let mut rng = seeds::rng(7, 102, 0);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let n = rng.random_range(2..=500);
        // Every third instance draws from a handful of values to force ties.
        let coarse = inst % 3 == 0;
        let scores: Vec<f64> =
            (0..n).map(|_| if coarse { rng.random_range(0..5) as f64 / 4.0 } else { rng.random::<f64>() }).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let (_, auc) = roc_auc(&scores, &labels).expect("both labels present");
        worst = worst.max((auc - pairwise_auc(&scores, &labels)).abs());
    }
    Outcome::new(worst <= 1e-9, format!("100 instances, max |trapezoid - pairwise| = {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 8. Lookup table fidelity

/// Direct forward pass on an unpadded single row, mean of the second-last
/// layer over the instruction's own positions.
fn reference_embedding(p: &TransformerParams, ids: &[u32]) -> Vec<f64> {
    let n = ids.len().min(p.cfg.max_len - 2);
    let cols = n + 2;
    let mut input = vec![CLS_ID];
    input.extend_from_slice(&ids[..n]);
    input.push(SEP_ID);
    let b = MaskedBatch {
        rows: 1,
        cols,
        input_ids: input,
        segment_ids: vec![0; cols],
        attention_mask: vec![1; cols],
        mlm_targets: vec![IGNORE_TARGET; cols],
        task_labels: vec![false],
        task_kinds: vec![PairTask::Cwp],
    };
    let out = forward(p, &b, Mode::Inference).expect("well-formed row");
    let hs = &out.hidden_states[p.cfg.num_layers - 1];
    let h = p.cfg.hidden_dim;
    (0..h).map(|d| (1..=n).map(|pos| hs[pos * h + d]).sum::<f64>() / n as f64).collect()
}

fn table_fidelity(desk: &Desk, run: &DeskRun) -> Outcome {
    let table = export_table(&run.params, &desk.corpus, &desk.vocab, usize::MAX);
    let table = EmbeddingTable::from_bytes(&table.to_bytes()).expect("table round-trips");
    let mut worst = 0.0f64;
    let mut entries = 0;
    for (key, vec) in &table.entries {
        let ids = desk.vocab.encode(&TokenSequence::from_key(key));
        let r = reference_embedding(&run.params, &ids);
        worst = vec.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        entries += 1;
    }
    let distinct = asmlm::embedder::instruction_frequencies(&desk.corpus).len();
    Outcome::new(
        worst <= 1e-6 && entries == distinct,
        format!("{entries}/{distinct} entries, max coordinate deviation {worst:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 9. Determinism of the command-line pipeline

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_asmlm")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(dir: &Path) -> Result<(), String> {
    let corpus = data("demo_corpus.jsonl");
    let p = |n: &str| dir.join(n).to_str().expect("utf-8 path").to_string();
    fs::write(
        dir.join("train.json"),
        r#"{"hidden_dim": 16, "num_layers": 2, "num_heads": 2, "ffn_dim": 32, "batch_size": 8, "total_steps": 40, "learning_rate": 0.001}"#,
    )
    .map_err(|e| e.to_string())?;
    let c = corpus.to_str().expect("utf-8 path");
    cli(&["build-vocab", "--input", c, "--out", &p("vocab.json")])?;
    cli(&["sample", "--input", c, "--vocab", &p("vocab.json"), "--n", "300", "--seed", "9", "--workers", "1", "--out", &p("samples.bin")])?;
    cli(&["pretrain", "--samples", &p("samples.bin"), "--vocab", &p("vocab.json"), "--config", &p("train.json"), "--seed", "9", "--out", &p("ckpt")])?;
    cli(&["embed", "--ckpt", &p("ckpt"), "--input", c, "--out", &p("emb.jsonl")])?;
    cli(&["eval", "outlier", "--ckpt", &p("ckpt"), "--corpus", c, "--taxonomy", "opcode", "--n", "500", "--seed", "9", "--out", &p("report.json")])
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().expect("temp dir"), tempfile::tempdir().expect("temp dir")];
    for d in &dirs {
        if let Err(e) = pipeline(d.path()) {
            return Outcome::new(false, e);
        }
    }
    let mut differing = Vec::new();
    for f in ["samples.bin", "ckpt/metrics.csv", "report.json", "emb.jsonl", "ckpt/params.bin"] {
        let read = |d: &tempfile::TempDir| fs::read(d.path().join(f)).unwrap_or_default();
        if read(&dirs[0]).is_empty() || read(&dirs[0]) != read(&dirs[1]) {
            differing.push(f);
        }
    }
    Outcome::new(
        differing.is_empty(),
        if differing.is_empty() { "samples.bin, metrics.csv, report.json, emb.jsonl, params.bin identical".into() } else { format!("differing: {differing:?}") },
    )
}

// ---------------------------------------------------------------------------
// 10. Classifier table coverage

const OPCODE_CASES: [(&str, &str); 12] = [
    ("mov rax, rbx", "Data Movement"),
    ("neg rax", "Unary Operations"),
    ("add rax, 0x8", "Binary Operations"),
    ("shl rax, 0x3", "Shift Operations"),
    ("imulq rcx", "Special Arithmetic Operations"),
    ("test eax, eax", "Comparison and Test Instructions"),
    ("setne al", "Conditional Set Instructions"),
    ("jle 0x401a2b", "Jump Instructions"),
    ("cmovge rax, rdx", "Conditional Move Instructions"),
    ("call memcpy", "Procedure Call Instructions"),
    ("lodsb", "String Instructions"),
    ("fsqrt", "Floating Point Arithmetic"),
];

const OPERAND_CASES: [(&str, &str); 10] = [
    ("retn", "none"),
    ("call 0x401130", "addr"),
    ("push qword [rbp-0x8]", "ref"),
    ("mov rax, rbx", "reg-reg"),
    ("mov edi, 0x4006f4", "reg-addr"),
    ("add rsp, 0x8", "reg-cnst"),
    ("mov rax, qword [rbp-0x18]", "reg-ref"),
    ("cmp dword [rbp-0x14], 0x9", "ref-cnst"),
    ("mov qword [rbp-0x8], rax", "ref-reg"),
    ("imul eax, ebx, 0x64", "tri"),
];

fn classifier_coverage() -> Outcome {
    let rules = CategoryRules::default();
    let mut problems = Vec::new();
    for (tax, cases, rows) in [
        (Taxonomy::Opcode, &OPCODE_CASES[..], OPCODE_TABLE.iter().map(|r| r.0).collect::<Vec<_>>()),
        (Taxonomy::Operand, &OPERAND_CASES[..], OPERAND_CATEGORIES.to_vec()),
    ] {
        for row in &rows {
            if !cases.iter().any(|(_, want)| want == row) {
                problems.push(format!("no case for {row}"));
            }
        }
        for (text, want) in cases {
            match rules.classify(tax, text) {
                Ok(got) if got == *want => {}
                other => problems.push(format!("{text:?}: {other:?}, expected {want}")),
            }
        }
    }
    Outcome::new(
        problems.is_empty(),
        format!("{} opcode rows, {} operand rows {}", OPCODE_TABLE.len(), OPERAND_CATEGORIES.len(), problems.join("; ")),
    )
}

// ---------------------------------------------------------------------------

/// Criterion numbers given as arguments restrict the run, e.g.
/// `cargo test --test acceptance -- 1 7`.
fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| only.is_empty() || only.contains(&n);
    let mut failed = 0;
    let mut report = |n: u32, name: &str, o: Outcome| {
        let status = match (o.report_only, o.pass) {
            (true, _) => "REPORT",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        println!("criterion {n:>2} {name}: {status} | {}", o.detail.trim());
        failed += usize::from(!o.pass);
    };
    let quick: [(u32, &str, fn() -> Outcome); 6] = [
        (1, "tokenizer golden suite", tokenizer_golden),
        (2, "masking statistics", masking_statistics),
        (3, "gradient check", gradient_check),
        (7, "AUC oracle equivalence", auc_oracle),
        (10, "classifier table coverage", classifier_coverage),
        (9, "pipeline determinism", determinism),
    ];
    for (n, name, f) in quick {
        if wanted(n) {
            report(n, name, f());
        }
    }

    if [4, 5, 6, 8].into_iter().any(wanted) {
        let desk = Desk::prepare();
        let full = desk.train(TaskSet::ALL);
        if wanted(4) {
            report(4, "training sanity", training_sanity(&desk, &full));
        }
        let (outcome, full_auc) = intrinsic_evaluation(&desk, &full);
        if wanted(5) {
            report(5, "intrinsic evaluation", outcome);
        }
        if wanted(8) {
            report(8, "lookup table fidelity", table_fidelity(&desk, &full));
        }
        if wanted(6) {
            report(6, "ablation ordering", ablation(&desk, full_auc));
        }
    }

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all selected acceptance criteria passed");
}
