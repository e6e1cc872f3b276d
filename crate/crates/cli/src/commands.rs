use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use asmlm::corpus::{load_corpus, DisasmCorpus};
use asmlm::embedder::{embed_keys, export_table, mean};
use asmlm::evalkit::{
    block_search_auc, generate_outlier_sets, outlier_accuracy, read_classes, roc_csv, train_skipgram_baseline,
    BlockSearchTask, CategoryRules, OutlierReport, SkipGramConfig,
};
use asmlm::model::{init_params, load_checkpoint, TransformerParams};
use asmlm::sampler::{read_samples, sample_corpus, write_samples, TokenizedCorpus};
use asmlm::tokenizer::{build_vocab, tokenize_normalized, Vocabulary};
use asmlm::trainer::{fixed_batches_with, PairBatches, Trainer};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::{
    task_set, BbsearchArgs, BuildVocabArgs, CliError, Command, EmbedArgs, EvalCommand, ExportTableArgs, OutlierArgs,
    PretrainArgs, SampleArgs, TokenizeArgs,
};

/// Effective pipeline settings saved next to a checkpoint so `--resume`
/// rebuilds the same batch stream.
pub const PIPELINE_FILE: &str = "pipeline.json";
pub const VOCAB_FILE: &str = "vocab.json";

pub fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Tokenize(a) => tokenize(a),
        Command::BuildVocab(a) => build_vocab_cmd(a),
        Command::Sample(a) => sample(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Embed(a) => embed(a),
        Command::ExportTable(a) => export(a),
        Command::Eval(EvalCommand::Outlier(a)) => outlier(a),
        Command::Eval(EvalCommand::Bbsearch(a)) => bbsearch(a),
    }
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model(ckpt: &Path, vocab: Option<&Path>) -> Result<(TransformerParams, Vocabulary), CliError> {
    let (p, _) = load_checkpoint(ckpt)?;
    let vpath = vocab.map_or_else(|| ckpt.join(VOCAB_FILE), Path::to_path_buf);
    let v = Vocabulary::load(&vpath)?;
    if v.len() != p.cfg.vocab_size {
        return Err(CliError::Data(format!(
            "vocabulary {} has {} entries but the checkpoint expects {}",
            vpath.display(),
            v.len(),
            p.cfg.vocab_size
        )));
    }
    Ok((p, v))
}

/// Embeddings for every distinct normalized instruction in the corpus, so
/// evaluation loops reduce to lookups.
struct KeyCache<'a> {
    p: &'a TransformerParams,
    v: &'a Vocabulary,
    vecs: HashMap<String, Vec<f64>>,
}

impl<'a> KeyCache<'a> {
    fn new(p: &'a TransformerParams, v: &'a Vocabulary, c: &DisasmCorpus) -> Self {
        let mut keys: Vec<String> = c.instructions().filter_map(|i| tokenize_normalized(&i.text).ok()).map(|s| s.key()).collect();
        keys.sort();
        keys.dedup();
        let vecs = keys.iter().cloned().zip(embed_keys(p, &keys, v)).collect();
        Self { p, v, vecs }
    }

    fn key(&mut self, key: String) -> Vec<f64> {
        let (p, v) = (self.p, self.v);
        self.vecs.entry(key).or_insert_with_key(|k| embed_keys(p, std::slice::from_ref(k), v).remove(0)).clone()
    }

    fn text(&mut self, text: &str) -> Result<Vec<f64>, CliError> {
        let seq = tokenize_normalized(text).map_err(CliError::data)?;
        Ok(self.key(seq.key()))
    }
}

fn tokenize(a: TokenizeArgs) -> Result<(), CliError> {
    let c = load_corpus(&a.input)?;
    let v = a.vocab.as_deref().map(Vocabulary::load).transpose()?;
    let mut out = String::new();
    let mut failed = 0usize;
    for ins in c.instructions() {
        let line = match tokenize_normalized(&ins.text) {
            Ok(seq) => {
                let mut row = json!({ "text": ins.text, "tokens": seq.surfaces() });
                if let Some(v) = &v {
                    row["ids"] = json!(v.encode(&seq));
                }
                row
            }
            Err(e) => {
                failed += 1;
                json!({ "text": ins.text, "error": e.to_string() })
            }
        };
        out.push_str(&line.to_string());
        out.push('\n');
    }
    if failed > 0 {
        warn!("{failed} instructions did not tokenize");
    }
    match a.out {
        Some(p) => write_file(&p, out),
        None => io::stdout().write_all(out.as_bytes()).map_err(CliError::data),
    }
}

fn build_vocab_cmd(a: BuildVocabArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(a.config.as_deref())?;
    let input = required(a.input, &cfg.corpus, "input")?;
    let out = required(a.out, &cfg.vocab, "out")?;
    let v = build_vocab(&load_corpus(&input)?, a.min_count.unwrap_or(cfg.min_count))?;
    write_file(&out, v.to_json())?;
    info!("{} tokens written to {}", v.len(), out.display());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(a.config.as_deref())?;
    let input = required(a.input, &cfg.corpus, "input")?;
    let vocab = required(a.vocab, &cfg.vocab, "vocab")?;
    let out = required(a.out, &cfg.samples, "out")?;
    cfg.cwp_window = a.cwp_window.unwrap_or(cfg.cwp_window);
    cfg.num_samples = a.n.unwrap_or(cfg.num_samples);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.workers = a.workers.unwrap_or(cfg.workers);
    let c = load_corpus(&input)?;
    let v = Vocabulary::load(&vocab)?;
    let samples = sample_corpus(&TokenizedCorpus::new(&c), &v, cfg.cwp_window, cfg.num_samples, cfg.seed, cfg.workers)?;
    write_samples(&out, &samples)?;
    info!("{} samples written to {}", samples.len(), out.display());
    Ok(())
}

fn pretrain(a: PretrainArgs) -> Result<(), CliError> {
    let file_cfg = PipelineConfig::load(a.config.as_deref())?;
    let out = required(a.out.clone(), &file_cfg.checkpoint, "out")?;
    let mut cfg = if a.resume && a.config.is_none() && out.join(PIPELINE_FILE).exists() {
        PipelineConfig::load(Some(&out.join(PIPELINE_FILE)))?
    } else {
        file_cfg
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.total_steps = s;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(t) = &a.tasks {
        cfg.task_set = task_set(t)?;
    }
    let samples_path = required(a.samples, &cfg.samples, "samples")?;
    let vocab_path = required(a.vocab, &cfg.vocab, "vocab")?;
    let heldout_path = a.heldout.or_else(|| cfg.heldout.clone());
    let masking = cfg.masking()?;

    let v = Vocabulary::load(&vocab_path)?;
    let samples = read_samples(&samples_path)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!("{} holds no samples", samples_path.display())));
    }
    let mut trainer = if a.resume {
        let mut t = Trainer::resume(&out)?;
        // Extending a finished run is the one override that makes sense here.
        if let Some(s) = a.steps {
            t.cfg.total_steps = s;
        }
        if t.params.cfg.vocab_size != v.len() {
            return Err(CliError::Data(format!("checkpoint vocabulary size {} differs from {}", t.params.cfg.vocab_size, v.len())));
        }
        t
    } else {
        let m = cfg.model_config(v.len())?;
        let tc = cfg.train_config();
        tc.validate()?;
        let p = init_params(&m, cfg.seed)?;
        fs::create_dir_all(&out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
        write_file(&out.join(VOCAB_FILE), v.to_json())?;
        write_file(&out.join(PIPELINE_FILE), serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n")?;
        Trainer::new(p, tc)?.with_output(&out)
    }
    .with_wallclock(a.wallclock);

    let (bs, k, max_len, seed) = (trainer.cfg.batch_size, v.len(), trainer.params.cfg.max_len, trainer.cfg.seed);
    let mut source = PairBatches::new(samples, bs, k, max_len, seed).with_masking(masking);
    let heldout = match heldout_path {
        Some(p) => Some(fixed_batches_with(&read_samples(&p)?, bs, k, max_len, seed, &masking).map_err(CliError::data)?),
        None => None,
    };
    let report = trainer.run(&mut source, heldout.as_deref())?;
    if let Some(last) = report.history.last() {
        println!("step {} loss {:.6}", last.step, last.loss);
    }
    if let Some(h) = report.heldout.last() {
        let acc = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "held-out loss {:.6} mlm_acc {} cwp_acc {} dup_acc {}",
            h.loss,
            acc(h.mlm_acc),
            acc(h.cwp_acc),
            acc(h.dup_acc)
        );
    }
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<(), CliError> {
    let (p, v) = load_model(&a.ckpt, a.vocab.as_deref())?;
    let c = load_corpus(&a.input)?;
    let mut cache = KeyCache::new(&p, &v, &c);
    let mut seen = std::collections::HashSet::new();
    let mut out = String::new();
    let mut skipped = 0usize;
    for ins in c.instructions() {
        if !seen.insert(ins.text.as_str()) {
            continue;
        }
        match cache.text(&ins.text) {
            Ok(vec) => {
                out.push_str(&json!({ "text": ins.text, "vec": vec }).to_string());
                out.push('\n');
            }
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} instructions did not tokenize and were skipped");
    }
    write_file(&a.out, out)
}

fn export(a: ExportTableArgs) -> Result<(), CliError> {
    let (p, v) = load_model(&a.ckpt, a.vocab.as_deref())?;
    let c = load_corpus(&a.corpus)?;
    let table = export_table(&p, &c, &v, a.top_n.unwrap_or(usize::MAX));
    write_file(&a.out, table.to_bytes())?;
    info!("{} embeddings written to {}", table.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct OutlierOutput {
    #[serde(flatten)]
    model: OutlierReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipgram: Option<OutlierReport>,
}

fn outlier(a: OutlierArgs) -> Result<(), CliError> {
    let (p, v) = load_model(&a.ckpt, a.vocab.as_deref())?;
    let c = load_corpus(&a.corpus)?;
    let sets = generate_outlier_sets(&c, &CategoryRules::default(), a.taxonomy, a.n, a.seed)?;
    let mut cache = KeyCache::new(&p, &v, &c);
    // Members come from the corpus and tokenized when the sets were drawn.
    let model = outlier_accuracy(&sets, |t| cache.text(t).expect("set members tokenize"));
    let skipgram = a.baseline.then(|| {
        let sg = train_skipgram_baseline(&c, &SkipGramConfig { seed: a.seed, ..Default::default() });
        outlier_accuracy(&sets, |t| sg.embed(&tokenize_normalized(t).expect("set members tokenize").key()))
    });
    println!("{} outlier accuracy {:.4}", a.taxonomy, model.accuracy);
    if let Some(s) = &skipgram {
        println!("skip-gram baseline accuracy {:.4}", s.accuracy);
    }
    let out = OutlierOutput { model, skipgram };
    write_file(&a.out, serde_json::to_string_pretty(&out).expect("report serializes") + "\n")
}

fn bbsearch(a: BbsearchArgs) -> Result<(), CliError> {
    let (p, v) = load_model(&a.ckpt, a.vocab.as_deref())?;
    let c = load_corpus(&a.corpus)?;
    let classes = read_classes(&a.truth)?;
    let task = BlockSearchTask::new(&c, &classes)?;
    let mut cache = KeyCache::new(&p, &v, &c);
    let mut failure = None;
    let result = block_search_auc(&task, |b| {
        let vecs: Vec<Vec<f64>> = b
            .instructions
            .iter()
            .filter_map(|i| match cache.text(&i.text) {
                Ok(x) => Some(x),
                Err(e) => {
                    failure.get_or_insert(e);
                    None
                }
            })
            .collect();
        mean(&vecs, p.cfg.hidden_dim)
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    println!("auc {:.6} ({} positive, {} negative pairs)", result.auc, result.positives, result.negatives);
    write_file(&a.out, roc_csv(&result.curve, result.auc))
}
