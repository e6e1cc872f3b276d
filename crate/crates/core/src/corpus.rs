//! Disassembly corpus ingestion.
//!
//! The corpus is read from a JSON Lines interchange file with one function per
//! line:
//!
//! ```text
//! {"binary_id": str, "function": str,
//!  "blocks": [{"id": str, "instructions": [{"addr": uint, "text": str}], "succs": [str]}],
//!  "def_use": [{"def": uint, "use": uint}]}
//! ```
//!
//! Every record is validated on load. Addresses are opaque keys; def-use edges
//! are taken from the file as-is and may cross basic blocks.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: dangling reference: {reason}")]
    DanglingReference { line: usize, reason: String },
    #[error("corpus contains no functions")]
    EmptyCorpus,
}

/// One disassembled instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub address: u64,
    pub text: String,
    pub block_id: String,
    pub index_in_block: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: String,
    pub instructions: Vec<Instruction>,
    pub successors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DefUseEdge {
    pub def_addr: u64,
    pub use_addr: u64,
}

/// Position of an instruction inside a function: (block index, index in block).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub block: usize,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct Function {
    pub binary_id: String,
    pub name: String,
    pub blocks: Vec<BasicBlock>,
    pub def_use: Vec<DefUseEdge>,
    by_addr: HashMap<u64, Slot>,
}

impl PartialEq for Function {
    fn eq(&self, other: &Self) -> bool {
        self.binary_id == other.binary_id
            && self.name == other.name
            && self.blocks == other.blocks
            && self.def_use == other.def_use
    }
}

impl Function {
    /// Builds and validates a function. `line` is only used for diagnostics.
    pub fn new(
        binary_id: impl Into<String>,
        name: impl Into<String>,
        blocks: Vec<BasicBlock>,
        def_use: Vec<DefUseEdge>,
        line: usize,
    ) -> Result<Self, CorpusError> {
        let malformed = |reason: String| CorpusError::MalformedRecord { line, reason };
        let dangling = |reason: String| CorpusError::DanglingReference { line, reason };

        let mut ids = HashSet::new();
        for block in &blocks {
            if !ids.insert(block.id.as_str()) {
                return Err(malformed(format!("duplicate block id {:?}", block.id)));
            }
            if block.instructions.is_empty() {
                return Err(malformed(format!("block {:?} has no instructions", block.id)));
            }
        }

        let mut by_addr = HashMap::new();
        for (bi, block) in blocks.iter().enumerate() {
            for succ in &block.successors {
                if !ids.contains(succ.as_str()) {
                    return Err(dangling(format!(
                        "block {:?} names unknown successor {:?}",
                        block.id, succ
                    )));
                }
            }
            for (ii, ins) in block.instructions.iter().enumerate() {
                if ins.text.trim().is_empty() || ins.text.contains(['\n', '\r']) {
                    return Err(malformed(format!(
                        "instruction at {} has empty or multi-line text",
                        ins.address
                    )));
                }
                if ins.block_id != block.id || ins.index_in_block != ii {
                    return Err(malformed(format!(
                        "instruction at {} is not positioned in its block",
                        ins.address
                    )));
                }
                if by_addr.insert(ins.address, Slot { block: bi, index: ii }).is_some() {
                    return Err(malformed(format!("duplicate address {}", ins.address)));
                }
            }
        }

        for edge in &def_use {
            if edge.def_addr == edge.use_addr {
                return Err(malformed(format!(
                    "def-use edge from {} to itself",
                    edge.def_addr
                )));
            }
            for addr in [edge.def_addr, edge.use_addr] {
                if !by_addr.contains_key(&addr) {
                    return Err(dangling(format!(
                        "def-use edge {} -> {} names unknown address {}",
                        edge.def_addr, edge.use_addr, addr
                    )));
                }
            }
        }

        Ok(Self {
            binary_id: binary_id.into(),
            name: name.into(),
            blocks,
            def_use,
            by_addr,
        })
    }

    pub fn slot_of(&self, addr: u64) -> Option<Slot> {
        self.by_addr.get(&addr).copied()
    }

    pub fn instruction_at(&self, addr: u64) -> Option<&Instruction> {
        self.slot_of(addr).map(|s| self.get(s))
    }

    pub fn get(&self, slot: Slot) -> &Instruction {
        &self.blocks[slot.block].instructions[slot.index]
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.iter().flat_map(|b| b.instructions.iter())
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instructions.len()).sum()
    }
}

/// Builder helper used by generators and tests: lays out `texts` as a block
/// with consecutive addresses starting at `base`.
pub fn block_from_texts(id: &str, base: u64, texts: &[&str], successors: &[&str]) -> BasicBlock {
    BasicBlock {
        id: id.to_string(),
        instructions: texts
            .iter()
            .enumerate()
            .map(|(i, t)| Instruction {
                address: base + i as u64,
                text: (*t).to_string(),
                block_id: id.to_string(),
                index_in_block: i,
            })
            .collect(),
        successors: successors.iter().map(|s| s.to_string()).collect(),
    }
}

/// Global handle to one instruction in a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstrRef {
    pub function: usize,
    pub block: usize,
    pub index: usize,
}

/// A validated collection of functions. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DisasmCorpus {
    functions: Vec<Function>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub functions: usize,
    pub blocks: usize,
    pub instructions: usize,
    pub def_use_edges: usize,
    /// Block length (in instructions) -> number of blocks.
    pub block_length_histogram: BTreeMap<usize, usize>,
}

impl DisasmCorpus {
    pub fn new(functions: Vec<Function>) -> Result<Self, CorpusError> {
        if functions.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        Ok(Self { functions })
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn instruction(&self, r: InstrRef) -> &Instruction {
        &self.functions[r.function].blocks[r.block].instructions[r.index]
    }

    /// All instructions in file order.
    pub fn instruction_refs(&self) -> Vec<InstrRef> {
        let mut out = Vec::new();
        for (fi, f) in self.functions.iter().enumerate() {
            for (bi, b) in f.blocks.iter().enumerate() {
                for ii in 0..b.instructions.len() {
                    out.push(InstrRef { function: fi, block: bi, index: ii });
                }
            }
        }
        out
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.functions.iter().flat_map(|f| f.instructions())
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&Function, &BasicBlock)> {
        self.functions
            .iter()
            .flat_map(|f| f.blocks.iter().map(move |b| (f, b)))
    }

    pub fn stats(&self) -> StatsReport {
        corpus_stats(self)
    }

    /// Splits functions into (train, held-out). Every function lands in
    /// exactly one side; the held-out side receives roughly `heldout_fraction`
    /// of the functions, chosen by a deterministic hash of `seed` and the
    /// function position.
    pub fn split_by_function(
        &self,
        heldout_fraction: f64,
        seed: u64,
    ) -> Result<(DisasmCorpus, DisasmCorpus), CorpusError> {
        let n = self.functions.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| crate::seeds::mix(seed, i as u64));
        let n_held = ((n as f64) * heldout_fraction).round() as usize;
        let n_held = n_held.clamp(1, n.saturating_sub(1).max(1));
        let held: HashSet<usize> = order[..n_held].iter().copied().collect();
        let mut train = Vec::new();
        let mut heldout = Vec::new();
        for (i, f) in self.functions.iter().enumerate() {
            if held.contains(&i) {
                heldout.push(f.clone());
            } else {
                train.push(f.clone());
            }
        }
        Ok((DisasmCorpus::new(train)?, DisasmCorpus::new(heldout)?))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.functions {
            let record = FunctionRecord::from(f);
            out.push_str(&serde_json::to_string(&record).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn corpus_stats(c: &DisasmCorpus) -> StatsReport {
    let mut hist = BTreeMap::new();
    let mut blocks = 0;
    for (_, b) in c.blocks() {
        blocks += 1;
        *hist.entry(b.instructions.len()).or_insert(0) += 1;
    }
    StatsReport {
        functions: c.functions.len(),
        blocks,
        instructions: c.instructions().count(),
        def_use_edges: c.functions.iter().map(|f| f.def_use.len()).sum(),
        block_length_histogram: hist,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InstructionRecord {
    addr: u64,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockRecord {
    id: String,
    instructions: Vec<InstructionRecord>,
    succs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    def: u64,
    #[serde(rename = "use")]
    use_: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FunctionRecord {
    binary_id: String,
    function: String,
    blocks: Vec<BlockRecord>,
    def_use: Vec<EdgeRecord>,
}

impl From<&Function> for FunctionRecord {
    fn from(f: &Function) -> Self {
        FunctionRecord {
            binary_id: f.binary_id.clone(),
            function: f.name.clone(),
            blocks: f
                .blocks
                .iter()
                .map(|b| BlockRecord {
                    id: b.id.clone(),
                    instructions: b
                        .instructions
                        .iter()
                        .map(|i| InstructionRecord { addr: i.address, text: i.text.clone() })
                        .collect(),
                    succs: b.successors.clone(),
                })
                .collect(),
            def_use: f
                .def_use
                .iter()
                .map(|e| EdgeRecord { def: e.def_addr, use_: e.use_addr })
                .collect(),
        }
    }
}

const FUNCTION_KEYS: &[&str] = &["binary_id", "function", "blocks", "def_use"];
const BLOCK_KEYS: &[&str] = &["id", "instructions", "succs"];
const INSTRUCTION_KEYS: &[&str] = &["addr", "text"];
const EDGE_KEYS: &[&str] = &["def", "use"];

fn warn_unknown(value: &Value, known: &[&str], what: &str, line: usize) {
    if let Some(obj) = value.as_object() {
        for key in obj.keys() {
            if !known.contains(&key.as_str()) {
                warn!("line {line}: ignoring unknown {what} field {key:?}");
            }
        }
    }
}

fn check_unknown_fields(value: &Value, line: usize) {
    warn_unknown(value, FUNCTION_KEYS, "function", line);
    if let Some(blocks) = value.get("blocks").and_then(Value::as_array) {
        for b in blocks {
            warn_unknown(b, BLOCK_KEYS, "block", line);
            if let Some(ins) = b.get("instructions").and_then(Value::as_array) {
                for i in ins {
                    warn_unknown(i, INSTRUCTION_KEYS, "instruction", line);
                }
            }
        }
    }
    if let Some(edges) = value.get("def_use").and_then(Value::as_array) {
        for e in edges {
            warn_unknown(e, EDGE_KEYS, "def_use", line);
        }
    }
}

fn parse_record(text: &str, line: usize) -> Result<Function, CorpusError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CorpusError::MalformedRecord {
        line,
        reason: format!("invalid JSON: {e}"),
    })?;
    if !value.is_object() {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: "record is not a JSON object".into(),
        });
    }
    check_unknown_fields(&value, line);
    let record: FunctionRecord =
        serde_json::from_value(value).map_err(|e| CorpusError::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;

    let blocks = record
        .blocks
        .into_iter()
        .map(|b| BasicBlock {
            instructions: b
                .instructions
                .into_iter()
                .enumerate()
                .map(|(i, ins)| Instruction {
                    address: ins.addr,
                    text: ins.text,
                    block_id: b.id.clone(),
                    index_in_block: i,
                })
                .collect(),
            id: b.id,
            successors: b.succs,
        })
        .collect();
    let def_use = record
        .def_use
        .into_iter()
        .map(|e| DefUseEdge { def_addr: e.def, use_addr: e.use_ })
        .collect();
    Function::new(record.binary_id, record.function, blocks, def_use, line)
}

/// Reads and validates a corpus from any buffered reader. Blank lines are skipped.
pub fn read_corpus(reader: impl BufRead) -> Result<DisasmCorpus, CorpusError> {
    let mut functions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: format!("read failure: {e}"),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        functions.push(parse_record(&text, line_no)?);
    }
    DisasmCorpus::new(functions)
}

pub fn load_corpus(path: &Path) -> Result<DisasmCorpus, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corpus = read_corpus(BufReader::new(file))?;
    let s = corpus.stats();
    info!(
        "loaded {}: {} functions, {} blocks, {} instructions, {} def-use edges",
        path.display(),
        s.functions,
        s.blocks,
        s.instructions,
        s.def_use_edges
    );
    Ok(corpus)
}
