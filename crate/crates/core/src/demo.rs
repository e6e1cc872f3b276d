//! Synthetic corpora for smoke tests and desk-scale experiments.
//!
//! Each block follows one "theme" (a register pair, constants, stack slots,
//! conditional jumps and a call target) and is rendered from one of a handful
//! of block templates over five opcode categories. Each template comes in three
//! equivalent renderings, standing in for different optimization levels.

use rand::Rng;

use crate::corpus::{BasicBlock, DefUseEdge, DisasmCorpus, Function, Instruction};
use crate::evalkit::BlockClass;
use crate::seeds;

pub const DEMO_SEED: u64 = 2020;
pub const DEMO_BINARY: &str = "demo";
pub const OPT_LEVELS: [&str; 3] = ["O1", "O2", "O3"];

struct Theme {
    a: &'static str,
    b: &'static str,
    c: &'static str,
    off: &'static str,
    jcc: &'static str,
    callee: &'static str,
    /// Second constant, stack slot and branch, so that no normalized
    /// instruction is shared between two templates of one theme.
    c2: &'static str,
    off2: &'static str,
    jcc2: &'static str,
}

#[rustfmt::skip]
const THEMES: [Theme; 5] = [
    Theme { a: "rbx", b: "r12", c: "0x8", off: "0x18", jcc: "jne", callee: "memcpy", c2: "0x3", off2: "0x48", jcc2: "js" },
    Theme { a: "rcx", b: "r13", c: "0x10", off: "0x20", jcc: "je", callee: "strlen", c2: "0x5", off2: "0x50", jcc2: "jbe" },
    Theme { a: "rdx", b: "r14", c: "0x1", off: "0x28", jcc: "jg", callee: "malloc", c2: "0x7", off2: "0x58", jcc2: "jle" },
    Theme { a: "r8", b: "r15", c: "0x20", off: "0x30", jcc: "jl", callee: "free", c2: "0x9", off2: "0x60", jcc2: "ja" },
    Theme { a: "r9", b: "r10", c: "0x4", off: "0x38", jcc: "jae", callee: "printf", c2: "0xb", off2: "0x68", jcc2: "jns" },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Template {
    Frame,
    LoadCompare,
    CallCheck,
    Arith,
    Epilogue,
}

const TEMPLATES: [Template; 5] =
    [Template::Frame, Template::LoadCompare, Template::CallCheck, Template::Arith, Template::Epilogue];

impl Template {
    fn name(self) -> &'static str {
        match self {
            Template::Frame => "frame",
            Template::LoadCompare => "load_cmp",
            Template::CallCheck => "call_check",
            Template::Arith => "arith",
            Template::Epilogue => "epilogue",
        }
    }
}

/// Instruction texts plus intra-block def-use edges as index pairs.
type Rendering = (Vec<String>, Vec<(usize, usize)>);

fn render(t: Template, th: &Theme, variant: usize, target: &str) -> Rendering {
    let Theme { a, b, c, off, jcc, callee, c2, off2, jcc2 } = th;
    let (texts, edges): (Vec<String>, Vec<(usize, usize)>) = match (t, variant) {
        (Template::Frame, 0) => (
            vec![format!("push {b}"), format!("mov {b}, rsi"), format!("xor {a}, {a}"), format!("mov qword [rbp-{off}], {b}")],
            vec![(1, 3)],
        ),
        (Template::Frame, 1) => (
            vec![format!("push {b}"), format!("xor {a}, {a}"), format!("mov {b}, rsi"), format!("mov qword [rbp-{off}], {b}")],
            vec![(2, 3)],
        ),
        (Template::Frame, _) => (
            vec![format!("push {b}"), format!("mov {a}, 0x0"), format!("mov {b}, rsi"), format!("mov qword [rbp-{off}], {b}")],
            vec![(2, 3)],
        ),
        (Template::LoadCompare, 0) => (
            vec![format!("mov {a}, qword [rbp-{off}]"), format!("add {a}, {c}"), format!("cmp {a}, {b}"), format!("{jcc} {target}")],
            vec![(0, 1), (1, 2), (2, 3)],
        ),
        (Template::LoadCompare, 1) => (
            vec![format!("mov {a}, qword [rbp-{off}]"), format!("lea {a}, [{a}+{c}]"), format!("cmp {a}, {b}"), format!("{jcc} {target}")],
            vec![(0, 1), (1, 2), (2, 3)],
        ),
        (Template::LoadCompare, _) => (
            vec![
                format!("mov {a}, qword [rbp-{off}]"),
                format!("add {a}, {c}"),
                format!("mov qword [rbp-{off}], {a}"),
                format!("cmp {a}, {b}"),
                format!("{jcc} {target}"),
            ],
            vec![(0, 1), (1, 2), (1, 3), (3, 4)],
        ),
        (Template::CallCheck, 0) => (
            vec![format!("mov rdi, {a}"), format!("call {callee}"), format!("mov {b}, rax"), format!("test {b}, {b}"), format!("{jcc2} {target}")],
            vec![(0, 1), (1, 2), (2, 3), (3, 4)],
        ),
        (Template::CallCheck, 1) => (
            vec![format!("mov rdi, {a}"), format!("call {callee}"), format!("mov {b}, rax"), format!("cmp {b}, 0x0"), format!("{jcc2} {target}")],
            vec![(0, 1), (1, 2), (2, 3), (3, 4)],
        ),
        (Template::CallCheck, _) => (
            vec![format!("mov rdi, {a}"), format!("call {callee}"), format!("test rax, rax"), format!("mov {b}, rax"), format!("{jcc2} {target}")],
            vec![(0, 1), (1, 2), (1, 3), (2, 4)],
        ),
        (Template::Arith, 0) => (
            vec![format!("lea {a}, [{b}+{c2}]"), format!("sub {a}, {b}"), format!("xor {b}, {b}"), format!("mov qword [rbp-{off2}], {a}")],
            vec![(0, 1), (1, 3)],
        ),
        (Template::Arith, 1) => (
            vec![format!("lea {a}, [{b}+{c2}]"), format!("sub {a}, {b}"), format!("mov qword [rbp-{off2}], {a}"), format!("xor {b}, {b}")],
            vec![(0, 1), (1, 2)],
        ),
        (Template::Arith, _) => (
            vec![
                format!("mov {a}, {b}"),
                format!("add {a}, {c2}"),
                format!("sub {a}, {b}"),
                format!("xor {b}, {b}"),
                format!("mov qword [rbp-{off2}], {a}"),
            ],
            vec![(0, 1), (1, 2), (2, 4)],
        ),
        (Template::Epilogue, 0) => (
            vec![format!("mov rax, {a}"), format!("pop {b}"), "leave".into(), "retn".into()],
            vec![(0, 3)],
        ),
        (Template::Epilogue, 1) => (
            vec![format!("mov rax, {a}"), format!("pop {b}"), "mov rsp, rbp".into(), "pop rbp".into(), "retn".into()],
            vec![(0, 4), (2, 3)],
        ),
        (Template::Epilogue, _) => (
            vec![format!("pop {b}"), format!("mov rax, {a}"), "leave".into(), "retn".into()],
            vec![(1, 3)],
        ),
    };
    (texts, edges)
}

fn jump_target(rng: &mut impl Rng) -> String {
    format!("0x{:x}", rng.random_range(0x401000u64..0x4fffff))
}

struct Layout {
    next_addr: u64,
}

impl Layout {
    fn block(&mut self, id: String, r: &Rendering, succs: Vec<String>, edges: &mut Vec<DefUseEdge>) -> BasicBlock {
        let base = self.next_addr;
        self.next_addr += 0x10 * r.0.len() as u64 + 0x10;
        let instructions = r
            .0
            .iter()
            .enumerate()
            .map(|(i, text)| Instruction { address: base + 0x10 * i as u64, text: text.clone(), block_id: id.clone(), index_in_block: i })
            .collect();
        edges.extend(r.1.iter().map(|&(d, u)| DefUseEdge { def_addr: base + 0x10 * d as u64, use_addr: base + 0x10 * u as u64 }));
        BasicBlock { id, instructions, successors: succs }
    }
}

/// The bundled training corpus: fifteen functions, each a frame block, two
/// distinct body blocks and an epilogue. Themes vary from block to block, so
/// a held-out split sees the same mix of themes as training.
pub fn demo_corpus(seed: u64) -> DisasmCorpus {
    let mut rng = seeds::rng(seed, seeds::tag::DEMO, 0);
    let mut layout = Layout { next_addr: 0x401000 };
    let body = [Template::LoadCompare, Template::CallCheck, Template::Arith];
    let mut functions = Vec::new();
    for k in 0..15 {
        let skip = body[k % 3];
        let mut chosen: Vec<Template> = vec![Template::Frame];
        chosen.extend(body.iter().copied().filter(|&t| t != skip));
        chosen.push(Template::Epilogue);
        let ids: Vec<String> = (0..chosen.len()).map(|i| format!("bb{i}")).collect();
        let mut edges = Vec::new();
        let mut blocks = Vec::new();
        for (i, &t) in chosen.iter().enumerate() {
            // Latin-square style assignment: each (theme, template) combination
            // recurs across functions, and blocks of one function differ in theme.
            let th = &THEMES[(k + 2 * i) % THEMES.len()];
            let variant = rng.random_range(0..OPT_LEVELS.len());
            let r = render(t, th, variant, &jump_target(&mut rng));
            let mut succs: Vec<String> = ids.get(i + 1).into_iter().cloned().collect();
            if matches!(t, Template::LoadCompare | Template::CallCheck) {
                succs.push(ids.last().unwrap().clone());
                succs.dedup();
            }
            blocks.push(layout.block(ids[i].clone(), &r, succs, &mut edges));
        }
        let name = format!("fn_{k:02}");
        functions.push(Function::new(DEMO_BINARY, name, blocks, edges, 0).expect("generated function is valid"));
    }
    DisasmCorpus::new(functions).expect("non-empty")
}

/// Block-search corpus: every (theme, template) block rendered at three
/// "optimization levels", one binary per level, plus the equivalence classes.
pub fn equivalence_corpus(seed: u64) -> (DisasmCorpus, Vec<BlockClass>) {
    let mut rng = seeds::rng(seed, seeds::tag::DEMO, 1);
    let mut layout = Layout { next_addr: 0x501000 };
    let mut functions = Vec::new();
    let mut classes: Vec<BlockClass> = Vec::new();
    for (level, binary) in OPT_LEVELS.iter().enumerate() {
        for (ti, th) in THEMES.iter().enumerate() {
            let mut edges = Vec::new();
            let mut blocks = Vec::new();
            for &t in &TEMPLATES {
                let id = format!("t{ti}_{}", t.name());
                let r = render(t, th, level, &jump_target(&mut rng));
                blocks.push(layout.block(id.clone(), &r, Vec::new(), &mut edges));
                if level == 0 {
                    classes.push(BlockClass { class: id.clone(), blocks: Vec::new() });
                }
                let class = classes.iter_mut().find(|c| c.class == id).expect("class created at level 0");
                class.blocks.push((binary.to_string(), id));
            }
            let f = Function::new(*binary, format!("theme_{ti}"), blocks, edges, 0).expect("generated function is valid");
            functions.push(f);
        }
    }
    (DisasmCorpus::new(functions).expect("non-empty"), classes)
}
