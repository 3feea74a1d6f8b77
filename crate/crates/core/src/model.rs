//! The program AST.
//!
//! A [`Program`] is a stage plus an ordered list of sprites. Each target owns
//! its scripts, custom block definitions, variables, lists and costume
//! metadata. Everything the tool does not interpret (sounds, monitors,
//! costume assets, layout settings) is carried in `extras` maps and the
//! asset table so it survives a load/save cycle unchanged.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::opcodes::{self, Shape};

/// Stable identifier of a script or custom block definition, `<target>:<n>`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptId(pub String);

impl ScriptId {
    pub fn new(target: &str, ordinal: u32) -> Self {
        ScriptId(format!("{target}:{ordinal}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Target-name prefix of the id, if it has the canonical shape.
    pub fn target_name(&self) -> Option<&str> {
        self.0.rsplit_once(':').map(|(t, _)| t)
    }

    pub fn ordinal(&self) -> Option<u32> {
        self.0.rsplit_once(':').and_then(|(_, n)| n.parse().ok())
    }
}

impl fmt::Display for ScriptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ScriptId {
    fn from(s: &str) -> Self {
        ScriptId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub stage: Target,
    pub sprites: Vec<Target>,
    /// `meta.semver` of the project file.
    pub meta: String,
    /// Top-level project keys other than `targets` (monitors, extensions, meta).
    pub extras: Map<String, Value>,
    /// Every archive entry other than `project.json`, keyed by file name.
    pub assets: BTreeMap<String, Vec<u8>>,
}

impl Default for Program {
    fn default() -> Self {
        Program::empty()
    }
}

impl Program {
    /// A project with a bare stage and no sprites.
    pub fn empty() -> Self {
        Program {
            stage: Target::new_stage(),
            sprites: Vec::new(),
            meta: "3.0.0".to_string(),
            extras: Map::new(),
            assets: BTreeMap::new(),
        }
    }

    pub fn targets(&self) -> impl Iterator<Item = &Target> {
        std::iter::once(&self.stage).chain(self.sprites.iter())
    }

    pub fn targets_mut(&mut self) -> impl Iterator<Item = &mut Target> {
        std::iter::once(&mut self.stage).chain(self.sprites.iter_mut())
    }

    /// Looks up a sprite by name, or the stage by its own name.
    pub fn target(&self, name: &str) -> Option<&Target> {
        self.targets().find(|t| t.name == name)
    }

    pub fn target_mut(&mut self, name: &str) -> Option<&mut Target> {
        self.targets_mut().find(|t| t.name == name)
    }

    pub fn sprite(&self, name: &str) -> Option<&Target> {
        self.sprites.iter().find(|t| t.name == name)
    }

    /// Finds the target that owns a script or procedure with this id.
    pub fn owner_of(&self, id: &ScriptId) -> Option<&Target> {
        self.targets().find(|t| t.contains_id(id))
    }

    pub fn script(&self, id: &ScriptId) -> Option<(&Target, &Script)> {
        self.targets()
            .find_map(|t| t.scripts.iter().find(|s| &s.id == id).map(|s| (t, s)))
    }

    pub fn all_script_ids(&self) -> HashSet<ScriptId> {
        self.targets().flat_map(|t| t.all_ids()).collect()
    }

    /// Checks the structural invariants of the model and returns every
    /// violation found, in a deterministic order.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.stage.is_stage {
            out.push(Violation::new(&self.stage.name, None, "stage target is not flagged as stage"));
        }
        let mut names = HashSet::new();
        for sprite in &self.sprites {
            if sprite.is_stage {
                out.push(Violation::new(&sprite.name, None, "sprite flagged as stage"));
            }
            if sprite.name.is_empty() {
                out.push(Violation::new("", None, "sprite name is empty"));
            }
            if !names.insert(sprite.name.as_str()) {
                out.push(Violation::new(&sprite.name, None, "duplicate sprite name"));
            }
        }
        let mut ids = HashSet::new();
        for target in self.targets() {
            for id in target.all_ids() {
                if !ids.insert(id.clone()) {
                    out.push(Violation::new(&target.name, Some(&id), "duplicate script id"));
                }
            }
            target.validate_into(&mut out);
        }
        out
    }
}

/// One broken invariant, as reported by [`Program::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub target: String,
    pub script: Option<ScriptId>,
    pub message: String,
}

impl Violation {
    fn new(target: &str, script: Option<&ScriptId>, message: impl Into<String>) -> Self {
        Violation {
            target: target.to_string(),
            script: script.cloned(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.script {
            Some(id) => write!(f, "{} ({}): {}", self.target, id, self.message),
            None => write!(f, "{}: {}", self.target, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub id: String,
    pub name: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListVar {
    pub id: String,
    pub name: String,
    pub items: Vec<Value>,
}

/// Costume metadata. `record` is the untouched project.json entry minus the name.
#[derive(Debug, Clone, PartialEq)]
pub struct Costume {
    pub name: String,
    pub record: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub name: String,
    pub is_stage: bool,
    pub scripts: Vec<Script>,
    pub procedures: Vec<ProcedureDefinition>,
    pub variables: Vec<Variable>,
    pub lists: Vec<ListVar>,
    /// First entry is the current costume.
    pub costumes: Vec<Costume>,
    /// Workspace coordinates of top-level stacks, keyed by script id.
    pub positions: BTreeMap<ScriptId, (f64, f64)>,
    /// Loose variable/list reporters lying on the workspace (raw primitives).
    pub loose: Vec<Value>,
    /// Remaining target keys (sounds, x/y, layerOrder, comments, ...).
    pub extras: Map<String, Value>,
}

impl Target {
    pub fn new_stage() -> Self {
        Target::new("Stage", true)
    }

    pub fn new_sprite(name: &str) -> Self {
        Target::new(name, false)
    }

    fn new(name: &str, is_stage: bool) -> Self {
        Target {
            name: name.to_string(),
            is_stage,
            scripts: Vec::new(),
            procedures: Vec::new(),
            variables: Vec::new(),
            lists: Vec::new(),
            costumes: Vec::new(),
            positions: BTreeMap::new(),
            loose: Vec::new(),
            extras: Map::new(),
        }
    }

    pub fn contains_id(&self, id: &ScriptId) -> bool {
        self.scripts.iter().any(|s| &s.id == id) || self.procedures.iter().any(|p| &p.body.id == id)
    }

    pub fn all_ids(&self) -> impl Iterator<Item = ScriptId> + '_ {
        self.procedures
            .iter()
            .map(|p| p.body.id.clone())
            .chain(self.scripts.iter().map(|s| s.id.clone()))
    }

    pub fn script(&self, id: &ScriptId) -> Option<&Script> {
        self.scripts.iter().find(|s| &s.id == id)
    }

    pub fn procedure(&self, proccode: &str) -> Option<&ProcedureDefinition> {
        self.procedures.iter().find(|p| p.prototype.proccode == proccode)
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn list(&self, name: &str) -> Option<&ListVar> {
        self.lists.iter().find(|l| l.name == name)
    }

    /// Next unused `<name>:<n>` id, given the ids already taken program-wide.
    pub fn next_script_id(&self, taken: &HashSet<ScriptId>) -> ScriptId {
        let mut n = self
            .all_ids()
            .filter(|id| id.target_name() == Some(self.name.as_str()))
            .filter_map(|id| id.ordinal())
            .max()
            .unwrap_or(0)
            + 1;
        loop {
            let id = ScriptId::new(&self.name, n);
            if !taken.contains(&id) {
                return id;
            }
            n += 1;
        }
    }

    fn validate_into(&self, out: &mut Vec<Violation>) {
        for proc in &self.procedures {
            let mut seen = HashSet::new();
            for p in &proc.prototype.params {
                if !seen.insert(p.name.as_str()) {
                    out.push(Violation::new(&self.name, Some(&proc.body.id), format!("duplicate parameter `{}`", p.name)));
                }
            }
            validate_sequence(self, &proc.body.id, &proc.body.blocks, true, out);
        }
        for script in &self.scripts {
            for (i, b) in script.blocks.iter().enumerate() {
                if i > 0 && b.shape() == Some(Shape::Hat) {
                    out.push(Violation::new(&self.name, Some(&script.id), "hat block after position 0"));
                }
            }
            validate_sequence(self, &script.id, &script.blocks, false, out);
        }
    }
}

fn validate_sequence(target: &Target, id: &ScriptId, blocks: &[Block], nested: bool, out: &mut Vec<Violation>) {
    for (i, block) in blocks.iter().enumerate() {
        let shape = block.shape();
        if nested && shape == Some(Shape::Hat) {
            out.push(Violation::new(&target.name, Some(id), "hat block in nested sequence"));
        }
        if matches!(shape, Some(Shape::Reporter | Shape::Boolean)) && blocks.len() > 1 {
            out.push(Violation::new(&target.name, Some(id), format!("reporter `{}` in statement position", block.opcode)));
        }
        if block.is_cap() && i + 1 < blocks.len() {
            out.push(Violation::new(&target.name, Some(id), format!("`{}` is not the last block of its sequence", block.opcode)));
        }
        if let Some(spec) = block.spec().filter(|s| !s.is_custom()) {
            if block.substacks.len() != spec.branches() {
                out.push(Violation::new(&target.name, Some(id), format!("`{}` has wrong substack count", block.opcode)));
            }
            let slots = spec.slots();
            let inputs = slots.iter().filter(|s| s.kind.is_input()).count();
            let fields = slots.len() - inputs;
            if block.inputs.len() != inputs || block.fields.len() != fields {
                out.push(Violation::new(&target.name, Some(id), format!("`{}` has wrong arity", block.opcode)));
            }
        }
        if block.opcode == opcodes::PROCEDURE_CALL {
            let resolved = block.proccode.as_deref().and_then(|c| target.procedure(c)).is_some();
            if !resolved {
                out.push(Violation::new(&target.name, Some(id), "procedure call does not resolve"));
            }
        }
        for sub in &block.substacks {
            validate_sequence(target, id, sub, true, out);
        }
        for (_, expr) in &block.inputs {
            validate_expr(target, id, expr, out);
        }
    }
}

fn validate_expr(target: &Target, id: &ScriptId, expr: &Expr, out: &mut Vec<Violation>) {
    if let Expr::Block(b) = expr {
        if matches!(b.shape(), Some(s) if !s.is_reporter()) {
            out.push(Violation::new(&target.name, Some(id), format!("statement `{}` in input slot", b.opcode)));
        }
        for (_, e) in &b.inputs {
            validate_expr(target, id, e, out);
        }
    }
}

/// A stack of blocks, optionally led by a hat block.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub id: ScriptId,
    pub blocks: Vec<Block>,
}

impl Script {
    pub fn new(id: ScriptId, blocks: Vec<Block>) -> Self {
        Script { id, blocks }
    }

    pub fn hat(&self) -> Option<&Block> {
        self.blocks.first().filter(|b| b.shape() == Some(Shape::Hat))
    }

    /// Visits every statement block depth-first in pre-order. The callback
    /// receives the block, its pre-order index and the opcodes of the
    /// enclosing C-blocks, outermost first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Block, usize, &[&'a str])) {
        let mut index = 0;
        let mut stack = Vec::new();
        walk_sequence(&self.blocks, &mut index, &mut stack, f);
    }

    pub fn statement_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, _, _| n += 1);
        n
    }

    /// Whether every block in the script is known to the opcode table and in
    /// a legal position, i.e. whether it can be printed as scratchblocks.
    pub fn is_printable(&self) -> bool {
        self.blocks.iter().all(|b| b.is_printable_statement())
    }
}

fn walk_sequence<'a>(
    blocks: &'a [Block],
    index: &mut usize,
    stack: &mut Vec<&'a str>,
    f: &mut dyn FnMut(&'a Block, usize, &[&'a str]),
) {
    for block in blocks {
        f(block, *index, stack);
        *index += 1;
        if !block.substacks.is_empty() {
            stack.push(block.opcode.as_str());
            for sub in &block.substacks {
                walk_sequence(sub, index, stack, f);
            }
            stack.pop();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// number or text
    Value,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

/// Signature of a custom block, e.g. proccode `jump %s` with one parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prototype {
    pub proccode: String,
    pub params: Vec<Param>,
    pub warp: bool,
}

impl Prototype {
    /// Builds a prototype from label words and parameters in display order.
    pub fn from_parts(parts: &[ProtoPart]) -> Self {
        let mut code = Vec::new();
        let mut params = Vec::new();
        for part in parts {
            match part {
                ProtoPart::Label(l) => code.push(l.clone()),
                ProtoPart::Param(p) => {
                    code.push(match p.kind {
                        ParamKind::Value => "%s".to_string(),
                        ParamKind::Boolean => "%b".to_string(),
                    });
                    params.push(p.clone());
                }
            }
        }
        Prototype {
            proccode: code.join(" "),
            params,
            warp: false,
        }
    }

    /// Label words and parameter markers of the proccode, in order.
    pub fn parts(&self) -> Vec<ProtoPart> {
        let mut params = self.params.iter();
        self.proccode
            .split_whitespace()
            .map(|w| match w {
                "%s" | "%n" | "%b" => match params.next() {
                    Some(p) => ProtoPart::Param(p.clone()),
                    None => ProtoPart::Label(w.to_string()),
                },
                _ => ProtoPart::Label(w.to_string()),
            })
            .collect()
    }

    /// Parameter kinds as encoded in the proccode markers.
    pub fn slot_kinds(proccode: &str) -> Vec<ParamKind> {
        proccode
            .split_whitespace()
            .filter_map(|w| match w {
                "%s" | "%n" => Some(ParamKind::Value),
                "%b" => Some(ParamKind::Boolean),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtoPart {
    Label(String),
    Param(Param),
}

/// A custom block definition. `body.id` identifies the definition; its
/// blocks exclude the `define` hat.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureDefinition {
    pub prototype: Prototype,
    pub body: Script,
}

/// A block. Known opcodes follow the slot layout of the opcode table; any
/// other opcode is kept opaquely so it survives re-serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub opcode: String,
    /// Input slots by sb3 input name, in table order for known opcodes.
    /// Custom block calls use `arg0`, `arg1`, ...
    pub inputs: Vec<(String, Expr)>,
    /// Dropdown fields by sb3 field name.
    pub fields: Vec<(String, String)>,
    pub substacks: Vec<Vec<Block>>,
    /// Set for `procedures_call`.
    pub proccode: Option<String>,
    /// Only meaningful for opaque blocks nested as inputs.
    pub shadow: bool,
}

impl Block {
    pub fn new(opcode: &str) -> Self {
        Block {
            opcode: opcode.to_string(),
            inputs: Vec::new(),
            fields: Vec::new(),
            substacks: Vec::new(),
            proccode: None,
            shadow: false,
        }
    }

    pub fn with_input(mut self, name: &str, expr: Expr) -> Self {
        self.inputs.push((name.to_string(), expr));
        self
    }

    pub fn with_field(mut self, name: &str, value: &str) -> Self {
        self.fields.push((name.to_string(), value.to_string()));
        self
    }

    pub fn with_substack(mut self, blocks: Vec<Block>) -> Self {
        self.substacks.push(blocks);
        self
    }

    pub fn call(proccode: &str, args: Vec<Expr>) -> Self {
        let mut b = Block::new(opcodes::PROCEDURE_CALL);
        b.proccode = Some(proccode.to_string());
        b.inputs = args
            .into_iter()
            .enumerate()
            .map(|(i, e)| (format!("arg{i}"), e))
            .collect();
        b
    }

    pub fn spec(&self) -> Option<&'static opcodes::OpSpec> {
        opcodes::lookup(&self.opcode)
    }

    pub fn shape(&self) -> Option<Shape> {
        if self.opcode == opcodes::PROCEDURE_CALL {
            return Some(Shape::Stack);
        }
        self.spec().map(|s| s.shape)
    }

    pub fn is_known(&self) -> bool {
        self.shape().is_some()
    }

    /// Cap blocks (including `forever`) end their sequence.
    pub fn is_cap(&self) -> bool {
        self.spec().is_some_and(|s| s.is_cap())
    }

    pub fn input(&self, name: &str) -> Option<&Expr> {
        self.inputs.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn field(&self, name: &str) -> Option<&str> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    fn is_printable_statement(&self) -> bool {
        matches!(self.shape(), Some(s) if !s.is_reporter())
            && self.inputs.iter().all(|(_, e)| e.is_printable())
            && self.substacks.iter().flatten().all(Block::is_printable_statement)
    }

    /// Calls `f` on this block and every block nested in its inputs and substacks.
    pub fn visit(&self, f: &mut dyn FnMut(&Block)) {
        f(self);
        for (_, e) in &self.inputs {
            if let Expr::Block(b) = e {
                b.visit(f);
            }
        }
        for sub in &self.substacks {
            for b in sub {
                b.visit(f);
            }
        }
    }

    /// Calls `f` on every expression reachable from this block.
    pub fn visit_exprs(&self, f: &mut dyn FnMut(&Expr)) {
        for (_, e) in &self.inputs {
            f(e);
            if let Expr::Block(b) = e {
                b.visit_exprs(f);
            }
        }
        for sub in &self.substacks {
            for b in sub {
                b.visit_exprs(f);
            }
        }
    }
}

/// Content of an input slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Number or text literal; the slot decides how it is encoded.
    Literal(String),
    Color(String),
    /// Dropdown value of a menu input (go to [random position v], broadcast).
    Menu(String),
    Variable(String),
    List(String),
    /// Number/text parameter reporter of a custom block.
    Param(String),
    BoolParam(String),
    Block(Box<Block>),
    /// Raw primitive of an opaque block input, kept verbatim.
    Raw(Value),
    /// Empty boolean slot.
    Empty,
}

impl Expr {
    pub fn lit(s: impl Into<String>) -> Self {
        Expr::Literal(s.into())
    }

    pub fn block(b: Block) -> Self {
        Expr::Block(Box::new(b))
    }

    fn is_printable(&self) -> bool {
        match self {
            Expr::Raw(_) => false,
            Expr::Block(b) => {
                matches!(b.shape(), Some(s) if s.is_reporter()) && b.inputs.iter().all(|(_, e)| e.is_printable())
            }
            _ => true,
        }
    }
}
