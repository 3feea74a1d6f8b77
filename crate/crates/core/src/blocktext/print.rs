use std::sync::LazyLock;

use regex::Regex;

use super::lex::escape;
use super::parse::{reparse_block, reparse_expr, Ctx};
use super::{PrintError, Scope, SCRIPT_MARKER, SPRITE_HEADING, STAGE_HEADING};
use crate::model::{Block, Expr, Param, ParamKind, ProcedureDefinition, Program, Prototype, ProtoPart, ScriptId, Target};
use crate::opcodes::{self, menu_display, OpSpec, Part, Shape, SlotKind};

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^-?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$").unwrap());

pub(crate) fn is_number(text: &str) -> bool {
    NUMBER.is_match(text)
}

/// Prints the selected scope. Fails if any script in it contains a block
/// without a text form.
pub fn print_program(program: &Program, scope: &Scope) -> Result<String, PrintError> {
    let (text, skipped) = print_program_lossy(program, scope)?;
    if skipped.is_empty() {
        Ok(text)
    } else {
        Err(PrintError::Unprintable(skipped))
    }
}

/// Prints the selected scope, leaving out scripts that cannot be printed.
/// Returns the text and the ids of the omitted scripts.
pub fn print_program_lossy(program: &Program, scope: &Scope) -> Result<(String, Vec<ScriptId>), PrintError> {
    let targets: Vec<&Target> = match scope {
        Scope::Program => program.targets().collect(),
        Scope::Sprite(name) => vec![program.target(name).ok_or_else(|| PrintError::UnknownSprite(name.clone()))?],
    };
    let mut sections = Vec::new();
    let mut skipped = Vec::new();
    for t in targets {
        let (text, mut s) = print_target(t);
        sections.push(text);
        skipped.append(&mut s);
    }
    Ok((sections.join("\n"), skipped))
}

/// Prints one target section: its heading and every printable script.
pub fn print_target(target: &Target) -> (String, Vec<ScriptId>) {
    let heading = if target.is_stage { STAGE_HEADING } else { SPRITE_HEADING };
    let mut out = format!("{heading}{}\n", target.name);
    let mut skipped = Vec::new();
    let prototypes: Vec<Prototype> = target.procedures.iter().map(|p| p.prototype.clone()).collect();
    for proc in &target.procedures {
        match print_procedure(proc, &prototypes) {
            Some(lines) => push_script(&mut out, &proc.body.id, &lines),
            None => skipped.push(proc.body.id.clone()),
        }
    }
    for script in &target.scripts {
        let mut p = Printer::new(&prototypes, &[]);
        match p.sequence(&script.blocks) {
            Some(()) => push_script(&mut out, &script.id, &p.lines),
            None => skipped.push(script.id.clone()),
        }
    }
    (out, skipped)
}

fn push_script(out: &mut String, id: &ScriptId, lines: &[String]) {
    out.push('\n');
    out.push_str(SCRIPT_MARKER);
    out.push_str(id.as_str());
    out.push('\n');
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
}

fn print_procedure(proc: &ProcedureDefinition, prototypes: &[Prototype]) -> Option<Vec<String>> {
    let mut line = String::from("define");
    for part in proc.prototype.parts() {
        line.push(' ');
        match part {
            ProtoPart::Label(l) => line.push_str(&l),
            ProtoPart::Param(Param { name, kind: ParamKind::Value }) => line.push_str(&format!("({})", escape(&name))),
            ProtoPart::Param(Param { name, kind: ParamKind::Boolean }) => line.push_str(&format!("<{}>", escape(&name))),
        }
    }
    if proc.prototype.warp {
        line.push_str(" :: warp");
    }
    let mut p = Printer::new(prototypes, &proc.prototype.params);
    p.lines.push(line);
    p.sequence(&proc.body.blocks)?;
    Some(p.lines)
}

struct Printer<'a> {
    ctx: Ctx<'a>,
    lines: Vec<String>,
}

impl<'a> Printer<'a> {
    fn new(prototypes: &'a [Prototype], params: &'a [Param]) -> Self {
        Printer {
            ctx: Ctx { prototypes, params },
            lines: Vec::new(),
        }
    }

    fn sequence(&mut self, blocks: &[Block]) -> Option<()> {
        for b in blocks {
            self.statement(b)?;
        }
        Some(())
    }

    fn statement(&mut self, block: &Block) -> Option<()> {
        if block.opcode == opcodes::PROCEDURE_CALL {
            let line = self.call(block)?;
            self.lines.push(line);
            return Some(());
        }
        let spec = block.spec().filter(|s| !s.is_custom())?;
        if spec.shape.is_reporter() {
            return None;
        }
        let line = self.template(spec, block)?;
        self.lines.push(line);
        if let Shape::CBlock { branches, .. } = spec.shape {
            for i in 0..branches as usize {
                if i > 0 {
                    self.lines.push("else".to_string());
                }
                self.sequence(block.substacks.get(i)?)?;
            }
            self.lines.push("end".to_string());
        }
        Some(())
    }

    fn template(&self, spec: &OpSpec, block: &Block) -> Option<String> {
        let mut words: Vec<String> = Vec::new();
        for part in spec.parts() {
            match part {
                Part::Word(w) => words.push(w.to_string()),
                Part::Slot(slot) => {
                    let text = match slot.kind {
                        SlotKind::Field => dropdown(block.field(slot.name)?),
                        SlotKind::Menu => self.menu(spec, slot.name, block.input(slot.name)?)?,
                        kind => self.expr(block.input(slot.name)?, kind)?,
                    };
                    words.push(text);
                }
            }
        }
        Some(join(words))
    }

    fn call(&self, block: &Block) -> Option<String> {
        let proccode = block.proccode.as_deref()?;
        let mut words = Vec::new();
        let mut args = block.inputs.iter();
        for word in proccode.split_whitespace() {
            let kind = match word {
                "%s" | "%n" => SlotKind::Text,
                "%b" => SlotKind::Boolean,
                _ => {
                    words.push(word.to_string());
                    continue;
                }
            };
            words.push(self.expr(&args.next()?.1, kind)?);
        }
        if args.next().is_some() {
            return None;
        }
        let line = join(words);
        if reparse_block(&line, &self.ctx).as_ref() == Some(block) {
            Some(line)
        } else {
            Some(format!("{line} :: custom"))
        }
    }

    fn menu(&self, spec: &OpSpec, slot: &str, expr: &Expr) -> Option<String> {
        match expr {
            Expr::Menu(v) => {
                let internal = spec.choices_for(slot).is_some_and(|c| c.contains(&v.as_str()));
                Some(dropdown(if internal { menu_display(v) } else { v }))
            }
            Expr::Block(_) | Expr::Variable(_) | Expr::List(_) | Expr::Param(_) | Expr::BoolParam(_) => {
                self.expr(expr, SlotKind::Text)
            }
            _ => None,
        }
    }

    fn expr(&self, expr: &Expr, kind: SlotKind) -> Option<String> {
        let text = match expr {
            Expr::Literal(v) if v.is_empty() => match kind {
                SlotKind::Number | SlotKind::Boolean => "()".to_string(),
                _ => "[]".to_string(),
            },
            Expr::Literal(v) if is_number(v) => format!("({v})"),
            Expr::Literal(v) => format!("[{}]", literal(v)),
            Expr::Color(c) if kind == SlotKind::Color && c.starts_with('#') => format!("[{}]", escape(c)),
            Expr::Color(c) if kind == SlotKind::Color => dropdown(c),
            Expr::Empty if kind == SlotKind::Boolean => "<>".to_string(),
            Expr::Variable(name) => self.named(expr, format!("({})", escape(name)), "variables"),
            Expr::List(name) => format!("({} :: list)", escape(name)),
            Expr::Param(name) => self.named(expr, format!("({})", escape(name)), "custom-arg"),
            Expr::BoolParam(name) => self.named(expr, format!("<{}>", escape(name)), "custom-arg"),
            Expr::Block(b) => self.reporter(b)?,
            _ => return None,
        };
        Some(text)
    }

    /// Adds a `::` hint when the plain form would read back as something else.
    fn named(&self, expr: &Expr, plain: String, hint: &str) -> String {
        if reparse_expr(&plain, &self.ctx).as_ref() == Some(expr) {
            plain
        } else {
            let (open, close) = plain.split_at(plain.len() - 1);
            format!("{open} :: {hint}{close}")
        }
    }

    fn reporter(&self, block: &Block) -> Option<String> {
        let spec = block.spec().filter(|s| !s.is_custom())?;
        let inner = self.template(spec, block)?;
        match spec.shape {
            Shape::Boolean => Some(format!("<{inner}>")),
            Shape::Reporter => Some(format!("({inner})")),
            _ => None,
        }
    }
}

fn dropdown(value: &str) -> String {
    format!("[{} v]", escape(value))
}

/// Escapes a text literal, keeping a trailing ` v` from reading as a dropdown.
fn literal(text: &str) -> String {
    let escaped = escape(text);
    match escaped.strip_suffix(" v") {
        Some(body) => format!("{body}\\ v"),
        None => escaped,
    }
}

fn join(words: Vec<String>) -> String {
    let mut out = String::new();
    for w in words {
        if !out.is_empty() && w != "?" {
            out.push(' ');
        }
        out.push_str(&w);
    }
    out
}

/// Prints a boolean expression the way it appears in a slot, e.g.
/// `<touching color [swamp v]?>`.
pub fn print_condition(expr: &Expr) -> Option<String> {
    Printer::new(&[], &[]).expr(expr, SlotKind::Boolean)
}

/// Prints the first line of a block: its header for C-blocks.
pub fn print_block_line(block: &Block) -> Option<String> {
    let p = Printer::new(&[], &[]);
    match block.spec().filter(|s| !s.is_custom()) {
        Some(spec) => p.template(spec, block),
        None => p.call(block),
    }
}
