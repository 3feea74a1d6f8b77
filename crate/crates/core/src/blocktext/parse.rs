use std::sync::LazyLock;

use regex::Regex;

use super::lex::{dropdown, lex_line, split_words, unescape, Tok};
use super::print::is_number;
use super::{FragmentBody, ParseDiagnostic, ParsedFragment};
use crate::model::{Block, Expr, Param, ParamKind, ProcedureDefinition, ProtoPart, Prototype, Script, ScriptId};
use crate::opcodes::{menu_value, OpSpec, Part, Shape, SlotKind, OPCODES};

/// Custom block signatures known before parsing, typically those of the
/// sprite the text came from. `define` lines in the text add to these.
#[derive(Debug, Clone, Default)]
pub struct ParseContext {
    pub prototypes: Vec<Prototype>,
}

/// One script-sized piece of input text and what became of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub sprite_name: Option<String>,
    pub script_id: Option<ScriptId>,
    pub id_suffix: Option<String>,
    /// The chunk's source lines, ID-comment included.
    pub text: String,
    /// 1-based line of the chunk's first line in the input.
    pub first_line: usize,
    pub result: Result<FragmentBody, Vec<ParseDiagnostic>>,
}

impl Chunk {
    pub fn fragment(&self) -> Option<ParsedFragment> {
        let body = self.result.as_ref().ok()?.clone();
        Some(ParsedFragment {
            sprite_name: self.sprite_name.clone(),
            script_id: self.script_id.clone(),
            id_suffix: self.id_suffix.clone(),
            body,
        })
    }
}

pub fn parse_fragments(text: &str) -> (Vec<ParsedFragment>, Vec<ParseDiagnostic>) {
    parse_fragments_with(text, &ParseContext::default())
}

pub fn parse_fragments_with(text: &str, ctx: &ParseContext) -> (Vec<ParsedFragment>, Vec<ParseDiagnostic>) {
    let mut fragments = Vec::new();
    let mut diagnostics = Vec::new();
    for chunk in parse_chunks(text, ctx) {
        match chunk.result {
            Ok(body) => fragments.push(ParsedFragment {
                sprite_name: chunk.sprite_name,
                script_id: chunk.script_id,
                id_suffix: chunk.id_suffix,
                body,
            }),
            Err(mut d) => diagnostics.append(&mut d),
        }
    }
    (fragments, diagnostics)
}

static HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^//\s*(sprite|stage)\s*:\s*(.+?)\s*$").unwrap());
pub(crate) static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^//\s*script-id\s*:\s*(.+?:\d+|\S+)(?:\s+(.*))?$").unwrap());

struct RawChunk<'t> {
    sprite: Option<String>,
    id: Option<ScriptId>,
    suffix: Option<String>,
    marker_line: Option<(usize, &'t str)>,
    lines: Vec<(usize, &'t str)>,
}

impl RawChunk<'_> {
    fn is_empty(&self) -> bool {
        self.lines.is_empty() && self.marker_line.is_none()
    }
}

/// Splits text into script chunks and parses each one independently.
///
/// A chunk starts at an ID-comment or, outside marked chunks, at the first
/// code line after a blank line. Within a marked chunk a blank line only
/// ends the chunk when the next code line starts a new script.
pub fn parse_chunks(text: &str, ctx: &ParseContext) -> Vec<Chunk> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let mut prototypes = ctx.prototypes.clone();
    for (_, line) in &lines {
        if let Ok(toks) = lex_line(line) {
            if let Some(Ok(proto)) = define_header(&toks) {
                if !prototypes.iter().any(|p| p.proccode == proto.proccode) {
                    prototypes.push(proto);
                }
            }
        }
    }

    let mut raw: Vec<RawChunk> = Vec::new();
    let mut sprite: Option<String> = None;
    let mut current: Option<RawChunk> = None;
    let mut blank = false;
    for (n, line) in lines {
        let trimmed = line.trim();
        if let Some(c) = HEADING.captures(trimmed) {
            raw.extend(current.take());
            sprite = Some(c[2].to_string());
            continue;
        }
        if let Some(c) = MARKER.captures(trimmed) {
            raw.extend(current.take());
            let suffix = c.get(2).map_or("", |m| m.as_str()).trim_matches(|ch: char| ch.is_whitespace() || "()-–—,:".contains(ch));
            current = Some(RawChunk {
                sprite: sprite.clone(),
                id: Some(ScriptId(c[1].to_string())),
                suffix: (!suffix.is_empty()).then(|| suffix.to_string()),
                marker_line: Some((n, line)),
                lines: Vec::new(),
            });
            blank = false;
            continue;
        }
        if trimmed.starts_with("//") {
            continue;
        }
        if trimmed.is_empty() {
            match &current {
                Some(c) if c.id.is_some() => blank = true,
                Some(_) => raw.extend(current.take()),
                None => {}
            }
            continue;
        }
        let marked_then_new_script = blank && current.as_ref().is_some_and(|c| c.id.is_some()) && starts_script(trimmed);
        if marked_then_new_script {
            raw.extend(current.take());
        }
        blank = false;
        current
            .get_or_insert_with(|| RawChunk {
                sprite: sprite.clone(),
                id: None,
                suffix: None,
                marker_line: None,
                lines: Vec::new(),
            })
            .lines
            .push((n, line));
    }
    raw.extend(current.take());

    raw.into_iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let first_line = c.marker_line.or(c.lines.first().copied()).map_or(1, |(n, _)| n);
            let text: Vec<&str> = c.marker_line.iter().chain(c.lines.iter()).map(|(_, l)| *l).collect();
            let sprite_name = c.sprite.clone().or_else(|| c.id.as_ref().and_then(|i| i.target_name()).map(str::to_string));
            let id = c.id.clone().unwrap_or_else(|| ScriptId(String::new()));
            let result = ScriptParser::new(&prototypes).run(&c.lines, id, c.marker_line);
            Chunk {
                sprite_name,
                script_id: c.id,
                id_suffix: c.suffix,
                text: text.join("\n"),
                first_line,
                result,
            }
        })
        .collect()
}

fn starts_script(line: &str) -> bool {
    let lower = line.to_ascii_lowercase();
    lower.starts_with("when ") || lower.starts_with("define ") || lower == "define"
}

/// Reads a `define` line into a prototype. Returns `None` for other lines.
fn define_header(toks: &[Tok]) -> Option<Result<Prototype, (usize, String)>> {
    if !toks.first()?.word()?.eq_ignore_ascii_case("define") {
        return None;
    }
    let (toks, hint) = split_hint(&toks[1..]);
    let mut parts: Vec<ProtoPart> = Vec::new();
    for tok in toks {
        match tok {
            Tok::Word { text, glued, .. } => {
                let text = unescape(text);
                match parts.last_mut() {
                    Some(ProtoPart::Label(prev)) if *glued => prev.push_str(&text),
                    _ => parts.push(ProtoPart::Label(text)),
                }
            }
            Tok::Round { raw, .. } => parts.push(ProtoPart::Param(Param {
                name: unescape(raw.trim()),
                kind: ParamKind::Value,
            })),
            Tok::Angle { raw, .. } => parts.push(ProtoPart::Param(Param {
                name: unescape(raw.trim()),
                kind: ParamKind::Boolean,
            })),
            Tok::Square { col, .. } => return Some(Err((*col, "unexpected `[` in define".to_string()))),
        }
    }
    if parts.is_empty() {
        return Some(Err((1, "define needs a block name".to_string())));
    }
    let mut proto = Prototype::from_parts(&parts);
    proto.warp = hint.is_some_and(|h| h.eq_ignore_ascii_case("warp"));
    Some(Ok(proto))
}

/// Separates a trailing `:: hint` from a token list.
fn split_hint(toks: &[Tok]) -> (&[Tok], Option<String>) {
    match toks.iter().position(|t| t.word() == Some("::")) {
        Some(i) => {
            let hint: Vec<&str> = toks[i + 1..].iter().filter_map(Tok::word).collect();
            (&toks[..i], Some(hint.join(" ")))
        }
        None => (toks, None),
    }
}

/// Splits `name :: hint` group content.
fn raw_hint(raw: &str) -> (&str, Option<&str>) {
    match raw.rfind("::") {
        Some(i) => {
            let name = raw[..i].strip_suffix(' ').unwrap_or(&raw[..i]);
            (name, Some(raw[i + 2..].trim()))
        }
        None => (raw, None),
    }
}

/// Expression parsing state: custom block signatures and the parameters
/// of the enclosing definition.
#[derive(Clone, Copy)]
pub(crate) struct Ctx<'a> {
    pub prototypes: &'a [Prototype],
    pub params: &'a [Param],
}

type Fail = (usize, String, String);

fn fail(tok: &Tok, message: &str) -> Fail {
    (tok.col(), message.to_string(), render(tok))
}

fn render(tok: &Tok) -> String {
    match tok {
        Tok::Word { text, .. } => text.clone(),
        Tok::Round { raw, .. } => format!("({raw})"),
        Tok::Square { raw, .. } => format!("[{raw}]"),
        Tok::Angle { raw, .. } => format!("<{raw}>"),
    }
}

/// Parses a single printed expression, as used in a slot.
pub(crate) fn reparse_expr(text: &str, ctx: &Ctx) -> Option<Expr> {
    let toks = lex_line(text).ok()?;
    match toks.as_slice() {
        [tok @ Tok::Round { .. }] => round(tok, ctx).ok(),
        [tok @ Tok::Angle { .. }] => angle(tok, ctx).ok(),
        _ => None,
    }
}

/// Parses a single printed statement line.
pub(crate) fn reparse_block(line: &str, ctx: &Ctx) -> Option<Block> {
    statement(&lex_line(line).ok()?, ctx).ok()
}

fn round(tok: &Tok, ctx: &Ctx) -> Result<Expr, Fail> {
    let Tok::Round { toks, raw, .. } = tok else {
        unreachable!()
    };
    let (name, hint) = raw_hint(raw);
    match hint {
        Some("variables") => return Ok(Expr::Variable(unescape(name))),
        Some("list") => return Ok(Expr::List(unescape(name))),
        Some("custom-arg") => return Ok(Expr::Param(unescape(name))),
        _ => {}
    }
    let (toks, _) = split_hint(toks);
    if toks.is_empty() {
        return Ok(Expr::lit(""));
    }
    if let [Tok::Word { text, .. }] = toks {
        if is_number(text) {
            return Ok(Expr::lit(text.clone()));
        }
    }
    let plain = unescape(raw.trim());
    if ctx.params.iter().any(|p| p.name == plain) {
        return Ok(Expr::Param(plain));
    }
    if let Some(result) = reporter(toks, ctx) {
        return result.map(Expr::block);
    }
    if toks.iter().all(|t| matches!(t, Tok::Word { .. })) {
        return Ok(Expr::Variable(plain));
    }
    Err(fail(tok, "unknown reporter"))
}

fn angle(tok: &Tok, ctx: &Ctx) -> Result<Expr, Fail> {
    let Tok::Angle { toks, raw, .. } = tok else {
        unreachable!()
    };
    if let (name, Some("custom-arg")) = raw_hint(raw) {
        return Ok(Expr::BoolParam(unescape(name)));
    }
    let (toks, _) = split_hint(toks);
    if toks.is_empty() {
        return Ok(Expr::Empty);
    }
    let plain = unescape(raw.trim());
    if ctx.params.iter().any(|p| p.name == plain) {
        return Ok(Expr::BoolParam(plain));
    }
    match reporter(toks, ctx) {
        Some(result) => result.map(Expr::block),
        None => Err(fail(tok, "unknown boolean block")),
    }
}

fn reporter(toks: &[Tok], ctx: &Ctx) -> Option<Result<Block, Fail>> {
    first_match(OPCODES.iter().filter(|s| s.shape.is_reporter() && !s.is_custom()), toks, ctx)
}

/// Tries templates in order. The first full match wins; failing that, the
/// error of the first structural match is reported.
fn first_match<'s>(specs: impl Iterator<Item = &'s OpSpec>, toks: &[Tok], ctx: &Ctx) -> Option<Result<Block, Fail>> {
    let mut first_err = None;
    for spec in specs {
        match fill(spec.parts(), toks, ctx, spec) {
            None => {}
            Some(Ok(values)) => return Some(Ok(build(spec, values))),
            Some(Err(e)) => {
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map(Err)
}

enum Value {
    Field(String),
    Input(Expr),
}

fn build(spec: &OpSpec, values: Vec<(&'static str, Value)>) -> Block {
    let mut block = Block::new(spec.opcode);
    for (name, v) in values {
        match v {
            Value::Field(f) => block.fields.push((name.to_string(), f)),
            Value::Input(e) => block.inputs.push((name.to_string(), e)),
        }
    }
    block.substacks = vec![Vec::new(); spec.branches()];
    block
}

/// Whether a token can occupy a slot of this kind at all.
fn fits(kind: SlotKind, tok: &Tok) -> bool {
    let is_dropdown = matches!(tok, Tok::Square { raw, .. } if dropdown(raw).is_some());
    match (kind, tok) {
        (SlotKind::Field, _) => is_dropdown,
        (SlotKind::Menu, Tok::Round { .. } | Tok::Angle { .. }) => true,
        (SlotKind::Menu, _) => is_dropdown,
        (SlotKind::Color, Tok::Square { .. } | Tok::Round { .. } | Tok::Angle { .. }) => true,
        (SlotKind::Number | SlotKind::Text, Tok::Word { text, .. }) => is_number(text),
        (SlotKind::Number | SlotKind::Text | SlotKind::Boolean, Tok::Square { .. }) => !is_dropdown,
        (SlotKind::Number | SlotKind::Text | SlotKind::Boolean, Tok::Round { .. } | Tok::Angle { .. }) => true,
        _ => false,
    }
}

fn fill(parts: &[Part], toks: &[Tok], ctx: &Ctx, spec: &OpSpec) -> Option<Result<Vec<(&'static str, Value)>, Fail>> {
    if parts.len() != toks.len() {
        return None;
    }
    for (part, tok) in parts.iter().zip(toks) {
        let ok = match part {
            Part::Word(w) => tok.word().is_some_and(|t| t.eq_ignore_ascii_case(w)),
            Part::Slot(slot) => fits(slot.kind, tok),
        };
        if !ok {
            return None;
        }
    }
    let mut values = Vec::new();
    for (part, tok) in parts.iter().zip(toks) {
        let Part::Slot(slot) = part else { continue };
        let value = match slot.kind {
            SlotKind::Field => {
                let Tok::Square { raw, .. } = tok else { unreachable!() };
                let value = unescape(dropdown(raw).unwrap_or(raw));
                if spec.strict && !spec.choices_for(slot.name).is_some_and(|c| c.contains(&value.as_str())) {
                    return None;
                }
                Value::Field(value)
            }
            SlotKind::Menu => match tok {
                Tok::Square { raw, .. } => {
                    let shown = unescape(dropdown(raw).unwrap_or(raw));
                    let internal = menu_value(&shown);
                    let known = spec.choices_for(slot.name).is_some_and(|c| c.contains(&internal));
                    let value = if known { internal.to_string() } else { shown };
                    Value::Input(Expr::Menu(value))
                }
                _ => match slot_expr(tok, ctx) {
                    Ok(Expr::Literal(_)) => return Some(Err(fail(tok, "expected a dropdown"))),
                    Ok(e) => Value::Input(e),
                    Err(e) => return Some(Err(e)),
                },
            },
            SlotKind::Color => match tok {
                Tok::Square { raw, .. } => Value::Input(Expr::Color(unescape(dropdown(raw).unwrap_or(raw)))),
                _ => match slot_expr(tok, ctx) {
                    Ok(e) => Value::Input(e),
                    Err(e) => return Some(Err(e)),
                },
            },
            _ => match slot_expr(tok, ctx) {
                Ok(e) => Value::Input(e),
                Err(e) => return Some(Err(e)),
            },
        };
        values.push((slot.name, value));
    }
    Some(Ok(values))
}

fn slot_expr(tok: &Tok, ctx: &Ctx) -> Result<Expr, Fail> {
    match tok {
        Tok::Round { .. } => round(tok, ctx),
        Tok::Angle { .. } => angle(tok, ctx),
        Tok::Square { raw, .. } => Ok(Expr::Literal(unescape(raw))),
        Tok::Word { text, .. } => Ok(Expr::Literal(text.clone())),
    }
}

fn statement(toks: &[Tok], ctx: &Ctx) -> Result<Block, Fail> {
    let (body, hint) = split_hint(toks);
    let unknown = || (toks.first().map_or(1, Tok::col), "unknown block".to_string(), line_text(toks));
    if hint.as_deref() != Some("custom") {
        let builtins = OPCODES.iter().filter(|s| !s.shape.is_reporter() && !s.is_custom());
        if let Some(result) = first_match(builtins, body, ctx) {
            return result;
        }
    }
    for proto in ctx.prototypes {
        if let Some(result) = call(proto, body, ctx) {
            return result;
        }
    }
    Err(unknown())
}

fn line_text(toks: &[Tok]) -> String {
    let mut out = String::new();
    for t in toks {
        if !out.is_empty() && !t.is_glued() {
            out.push(' ');
        }
        out.push_str(&render(t));
    }
    out
}

fn call(proto: &Prototype, toks: &[Tok], ctx: &Ctx) -> Option<Result<Block, Fail>> {
    let words = split_words(&proto.proccode);
    if words.len() != toks.len() {
        return None;
    }
    for (w, tok) in words.iter().zip(toks) {
        let ok = match w.as_str() {
            "%s" | "%n" => fits(SlotKind::Text, tok),
            "%b" => fits(SlotKind::Boolean, tok),
            _ => tok.word().is_some_and(|t| unescape(t) == *w),
        };
        if !ok {
            return None;
        }
    }
    let mut args = Vec::new();
    for (w, tok) in words.iter().zip(toks) {
        if matches!(w.as_str(), "%s" | "%n" | "%b") {
            match slot_expr(tok, ctx) {
                Ok(e) => args.push(e),
                Err(e) => return Some(Err(e)),
            }
        }
    }
    Some(Ok(Block::call(&proto.proccode, args)))
}

struct Frame {
    block: Block,
    branch: usize,
    line: usize,
}

struct ScriptParser<'a> {
    prototypes: &'a [Prototype],
    params: Vec<Param>,
    root: Vec<Block>,
    stack: Vec<Frame>,
    define: Option<Prototype>,
}

impl<'a> ScriptParser<'a> {
    fn new(prototypes: &'a [Prototype]) -> Self {
        ScriptParser {
            prototypes,
            params: Vec::new(),
            root: Vec::new(),
            stack: Vec::new(),
            define: None,
        }
    }

    fn run(
        mut self,
        lines: &[(usize, &str)],
        id: ScriptId,
        marker: Option<(usize, &str)>,
    ) -> Result<FragmentBody, Vec<ParseDiagnostic>> {
        let mut seen_code = false;
        for &(n, line) in lines {
            let diag = |col: usize, message: String, offending: String| ParseDiagnostic {
                line: n,
                column: col,
                message,
                offending_text: offending,
            };
            let toks = lex_line(line).map_err(|e| {
                let offending = line.chars().skip(e.col.saturating_sub(1)).collect::<String>().trim().to_string();
                vec![diag(e.col, e.message, offending)]
            })?;
            if toks.is_empty() {
                continue;
            }
            self.line(&toks, n, !seen_code)
                .map_err(|(col, message, offending)| vec![diag(col, message, offending)])?;
            seen_code = true;
        }
        while let Some(frame) = self.stack.pop() {
            self.append(frame.block, 1).map_err(|(col, message, offending)| {
                vec![ParseDiagnostic {
                    line: frame.line,
                    column: col,
                    message,
                    offending_text: offending,
                }]
            })?;
        }
        if !seen_code {
            let (n, line) = marker.unwrap_or((1, ""));
            return Err(vec![ParseDiagnostic {
                line: n,
                column: 1,
                message: "script has no blocks".to_string(),
                offending_text: line.trim().to_string(),
            }]);
        }
        let body = Script::new(id, self.root);
        Ok(match self.define {
            Some(prototype) => FragmentBody::Procedure(ProcedureDefinition { prototype, body }),
            None => FragmentBody::Script(body),
        })
    }

    fn line(&mut self, toks: &[Tok], n: usize, first: bool) -> Result<(), Fail> {
        let only = if toks.len() == 1 { toks[0].word() } else { None };
        if only.is_some_and(|w| w.eq_ignore_ascii_case("end")) {
            let frame = self.stack.pop().ok_or_else(|| fail(&toks[0], "`end` without an open block"))?;
            return self.append(frame.block, 1);
        }
        if only.is_some_and(|w| w.eq_ignore_ascii_case("else")) {
            let frame = self
                .stack
                .last_mut()
                .filter(|f| f.block.opcode == "control_if" && f.branch == 0)
                .ok_or_else(|| fail(&toks[0], "`else` outside an `if` block"))?;
            frame.block.opcode = "control_if_else".to_string();
            frame.block.substacks.push(Vec::new());
            frame.branch = 1;
            return Ok(());
        }
        if let Some(header) = define_header(toks) {
            if !first {
                return Err(fail(&toks[0], "`define` must start a script"));
            }
            let proto = header.map_err(|(col, msg)| (col, msg, render(&toks[0])))?;
            self.params = proto.params.clone();
            self.define = Some(proto);
            return Ok(());
        }
        let ctx = Ctx {
            prototypes: self.prototypes,
            params: &self.params,
        };
        let block = statement(toks, &ctx)?;
        if block.shape() == Some(Shape::Hat) && !first {
            return Err(fail(&toks[0], "hat block must start the script"));
        }
        if block.spec().is_some_and(|s| s.branches() > 0) {
            self.stack.push(Frame { block, branch: 0, line: n });
            return Ok(());
        }
        self.append(block, toks[0].col())
            .map_err(|(_, m, _)| (toks[0].col(), m, line_text(toks)))
    }

    fn append(&mut self, block: Block, col: usize) -> Result<(), Fail> {
        let seq = match self.stack.last_mut() {
            Some(frame) => &mut frame.block.substacks[frame.branch],
            None => &mut self.root,
        };
        if let Some(last) = seq.last().filter(|b| b.is_cap()) {
            return Err((col, format!("block after `{}`, which must end its sequence", last.opcode), block.opcode.clone()));
        }
        seq.push(block);
        Ok(())
    }
}
