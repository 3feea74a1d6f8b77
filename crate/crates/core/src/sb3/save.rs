use std::collections::{BTreeMap, BTreeSet};
use std::io::{Cursor, Write};

use serde_json::{json, Map, Value};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use super::load::substack_name;
use super::{prim, Sb3Error};
use crate::model::{Block, Expr, ParamKind, ProcedureDefinition, Program, Prototype, ScriptId, Target};
use crate::opcodes::{self, Category, OpSpec, SlotKind};

/// Serializes a program to `.sb3` bytes. Output is canonical: the same
/// program always yields the same bytes.
pub fn save_sb3(program: &Program) -> Result<Vec<u8>, Sb3Error> {
    let json = serde_json::to_vec(&to_project_json(program)).expect("project json serializes");
    pack_archive(&json, &program.assets)
}

/// Zips a `project.json` payload and asset files with fixed timestamps.
pub fn pack_archive(project_json: &[u8], assets: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>, Sb3Error> {
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default());
    let to_io = |e: zip::result::ZipError| Sb3Error::Io(std::io::Error::other(e));
    zip.start_file("project.json", options).map_err(to_io)?;
    zip.write_all(project_json)?;
    for (name, data) in assets {
        zip.start_file(name.as_str(), options).map_err(to_io)?;
        zip.write_all(data)?;
    }
    Ok(zip.finish().map_err(to_io)?.into_inner())
}

/// Builds the `project.json` document for a program.
pub fn to_project_json(program: &Program) -> Value {
    let broadcasts = broadcast_table(program);
    let mut targets = Vec::new();
    for (ti, target) in program.targets().enumerate() {
        targets.push(TargetWriter::new(program, target, ti, &broadcasts).write());
    }

    let mut root = Map::new();
    root.insert("targets".to_string(), Value::Array(targets));
    let mut monitors = program.extras.get("monitors").cloned().unwrap_or_else(|| json!([]));
    if !monitors.is_array() {
        monitors = json!([]);
    }
    root.insert("monitors".to_string(), monitors);

    let mut extensions: Vec<Value> = program
        .extras
        .get("extensions")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    if uses_pen(program) && !extensions.iter().any(|e| e == "pen") {
        extensions.push(json!("pen"));
    }
    root.insert("extensions".to_string(), Value::Array(extensions));

    let mut meta = program
        .extras
        .get("meta")
        .and_then(Value::as_object)
        .cloned()
        .unwrap_or_else(|| {
            let mut m = Map::new();
            m.insert("vm".to_string(), json!("0.2.0"));
            m.insert("agent".to_string(), json!("litterbox"));
            m
        });
    meta.insert("semver".to_string(), json!(program.meta));
    root.insert("meta".to_string(), Value::Object(meta));

    for (k, v) in &program.extras {
        if !root.contains_key(k) {
            root.insert(k.clone(), v.clone());
        }
    }
    Value::Object(root)
}

fn uses_pen(program: &Program) -> bool {
    let mut found = false;
    for_each_block(program, &mut |b| {
        if b.spec().is_some_and(|s| s.category == Category::Pen) {
            found = true;
        }
    });
    found
}

fn for_each_block(program: &Program, f: &mut dyn FnMut(&Block)) {
    for t in program.targets() {
        for s in &t.scripts {
            s.blocks.iter().for_each(|b| b.visit(f));
        }
        for p in &t.procedures {
            p.body.blocks.iter().for_each(|b| b.visit(f));
        }
    }
}

/// Stage broadcast table: existing entries plus every name used by a block.
fn broadcast_table(program: &Program) -> Map<String, Value> {
    let mut table = program
        .stage
        .extras
        .get("broadcasts")
        .and_then(Value::as_object)
        .cloned()
        .unwrap_or_default();
    let mut used = BTreeSet::new();
    for_each_block(program, &mut |b| {
        if let Some(name) = b.field("BROADCAST_OPTION") {
            used.insert(name.to_string());
        }
        if let Some(Expr::Menu(name)) = b.input("BROADCAST_INPUT") {
            used.insert(name.clone());
        }
    });
    for name in used {
        if name.is_empty() || table.values().any(|v| v.as_str() == Some(name.as_str())) {
            continue;
        }
        table.insert(format!("broadcast:{name}"), Value::String(name));
    }
    table
}

struct TargetWriter<'a> {
    program: &'a Program,
    target: &'a Target,
    ti: usize,
    broadcasts: &'a Map<String, Value>,
    counter: usize,
    blocks: Map<String, Value>,
}

impl<'a> TargetWriter<'a> {
    fn new(program: &'a Program, target: &'a Target, ti: usize, broadcasts: &'a Map<String, Value>) -> Self {
        TargetWriter {
            program,
            target,
            ti,
            broadcasts,
            counter: 0,
            blocks: Map::new(),
        }
    }

    fn write(mut self) -> Value {
        let t = self.target;
        let mut out = Map::new();
        out.insert("isStage".to_string(), json!(t.is_stage));
        out.insert("name".to_string(), json!(t.name));
        let vars: Map<String, Value> = t
            .variables
            .iter()
            .map(|v| (v.id.clone(), json!([v.name, v.value])))
            .collect();
        out.insert("variables".to_string(), Value::Object(vars));
        let lists: Map<String, Value> = t
            .lists
            .iter()
            .map(|l| (l.id.clone(), json!([l.name, l.items])))
            .collect();
        out.insert("lists".to_string(), Value::Object(lists));
        let broadcasts = if t.is_stage {
            self.broadcasts.clone()
        } else {
            t.extras.get("broadcasts").and_then(Value::as_object).cloned().unwrap_or_default()
        };
        out.insert("broadcasts".to_string(), Value::Object(broadcasts));

        let mut index = 0usize;
        for proc in &t.procedures {
            let pos = self.position(&proc.body.id, index);
            self.procedure(proc, pos);
            index += 1;
        }
        for script in &t.scripts {
            let pos = self.position(&script.id, index);
            self.chain(&script.blocks, None, Some(script.id.as_str().to_string()), Some(pos));
            index += 1;
        }
        for raw in &t.loose {
            let id = format!("t{}l{}", self.ti, self.blocks.len());
            self.blocks.insert(id, raw.clone());
        }
        out.insert("blocks".to_string(), Value::Object(std::mem::take(&mut self.blocks)));

        let costumes: Vec<Value> = t
            .costumes
            .iter()
            .map(|c| {
                let mut m = Map::new();
                m.insert("name".to_string(), json!(c.name));
                m.extend(c.record.clone());
                Value::Object(m)
            })
            .collect();
        out.insert("costumes".to_string(), Value::Array(costumes));
        for (k, v) in &t.extras {
            if !out.contains_key(k) {
                out.insert(k.clone(), v.clone());
            }
        }
        Value::Object(out)
    }

    fn position(&self, id: &ScriptId, index: usize) -> (f64, f64) {
        self.target
            .positions
            .get(id)
            .copied()
            .unwrap_or((0.0, 200.0 * index as f64))
    }

    fn alloc(&mut self) -> String {
        self.counter += 1;
        format!("t{}b{}", self.ti, self.counter)
    }

    /// Emits a sequence; returns the id of its first block.
    fn chain(
        &mut self,
        blocks: &[Block],
        parent: Option<&str>,
        first_id: Option<String>,
        top: Option<(f64, f64)>,
    ) -> Option<String> {
        let mut first = None;
        let mut prev: Option<String> = None;
        for (i, block) in blocks.iter().enumerate() {
            let id = match (i, &first_id) {
                (0, Some(given)) => given.clone(),
                _ => self.alloc(),
            };
            let parent_id = prev.clone().or_else(|| parent.map(str::to_string));
            self.block(block, &id, parent_id.as_deref(), if i == 0 { top } else { None });
            if let Some(p) = &prev {
                set_key(&mut self.blocks, p, "next", json!(id));
            }
            if first.is_none() {
                first = Some(id.clone());
            }
            prev = Some(id);
        }
        first
    }

    fn record(&mut self, id: &str, opcode: &str, parent: Option<&str>, shadow: bool, top: Option<(f64, f64)>) {
        let mut rec = Map::new();
        rec.insert("opcode".to_string(), json!(opcode));
        rec.insert("next".to_string(), Value::Null);
        rec.insert("parent".to_string(), parent.map_or(Value::Null, |p| json!(p)));
        rec.insert("inputs".to_string(), json!({}));
        rec.insert("fields".to_string(), json!({}));
        rec.insert("shadow".to_string(), json!(shadow));
        rec.insert("topLevel".to_string(), json!(top.is_some()));
        if let Some((x, y)) = top {
            rec.insert("x".to_string(), number(x));
            rec.insert("y".to_string(), number(y));
        }
        self.blocks.insert(id.to_string(), Value::Object(rec));
    }

    fn block(&mut self, block: &Block, id: &str, parent: Option<&str>, top: Option<(f64, f64)>) {
        self.record(id, &block.opcode, parent, block.shadow, top);
        if block.opcode == opcodes::PROCEDURE_CALL {
            self.call(block, id);
            return;
        }
        match block.spec().filter(|s| !s.is_custom()) {
            Some(spec) => self.known(block, spec, id),
            None => self.opaque(block, id),
        }
    }

    fn known(&mut self, block: &Block, spec: &'static OpSpec, id: &str) {
        let mut inputs = Map::new();
        let mut fields = Map::new();
        for slot in spec.slots() {
            if slot.kind == SlotKind::Field {
                let value = block.field(slot.name).unwrap_or_default();
                fields.insert(slot.name.to_string(), json!([value, self.field_ref(slot.name, value)]));
                continue;
            }
            let expr = block.input(slot.name).cloned().unwrap_or(Expr::Empty);
            let entry = match slot.kind {
                SlotKind::Number => Some(self.value_input(&expr, prim::NUMBER, id)),
                SlotKind::Text => Some(self.value_input(&expr, prim::TEXT, id)),
                SlotKind::Boolean => self.bool_input(&expr, id),
                SlotKind::Color => Some(match &expr {
                    Expr::Color(c) => json!([1, [prim::COLOR, c]]),
                    other => {
                        let child = self.child(other, id);
                        json!([3, child, [prim::COLOR, "#000000"]])
                    }
                }),
                SlotKind::Menu => Some(self.menu_input(spec, slot.name, &expr, id)),
                SlotKind::Field => unreachable!(),
            };
            if let Some(entry) = entry {
                inputs.insert(slot.name.to_string(), entry);
            }
        }
        for (i, sub) in block.substacks.iter().enumerate() {
            if let Some(first) = self.chain(sub, Some(id), None, None) {
                inputs.insert(substack_name(i), json!([2, first]));
            }
        }
        set_key(&mut self.blocks, id, "inputs", Value::Object(inputs));
        set_key(&mut self.blocks, id, "fields", Value::Object(fields));
        if spec.opcode == "control_stop" {
            let hasnext = block.field("STOP_OPTION") == Some("other scripts in sprite");
            set_key(
                &mut self.blocks,
                id,
                "mutation",
                json!({"tagName": "mutation", "children": [], "hasnext": hasnext.to_string()}),
            );
        }
    }

    fn opaque(&mut self, block: &Block, id: &str) {
        let mut inputs = Map::new();
        let mut fields = Map::new();
        for (name, value) in &block.fields {
            fields.insert(name.clone(), json!([value, self.field_ref(name, value)]));
        }
        for (name, expr) in &block.inputs {
            let entry = match expr {
                Expr::Raw(v) => json!([1, v]),
                Expr::Block(b) => {
                    let child = self.alloc();
                    self.block(b, &child, Some(id), None);
                    json!([if b.shadow { 1 } else { 2 }, child])
                }
                other => self.value_input(other, prim::TEXT, id),
            };
            inputs.insert(name.clone(), entry);
        }
        for (i, sub) in block.substacks.iter().enumerate() {
            if let Some(first) = self.chain(sub, Some(id), None, None) {
                inputs.insert(substack_name(i), json!([2, first]));
            }
        }
        set_key(&mut self.blocks, id, "inputs", Value::Object(inputs));
        set_key(&mut self.blocks, id, "fields", Value::Object(fields));
    }

    fn call(&mut self, block: &Block, id: &str) {
        let proccode = block.proccode.clone().unwrap_or_default();
        let kinds = Prototype::slot_kinds(&proccode);
        let arg_ids: Vec<String> = (0..kinds.len()).map(|i| format!("arg{i}")).collect();
        let mut inputs = Map::new();
        for (i, kind) in kinds.iter().enumerate() {
            let expr = block.inputs.get(i).map(|(_, e)| e.clone()).unwrap_or(Expr::Empty);
            let entry = match kind {
                ParamKind::Value => Some(self.value_input(&expr, prim::TEXT, id)),
                ParamKind::Boolean => self.bool_input(&expr, id),
            };
            if let Some(entry) = entry {
                inputs.insert(arg_ids[i].clone(), entry);
            }
        }
        let warp = self.target.procedure(&proccode).is_some_and(|p| p.prototype.warp);
        set_key(&mut self.blocks, id, "inputs", Value::Object(inputs));
        set_key(
            &mut self.blocks,
            id,
            "mutation",
            json!({
                "tagName": "mutation",
                "children": [],
                "proccode": proccode,
                "argumentids": serde_json::to_string(&arg_ids).unwrap(),
                "warp": warp.to_string(),
            }),
        );
    }

    fn procedure(&mut self, proc: &ProcedureDefinition, pos: (f64, f64)) {
        let def_id = proc.body.id.as_str().to_string();
        self.record(&def_id, opcodes::PROCEDURE_DEFINITION, None, false, Some(pos));
        let proto_id = self.alloc();
        self.record(&proto_id, opcodes::PROCEDURE_PROTOTYPE, Some(&def_id), true, None);
        let proto = &proc.prototype;
        let arg_ids: Vec<String> = (0..proto.params.len()).map(|i| format!("arg{i}")).collect();
        let mut proto_inputs = Map::new();
        for (i, param) in proto.params.iter().enumerate() {
            let arg_block = self.alloc();
            let opcode = match param.kind {
                ParamKind::Value => opcodes::ARGUMENT_REPORTER,
                ParamKind::Boolean => opcodes::ARGUMENT_REPORTER_BOOLEAN,
            };
            self.record(&arg_block, opcode, Some(&proto_id), true, None);
            set_key(&mut self.blocks, &arg_block, "fields", json!({"VALUE": [param.name, null]}));
            proto_inputs.insert(arg_ids[i].clone(), json!([1, arg_block]));
        }
        let names: Vec<&str> = proto.params.iter().map(|p| p.name.as_str()).collect();
        let defaults: Vec<&str> = proto
            .params
            .iter()
            .map(|p| if p.kind == ParamKind::Boolean { "false" } else { "" })
            .collect();
        set_key(&mut self.blocks, &proto_id, "inputs", Value::Object(proto_inputs));
        set_key(
            &mut self.blocks,
            &proto_id,
            "mutation",
            json!({
                "tagName": "mutation",
                "children": [],
                "proccode": proto.proccode,
                "argumentids": serde_json::to_string(&arg_ids).unwrap(),
                "argumentnames": serde_json::to_string(&names).unwrap(),
                "argumentdefaults": serde_json::to_string(&defaults).unwrap(),
                "warp": proto.warp.to_string(),
            }),
        );
        set_key(&mut self.blocks, &def_id, "inputs", json!({"custom_block": [1, proto_id]}));
        if let Some(first) = self.chain(&proc.body.blocks, Some(&def_id), None, None) {
            set_key(&mut self.blocks, &def_id, "next", json!(first));
        }
    }

    fn value_input(&mut self, expr: &Expr, code: u64, parent: &str) -> Value {
        match expr {
            Expr::Literal(v) => json!([1, [code, v]]),
            Expr::Color(v) => json!([1, [prim::COLOR, v]]),
            Expr::Menu(v) => json!([1, [prim::TEXT, v]]),
            Expr::Empty => json!([1, [code, ""]]),
            Expr::Raw(v) => json!([1, v]),
            Expr::Variable(n) => json!([3, [prim::VARIABLE, n, self.var_id(n)], [code, ""]]),
            Expr::List(n) => json!([3, [prim::LIST, n, self.list_id(n)], [code, ""]]),
            Expr::Param(_) | Expr::BoolParam(_) | Expr::Block(_) => {
                let child = self.child(expr, parent);
                json!([3, child, [code, ""]])
            }
        }
    }

    fn bool_input(&mut self, expr: &Expr, parent: &str) -> Option<Value> {
        match expr {
            Expr::Block(_) | Expr::BoolParam(_) | Expr::Param(_) => Some(json!([2, self.child(expr, parent)])),
            _ => None,
        }
    }

    fn menu_input(&mut self, spec: &'static OpSpec, slot: &str, expr: &Expr, parent: &str) -> Value {
        let menu = spec.menu(slot).expect("menu slot has a menu spec");
        if slot == "BROADCAST_INPUT" {
            return match expr {
                Expr::Menu(name) => json!([1, [prim::BROADCAST, name, self.broadcast_id(name)]]),
                other => {
                    let child = self.child(other, parent);
                    json!([3, child, [prim::BROADCAST, "", ""]])
                }
            };
        }
        match expr {
            Expr::Menu(value) => {
                let shadow = self.menu_shadow(menu.opcode, menu.field, value, parent);
                json!([1, shadow])
            }
            other => {
                let child = self.child(other, parent);
                let shadow = self.menu_shadow(menu.opcode, menu.field, "", parent);
                json!([3, child, shadow])
            }
        }
    }

    fn menu_shadow(&mut self, opcode: &str, field: &str, value: &str, parent: &str) -> String {
        let id = self.alloc();
        self.record(&id, opcode, Some(parent), true, None);
        let mut fields = Map::new();
        fields.insert(field.to_string(), json!([value, null]));
        set_key(&mut self.blocks, &id, "fields", Value::Object(fields));
        id
    }

    /// Emits a reporter-like expression as a child block and returns its id.
    fn child(&mut self, expr: &Expr, parent: &str) -> Value {
        let id = self.alloc();
        match expr {
            Expr::Block(b) => self.block(b, &id, Some(parent), None),
            Expr::Param(name) | Expr::BoolParam(name) => {
                let opcode = if matches!(expr, Expr::Param(_)) {
                    opcodes::ARGUMENT_REPORTER
                } else {
                    opcodes::ARGUMENT_REPORTER_BOOLEAN
                };
                self.record(&id, opcode, Some(parent), false, None);
                set_key(&mut self.blocks, &id, "fields", json!({"VALUE": [name, null]}));
            }
            _ => return Value::Null,
        }
        json!(id)
    }

    fn field_ref(&self, field: &str, value: &str) -> Value {
        match field {
            "VARIABLE" => json!(self.var_id(value)),
            "LIST" => json!(self.list_id(value)),
            "BROADCAST_OPTION" => json!(self.broadcast_id(value)),
            _ => Value::Null,
        }
    }

    fn var_id(&self, name: &str) -> String {
        self.target
            .variable(name)
            .or_else(|| self.program.stage.variable(name))
            .map(|v| v.id.clone())
            .unwrap_or_else(|| format!("var:{name}"))
    }

    fn list_id(&self, name: &str) -> String {
        self.target
            .list(name)
            .or_else(|| self.program.stage.list(name))
            .map(|l| l.id.clone())
            .unwrap_or_else(|| format!("list:{name}"))
    }

    fn broadcast_id(&self, name: &str) -> String {
        self.broadcasts
            .iter()
            .find(|(_, v)| v.as_str() == Some(name))
            .map(|(k, _)| k.clone())
            .unwrap_or_else(|| format!("broadcast:{name}"))
    }
}

fn set_key(blocks: &mut Map<String, Value>, id: &str, key: &str, value: Value) {
    if let Some(Value::Object(rec)) = blocks.get_mut(id) {
        rec.insert(key.to_string(), value);
    }
}

fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        json!(v as i64)
    } else {
        serde_json::Number::from_f64(v).map_or(json!(0), Value::Number)
    }
}
