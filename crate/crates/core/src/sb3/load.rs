use std::collections::{BTreeMap, HashSet};
use std::io::{Cursor, Read};

use serde_json::{Map, Value};

use super::{prim, Sb3Error};
use crate::model::{
    Block, Costume, Expr, ListVar, Param, ParamKind, ProcedureDefinition, Program, Prototype, Script, ScriptId,
    Target, Variable,
};
use crate::opcodes::{self, OpSpec, SlotKind};

/// Parses an `.sb3` archive.
pub fn load_sb3(bytes: &[u8]) -> Result<Program, Sb3Error> {
    let mut zip = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| Sb3Error::MalformedArchive {
        path: "<archive>".to_string(),
        message: format!("not a zip archive ({e})"),
    })?;
    let mut json = String::new();
    let mut assets = BTreeMap::new();
    let mut found = false;
    for i in 0..zip.len() {
        let mut entry = zip.by_index(i).map_err(|e| Sb3Error::MalformedArchive {
            path: format!("<entry {i}>"),
            message: e.to_string(),
        })?;
        if entry.is_dir() {
            continue;
        }
        let name = entry.name().to_string();
        if name == "project.json" {
            entry.read_to_string(&mut json).map_err(|e| Sb3Error::MalformedArchive {
                path: name.clone(),
                message: format!("not UTF-8 text ({e})"),
            })?;
            found = true;
        } else {
            let mut data = Vec::new();
            entry.read_to_end(&mut data)?;
            assets.insert(name, data);
        }
    }
    if !found {
        return Err(Sb3Error::MalformedArchive {
            path: "project.json".to_string(),
            message: "archive has no project.json".to_string(),
        });
    }
    let value: Value = serde_json::from_str(&json).map_err(|e| Sb3Error::MalformedArchive {
        path: "project.json".to_string(),
        message: format!("invalid JSON ({e})"),
    })?;
    load_project_json(&value, assets)
}

/// Builds a [`Program`] from an already parsed `project.json`.
pub fn load_project_json(project: &Value, assets: BTreeMap<String, Vec<u8>>) -> Result<Program, Sb3Error> {
    let root = project
        .as_object()
        .ok_or_else(|| Sb3Error::schema("$", "project.json must be an object"))?;
    let targets = root
        .get("targets")
        .ok_or_else(|| Sb3Error::schema("targets", "missing required key `targets`"))?
        .as_array()
        .ok_or_else(|| Sb3Error::schema("targets", "`targets` must be an array"))?;

    let mut stage = None;
    let mut sprites = Vec::new();
    for (i, raw) in targets.iter().enumerate() {
        let path = format!("targets[{i}]");
        let target = load_target(raw, &path)?;
        if target.is_stage {
            if stage.is_some() {
                return Err(Sb3Error::schema(path, "more than one stage target"));
            }
            stage = Some(target);
        } else {
            sprites.push(target);
        }
    }
    let stage = stage.ok_or_else(|| Sb3Error::schema("targets", "no stage target"))?;

    let mut names = HashSet::new();
    for (i, s) in sprites.iter().enumerate() {
        if s.name.is_empty() || !names.insert(s.name.clone()) {
            return Err(Sb3Error::schema(
                format!("targets[{}].name", i + 1),
                format!("sprite name `{}` is empty or not unique", s.name),
            ));
        }
    }

    let mut extras = root.clone();
    extras.shift_remove("targets");
    let meta = root
        .get("meta")
        .and_then(|m| m.get("semver"))
        .and_then(Value::as_str)
        .unwrap_or("3.0.0")
        .to_string();

    Ok(Program {
        stage,
        sprites,
        meta,
        extras,
        assets,
    })
}

const TARGET_KEYS: &[&str] = &["name", "isStage", "blocks", "variables", "lists", "costumes"];

fn load_target(raw: &Value, path: &str) -> Result<Target, Sb3Error> {
    let obj = raw
        .as_object()
        .ok_or_else(|| Sb3Error::schema(path, "target must be an object"))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| Sb3Error::schema(format!("{path}.name"), "missing or non-string `name`"))?
        .to_string();
    let is_stage = obj
        .get("isStage")
        .and_then(Value::as_bool)
        .ok_or_else(|| Sb3Error::schema(format!("{path}.isStage"), "missing or non-boolean `isStage`"))?;
    let blocks = obj
        .get("blocks")
        .and_then(Value::as_object)
        .ok_or_else(|| Sb3Error::schema(format!("{path}.blocks"), "missing or non-object `blocks`"))?;

    let mut target = if is_stage {
        let mut t = Target::new_stage();
        t.name = name;
        t
    } else {
        Target::new_sprite(&name)
    };

    if let Some(vars) = obj.get("variables") {
        let vars = vars
            .as_object()
            .ok_or_else(|| Sb3Error::schema(format!("{path}.variables"), "must be an object"))?;
        for (id, v) in vars {
            let p = format!("{path}.variables[\"{id}\"]");
            let arr = v.as_array().ok_or_else(|| Sb3Error::schema(&p, "variable must be an array"))?;
            let name = arr
                .first()
                .and_then(Value::as_str)
                .ok_or_else(|| Sb3Error::schema(&p, "variable name must be a string"))?;
            target.variables.push(Variable {
                id: id.clone(),
                name: name.to_string(),
                value: arr.get(1).cloned().unwrap_or(Value::from(0)),
            });
        }
    }
    if let Some(lists) = obj.get("lists") {
        let lists = lists
            .as_object()
            .ok_or_else(|| Sb3Error::schema(format!("{path}.lists"), "must be an object"))?;
        for (id, v) in lists {
            let p = format!("{path}.lists[\"{id}\"]");
            let arr = v.as_array().ok_or_else(|| Sb3Error::schema(&p, "list must be an array"))?;
            let name = arr
                .first()
                .and_then(Value::as_str)
                .ok_or_else(|| Sb3Error::schema(&p, "list name must be a string"))?;
            let items = arr.get(1).and_then(Value::as_array).cloned().unwrap_or_default();
            target.lists.push(ListVar {
                id: id.clone(),
                name: name.to_string(),
                items,
            });
        }
    }
    if let Some(costumes) = obj.get("costumes") {
        let costumes = costumes
            .as_array()
            .ok_or_else(|| Sb3Error::schema(format!("{path}.costumes"), "must be an array"))?;
        for (i, c) in costumes.iter().enumerate() {
            let p = format!("{path}.costumes[{i}]");
            let mut record = c.as_object().cloned().ok_or_else(|| Sb3Error::schema(&p, "costume must be an object"))?;
            let name = match record.shift_remove("name") {
                Some(Value::String(s)) => s,
                _ => return Err(Sb3Error::schema(format!("{p}.name"), "missing costume name")),
            };
            target.costumes.push(Costume { name, record });
        }
    }

    for (k, v) in obj {
        if TARGET_KEYS.contains(&k.as_str()) {
            continue;
        }
        let mut v = v.clone();
        if k == "comments" {
            // block ids are regenerated on save, so comments cannot stay attached
            if let Some(map) = v.as_object_mut() {
                for c in map.values_mut() {
                    if let Some(c) = c.as_object_mut() {
                        if c.contains_key("blockId") {
                            c.insert("blockId".to_string(), Value::Null);
                        }
                    }
                }
            }
        }
        target.extras.insert(k.clone(), v);
    }

    BlockReader {
        blocks,
        path: format!("{path}.blocks"),
    }
    .read_into(&mut target)?;
    Ok(target)
}

struct BlockReader<'a> {
    blocks: &'a Map<String, Value>,
    path: String,
}

enum TopLevel {
    Script(Vec<Block>),
    Procedure(ProcedureDefinition),
}

impl<'a> BlockReader<'a> {
    fn read_into(&self, target: &mut Target) -> Result<(), Sb3Error> {
        let mut tops = Vec::new();
        for (id, raw) in self.blocks {
            if raw.is_array() {
                target.loose.push(raw.clone());
                continue;
            }
            let rec = self.record(id)?;
            let top = rec.get("topLevel").and_then(Value::as_bool).unwrap_or(false);
            let shadow = rec.get("shadow").and_then(Value::as_bool).unwrap_or(false);
            if !top || shadow {
                continue;
            }
            let pos = match (rec.get("x").and_then(Value::as_f64), rec.get("y").and_then(Value::as_f64)) {
                (Some(x), Some(y)) => Some((x, y)),
                _ => None,
            };
            let item = if self.opcode(id)? == opcodes::PROCEDURE_DEFINITION {
                TopLevel::Procedure(self.procedure(id)?)
            } else {
                TopLevel::Script(self.chain(Some(id))?)
            };
            tops.push((id.clone(), pos, item));
        }

        // keep ids that already have our canonical shape, number the rest
        let prefix = format!("{}:", target.name);
        let reserved: HashSet<u32> = tops
            .iter()
            .filter_map(|(id, _, _)| id.strip_prefix(&prefix).and_then(|n| n.parse().ok()))
            .collect();
        let mut used = HashSet::new();
        let mut next = 1u32;
        for (raw_id, pos, item) in tops {
            let kept = raw_id
                .strip_prefix(&prefix)
                .and_then(|n| n.parse::<u32>().ok())
                .filter(|n| used.insert(*n));
            let ordinal = match kept {
                Some(n) => n,
                None => {
                    while reserved.contains(&next) || used.contains(&next) {
                        next += 1;
                    }
                    used.insert(next);
                    next
                }
            };
            let id = ScriptId::new(&target.name, ordinal);
            if let Some(p) = pos {
                target.positions.insert(id.clone(), p);
            }
            match item {
                TopLevel::Script(blocks) => target.scripts.push(Script::new(id, blocks)),
                TopLevel::Procedure(mut def) => {
                    def.body.id = id;
                    target.procedures.push(def);
                }
            }
        }
        Ok(())
    }

    fn record(&self, id: &str) -> Result<&'a Map<String, Value>, Sb3Error> {
        self.blocks
            .get(id)
            .ok_or_else(|| Sb3Error::schema(format!("{}[\"{id}\"]", self.path), "referenced block does not exist"))?
            .as_object()
            .ok_or_else(|| Sb3Error::schema(format!("{}[\"{id}\"]", self.path), "block must be an object"))
    }

    fn opcode(&self, id: &str) -> Result<&'a str, Sb3Error> {
        self.record(id)?
            .get("opcode")
            .and_then(Value::as_str)
            .ok_or_else(|| Sb3Error::schema(format!("{}[\"{id}\"].opcode", self.path), "missing opcode"))
    }

    fn chain(&self, start: Option<&str>) -> Result<Vec<Block>, Sb3Error> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut cur = start.map(str::to_string);
        while let Some(id) = cur {
            if !seen.insert(id.clone()) {
                return Err(Sb3Error::schema(format!("{}[\"{id}\"].next", self.path), "cycle in block chain"));
            }
            out.push(self.block(&id, 0)?);
            cur = self.record(&id)?.get("next").and_then(Value::as_str).map(str::to_string);
        }
        Ok(out)
    }

    fn block(&self, id: &str, depth: usize) -> Result<Block, Sb3Error> {
        if depth > 256 {
            return Err(Sb3Error::schema(format!("{}[\"{id}\"]", self.path), "blocks nested too deeply"));
        }
        let rec = self.record(id)?;
        let opcode = self.opcode(id)?;
        if opcode == opcodes::PROCEDURE_CALL {
            return self.call(id, rec, depth);
        }
        match opcodes::lookup(opcode) {
            Some(spec) if !spec.is_custom() => self.known(id, rec, spec, depth),
            _ => self.opaque(id, rec, depth),
        }
    }

    fn known(&self, id: &str, rec: &Map<String, Value>, spec: &'static OpSpec, depth: usize) -> Result<Block, Sb3Error> {
        let mut block = Block::new(spec.opcode);
        for slot in spec.slots() {
            if slot.kind == SlotKind::Field {
                block.fields.push((slot.name.to_string(), field_value(rec, slot.name)));
            } else {
                let expr = self.input(id, rec, slot.name, slot.kind, spec, depth)?;
                block.inputs.push((slot.name.to_string(), expr));
            }
        }
        for i in 0..spec.branches() {
            let name = substack_name(i);
            let first = input_entry(rec, &name).and_then(|e| e.get(1)).and_then(Value::as_str);
            block.substacks.push(self.chain(first)?);
        }
        Ok(block)
    }

    fn call(&self, id: &str, rec: &Map<String, Value>, depth: usize) -> Result<Block, Sb3Error> {
        let mutation = rec.get("mutation").and_then(Value::as_object);
        let proccode = mutation
            .and_then(|m| m.get("proccode"))
            .and_then(Value::as_str)
            .ok_or_else(|| Sb3Error::schema(format!("{}[\"{id}\"].mutation.proccode", self.path), "missing proccode"))?;
        let arg_ids = json_string_array(mutation.and_then(|m| m.get("argumentids")));
        let kinds = Prototype::slot_kinds(proccode);
        let call_spec = opcodes::lookup(opcodes::PROCEDURE_CALL).expect("call entry");
        let mut args = Vec::new();
        for (i, kind) in kinds.iter().enumerate() {
            let slot = match kind {
                ParamKind::Value => SlotKind::Text,
                ParamKind::Boolean => SlotKind::Boolean,
            };
            let expr = match arg_ids.get(i) {
                Some(arg) => self.input(id, rec, arg, slot, call_spec, depth)?,
                None if slot == SlotKind::Boolean => Expr::Empty,
                None => Expr::lit(""),
            };
            args.push(expr);
        }
        Ok(Block::call(proccode, args))
    }

    fn opaque(&self, id: &str, rec: &Map<String, Value>, depth: usize) -> Result<Block, Sb3Error> {
        let mut block = Block::new(self.opcode(id)?);
        block.shadow = rec.get("shadow").and_then(Value::as_bool).unwrap_or(false);
        if let Some(fields) = rec.get("fields").and_then(Value::as_object) {
            for name in fields.keys() {
                block.fields.push((name.clone(), field_value(rec, name)));
            }
        }
        let mut substacks: Vec<(usize, Vec<Block>)> = Vec::new();
        if let Some(inputs) = rec.get("inputs").and_then(Value::as_object) {
            for (name, entry) in inputs {
                let value = entry.get(1).cloned().unwrap_or(Value::Null);
                if let Some(rest) = name.strip_prefix("SUBSTACK") {
                    let index = if rest.is_empty() { 0 } else { rest.parse::<usize>().unwrap_or(2) - 1 };
                    substacks.push((index, self.chain(value.as_str())?));
                    continue;
                }
                let expr = match value.as_str() {
                    Some(child) => Expr::block(self.block(child, depth + 1)?),
                    None => Expr::Raw(value),
                };
                block.inputs.push((name.clone(), expr));
            }
        }
        substacks.sort_by_key(|(i, _)| *i);
        block.substacks = substacks.into_iter().map(|(_, s)| s).collect();
        Ok(block)
    }

    fn input(
        &self,
        id: &str,
        rec: &Map<String, Value>,
        name: &str,
        kind: SlotKind,
        spec: &'static OpSpec,
        depth: usize,
    ) -> Result<Expr, Sb3Error> {
        let empty = match kind {
            SlotKind::Boolean => Expr::Empty,
            SlotKind::Menu => Expr::Menu(String::new()),
            SlotKind::Color => Expr::Color(String::new()),
            _ => Expr::lit(""),
        };
        let Some(value) = input_entry(rec, name).and_then(|e| e.get(1)) else {
            return Ok(empty);
        };
        match value {
            Value::Null => Ok(empty),
            Value::Array(arr) => Ok(primitive(arr)),
            Value::String(child) => {
                let child_rec = self.record(child)?;
                let opcode = self.opcode(child)?;
                let is_shadow = child_rec.get("shadow").and_then(Value::as_bool).unwrap_or(false);
                if let Some(menu) = spec.menu(name) {
                    if opcode == menu.opcode {
                        return Ok(Expr::Menu(field_value(child_rec, menu.field)));
                    }
                }
                match opcode {
                    opcodes::ARGUMENT_REPORTER => return Ok(Expr::Param(field_value(child_rec, "VALUE"))),
                    opcodes::ARGUMENT_REPORTER_BOOLEAN => return Ok(Expr::BoolParam(field_value(child_rec, "VALUE"))),
                    _ => {}
                }
                if is_shadow {
                    // shadows stored as full blocks instead of primitives
                    let fields = ["NUM", "TEXT", "COLOUR"];
                    match opcode {
                        "math_number" | "math_positive_number" | "math_whole_number" | "math_integer"
                        | "math_angle" | "text" => {
                            let f = fields.iter().find(|f| child_rec.get("fields").and_then(|v| v.get(**f)).is_some());
                            return Ok(Expr::Literal(f.map(|f| field_value(child_rec, f)).unwrap_or_default()));
                        }
                        "colour_picker" => return Ok(Expr::Color(field_value(child_rec, "COLOUR"))),
                        _ => {
                            if let Some(field) = opcodes::menu_shadow_field(opcode) {
                                return Ok(Expr::Menu(field_value(child_rec, field)));
                            }
                        }
                    }
                }
                Ok(Expr::block(self.block(child, depth + 1)?))
            }
            _ => Err(Sb3Error::schema(
                format!("{}[\"{id}\"].inputs.{name}", self.path),
                "input value must be a block id, primitive or null",
            )),
        }
    }

    fn procedure(&self, id: &str) -> Result<ProcedureDefinition, Sb3Error> {
        let rec = self.record(id)?;
        let path = format!("{}[\"{id}\"]", self.path);
        let proto_id = input_entry(rec, "custom_block")
            .and_then(|e| e.get(1))
            .and_then(Value::as_str)
            .ok_or_else(|| Sb3Error::schema(format!("{path}.inputs.custom_block"), "missing prototype"))?;
        let proto = self.record(proto_id)?;
        let mutation = proto
            .get("mutation")
            .and_then(Value::as_object)
            .ok_or_else(|| Sb3Error::schema(format!("{path}.mutation"), "prototype has no mutation"))?;
        let proccode = mutation
            .get("proccode")
            .and_then(Value::as_str)
            .ok_or_else(|| Sb3Error::schema(format!("{path}.mutation.proccode"), "missing proccode"))?;
        let names = json_string_array(mutation.get("argumentnames"));
        let kinds = Prototype::slot_kinds(proccode);
        let params = kinds
            .iter()
            .enumerate()
            .map(|(i, kind)| Param {
                name: names.get(i).cloned().unwrap_or_else(|| format!("arg{i}")),
                kind: *kind,
            })
            .collect();
        let warp = match mutation.get("warp") {
            Some(Value::Bool(b)) => *b,
            Some(Value::String(s)) => s == "true",
            _ => false,
        };
        let next = rec.get("next").and_then(Value::as_str);
        Ok(ProcedureDefinition {
            prototype: Prototype {
                proccode: proccode.to_string(),
                params,
                warp,
            },
            body: Script::new(ScriptId(String::new()), self.chain(next)?),
        })
    }
}

pub(crate) fn substack_name(i: usize) -> String {
    if i == 0 {
        "SUBSTACK".to_string()
    } else {
        format!("SUBSTACK{}", i + 1)
    }
}

fn input_entry<'v>(rec: &'v Map<String, Value>, name: &str) -> Option<&'v Vec<Value>> {
    rec.get("inputs").and_then(|i| i.get(name)).and_then(Value::as_array)
}

fn field_value(rec: &Map<String, Value>, name: &str) -> String {
    let f = rec.get("fields").and_then(|f| f.get(name));
    let v = match f {
        Some(Value::Array(a)) => a.first(),
        other => other,
    };
    v.map(scalar_string).unwrap_or_default()
}

fn scalar_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn primitive(arr: &[Value]) -> Expr {
    let code = arr.first().and_then(Value::as_u64).unwrap_or(prim::TEXT);
    let value = arr.get(1).map(scalar_string).unwrap_or_default();
    match code {
        prim::COLOR => Expr::Color(value),
        prim::BROADCAST => Expr::Menu(value),
        prim::VARIABLE => Expr::Variable(value),
        prim::LIST => Expr::List(value),
        _ => Expr::Literal(value),
    }
}

fn json_string_array(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::String(s)) => serde_json::from_str(s).unwrap_or_default(),
        Some(Value::Array(a)) => a.iter().map(scalar_string).collect(),
        _ => Vec::new(),
    }
}
