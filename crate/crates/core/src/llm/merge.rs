//! Merging parsed fragments back into a program.

use std::collections::BTreeSet;

use serde_json::{json, Map, Value};

use crate::blocktext::{FragmentBody, ParsedFragment};
use crate::model::{Block, Costume, Expr, ListVar, Program, ScriptId, Target, Variable};

const CAT_SVG: &[u8] = include_bytes!("../../data/cat.svg");

/// Result of merging a set of fragments.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub updated: Program,
    pub replaced: Vec<ScriptId>,
    pub added_scripts: Vec<ScriptId>,
    pub added_sprites: Vec<String>,
    /// Fragments that would have broken the program, with the reasons.
    pub rejected: Vec<(ParsedFragment, Vec<String>)>,
}

/// Applies fragments in order. A fragment whose script id exists replaces
/// that script; otherwise it is added to the sprite named by its heading or
/// id, or to `default_target` when it names none. Unknown sprites are
/// created with the default cat costume.
pub fn merge_fragments(program: &Program, fragments: &[ParsedFragment], default_target: &str) -> Merge {
    let mut merge = Merge {
        updated: program.clone(),
        replaced: Vec::new(),
        added_scripts: Vec::new(),
        added_sprites: Vec::new(),
        rejected: Vec::new(),
    };
    for fragment in fragments {
        let before: BTreeSet<String> = merge.updated.validate().iter().map(|v| v.to_string()).collect();
        let mut trial = merge.updated.clone();
        let applied = apply(&mut trial, fragment, default_target);
        let broken: Vec<String> = trial
            .validate()
            .iter()
            .map(|v| v.to_string())
            .filter(|v| !before.contains(v))
            .collect();
        if !broken.is_empty() {
            merge.rejected.push((fragment.clone(), broken));
            continue;
        }
        merge.updated = trial;
        match applied {
            Applied::Replaced(id) => {
                if !merge.replaced.contains(&id) {
                    merge.replaced.push(id)
                }
            }
            Applied::Added { id, new_sprite } => {
                merge.added_scripts.push(id);
                if let Some(name) = new_sprite {
                    merge.added_sprites.push(name);
                }
            }
        }
    }
    merge
}

enum Applied {
    Replaced(ScriptId),
    Added { id: ScriptId, new_sprite: Option<String> },
}

fn apply(program: &mut Program, fragment: &ParsedFragment, default_target: &str) -> Applied {
    let owner = fragment
        .script_id
        .as_ref()
        .and_then(|id| program.owner_of(id))
        .map(|t| t.name.clone());
    let target_name = owner.clone().unwrap_or_else(|| {
        fragment
            .sprite_name
            .clone()
            .or_else(|| fragment.script_id.as_ref().and_then(|id| id.target_name()).map(str::to_string))
            .filter(|n| !n.trim().is_empty())
            .unwrap_or_else(|| default_target.to_string())
    });
    let mut new_sprite = None;
    if program.target(&target_name).is_none() {
        let sprite = sprite_with_cat(&target_name, program);
        program.sprites.push(sprite);
        new_sprite = Some(target_name.clone());
    }
    let taken = program.all_script_ids();
    let stage_vars = program.stage.clone();
    let target = program.target_mut(&target_name).expect("target exists");
    declare_missing(target, &stage_vars, fragment.body.blocks());

    if owner.is_some() {
        let id = fragment.script_id.clone().unwrap();
        replace_unit(target, &id, &fragment.body);
        return Applied::Replaced(id);
    }
    if let FragmentBody::Procedure(proc) = &fragment.body {
        if let Some(existing) = target.procedures.iter_mut().find(|p| p.prototype.proccode == proc.prototype.proccode) {
            let id = existing.body.id.clone();
            *existing = proc.clone();
            existing.body.id = id.clone();
            return Applied::Replaced(id);
        }
    }
    let id = match &fragment.script_id {
        Some(id) if id.target_name() == Some(target_name.as_str()) && !taken.contains(id) => id.clone(),
        _ => target.next_script_id(&taken),
    };
    match &fragment.body {
        FragmentBody::Script(s) => {
            let mut s = s.clone();
            s.id = id.clone();
            target.scripts.push(s);
        }
        FragmentBody::Procedure(p) => {
            let mut p = p.clone();
            p.body.id = id.clone();
            target.procedures.push(p);
        }
    }
    Applied::Added { id, new_sprite }
}

/// Puts `body` in the place of the unit with id `id`, keeping its position
/// in the target.
fn replace_unit(target: &mut Target, id: &ScriptId, body: &FragmentBody) {
    let script_at = target.scripts.iter().position(|s| &s.id == id);
    let proc_at = target.procedures.iter().position(|p| &p.body.id == id);
    match body {
        FragmentBody::Script(s) => {
            let mut s = s.clone();
            s.id = id.clone();
            match script_at {
                Some(i) => target.scripts[i] = s,
                None => {
                    if let Some(i) = proc_at {
                        target.procedures.remove(i);
                    }
                    target.scripts.push(s);
                }
            }
        }
        FragmentBody::Procedure(p) => {
            let mut p = p.clone();
            p.body.id = id.clone();
            match proc_at {
                Some(i) => target.procedures[i] = p,
                None => {
                    if let Some(i) = script_at {
                        target.scripts.remove(i);
                    }
                    target.procedures.push(p);
                }
            }
        }
    }
}

/// Creates sprite-local variables and lists for names the blocks use but
/// neither the target nor the stage declares.
fn declare_missing(target: &mut Target, stage: &Target, blocks: &[Block]) {
    let mut variables = Vec::new();
    let mut lists = Vec::new();
    for b in blocks {
        b.visit(&mut |inner| {
            for (name, value) in &inner.fields {
                match name.as_str() {
                    "VARIABLE" => variables.push(value.clone()),
                    "LIST" => lists.push(value.clone()),
                    _ => {}
                }
            }
        });
        b.visit_exprs(&mut |e| match e {
            Expr::Variable(n) => variables.push(n.clone()),
            Expr::List(n) => lists.push(n.clone()),
            _ => {}
        });
    }
    for name in variables {
        if target.variable(&name).is_none() && stage.variable(&name).is_none() {
            target.variables.push(Variable {
                id: format!("var:{name}"),
                name,
                value: json!(0),
            });
        }
    }
    for name in lists {
        if target.list(&name).is_none() && stage.list(&name).is_none() {
            target.lists.push(ListVar {
                id: format!("list:{name}"),
                name,
                items: Vec::new(),
            });
        }
    }
}

/// A new sprite wearing the default cat costume. The costume asset is
/// added to the program's archive entries.
fn sprite_with_cat(name: &str, program: &mut Program) -> Target {
    let digest = format!("{:x}", md5::compute(CAT_SVG));
    let file = format!("{digest}.svg");
    program.assets.entry(file.clone()).or_insert_with(|| CAT_SVG.to_vec());
    let mut record = Map::new();
    record.insert("bitmapResolution".into(), json!(1));
    record.insert("dataFormat".into(), json!("svg"));
    record.insert("assetId".into(), json!(digest));
    record.insert("md5ext".into(), json!(file));
    record.insert("rotationCenterX".into(), json!(48));
    record.insert("rotationCenterY".into(), json!(50));
    let mut sprite = Target::new_sprite(name);
    sprite.costumes.push(Costume {
        name: "cat".to_string(),
        record,
    });
    let layer = program.sprites.len() + 1;
    for (key, value) in [
        ("currentCostume", json!(0)),
        ("visible", json!(true)),
        ("x", json!(0)),
        ("y", json!(0)),
        ("size", json!(100)),
        ("direction", json!(90)),
        ("draggable", json!(false)),
        ("rotationStyle", json!("all around")),
        ("layerOrder", json!(layer)),
        ("sounds", Value::Array(Vec::new())),
    ] {
        sprite.extras.insert(key.to_string(), value);
    }
    sprite
}
