//! Fixture projects and a random program generator for tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocktext::FragmentBody;
use crate::model::{
    Block, Costume, Expr, ListVar, Param, ParamKind, ProcedureDefinition, Program, ProtoPart, Prototype, Script, ScriptId,
    Target, Variable,
};
use crate::opcodes::{Category, OpSpec, Shape, SlotKind, OPCODES};
use crate::sb3;

pub const FIXTURES: &[(&str, &str)] = &[
    ("boatrace", include_str!("../fixtures/boatrace.json")),
    ("boatrace_fixed", include_str!("../fixtures/boatrace_fixed.json")),
    ("empty", include_str!("../fixtures/empty.json")),
    ("kitchen_sink", include_str!("../fixtures/kitchen_sink.json")),
];

/// Returns the `.sb3` archive bytes for a named fixture.
pub fn fixture_sb3(name: &str) -> Vec<u8> {
    let (_, json) = FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no fixture named {name}"));
    sb3::pack_archive(json.as_bytes(), &BTreeMap::new()).expect("fixture archive")
}

pub fn fixture(name: &str) -> Program {
    sb3::load_sb3(&fixture_sb3(name)).expect("fixture loads")
}

pub fn boatrace() -> Program {
    fixture("boatrace")
}

pub fn boatrace_fixed() -> Program {
    fixture("boatrace_fixed")
}

/// A model's explanation of the Missing Loop issue in the boat race.
pub const BOAT_EXPLANATION: &str = include_str!("../fixtures/boat_explanation.txt");

/// A model response that wraps the boat's `if` in a `forever` loop.
pub const BOAT_FIX_RESPONSE: &str = "Here is the fixed script:\n\n```scratchblocks\n// sprite: Boat\n\n// script-id: Boat:1\nwhen green flag clicked\nforever\n  if <touching color [swamp v]?> then\n    move (-1) steps\n  end\nend\n```\n\nNow the condition is checked all the time.\n";

/// A block for `spec` with every slot filled by a plain default value.
pub fn default_block(spec: &OpSpec) -> Block {
    let mut block = Block::new(spec.opcode);
    for slot in spec.slots() {
        let first = spec.choices_for(slot.name).and_then(|c| c.first()).copied();
        match slot.kind {
            SlotKind::Field => block.fields.push((slot.name.to_string(), first.unwrap_or("my variable").to_string())),
            SlotKind::Menu => block.inputs.push((slot.name.to_string(), Expr::Menu(first.unwrap_or("option").to_string()))),
            SlotKind::Number => block.inputs.push((slot.name.to_string(), Expr::lit("10"))),
            SlotKind::Text => block.inputs.push((slot.name.to_string(), Expr::lit("hello"))),
            SlotKind::Boolean => block.inputs.push((slot.name.to_string(), Expr::Empty)),
            SlotKind::Color => block.inputs.push((slot.name.to_string(), Expr::Color("#ff0000".into()))),
        }
    }
    block.substacks = vec![Vec::new(); spec.branches()];
    block
}

/// Builds a random but well-formed program from a seed. Every program
/// contains at least one block from each opcode category.
pub fn generate_program(seed: u64) -> Program {
    Generator::new(seed).program()
}

/// Every stack of a program in printing order, with its target name.
pub fn stacks(program: &Program) -> Vec<(String, FragmentBody)> {
    let mut out = Vec::new();
    for t in program.targets() {
        for p in &t.procedures {
            out.push((t.name.clone(), FragmentBody::Procedure(p.clone())));
        }
        for s in &t.scripts {
            out.push((t.name.clone(), FragmentBody::Script(s.clone())));
        }
    }
    out
}

const SPRITES: &[&str] = &["Boat", "Cat", "Ball Sprite", "Buoy"];
const VARIABLES: &[&str] = &["score", "my variable", "speed", "x position", "lives", "answer"];
const LISTS: &[&str] = &["laps", "items"];
const WORDS: &[&str] = &["hello", "Hello, world!", "go v", "a]b", "x position", "", "3 apples", "(x)", "under_score"];

struct Generator {
    rng: ChaCha8Rng,
    params: Vec<Param>,
    prototypes: Vec<Prototype>,
    vars: Vec<String>,
    lists: Vec<String>,
}

fn label(s: &str) -> ProtoPart {
    ProtoPart::Label(s.to_string())
}

fn param(name: &str, kind: ParamKind) -> ProtoPart {
    ProtoPart::Param(Param {
        name: name.to_string(),
        kind,
    })
}

impl Generator {
    fn new(seed: u64) -> Self {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
            prototypes: Vec::new(),
            vars: Vec::new(),
            lists: Vec::new(),
        }
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.rng.gen_range(0..items.len())]
    }

    fn program(&mut self) -> Program {
        let mut p = Program::empty();
        self.vars = VARIABLES.iter().map(|s| s.to_string()).collect();
        self.lists = LISTS.iter().map(|s| s.to_string()).collect();
        for (i, v) in VARIABLES.iter().enumerate() {
            p.stage.variables.push(Variable {
                id: format!("var{i}"),
                name: v.to_string(),
                value: serde_json::json!(i),
            });
        }
        for (i, l) in LISTS.iter().enumerate() {
            p.stage.lists.push(ListVar {
                id: format!("list{i}"),
                name: l.to_string(),
                items: vec![serde_json::json!("a"), serde_json::json!(i)],
            });
        }
        self.prototypes.clear();
        let n = self.rng.gen_range(0..3);
        p.stage.scripts = self.scripts("Stage", 1, n);
        let sprites = self.rng.gen_range(1..=3);
        for (s, name) in SPRITES.iter().enumerate().take(sprites) {
            let mut t = Target::new_sprite(name);
            t.costumes.push(Costume {
                name: "costume1".into(),
                record: serde_json::Map::new(),
            });
            self.prototypes = self.prototypes_for();
            let mut ordinal = 1;
            for proto in self.prototypes.clone() {
                self.params = proto.params.clone();
                let len = self.rng.gen_range(1..4);
                let body = self.sequence(len, 0);
                self.params.clear();
                t.procedures.push(ProcedureDefinition {
                    prototype: proto,
                    body: Script::new(ScriptId::new(name, ordinal), body),
                });
                ordinal += 1;
            }
            let n = self.rng.gen_range(1..4);
            let mut scripts = self.scripts(name, ordinal, n);
            if s == 0 {
                ordinal += scripts.len() as u32;
                scripts.push(Script::new(ScriptId::new(name, ordinal), self.every_category()));
            }
            t.scripts = scripts;
            p.sprites.push(t);
        }
        p
    }

    fn prototypes_for(&mut self) -> Vec<Prototype> {
        let all = [
            Prototype::from_parts(&[label("jump"), param("height", ParamKind::Value)]),
            Prototype::from_parts(&[
                label("spin"),
                param("n", ParamKind::Value),
                label("times"),
                param("fast", ParamKind::Boolean),
            ]),
            Prototype::from_parts(&[label("reset"), label("all")]),
            // same shape as a built-in block
            Prototype::from_parts(&[label("move"), param("score", ParamKind::Value), label("steps")]),
        ];
        let mut out: Vec<Prototype> = all.into_iter().filter(|_| self.rng.gen_bool(0.6)).collect();
        if let Some(first) = out.first_mut() {
            first.warp = self.rng.gen_bool(0.5);
        }
        out
    }

    fn scripts(&mut self, target: &str, first: u32, n: usize) -> Vec<Script> {
        (0..n)
            .map(|i| {
                let mut blocks = Vec::new();
                if self.rng.gen_bool(0.85) {
                    blocks.push(self.block_of(|s| s.shape == Shape::Hat));
                }
                let len = self.rng.gen_range(0..5);
                blocks.extend(self.sequence(len, 0));
                if blocks.is_empty() {
                    blocks.push(Block::new("looks_show"));
                }
                Script::new(ScriptId::new(target, first + i as u32), blocks)
            })
            .collect()
    }

    /// One script holding a block from every category.
    fn every_category(&mut self) -> Vec<Block> {
        let mut blocks = vec![Block::new("event_whenflagclicked")];
        for cat in Category::ALL {
            if cat == Category::MyBlocks {
                blocks.push(self.call_or_define());
                continue;
            }
            let specs: Vec<&'static OpSpec> = OPCODES
                .iter()
                .filter(|s| s.category == cat && !s.is_custom() && s.shape != Shape::Hat && !s.is_cap())
                .collect();
            let spec = *self.pick(&specs);
            let b = self.fill(spec, 1);
            blocks.push(if spec.shape.is_reporter() {
                Block::new("looks_say").with_input("MESSAGE", Expr::block(b))
            } else {
                b
            });
        }
        blocks
    }

    fn call_or_define(&mut self) -> Block {
        match self.prototypes.first().cloned() {
            Some(proto) => self.call(&proto, 1),
            None => Block::new("looks_show"),
        }
    }

    fn sequence(&mut self, len: usize, depth: usize) -> Vec<Block> {
        let mut out = Vec::new();
        for _ in 0..len {
            let b = if !self.prototypes.is_empty() && self.rng.gen_bool(0.1) {
                let proto = self.pick(&self.prototypes.clone()).clone();
                self.call(&proto, depth)
            } else {
                let allow_c = depth < 2;
                self.block_of(|s| !s.shape.is_reporter() && s.shape != Shape::Hat && (allow_c || s.branches() == 0))
            };
            let b = self.with_substacks(b, depth);
            let cap = b.is_cap();
            out.push(b);
            if cap {
                break;
            }
        }
        out
    }

    fn with_substacks(&mut self, mut b: Block, depth: usize) -> Block {
        for i in 0..b.substacks.len() {
            let len = self.rng.gen_range(0..3);
            b.substacks[i] = self.sequence(len, depth + 1);
        }
        b
    }

    fn call(&mut self, proto: &Prototype, depth: usize) -> Block {
        let args = Prototype::slot_kinds(&proto.proccode)
            .into_iter()
            .map(|k| match k {
                ParamKind::Value => self.value(SlotKind::Text, depth + 1),
                ParamKind::Boolean => self.boolean(depth + 1),
            })
            .collect();
        Block::call(&proto.proccode, args)
    }

    fn block_of(&mut self, keep: impl Fn(&OpSpec) -> bool) -> Block {
        let specs: Vec<&'static OpSpec> = OPCODES.iter().filter(|s| !s.is_custom() && keep(s)).collect();
        let spec = *self.pick(&specs);
        self.fill(spec, 0)
    }

    fn fill(&mut self, spec: &OpSpec, depth: usize) -> Block {
        let mut block = Block::new(spec.opcode);
        for slot in spec.slots() {
            let choices = spec.choices_for(slot.name).unwrap_or(&[]);
            match slot.kind {
                SlotKind::Field => {
                    let value = match slot.name {
                        "VARIABLE" => self.pick(&self.vars.clone()).clone(),
                        "LIST" => self.pick(&self.lists.clone()).clone(),
                        _ if !choices.is_empty() => self.pick(choices).to_string(),
                        _ => "thing".to_string(),
                    };
                    block.fields.push((slot.name.to_string(), value));
                }
                SlotKind::Menu => {
                    let e = if depth < 2 && self.rng.gen_bool(0.15) {
                        self.reporter(SlotKind::Text, depth + 1)
                    } else if !choices.is_empty() && self.rng.gen_bool(0.7) {
                        Expr::Menu(self.pick(choices).to_string())
                    } else {
                        Expr::Menu(self.pick(&["Boat", "Cat", "message 2", "Sprite1"]).to_string())
                    };
                    block.inputs.push((slot.name.to_string(), e));
                }
                SlotKind::Color => {
                    let e = if self.rng.gen_bool(0.2) {
                        Expr::Color(self.pick(&["swamp", "red"]).to_string())
                    } else {
                        Expr::Color(format!("#{:06x}", self.rng.gen_range(0..0x1000000)))
                    };
                    block.inputs.push((slot.name.to_string(), e));
                }
                SlotKind::Boolean => {
                    let e = self.boolean(depth + 1);
                    block.inputs.push((slot.name.to_string(), e));
                }
                kind => {
                    let e = self.value(kind, depth + 1);
                    block.inputs.push((slot.name.to_string(), e));
                }
            }
        }
        block.substacks = vec![Vec::new(); spec.branches()];
        block
    }

    fn value(&mut self, kind: SlotKind, depth: usize) -> Expr {
        let roll = self.rng.gen_range(0..10);
        let value_params: Vec<String> = self.params.iter().filter(|p| p.kind == ParamKind::Value).map(|p| p.name.clone()).collect();
        match roll {
            0 | 1 if depth < 3 => self.reporter(kind, depth),
            2 => Expr::Variable(self.pick(&self.vars.clone()).clone()),
            3 if !value_params.is_empty() => Expr::Param(self.pick(&value_params).clone()),
            4 => Expr::List(self.pick(&self.lists.clone()).clone()),
            5 | 6 if kind == SlotKind::Text => Expr::lit(*self.pick(WORDS)),
            _ => {
                let n: i32 = self.rng.gen_range(-100..100);
                match self.rng.gen_range(0..4) {
                    0 => Expr::lit(format!("{}.5", n)),
                    1 => Expr::lit(""),
                    _ => Expr::lit(n.to_string()),
                }
            }
        }
    }

    fn boolean(&mut self, depth: usize) -> Expr {
        let bool_params: Vec<String> = self.params.iter().filter(|p| p.kind == ParamKind::Boolean).map(|p| p.name.clone()).collect();
        match self.rng.gen_range(0..6) {
            0 => Expr::Empty,
            1 if !bool_params.is_empty() => Expr::BoolParam(self.pick(&bool_params).clone()),
            _ if depth < 3 => self.reporter(SlotKind::Boolean, depth),
            _ => Expr::Empty,
        }
    }

    fn reporter(&mut self, kind: SlotKind, depth: usize) -> Expr {
        let want_bool = kind == SlotKind::Boolean;
        let spec = {
            let specs: Vec<&'static OpSpec> = OPCODES
                .iter()
                .filter(|s| !s.is_custom() && s.shape.is_reporter() && ((s.shape == Shape::Boolean) == want_bool || self.rng.gen_bool(0.3)))
                .collect();
            *self.pick(&specs)
        };
        Expr::block(self.fill(spec, depth + 1))
    }
}
