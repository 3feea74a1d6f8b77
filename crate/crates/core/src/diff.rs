//! Structural comparison of two programs.

use serde::Serialize;

use crate::model::{Block, Program, ScriptId, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChangeKind {
    AddedTarget,
    RemovedTarget,
    AddedScript,
    RemovedScript,
    Modified,
    /// Variables, lists or costume names differ.
    TargetData,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Change {
    pub target: String,
    pub script: Option<ScriptId>,
    pub kind: ChangeKind,
}

/// Lists the differences between `a` and `b`.
///
/// Scripts are paired by id. Scripts left unpaired on both sides whose
/// blocks are identical count as renumbered, not changed. Layout, opaque
/// pass-through data and costume records other than names are ignored.
pub fn structural_diff(a: &Program, b: &Program) -> Vec<Change> {
    let mut out = Vec::new();
    for ta in a.targets() {
        match b.target(ta.name.as_str()).filter(|tb| tb.is_stage == ta.is_stage) {
            Some(tb) => diff_target(ta, tb, &mut out),
            None => out.push(change(ta, None, ChangeKind::RemovedTarget)),
        }
    }
    for tb in b.targets() {
        if a.target(&tb.name).filter(|ta| ta.is_stage == tb.is_stage).is_none() {
            out.push(change(tb, None, ChangeKind::AddedTarget));
        }
    }
    out
}

fn change(t: &Target, script: Option<&ScriptId>, kind: ChangeKind) -> Change {
    Change {
        target: t.name.clone(),
        script: script.cloned(),
        kind,
    }
}

/// A comparable view of every stack in a target, procedures included.
fn units(t: &Target) -> Vec<(&ScriptId, Unit<'_>)> {
    let procs = t.procedures.iter().map(|p| (&p.body.id, Unit::Procedure(p)));
    let scripts = t.scripts.iter().map(|s| (&s.id, Unit::Script(&s.blocks)));
    procs.chain(scripts).collect()
}

enum Unit<'a> {
    Script(&'a Vec<Block>),
    Procedure(&'a crate::model::ProcedureDefinition),
}

impl Unit<'_> {
    fn same(&self, other: &Unit<'_>) -> bool {
        match (self, other) {
            (Unit::Script(a), Unit::Script(b)) => a == b,
            (Unit::Procedure(a), Unit::Procedure(b)) => a.prototype == b.prototype && a.body.blocks == b.body.blocks,
            _ => false,
        }
    }
}

fn diff_target(ta: &Target, tb: &Target, out: &mut Vec<Change>) {
    let ua = units(ta);
    let ub = units(tb);
    let mut removed = Vec::new();
    for (id, unit) in &ua {
        match ub.iter().find(|(other, _)| other == id) {
            Some((_, other)) if unit.same(other) => {}
            Some(_) => out.push(change(ta, Some(id), ChangeKind::Modified)),
            None => removed.push((*id, unit)),
        }
    }
    let mut added: Vec<_> = ub.iter().filter(|(id, _)| !ua.iter().any(|(o, _)| o == id)).collect();
    for (id, unit) in removed {
        if let Some(pos) = added.iter().position(|(_, u)| u.same(unit)) {
            added.remove(pos);
        } else {
            out.push(change(ta, Some(id), ChangeKind::RemovedScript));
        }
    }
    for (id, _) in added {
        out.push(change(tb, Some(id), ChangeKind::AddedScript));
    }
    let names = |t: &Target| t.costumes.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    if ta.variables != tb.variables || ta.lists != tb.lists || names(ta) != names(tb) {
        out.push(change(ta, None, ChangeKind::TargetData));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Expr, Script};
    use crate::testing::{boatrace, boatrace_fixed};

    #[test]
    fn identical_programs_have_no_changes() {
        let p = boatrace();
        assert!(structural_diff(&p, &p.clone()).is_empty());
    }

    #[test]
    fn fixed_boat_is_one_modification() {
        let d = structural_diff(&boatrace(), &boatrace_fixed());
        assert_eq!(
            d,
            vec![Change {
                target: "Boat".into(),
                script: Some(ScriptId::from("Boat:1")),
                kind: ChangeKind::Modified
            }]
        );
    }

    #[test]
    fn new_sprite_is_added_target() {
        let a = boatrace();
        let mut b = a.clone();
        b.sprites.push(Target::new_sprite("Buoy"));
        let d = structural_diff(&a, &b);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, ChangeKind::AddedTarget);
        assert_eq!(d[0].target, "Buoy");
    }

    #[test]
    fn renumbered_script_is_not_a_change() {
        let a = boatrace();
        let mut b = a.clone();
        b.sprites[0].scripts[0].id = ScriptId::from("Boat:7");
        assert!(structural_diff(&a, &b).is_empty());
    }

    #[test]
    fn added_and_removed_scripts() {
        let a = boatrace();
        let mut b = a.clone();
        b.sprites[0].scripts.push(Script::new(
            ScriptId::from("Boat:2"),
            vec![Block::new("motion_movesteps").with_input("STEPS", Expr::lit("1"))],
        ));
        assert_eq!(structural_diff(&a, &b)[0].kind, ChangeKind::AddedScript);
        assert_eq!(structural_diff(&b, &a)[0].kind, ChangeKind::RemovedScript);
    }

    #[test]
    fn layout_is_ignored() {
        let a = boatrace();
        let mut b = a.clone();
        b.sprites[0].positions.clear();
        assert!(structural_diff(&a, &b).is_empty());
    }
}
