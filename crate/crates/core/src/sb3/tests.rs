use serde_json::json;

use super::*;
use crate::model::{Block, Expr, Program, ScriptId};
use crate::testing::{fixture, fixture_sb3, FIXTURES};

#[test]
fn boatrace_has_one_sprite_one_script_three_blocks() {
    let p = fixture("boatrace");
    assert_eq!(p.sprites.len(), 1);
    let boat = p.sprite("Boat").unwrap();
    assert_eq!(boat.scripts.len(), 1);
    let mut count = 0;
    boat.scripts[0].walk(&mut |_, _, _| count += 1);
    assert_eq!(count, 3);
    assert_eq!(boat.scripts[0].id, ScriptId::from("Boat:1"));
    let iff = &boat.scripts[0].blocks[1];
    assert_eq!(iff.opcode, "control_if");
    let cond = match iff.input("CONDITION") {
        Some(Expr::Block(b)) => b,
        other => panic!("{other:?}"),
    };
    assert_eq!(cond.input("COLOR"), Some(&Expr::Color("swamp".into())));
    assert_eq!(iff.substacks[0][0].input("STEPS"), Some(&Expr::lit("-1")));
}

#[test]
fn empty_archive_loads_stage_only() {
    let p = fixture("empty");
    assert!(p.sprites.is_empty());
    assert!(p.stage.is_stage);
}

#[test]
fn missing_targets_is_schema_error() {
    let bytes = pack_archive(br#"{"meta":{}}"#, &Default::default()).unwrap();
    let err = load_sb3(&bytes).unwrap_err();
    assert!(matches!(err, Sb3Error::Schema { .. }), "{err:?}");
    assert_eq!(err.path(), Some("targets"));
    assert!(err.to_string().contains("targets"));
}

#[test]
fn non_zip_is_malformed() {
    let err = load_sb3(b"hello there").unwrap_err();
    assert!(matches!(err, Sb3Error::MalformedArchive { .. }));
}

#[test]
fn zip_without_project_json_is_malformed() {
    let mut assets = std::collections::BTreeMap::new();
    assets.insert("a.txt".to_string(), b"x".to_vec());
    let bytes = pack_archive(b"not json", &assets).unwrap();
    let err = load_sb3(&bytes).unwrap_err();
    assert_eq!(err.path(), Some("project.json"));
}

#[test]
fn fixtures_round_trip() {
    for (name, _) in FIXTURES {
        let first = fixture(name);
        let saved = save_sb3(&first).unwrap();
        let second = load_sb3(&saved).unwrap();
        assert_eq!(first.stage.scripts, second.stage.scripts, "{name}");
        for (a, b) in first.sprites.iter().zip(&second.sprites) {
            assert_eq!(a.scripts, b.scripts, "{name}");
            assert_eq!(a.procedures, b.procedures, "{name}");
            assert_eq!(a.variables, b.variables, "{name}");
            assert_eq!(a.lists, b.lists, "{name}");
            assert_eq!(a.costumes, b.costumes, "{name}");
            assert_eq!(a.loose, b.loose, "{name}");
        }
        let again = save_sb3(&second).unwrap();
        assert_eq!(saved, again, "{name} not byte-stable");
    }
}

#[test]
fn fixture_archives_are_byte_stable_after_one_cycle() {
    for (name, _) in FIXTURES {
        let once = save_sb3(&load_sb3(&fixture_sb3(name)).unwrap()).unwrap();
        let twice = save_sb3(&load_sb3(&once).unwrap()).unwrap();
        assert_eq!(once, twice, "{name}");
    }
}

#[test]
fn empty_program_saves_one_stage_target() {
    let json = to_project_json(&Program::empty());
    let targets = json["targets"].as_array().unwrap();
    assert_eq!(targets.len(), 1);
    assert_eq!(targets[0]["isStage"], json!(true));
}

#[test]
fn saved_block_graph_links_parents_and_ids() {
    let p = fixture("boatrace");
    let json = to_project_json(&p);
    let blocks = json["targets"][1]["blocks"].as_object().unwrap();
    let hat = &blocks["Boat:1"];
    assert_eq!(hat["opcode"], "event_whenflagclicked");
    assert_eq!(hat["topLevel"], json!(true));
    assert_eq!(hat["x"], json!(48));
    let if_id = hat["next"].as_str().unwrap();
    assert_eq!(blocks[if_id]["parent"], json!("Boat:1"));
    let sub = blocks[if_id]["inputs"]["SUBSTACK"][1].as_str().unwrap();
    assert_eq!(blocks[sub]["inputs"]["STEPS"], json!([1, [4, "-1"]]));
}

#[test]
fn kitchen_sink_preserves_opaque_and_extras() {
    let p = fixture("kitchen_sink");
    let cat = p.sprite("Cat").unwrap();
    assert_eq!(cat.procedures.len(), 1);
    assert!(cat.procedures[0].prototype.warp);
    assert_eq!(cat.loose.len(), 1);
    assert_eq!(cat.scripts.len(), 2);
    let json = to_project_json(&p);
    assert_eq!(json["monitors"].as_array().unwrap().len(), 1);
    assert_eq!(json["extensions"], json!(["pen", "music"]));
    let blocks = json["targets"][1]["blocks"].as_object().unwrap();
    assert!(blocks.values().any(|b| b["opcode"] == "music_playDrumForBeats"));
    assert!(blocks.values().any(|b| b["opcode"] == "music_menu_DRUM" && b["shadow"] == json!(true)));
    assert!(json["targets"][0]["comments"]["c1"]["blockId"].is_null());
}

#[test]
fn used_broadcast_gets_registered() {
    let mut p = Program::empty();
    let mut s = crate::model::Target::new_sprite("A");
    s.scripts.push(crate::model::Script::new(
        ScriptId::from("A:1"),
        vec![Block::new("event_broadcast").with_input("BROADCAST_INPUT", Expr::Menu("go".into()))],
    ));
    p.sprites.push(s);
    let json = to_project_json(&p);
    assert_eq!(json["targets"][0]["broadcasts"]["broadcast:go"], json!("go"));
    let back = load_project_json(&json, Default::default()).unwrap();
    assert_eq!(back.sprites[0].scripts, p.sprites[0].scripts);
}

#[test]
fn pen_usage_adds_extension() {
    let mut p = Program::empty();
    p.stage.scripts.push(crate::model::Script::new(ScriptId::from("Stage:1"), vec![Block::new("pen_clear")]));
    assert_eq!(to_project_json(&p)["extensions"], json!(["pen"]));
}

fn assert_sb3_round_trip(p: &Program) {
    let bytes = save_sb3(p).unwrap();
    let back = load_sb3(&bytes).unwrap();
    assert_eq!(crate::diff::structural_diff(p, &back), vec![]);
    assert_eq!(crate::testing::stacks(p), crate::testing::stacks(&back));
    assert_eq!(save_sb3(&back).unwrap(), bytes);
}

#[test]
fn generated_programs_survive_sb3() {
    for seed in 0..30 {
        assert_sb3_round_trip(&crate::testing::generate_program(seed));
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
    #[test]
    fn prop_sb3_round_trip(seed in proptest::prelude::any::<u64>()) {
        assert_sb3_round_trip(&crate::testing::generate_program(seed));
    }
}
