use super::*;
use crate::model::{Block, Expr, Param, ParamKind, ProcedureDefinition, Program, Prototype, Script, Target};
use crate::opcodes::{Shape, OPCODES};
use crate::testing::{boatrace, fixture};

fn boat_text() -> String {
    print_program(&boatrace(), &Scope::Sprite("Boat".into())).unwrap()
}

#[test]
fn boat_script_prints_as_scratchblocks() {
    assert_eq!(
        boat_text(),
        "// sprite: Boat\n\n// script-id: Boat:1\nwhen green flag clicked\nif <touching color [swamp v]?> then\nmove (-1) steps\nend\n"
    );
}

#[test]
fn empty_sprite_prints_heading_only() {
    let mut p = Program::empty();
    p.sprites.push(Target::new_sprite("Ghost"));
    assert_eq!(print_program(&p, &Scope::Sprite("Ghost".into())).unwrap(), "// sprite: Ghost\n");
}

#[test]
fn unknown_sprite_is_an_error() {
    let err = print_program(&boatrace(), &Scope::Sprite("Buoy".into())).unwrap_err();
    assert_eq!(err, PrintError::UnknownSprite("Buoy".into()));
}

fn jump_sprite() -> Target {
    let mut cat = Target::new_sprite("Cat");
    cat.procedures.push(ProcedureDefinition {
        prototype: Prototype::from_parts(&[
            crate::model::ProtoPart::Label("jump".into()),
            crate::model::ProtoPart::Param(Param {
                name: "height".into(),
                kind: ParamKind::Value,
            }),
        ]),
        body: Script::new(
            ScriptId::from("Cat:1"),
            vec![Block::new("motion_changeyby").with_input("DY", Expr::Param("height".into()))],
        ),
    });
    cat.scripts.push(Script::new(
        ScriptId::from("Cat:2"),
        vec![Block::new("event_whenflagclicked"), Block::call("jump %s", vec![Expr::lit("10")])],
    ));
    cat
}

#[test]
fn custom_block_definition_prints_body_beneath() {
    let (text, skipped) = print_target(&jump_sprite());
    assert!(skipped.is_empty());
    assert_eq!(
        text,
        "// sprite: Cat\n\n// script-id: Cat:1\ndefine jump (height)\nchange y by (height)\n\n// script-id: Cat:2\nwhen green flag clicked\njump (10)\n"
    );
    let (frags, diags) = parse_fragments(&text);
    assert!(diags.is_empty(), "{diags:?}");
    assert_eq!(frags.len(), 2);
    let cat = jump_sprite();
    assert_eq!(frags[0].body, FragmentBody::Procedure(cat.procedures[0].clone()));
    assert_eq!(frags[1].body, FragmentBody::Script(cat.scripts[0].clone()));
}

#[test]
fn lone_hat_parses() {
    let (frags, diags) = parse_fragments("when green flag clicked");
    assert!(diags.is_empty());
    assert_eq!(frags.len(), 1);
    assert_eq!(frags[0].body.blocks(), &[Block::new("event_whenflagclicked")]);
    assert_eq!(frags[0].script_id, None);
}

#[test]
fn invented_block_is_unknown_at_line_one() {
    let (frags, diags) = parse_fragments("set rotation to (90)");
    assert!(frags.is_empty());
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].line, 1);
    assert_eq!(diags[0].column, 1);
    assert!(diags[0].message.contains("unknown block"));
    assert_eq!(diags[0].offending_text, "set rotation to (90)");
}

#[test]
fn boat_round_trips() {
    let p = boatrace();
    let (frags, diags) = parse_fragments(&boat_text());
    assert!(diags.is_empty());
    assert_eq!(frags.len(), 1);
    assert_eq!(frags[0].sprite_name.as_deref(), Some("Boat"));
    assert_eq!(frags[0].script_id, Some(ScriptId::from("Boat:1")));
    assert_eq!(frags[0].body, FragmentBody::Script(p.sprites[0].scripts[0].clone()));
}

#[test]
fn kitchen_sink_prints_lossy_and_round_trips() {
    let p = fixture("kitchen_sink");
    assert!(matches!(print_program(&p, &Scope::Program), Err(PrintError::Unprintable(_))));
    let (text, skipped) = print_program_lossy(&p, &Scope::Program).unwrap();
    // the opaque music block and the lone reporter
    assert_eq!(skipped.len(), 2, "{skipped:?}");
    let (frags, diags) = parse_fragments(&text);
    assert!(diags.is_empty(), "{diags:?}\n{text}");
    let cat = p.sprite("Cat").unwrap();
    let proc = frags
        .iter()
        .find(|f| matches!(f.body, FragmentBody::Procedure(_)))
        .expect("procedure fragment");
    assert_eq!(proc.body, FragmentBody::Procedure(cat.procedures[0].clone()));
    assert!(text.contains("define jump (height) fast <flag> :: warp"), "{text}");
    let stage = frags.iter().find(|f| f.sprite_name.as_deref() == Some("Stage")).unwrap();
    assert_eq!(stage.body, FragmentBody::Script(p.stage.scripts[0].clone()));
}

#[test]
fn missing_final_end_is_accepted() {
    let (frags, diags) = parse_fragments("when green flag clicked\nforever\nmove (10) steps");
    assert!(diags.is_empty());
    let blocks = frags[0].body.blocks();
    assert_eq!(blocks[1].opcode, "control_forever");
    assert_eq!(blocks[1].substacks[0].len(), 1);
}

#[test]
fn block_after_forever_is_a_diagnostic() {
    let (_, diags) = parse_fragments("when green flag clicked\nforever\nend\nmove (10) steps");
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].line, 4);
}

#[test]
fn hat_in_middle_is_a_diagnostic() {
    let (_, diags) = parse_fragments("move (10) steps\nwhen green flag clicked");
    assert_eq!(diags.len(), 1);
    assert!(diags[0].message.contains("hat"));
}

#[test]
fn if_else_parses() {
    let text = "if <mouse down?> then\nsay [yes]\nelse\nsay [no]\nend";
    let (frags, diags) = parse_fragments(text);
    assert!(diags.is_empty());
    let b = &frags[0].body.blocks()[0];
    assert_eq!(b.opcode, "control_if_else");
    assert_eq!(b.substacks.len(), 2);
}

#[test]
fn errors_stay_in_their_chunk() {
    let text = "// script-id: A:1\nwhen green flag clicked\nmove (10) steps\n\n// script-id: A:2\nwhen green flag clicked\nfly away\n\n// script-id: A:3\nwhen this sprite clicked\nhide\n";
    let chunks = parse_chunks(text, &ParseContext::default());
    assert_eq!(chunks.len(), 3);
    assert!(chunks[0].result.is_ok());
    let diags = chunks[1].result.as_ref().unwrap_err();
    assert_eq!(diags[0].line, 7);
    assert!(chunks[2].result.is_ok());
    assert_eq!(chunks[1].text, "// script-id: A:2\nwhen green flag clicked\nfly away");
}

#[test]
fn blank_line_inside_marked_chunk_does_not_split() {
    let text = "// script-id: A:1\nwhen green flag clicked\n\nmove (10) steps\n\nwhen this sprite clicked\nhide";
    let chunks = parse_chunks(text, &ParseContext::default());
    assert_eq!(chunks.len(), 2);
    assert_eq!(chunks[0].result.as_ref().unwrap().blocks().len(), 2);
    assert_eq!(chunks[1].script_id, None);
}

#[test]
fn id_suffix_is_captured() {
    let (frags, _) = parse_fragments("// script-id: Boat:1 (modified version)\nwhen green flag clicked");
    assert_eq!(frags[0].id_suffix.as_deref(), Some("modified version"));
    assert_eq!(frags[0].script_id, Some(ScriptId::from("Boat:1")));
}

#[test]
fn variable_named_like_a_reporter_gets_a_hint() {
    let mut s = Target::new_sprite("A");
    s.scripts.push(Script::new(
        ScriptId::from("A:1"),
        vec![Block::new("looks_say").with_input("MESSAGE", Expr::Variable("x position".into()))],
    ));
    let (text, _) = print_target(&s);
    assert!(text.contains("say (x position :: variables)"), "{text}");
    let (frags, _) = parse_fragments(&text);
    assert_eq!(frags[0].body, FragmentBody::Script(s.scripts[0].clone()));
}

#[test]
fn text_literals_escape_and_round_trip() {
    for lit in ["a]b", "go v", "(x)", "back\\slash", "two\nlines", "", "5", "-0.5", " padded "] {
        let mut s = Target::new_sprite("A");
        s.scripts.push(Script::new(
            ScriptId::from("A:1"),
            vec![Block::new("looks_say").with_input("MESSAGE", Expr::lit(lit))],
        ));
        let (text, _) = print_target(&s);
        let (frags, diags) = parse_fragments(&text);
        assert!(diags.is_empty(), "{lit:?}: {diags:?}");
        assert_eq!(frags[0].body, FragmentBody::Script(s.scripts[0].clone()), "{lit:?}");
    }
}

#[test]
fn lenient_bare_numbers() {
    let (frags, diags) = parse_fragments("turn right 15 degrees");
    assert!(diags.is_empty());
    assert_eq!(frags[0].body.blocks()[0].input("DEGREES"), Some(&Expr::lit("15")));
}

#[test]
fn mathop_and_sensing_of_are_told_apart() {
    let (frags, diags) = parse_fragments("say ([sqrt v] of (9))\nsay ([x position v] of [Stage v])");
    assert!(diags.is_empty(), "{diags:?}");
    let b = frags[0].body.blocks();
    let opcode = |i: usize| match b[i].input("MESSAGE") {
        Some(Expr::Block(r)) => r.opcode.clone(),
        other => panic!("{other:?}"),
    };
    assert_eq!(opcode(0), "operator_mathop");
    assert_eq!(opcode(1), "sensing_of");
    match b[1].input("MESSAGE") {
        Some(Expr::Block(r)) => assert_eq!(r.input("OBJECT"), Some(&Expr::Menu("_stage_".into()))),
        _ => unreachable!(),
    }
}

#[test]
fn every_template_opcode_prints_and_parses() {
    for spec in OPCODES.iter().filter(|s| !s.is_custom()) {
        let block = crate::testing::default_block(spec);
        let stmt = if spec.shape.is_reporter() {
            Block::new("looks_say").with_input("MESSAGE", Expr::block(block.clone()))
        } else {
            block.clone()
        };
        let mut s = Target::new_sprite("A");
        let mut blocks = vec![stmt];
        if spec.shape == Shape::Hat {
            blocks.push(Block::new("looks_show"));
        }
        s.scripts.push(Script::new(ScriptId::from("A:1"), blocks));
        let (text, skipped) = print_target(&s);
        assert!(skipped.is_empty(), "{} unprintable", spec.opcode);
        let (frags, diags) = parse_fragments(&text);
        assert!(diags.is_empty(), "{}: {diags:?}\n{text}", spec.opcode);
        assert_eq!(frags[0].body, FragmentBody::Script(s.scripts[0].clone()), "{}\n{text}", spec.opcode);
    }
}

fn assert_round_trip(p: &Program) {
    let text = print_program(p, &Scope::Program).unwrap();
    let (frags, diags) = parse_fragments(&text);
    assert!(diags.is_empty(), "{diags:?}\n{text}");
    let expected = crate::testing::stacks(p);
    assert_eq!(frags.len(), expected.len(), "{text}");
    for (frag, (target, body)) in frags.iter().zip(expected) {
        assert_eq!(frag.sprite_name.as_deref(), Some(target.as_str()));
        assert_eq!(frag.body, body, "\n{text}");
    }
}

#[test]
fn generated_programs_round_trip() {
    for seed in 0..40 {
        let p = crate::testing::generate_program(seed);
        assert!(p.validate().is_empty(), "seed {seed}: {:?}", p.validate());
        assert_round_trip(&p);
    }
}

#[test]
fn print_is_deterministic() {
    let p = crate::testing::generate_program(7);
    assert_eq!(print_program(&p, &Scope::Program), print_program(&p, &Scope::Program));
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
    #[test]
    fn prop_print_parse_round_trip(seed in proptest::prelude::any::<u64>()) {
        assert_round_trip(&crate::testing::generate_program(seed));
    }

    #[test]
    fn prop_parser_never_panics(text in "[a-z <>()\\[\\]v?:/\n-]{0,80}") {
        let _ = parse_chunks(&text, &ParseContext::default());
    }
}

#[test]
fn repair_leaves_printed_programs_alone() {
    for seed in 0..20 {
        let text = print_program(&crate::testing::generate_program(seed), &Scope::Program).unwrap();
        assert_eq!(repair_text(&text), text);
    }
}

proptest::proptest! {
    #[test]
    fn prop_repair_is_idempotent(text in "[a-z {}<>()\\[\\]v?:/\n\"“”–`-]{0,120}") {
        let once = repair_text(&text);
        proptest::prop_assert_eq!(repair_text(&once), once);
    }
}
