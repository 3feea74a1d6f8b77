use std::sync::Arc;

use super::*;
use crate::blocktext::{parse_fragments, print_program};
use crate::diff::structural_diff;
use crate::lint::{run_detectors, Selection};
use crate::model::{Block, Expr};
use crate::sb3::{load_sb3, save_sb3};
use crate::testing::{boatrace, boatrace_fixed, generate_program, BOAT_EXPLANATION, BOAT_FIX_RESPONSE};

const GARBAGE: &str = "// script-id: Boat:1\nwhen green flag clicked\nsail across the (lake) quickly\n";

fn assistant(mock: &Arc<MockProvider>) -> Assistant {
    Assistant::new(mock.clone(), Arc::new(TemplatePrompts::default()))
}

fn missing_loop(program: &Program) -> Issue {
    run_detectors(program, &Selection::Names(vec!["MissingLoop".into()]))
        .unwrap()
        .remove(0)
}

fn boat_script_text(program: &Program) -> String {
    print_program(program, &Scope::Sprite("Boat".into())).unwrap()
}

#[test]
fn explanation_is_appended() {
    let mock = Arc::new(MockProvider::scripted([BOAT_EXPLANATION]));
    let program = boatrace();
    let issue = missing_loop(&program);
    let explained = assistant(&mock).explain_issue(&program, &issue).unwrap();
    assert_eq!(explained.generic_description, issue.generic_description);
    let text = explained.llm_explanation.as_deref().unwrap();
    assert!(text.contains("Press the green flag"));
    assert!(text.contains("does not move backwards"));
    assert!(explained.full_description().starts_with(&issue.generic_description));

    let prompt = mock.last_prompt().unwrap();
    assert!(prompt.contains(&issue.generic_description));
    assert!(prompt.contains(boat_script_text(&program).trim_end()));
    assert!(prompt.contains("Write your answer in English."));
}

#[test]
fn empty_explanation_is_an_error() {
    let mock = Arc::new(MockProvider::scripted(["  \n"]));
    let program = boatrace();
    let err = assistant(&mock).explain_issue(&program, &missing_loop(&program)).unwrap_err();
    assert_eq!(err, LlmError::EmptyResponse);
}

#[test]
fn output_language_reaches_the_prompt() {
    let mock = Arc::new(MockProvider::scripted([BOAT_EXPLANATION]));
    let program = boatrace();
    assistant(&mock).with_language("de").explain_issue(&program, &missing_loop(&program)).unwrap();
    assert!(mock.last_prompt().unwrap().contains("Write your answer in German."));
}

#[test]
fn unavailable_provider_is_reported() {
    let mock = Arc::new(MockProvider::failing("connection refused"));
    let program = boatrace();
    let err = assistant(&mock).explain_issue(&program, &missing_loop(&program)).unwrap_err();
    assert!(matches!(err, LlmError::ProviderUnavailable(_)));
    let err = assistant(&mock).fix_issue(&program, &missing_loop(&program)).unwrap_err();
    assert!(matches!(err, LlmError::ProviderUnavailable(_)));
}

#[test]
fn fix_replaces_the_boat_script() {
    let mock = Arc::new(MockProvider::scripted([BOAT_FIX_RESPONSE]));
    let program = boatrace();
    let issue = missing_loop(&program);
    let outcome = assistant(&mock).fix_issue(&program, &issue).unwrap();
    assert_eq!(outcome.replaced, vec![ScriptId::from("Boat:1")]);
    assert!(outcome.added_scripts.is_empty() && outcome.added_sprites.is_empty() && outcome.dropped.is_empty());
    assert_eq!(outcome.attempts_used, 0);
    assert_eq!(mock.calls(), 1);
    assert!(structural_diff(&outcome.updated, &boatrace_fixed()).is_empty());
    assert!(run_detectors(&outcome.updated, &Selection::Names(vec!["MissingLoop".into()])).unwrap().is_empty());

    let reloaded = load_sb3(&save_sb3(&outcome.updated).unwrap()).unwrap();
    assert!(structural_diff(&reloaded, &outcome.updated).is_empty());

    let prompt = mock.last_prompt().unwrap();
    assert!(prompt.contains("Keep the ID-comments exactly as they are"));
    assert!(prompt.contains("// script-id: Boat:1"));
}

#[test]
fn a_failing_script_is_sent_back_alone() {
    let program = boatrace();
    let fixed = boat_script_text(&boatrace_fixed());
    let mock = Arc::new(MockProvider::scripted([GARBAGE.to_string(), fixed]));
    let outcome = assistant(&mock).fix_issue(&program, &missing_loop(&program)).unwrap();
    assert_eq!(outcome.attempts_used, 1);
    assert_eq!(outcome.replaced, vec![ScriptId::from("Boat:1")]);
    assert_eq!(mock.calls(), 2);
    let retry = &mock.prompts()[1];
    assert!(retry.contains("sail across the (lake) quickly"));
    assert!(retry.contains("unknown block"));
    assert!(retry.contains("// script-id: Boat:1"));
}

#[test]
fn invented_rotation_block_is_repaired_without_a_retry() {
    let program = boatrace();
    let response = "// script-id: Boat:1\nwhen green flag clicked\nset rotation to (90)\n";
    let mock = Arc::new(MockProvider::scripted([response]));
    let outcome = assistant(&mock).fix_issue(&program, &missing_loop(&program)).unwrap();
    assert_eq!(outcome.attempts_used, 0);
    let script = outcome.updated.script(&ScriptId::from("Boat:1")).unwrap().1;
    assert_eq!(script.blocks[1].opcode, "motion_pointindirection");
}

#[test]
fn retry_reply_without_id_inherits_it() {
    let program = boatrace();
    let mock = Arc::new(MockProvider::scripted([
        GARBAGE,
        "when green flag clicked\nforever\nif <touching color [swamp v]?> then\nmove (-1) steps\nend\nend\n",
    ]));
    let outcome = assistant(&mock).fix_issue(&program, &missing_loop(&program)).unwrap();
    assert_eq!(outcome.replaced, vec![ScriptId::from("Boat:1")]);
    assert!(outcome.added_scripts.is_empty());
}

#[test]
fn retry_bound_holds() {
    let program = boatrace();
    let issue = missing_loop(&program);
    let fixed = boat_script_text(&boatrace_fixed());
    for failures in 0..7usize {
        let mut responses = vec![GARBAGE.to_string(); failures];
        responses.push(fixed.clone());
        let mock = Arc::new(MockProvider::scripted(responses));
        let result = assistant(&mock).fix_issue(&program, &issue);
        assert!(mock.calls() <= 1 + MAX_REPROMPTS as usize);
        if failures <= MAX_REPROMPTS as usize {
            let outcome = result.unwrap();
            assert_eq!(outcome.attempts_used as usize, failures);
            assert_eq!(mock.calls(), failures + 1);
        } else {
            match result.unwrap_err() {
                LlmError::NothingUsable { dropped, attempts_used } => {
                    assert_eq!(attempts_used, MAX_REPROMPTS);
                    assert_eq!(dropped.len(), 1);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }
}

#[test]
fn prose_only_fix_is_nothing_usable() {
    let program = boatrace();
    let mock = Arc::new(MockProvider::scripted(["I am not sure how to fix this program."]));
    let err = assistant(&mock).fix_issue(&program, &missing_loop(&program)).unwrap_err();
    assert_eq!(err, LlmError::NothingUsable { dropped: vec![], attempts_used: 0 });
    assert_eq!(mock.calls(), 1);
}

#[test]
fn braces_and_duplicate_versions_are_repaired() {
    let program = boatrace();
    let response = "// script-id: Boat:1 (original version)\nwhen green flag clicked\nif <touching color [swamp v]?> {\nmove (-1) steps\n}\n\n// script-id: Boat:1 (modified version)\nwhen green flag clicked\nforever {\nif <touching color [swamp v]?> {\nmove (-1) steps\n}\n}\n";
    let mock = Arc::new(MockProvider::scripted([response]));
    let outcome = assistant(&mock).fix_issue(&program, &missing_loop(&program)).unwrap();
    assert_eq!(outcome.replaced, vec![ScriptId::from("Boat:1")]);
    assert!(structural_diff(&outcome.updated, &boatrace_fixed()).is_empty());
}

#[test]
fn merge_replaces_adds_and_creates() {
    let program = boatrace();
    let text = "// sprite: Boat\n\n// script-id: Boat:1\nwhen green flag clicked\nforever\nmove (1) steps\nend\n\n// script-id: Boat:99\nwhen this sprite clicked\nsay [hi]\n\n// sprite: Buoy\n\n// script-id: Buoy:1\nwhen green flag clicked\nchange [bobbing v] by (1)\n";
    let (fragments, diagnostics) = parse_fragments(text);
    assert!(diagnostics.is_empty(), "{diagnostics:?}");
    let merge = merge_fragments(&program, &fragments, "Boat");
    assert_eq!(merge.replaced, vec![ScriptId::from("Boat:1")]);
    assert_eq!(merge.added_scripts, vec![ScriptId::from("Boat:99"), ScriptId::from("Buoy:1")]);
    assert_eq!(merge.added_sprites, vec!["Buoy".to_string()]);
    assert!(merge.rejected.is_empty());
    assert!(merge.updated.validate().is_empty());

    let buoy = merge.updated.sprite("Buoy").unwrap();
    assert_eq!(buoy.costumes.len(), 1);
    assert_eq!(buoy.costumes[0].name, "cat");
    assert!(buoy.variable("bobbing").is_some());
    let file = buoy.costumes[0].record["md5ext"].as_str().unwrap();
    assert!(merge.updated.assets.contains_key(file));

    let changes = structural_diff(&program, &merge.updated);
    assert!(changes.iter().any(|c| c.script.as_ref() == Some(&ScriptId::from("Boat:1"))));

    let reloaded = load_sb3(&save_sb3(&merge.updated).unwrap()).unwrap();
    assert!(structural_diff(&reloaded, &merge.updated).is_empty());
    assert!(reloaded.assets.contains_key(file));
}

#[test]
fn merge_single_replacement_is_one_change() {
    let program = boatrace();
    let (fragments, _) = parse_fragments(&boat_script_text(&boatrace_fixed()));
    let merge = merge_fragments(&program, &fragments, "Boat");
    let changes = structural_diff(&program, &merge.updated);
    assert_eq!(changes.len(), 1);
    assert_eq!(changes[0].kind, crate::diff::ChangeKind::Modified);
}

#[test]
fn merge_rejects_calls_to_unknown_blocks() {
    let program = boatrace();
    let fragments = vec![ParsedFragment {
        sprite_name: None,
        script_id: Some(ScriptId::from("Boat:1")),
        id_suffix: None,
        body: crate::blocktext::FragmentBody::Script(crate::model::Script::new(
            ScriptId::from("Boat:1"),
            vec![Block::new("event_whenflagclicked"), Block::call("fly home", vec![])],
        )),
    }];
    let merge = merge_fragments(&program, &fragments, "Boat");
    assert_eq!(merge.rejected.len(), 1);
    assert!(merge.replaced.is_empty());
    assert_eq!(merge.updated, program);
}

#[test]
fn merge_leaves_unnamed_scripts_alone() {
    for seed in 0..15 {
        let program = generate_program(seed);
        let Some(sprite) = program.sprites.first() else { continue };
        let Some(first) = sprite.scripts.first() else { continue };
        let text = format!("// script-id: {}\nwhen green flag clicked\nhide\n", first.id);
        let (fragments, _) = parse_fragments(&text);
        let merge = merge_fragments(&program, &fragments, &sprite.name);
        for change in structural_diff(&program, &merge.updated) {
            assert_eq!(change.script.as_ref(), Some(&first.id), "seed {seed}: {change:?}");
        }
    }
}

#[test]
fn ask_uses_only_the_chosen_scope() {
    let mut program = boatrace();
    program.stage.scripts.push(crate::model::Script::new(
        ScriptId::from("Stage:1"),
        vec![Block::new("event_whenflagclicked"), Block::new("looks_nextbackdrop")],
    ));
    let mock = Arc::new(MockProvider::scripted(["It moves.", "It moves."]));
    let a = assistant(&mock);
    assert_eq!(a.ask(&program, "What does the boat do?", &AskScope::Sprite("Boat".into())).unwrap(), "It moves.");
    a.ask(&program, "What does the boat do?", &AskScope::Program).unwrap();
    let prompts = mock.prompts();
    assert!(prompts[0].contains("What does the boat do?"));
    assert!(!prompts[0].contains("next backdrop"));
    assert!(!prompts[0].contains("// stage:"));

    let sprite_text = print_program(&program, &Scope::Sprite("Boat".into())).unwrap();
    let stage_text = print_program(&program, &Scope::Sprite("Stage".into())).unwrap();
    let program_text = print_program(&program, &Scope::Program).unwrap();
    assert_eq!(program_text, format!("{stage_text}\n{sprite_text}"));
    assert_eq!(prompts[1], prompts[0].replace(sprite_text.trim_end(), program_text.trim_end()));
}

#[test]
fn ask_rejects_empty_questions_and_unknown_sprites() {
    let mock = Arc::new(MockProvider::scripted(["x"]));
    let a = assistant(&mock);
    assert_eq!(a.ask(&boatrace(), "  ", &AskScope::Program), Err(LlmError::EmptyQuestion));
    assert_eq!(
        a.ask(&boatrace(), "why?", &AskScope::Sprite("Nope".into())),
        Err(LlmError::UnknownSprite("Nope".into()))
    );
    assert_eq!(mock.calls(), 0);
}

#[test]
fn analyze_parses_findings() {
    let response = "Here is what I found:\n\nbug | Boat never stops | Boat | The boat keeps moving after the race is over.\n- smell | Magic number | Nowhere | The value -1 is used without explanation.\n";
    let mock = Arc::new(MockProvider::scripted([response]));
    let report = assistant(&mock).analyze(&boatrace(), "Boat", AnalyzeMode::NewIssues).unwrap();
    assert_eq!(report.issues.len(), 2);
    assert!(report.issues.iter().all(|i| i.finder == "llm" && i.location.target == "Boat"));
    assert_eq!(report.issues[0].kind, IssueKind::Bug);
    assert_eq!(report.issues[1].kind, IssueKind::Smell);
    assert_ne!(report.issues[0].id, report.issues[1].id);
    assert_eq!(report.warnings, 1);
    assert!(mock.last_prompt().unwrap().contains("KIND | TITLE | SPRITE | DESCRIPTION"));
}

#[test]
fn analyze_prose_and_perfumes() {
    let mock = Arc::new(MockProvider::scripted(["The program looks fine to me.", "perfume | Event use | Boat | Uses the green flag hat."]));
    let a = assistant(&mock);
    let report = a.analyze(&boatrace(), "Boat", AnalyzeMode::NewIssues).unwrap();
    assert!(report.issues.is_empty());
    assert!(report.warnings >= 1);
    let report = a.analyze(&boatrace(), "Boat", AnalyzeMode::Perfumes).unwrap();
    assert_eq!(report.issues.len(), 1);
    assert_eq!(report.issues[0].kind, IssueKind::Perfume);
    assert!(matches!(a.analyze(&boatrace(), "Nope", AnalyzeMode::Perfumes), Err(LlmError::UnknownSprite(_))));
}

#[test]
fn complete_extends_the_script() {
    let program = boatrace();
    let mut text = boat_script_text(&program);
    text.push_str("turn right (15) degrees\n");
    let mock = Arc::new(MockProvider::scripted([text]));
    let id = ScriptId::from("Boat:1");
    let outcome = assistant(&mock).complete_script(&program, &id).unwrap();
    assert_eq!(outcome.replaced, vec![id.clone()]);
    let script = outcome.updated.script(&id).unwrap().1;
    let last = script.blocks.last().unwrap();
    assert_eq!(last.opcode, "motion_turnright");
    assert_eq!(last.input("DEGREES"), Some(&Expr::lit("15")));
    let prompt = mock.last_prompt().unwrap();
    assert!(prompt.contains("Extend the script marked `// script-id: Boat:1`"));
    assert!(prompt.contains(boat_script_text(&program).trim_end()));
}

#[test]
fn complete_with_unchanged_echo() {
    let program = boatrace();
    let mock = Arc::new(MockProvider::scripted([boat_script_text(&program)]));
    let outcome = assistant(&mock).complete_script(&program, &ScriptId::from("Boat:1")).unwrap();
    assert_eq!(outcome.replaced, vec![ScriptId::from("Boat:1")]);
    assert!(structural_diff(&program, &outcome.updated).is_empty());
}

#[test]
fn complete_without_id_comment_fails_after_retries() {
    let program = boatrace();
    let reply = "when green flag clicked\nif <touching color [swamp v]?> then\nmove (-1) steps\nend\nsay [done]\n";
    let mock = Arc::new(MockProvider::scripted(vec![reply; 4]));
    let err = assistant(&mock).complete_script(&program, &ScriptId::from("Boat:1")).unwrap_err();
    match err {
        LlmError::TargetScriptMissing { script, attempts_used, .. } => {
            assert_eq!(script, ScriptId::from("Boat:1"));
            assert_eq!(attempts_used, MAX_REPROMPTS);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(mock.calls(), 4);
    assert!(mock.prompts()[1].contains("must contain the script with the ID-comment `// script-id: Boat:1`"));
}

#[test]
fn complete_unknown_script() {
    let mock = Arc::new(MockProvider::scripted(Vec::<String>::new()));
    let err = assistant(&mock).complete_script(&boatrace(), &ScriptId::from("Boat:7")).unwrap_err();
    assert_eq!(err, LlmError::UnknownScript(ScriptId::from("Boat:7")));
}

#[test]
fn custom_prompt_templates_are_used() {
    let mock = Arc::new(MockProvider::scripted(["ok"]));
    let prompts = TemplatePrompts::default().with_template("ask", "Q: {question}\n{code}\nLang: {language}");
    let a = Assistant::new(mock.clone(), Arc::new(prompts)).with_language("fr");
    a.ask(&boatrace(), "why", &AskScope::Sprite("Boat".into())).unwrap();
    let prompt = mock.last_prompt().unwrap();
    assert!(prompt.starts_with("Q: why\n// sprite: Boat"));
    assert!(prompt.ends_with("Lang: French"));
}

#[test]
fn every_template_names_the_language() {
    let issue = missing_loop(&boatrace());
    let tasks = [
        PromptTask::Explain(issue.clone()),
        PromptTask::Fix(issue),
        PromptTask::Ask { question: "q".into(), scope: AskScope::Program },
        PromptTask::Analyze { mode: AnalyzeMode::Perfumes, target: "Boat".into() },
        PromptTask::Complete(ScriptId::from("Boat:1")),
        PromptTask::Retry { errors: "e".into() },
    ];
    for task in tasks {
        let prompt = TemplatePrompts::default().render(&task, "CODE {code}", "de");
        assert!(prompt.contains("German"), "{}", task.template_name());
        assert!(prompt.contains("CODE {code}"));
        assert!(!prompt.contains("{language}"));
    }
}
