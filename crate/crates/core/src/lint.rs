//! Bug pattern, smell and perfume detectors.
//!
//! Detectors are pure functions of the program. Issue descriptions come
//! from `data/issues.toml`; `{sprite}`-style placeholders are filled in by
//! the detector that reports the issue.

use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocktext::{print_block_line, print_condition};
use crate::model::{Block, Expr, Program, Script, ScriptId, Target};
use crate::opcodes::{Category, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueKind {
    Bug,
    Smell,
    Perfume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warn,
    Error,
}

/// Where an issue was found. `block` is the pre-order index of the
/// statement within the script, as produced by [`Script::walk`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub target: String,
    pub script: Option<ScriptId>,
    pub block: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub id: String,
    pub finder: String,
    pub title: String,
    pub kind: IssueKind,
    pub severity: Severity,
    pub generic_description: String,
    pub location: Location,
    pub llm_explanation: Option<String>,
}

impl Issue {
    /// The generic description followed by the model's explanation, if any.
    pub fn full_description(&self) -> String {
        match &self.llm_explanation {
            Some(extra) => format!("{}\n\n{}", self.generic_description, extra),
            None => self.generic_description.clone(),
        }
    }

    /// Builds an issue from the description catalog entry named `finder`.
    pub fn from_template(finder: &str, location: Location, values: &[(&str, &str)]) -> Issue {
        let template = TEMPLATES
            .get(finder)
            .unwrap_or_else(|| panic!("no issue template for {finder}"));
        Issue {
            id: issue_id(finder, &location),
            finder: finder.to_string(),
            title: template.title.clone(),
            kind: template.kind,
            severity: template.severity,
            generic_description: fill(&template.description, values),
            location,
            llm_explanation: None,
        }
    }
}

/// Stable issue id derived from the finder and location, e.g.
/// `MissingLoop@Boat:1#1`.
pub fn issue_id(finder: &str, location: &Location) -> String {
    let mut id = format!("{finder}@");
    match &location.script {
        Some(script) => id.push_str(script.as_str()),
        None => id.push_str(&location.target),
    }
    if let Some(block) = location.block {
        id.push_str(&format!("#{block}"));
    }
    id
}

fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

#[derive(Debug, Deserialize)]
struct Template {
    title: String,
    kind: IssueKind,
    severity: Severity,
    description: String,
}

static TEMPLATES: LazyLock<BTreeMap<String, Template>> =
    LazyLock::new(|| toml::from_str(include_str!("../data/issues.toml")).expect("issue catalog parses"));

pub trait Detector: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> IssueKind;
    fn scan(&self, program: &Program) -> Vec<Issue>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LintError {
    #[error("a detector named `{0}` is already registered")]
    DuplicateName(String),
    #[error("no detector named `{0}`")]
    UnknownDetector(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    All,
    Names(Vec<String>),
}

#[derive(Default)]
pub struct DetectorRegistry {
    detectors: Vec<Box<dyn Detector>>,
}

impl DetectorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped detectors, in reporting order.
    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        for d in [
            Box::new(MissingLoop) as Box<dyn Detector>,
            Box::new(EmptyScript),
            Box::new(UnreachableAfterForever),
            Box::new(LoopedCondition),
        ] {
            r.register(d).expect("default detector names are unique");
        }
        r
    }

    pub fn register(&mut self, detector: Box<dyn Detector>) -> Result<(), LintError> {
        if self.detectors.iter().any(|d| d.name() == detector.name()) {
            return Err(LintError::DuplicateName(detector.name().to_string()));
        }
        self.detectors.push(detector);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.detectors.iter().map(|d| d.name()).collect()
    }

    /// Runs the selected detectors in registry order and concatenates
    /// their issues. Duplicate ids get a numeric suffix.
    pub fn run(&self, program: &Program, selection: &Selection) -> Result<Vec<Issue>, LintError> {
        if let Selection::Names(names) = selection {
            if let Some(missing) = names.iter().find(|n| !self.detectors.iter().any(|d| d.name() == n.as_str())) {
                return Err(LintError::UnknownDetector(missing.clone()));
            }
        }
        let mut issues = Vec::new();
        for d in &self.detectors {
            let selected = match selection {
                Selection::All => true,
                Selection::Names(names) => names.iter().any(|n| n == d.name()),
            };
            if selected {
                issues.extend(d.scan(program));
            }
        }
        let mut seen: HashMap<String, usize> = HashMap::new();
        for issue in &mut issues {
            let n = seen.entry(issue.id.clone()).or_insert(0);
            *n += 1;
            if *n > 1 {
                issue.id = format!("{}~{}", issue.id, n);
            }
        }
        Ok(issues)
    }
}

/// Runs the shipped detectors.
pub fn run_detectors(program: &Program, selection: &Selection) -> Result<Vec<Issue>, LintError> {
    DetectorRegistry::with_defaults().run(program, selection)
}

fn location(target: &Target, script: &Script, block: Option<usize>) -> Location {
    Location {
        target: target.name.clone(),
        script: Some(script.id.clone()),
        block,
    }
}

const LOOPS: &[&str] = &["control_forever", "control_repeat_until"];
const ALL_LOOPS: &[&str] = &["control_forever", "control_repeat_until", "control_repeat"];

/// Whether a condition depends on the state of the stage: touching, keys,
/// mouse, timer and the like.
fn is_sensing(expr: &Expr) -> bool {
    let mut found = false;
    if let Expr::Block(b) = expr {
        b.visit(&mut |inner| {
            if inner.spec().is_some_and(|s| s.category == Category::Sensing) {
                found = true;
            }
        });
    }
    found
}

fn is_conditional(block: &Block) -> bool {
    matches!(block.opcode.as_str(), "control_if" | "control_if_else")
}

fn condition_text(block: &Block) -> String {
    block
        .input("CONDITION")
        .and_then(print_condition)
        .unwrap_or_else(|| "<...>".to_string())
}

/// A sensing condition in a script started by the green flag or a clone
/// start that is not enclosed in any loop. Such a condition is evaluated
/// exactly once, at startup.
pub struct MissingLoop;

impl Detector for MissingLoop {
    fn name(&self) -> &str {
        "MissingLoop"
    }

    fn kind(&self) -> IssueKind {
        IssueKind::Bug
    }

    fn scan(&self, program: &Program) -> Vec<Issue> {
        let mut out = Vec::new();
        for t in program.targets() {
            for s in &t.scripts {
                let started_once = s
                    .hat()
                    .is_some_and(|h| matches!(h.opcode.as_str(), "event_whenflagclicked" | "control_start_as_clone"));
                if !started_once {
                    continue;
                }
                s.walk(&mut |b, i, enclosing| {
                    let in_loop = enclosing.iter().any(|o| ALL_LOOPS.contains(o));
                    if !in_loop && is_conditional(b) && b.input("CONDITION").is_some_and(is_sensing) {
                        out.push(Issue::from_template(
                            self.name(),
                            location(t, s, Some(i)),
                            &[("sprite", &t.name), ("condition", &condition_text(b))],
                        ));
                    }
                });
            }
        }
        out
    }
}

/// A hat block with nothing below it.
pub struct EmptyScript;

impl Detector for EmptyScript {
    fn name(&self) -> &str {
        "EmptyScript"
    }

    fn kind(&self) -> IssueKind {
        IssueKind::Smell
    }

    fn scan(&self, program: &Program) -> Vec<Issue> {
        let mut out = Vec::new();
        for t in program.targets() {
            for s in &t.scripts {
                if let [hat] = s.blocks.as_slice() {
                    if hat.shape() == Some(Shape::Hat) {
                        let text = print_block_line(hat).unwrap_or_else(|| hat.opcode.clone());
                        out.push(Issue::from_template(
                            self.name(),
                            location(t, s, Some(0)),
                            &[("sprite", &t.name), ("hat", &text)],
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Statements placed after a block that never finishes.
pub struct UnreachableAfterForever;

impl Detector for UnreachableAfterForever {
    fn name(&self) -> &str {
        "UnreachableAfterForever"
    }

    fn kind(&self) -> IssueKind {
        IssueKind::Bug
    }

    fn scan(&self, program: &Program) -> Vec<Issue> {
        let mut out = Vec::new();
        for t in program.targets() {
            let stacks = t.procedures.iter().map(|p| &p.body).chain(&t.scripts);
            for s in stacks {
                let mut index = 0;
                scan_sequence(&s.blocks, &mut index, &mut |b, i| {
                    out.push(Issue::from_template(
                        self.name(),
                        location(t, s, Some(i)),
                        &[("sprite", &t.name), ("block", &print_block_line(b).unwrap_or_else(|| b.opcode.clone()))],
                    ));
                });
            }
        }
        out
    }
}

/// Reports each cap block that has successors, with its pre-order index.
fn scan_sequence(blocks: &[Block], index: &mut usize, report: &mut dyn FnMut(&Block, usize)) {
    for (i, b) in blocks.iter().enumerate() {
        if b.is_cap() && i + 1 < blocks.len() {
            report(b, *index);
        }
        *index += 1;
        for sub in &b.substacks {
            scan_sequence(sub, index, report);
        }
    }
}

/// A sensing condition checked inside a `forever` or `repeat until` loop:
/// the correct form of what [`MissingLoop`] reports.
pub struct LoopedCondition;

impl Detector for LoopedCondition {
    fn name(&self) -> &str {
        "LoopedCondition"
    }

    fn kind(&self) -> IssueKind {
        IssueKind::Perfume
    }

    fn scan(&self, program: &Program) -> Vec<Issue> {
        let mut out = Vec::new();
        for t in program.targets() {
            for s in &t.scripts {
                s.walk(&mut |b, i, enclosing| {
                    let looped = enclosing.iter().any(|o| LOOPS.contains(o));
                    if looped && is_conditional(b) && b.input("CONDITION").is_some_and(is_sensing) {
                        out.push(Issue::from_template(
                            self.name(),
                            location(t, s, Some(i)),
                            &[("sprite", &t.name), ("condition", &condition_text(b))],
                        ));
                    }
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{boatrace, boatrace_fixed, generate_program};

    #[test]
    fn boatrace_has_one_missing_loop() {
        let issues = run_detectors(&boatrace(), &Selection::All).unwrap();
        assert_eq!(issues.len(), 1);
        let i = &issues[0];
        assert_eq!(i.finder, "MissingLoop");
        assert_eq!(i.kind, IssueKind::Bug);
        assert_eq!(i.id, "MissingLoop@Boat:1#1");
        assert_eq!(
            i.location,
            Location {
                target: "Boat".into(),
                script: Some(ScriptId::from("Boat:1")),
                block: Some(1)
            }
        );
        assert!(i.generic_description.contains("Boat"));
        assert!(i.generic_description.contains("<touching color [swamp v]?>"));
        assert!(i.llm_explanation.is_none());
    }

    #[test]
    fn fixed_boatrace_has_a_perfume_only() {
        let issues = run_detectors(&boatrace_fixed(), &Selection::All).unwrap();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].finder, "LoopedCondition");
        assert_eq!(issues[0].kind, IssueKind::Perfume);
    }

    #[test]
    fn empty_program_has_no_issues() {
        assert!(run_detectors(&Program::empty(), &Selection::All).unwrap().is_empty());
    }

    #[test]
    fn unknown_selection_is_rejected() {
        let err = run_detectors(&boatrace(), &Selection::Names(vec!["Nope".into()])).unwrap_err();
        assert_eq!(err, LintError::UnknownDetector("Nope".into()));
    }

    struct Forevers;

    impl Detector for Forevers {
        fn name(&self) -> &str {
            "Forevers"
        }
        fn kind(&self) -> IssueKind {
            IssueKind::Smell
        }
        fn scan(&self, program: &Program) -> Vec<Issue> {
            let mut out = Vec::new();
            for t in program.targets() {
                for s in &t.scripts {
                    s.walk(&mut |b, i, _| {
                        if b.opcode == "control_forever" {
                            out.push(Issue {
                                id: issue_id("Forevers", &location(t, s, Some(i))),
                                finder: "Forevers".into(),
                                title: "Forever".into(),
                                kind: IssueKind::Smell,
                                severity: Severity::Info,
                                generic_description: "a forever loop".into(),
                                location: location(t, s, Some(i)),
                                llm_explanation: None,
                            })
                        }
                    });
                }
            }
            out
        }
    }

    #[test]
    fn custom_detector_runs_after_registration() {
        let mut r = DetectorRegistry::new();
        r.register(Box::new(Forevers)).unwrap();
        assert!(r.run(&Program::empty(), &Selection::All).unwrap().is_empty());
        assert_eq!(r.register(Box::new(Forevers)), Err(LintError::DuplicateName("Forevers".into())));
        for seed in 0..10 {
            let p = generate_program(seed);
            let mut expected = 0;
            for t in p.targets() {
                for s in &t.scripts {
                    s.walk(&mut |b, _, _| expected += usize::from(b.opcode == "control_forever"));
                }
            }
            assert_eq!(r.run(&p, &Selection::All).unwrap().len(), expected);
        }
    }

    #[test]
    fn missing_loop_ignores_repeat_and_forever() {
        let mut p = boatrace();
        let script = &mut p.sprites[0].scripts[0];
        let iff = script.blocks.remove(1);
        script
            .blocks
            .push(Block::new("control_repeat").with_input("TIMES", Expr::lit("10")).with_substack(vec![iff]));
        let issues = run_detectors(&p, &Selection::Names(vec!["MissingLoop".into()])).unwrap();
        assert!(issues.is_empty());
    }

    #[test]
    fn unreachable_and_empty_are_reported() {
        let mut p = boatrace();
        p.sprites[0].scripts.push(Script::new(ScriptId::from("Boat:2"), vec![Block::new("event_whenthisspriteclicked")]));
        p.sprites[0].scripts.push(Script::new(
            ScriptId::from("Boat:3"),
            vec![
                Block::new("control_forever").with_substack(vec![]),
                Block::new("looks_show"),
            ],
        ));
        let issues = run_detectors(&p, &Selection::All).unwrap();
        let finders: Vec<&str> = issues.iter().map(|i| i.finder.as_str()).collect();
        assert_eq!(finders, vec!["MissingLoop", "EmptyScript", "UnreachableAfterForever"]);
    }

    #[test]
    fn descriptions_have_no_placeholders_left() {
        for seed in 0..30 {
            for issue in run_detectors(&generate_program(seed), &Selection::All).unwrap() {
                assert!(!issue.generic_description.contains('{'), "{}", issue.generic_description);
            }
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let p = generate_program(3);
        assert_eq!(run_detectors(&p, &Selection::All), run_detectors(&p.clone(), &Selection::All));
    }
}
