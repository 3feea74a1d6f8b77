//! Prompt rendering.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use crate::lint::{Issue, IssueKind};
use crate::model::ScriptId;

/// Which part of the program a question is about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AskScope {
    Program,
    Sprite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzeMode {
    NewIssues,
    Perfumes,
}

impl AnalyzeMode {
    pub fn issue_kind_names(self) -> &'static [&'static str] {
        match self {
            AnalyzeMode::NewIssues => &["bug", "smell"],
            AnalyzeMode::Perfumes => &["perfume"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PromptTask {
    Explain(Issue),
    Fix(Issue),
    Ask { question: String, scope: AskScope },
    Analyze { mode: AnalyzeMode, target: String },
    Complete(ScriptId),
    /// Re-prompt after a code response could not be used. `errors` lists
    /// one problem per line.
    Retry { errors: String },
}

impl PromptTask {
    pub fn template_name(&self) -> &'static str {
        match self {
            PromptTask::Explain(_) => "explain",
            PromptTask::Fix(_) => "fix",
            PromptTask::Ask { .. } => "ask",
            PromptTask::Analyze { .. } => "analyze",
            PromptTask::Complete(_) => "complete",
            PromptTask::Retry { .. } => "retry",
        }
    }
}

/// Renders a task and its scratchblocks context into the final prompt.
pub trait PromptProvider: Send + Sync {
    fn render(&self, task: &PromptTask, code: &str, language: &str) -> String;
}

const DEFAULTS: &[(&str, &str)] = &[
    ("explain", include_str!("../../data/prompts/explain.txt")),
    ("fix", include_str!("../../data/prompts/fix.txt")),
    ("ask", include_str!("../../data/prompts/ask.txt")),
    ("analyze", include_str!("../../data/prompts/analyze.txt")),
    ("complete", include_str!("../../data/prompts/complete.txt")),
    ("retry", include_str!("../../data/prompts/retry.txt")),
];

/// Prompts built from plain-text templates with `{name}` placeholders.
///
/// Placeholders: `{code}`, `{language}`, `{issue_title}`, `{issue_type}`,
/// `{issue_description}`, `{question}`, `{sprite}`, `{script_id}`,
/// `{mode_instruction}`, `{kinds}` and `{errors}`.
#[derive(Debug, Clone)]
pub struct TemplatePrompts {
    templates: BTreeMap<String, String>,
}

impl Default for TemplatePrompts {
    fn default() -> Self {
        TemplatePrompts {
            templates: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl TemplatePrompts {
    /// The default templates, with any `<task>.txt` file found in `dir`
    /// taking the place of the built-in one.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        if !dir.is_dir() {
            return Err(io::Error::new(io::ErrorKind::NotFound, format!("{} is not a directory", dir.display())));
        }
        let mut prompts = Self::default();
        for (name, _) in DEFAULTS {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                prompts.templates.insert(name.to_string(), std::fs::read_to_string(path)?);
            }
        }
        Ok(prompts)
    }

    pub fn with_template(mut self, name: &str, text: &str) -> Self {
        self.templates.insert(name.to_string(), text.to_string());
        self
    }
}

impl PromptProvider for TemplatePrompts {
    fn render(&self, task: &PromptTask, code: &str, language: &str) -> String {
        let mut values: Vec<(&str, String)> = vec![("language", language_name(language).to_string())];
        match task {
            PromptTask::Explain(issue) | PromptTask::Fix(issue) => {
                values.push(("issue_title", issue.title.clone()));
                values.push(("issue_type", kind_name(issue.kind).to_string()));
                values.push(("issue_description", issue.generic_description.clone()));
                values.push(("sprite", issue.location.target.clone()));
            }
            PromptTask::Ask { question, scope } => {
                values.push(("question", question.clone()));
                if let AskScope::Sprite(s) = scope {
                    values.push(("sprite", s.clone()));
                }
            }
            PromptTask::Analyze { mode, target } => {
                values.push(("sprite", target.clone()));
                values.push(("kinds", mode.issue_kind_names().join(", ")));
                let instruction = match mode {
                    AnalyzeMode::NewIssues => "Find bugs and code smells in this code: places where the program will not behave as the learner probably intended, or code that is hard to read or maintain.",
                    AnalyzeMode::Perfumes => "Find code perfumes in this code: places where the learner applied good programming practice that deserves praise.",
                };
                values.push(("mode_instruction", instruction.to_string()));
            }
            PromptTask::Complete(id) => {
                values.push(("script_id", id.to_string()));
                values.push(("sprite", id.target_name().unwrap_or_default().to_string()));
            }
            PromptTask::Retry { errors } => values.push(("errors", errors.clone())),
        }
        // code goes last so that braces inside it are never substituted
        let template = &self.templates[task.template_name()];
        let mut out = template.clone();
        for (key, value) in &values {
            out = out.replace(&format!("{{{key}}}"), value);
        }
        out.replace("{code}", code.trim_end())
    }
}

fn kind_name(kind: IssueKind) -> &'static str {
    match kind {
        IssueKind::Bug => "bug",
        IssueKind::Smell => "code smell",
        IssueKind::Perfume => "code perfume",
    }
}

/// English name of a language tag, for use inside prompts. Unknown tags
/// are passed through.
pub fn language_name(tag: &str) -> &str {
    let primary = tag.split(['-', '_']).next().unwrap_or(tag).to_ascii_lowercase();
    match primary.as_str() {
        "en" => "English",
        "de" => "German",
        "fr" => "French",
        "es" => "Spanish",
        "it" => "Italian",
        "pt" => "Portuguese",
        "nl" => "Dutch",
        "pl" => "Polish",
        "tr" => "Turkish",
        "ru" => "Russian",
        "uk" => "Ukrainian",
        "zh" => "Chinese",
        "ja" => "Japanese",
        "ko" => "Korean",
        "ar" => "Arabic",
        "el" => "Greek",
        "sv" => "Swedish",
        _ => tag,
    }
}
