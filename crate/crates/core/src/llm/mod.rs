//! LLM tasks: explaining and fixing issues, answering questions, finding
//! further issues and extending scripts.
//!
//! Code-producing tasks share one pipeline: the response is repaired,
//! split into scripts and parsed; scripts that fail to parse are sent back
//! to the model together with the diagnostics, for at most
//! [`MAX_REPROMPTS`] rounds per request. Whatever parses is merged into
//! the program.

mod config;
mod merge;
mod prompts;
mod provider;

pub use config::{ConfigError, LlmConfig, ProviderKind};
pub use merge::{merge_fragments, Merge};
pub use prompts::{language_name, AnalyzeMode, AskScope, PromptProvider, PromptTask, TemplatePrompts};
pub use provider::{GenParams, LlmProvider, MockProvider, OpenAiProvider, ProviderError};

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::blocktext::{
    parse_chunks, print_program_lossy, repair_text, Chunk, ParseContext, ParseDiagnostic, ParsedFragment, Scope,
    PrintError, SCRIPT_MARKER,
};
use crate::lint::{Issue, IssueKind, Location, Severity};
use crate::model::{Program, Prototype, ScriptId};

/// Re-prompt rounds allowed per fix or complete request.
pub const MAX_REPROMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error(transparent)]
    ProviderUnavailable(#[from] ProviderError),
    #[error("the model returned an empty response")]
    EmptyResponse,
    #[error("the model returned nothing usable")]
    NothingUsable { dropped: Vec<Dropped>, attempts_used: u32 },
    #[error("the response does not contain script `{script}`")]
    TargetScriptMissing {
        script: ScriptId,
        dropped: Vec<Dropped>,
        attempts_used: u32,
    },
    #[error("the question is empty")]
    EmptyQuestion,
    #[error("unknown sprite `{0}`")]
    UnknownSprite(String),
    #[error("unknown script `{0}`")]
    UnknownScript(ScriptId),
    #[error("script `{0}` contains blocks without a text form")]
    Unprintable(ScriptId),
}

impl From<PrintError> for LlmError {
    fn from(e: PrintError) -> Self {
        match e {
            PrintError::UnknownSprite(name) => LlmError::UnknownSprite(name),
            PrintError::Unprintable(ids) => LlmError::Unprintable(ids.into_iter().next().unwrap_or_default()),
        }
    }
}

/// A script from a response that could not be used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dropped {
    pub text: String,
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixOutcome {
    pub updated: Program,
    pub replaced: Vec<ScriptId>,
    pub added_scripts: Vec<ScriptId>,
    pub added_sprites: Vec<String>,
    pub dropped: Vec<Dropped>,
    /// Re-prompt rounds used, at most [`MAX_REPROMPTS`].
    pub attempts_used: u32,
}

/// The serializable part of a [`FixOutcome`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixSummary {
    pub replaced: Vec<ScriptId>,
    pub added_scripts: Vec<ScriptId>,
    pub added_sprites: Vec<String>,
    pub dropped: Vec<Dropped>,
    pub attempts_used: u32,
}

impl FixOutcome {
    pub fn summary(&self) -> FixSummary {
        FixSummary {
            replaced: self.replaced.clone(),
            added_scripts: self.added_scripts.clone(),
            added_sprites: self.added_sprites.clone(),
            dropped: self.dropped.clone(),
            attempts_used: self.attempts_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub issues: Vec<Issue>,
    /// Response lines that were not in the requested format.
    pub warnings: usize,
}

/// Runs tasks against one provider with one set of prompts.
#[derive(Clone)]
pub struct Assistant {
    provider: Arc<dyn LlmProvider>,
    prompts: Arc<dyn PromptProvider>,
    /// Parameters for fix, complete and analyze.
    pub code_params: GenParams,
    /// Parameters for explain and ask.
    pub prose_params: GenParams,
    pub language: String,
}

impl Assistant {
    pub fn new(provider: Arc<dyn LlmProvider>, prompts: Arc<dyn PromptProvider>) -> Self {
        Assistant {
            provider,
            prompts,
            code_params: GenParams::default(),
            prose_params: GenParams::default(),
            language: "en".to_string(),
        }
    }

    pub fn with_language(mut self, tag: &str) -> Self {
        self.language = tag.to_string();
        self
    }

    pub fn provider(&self) -> &dyn LlmProvider {
        self.provider.as_ref()
    }

    pub fn render(&self, task: &PromptTask, code: &str) -> String {
        self.prompts.render(task, code, &self.language)
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, LlmError> {
        log::debug!("prompt ({} chars) to {}", prompt.len(), self.provider.name());
        Ok(self.provider.complete(prompt, params)?)
    }

    /// Asks the model to explain an issue and stores the answer in
    /// `llm_explanation`. The generic description is left as it is.
    pub fn explain_issue(&self, program: &Program, issue: &Issue) -> Result<Issue, LlmError> {
        let code = sprite_text(program, &issue.location.target)?;
        let prompt = self.render(&PromptTask::Explain(issue.clone()), &code);
        let answer = self.complete(&prompt, &self.prose_params)?;
        if answer.trim().is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        let mut explained = issue.clone();
        explained.llm_explanation = Some(answer.trim_end().to_string());
        Ok(explained)
    }

    /// Asks the model for a fixed version of the code around an issue and
    /// merges what it returns.
    pub fn fix_issue(&self, program: &Program, issue: &Issue) -> Result<FixOutcome, LlmError> {
        let code = sprite_text(program, &issue.location.target)?;
        let prompt = self.render(&PromptTask::Fix(issue.clone()), &code);
        self.run_code_task(program, &issue.location.target, &prompt, None)
    }

    /// Answers a question about the whole program or one sprite. The answer
    /// is returned as the model wrote it.
    pub fn ask(&self, program: &Program, question: &str, scope: &AskScope) -> Result<String, LlmError> {
        if question.trim().is_empty() {
            return Err(LlmError::EmptyQuestion);
        }
        let code = match scope {
            AskScope::Program => print_program_lossy(program, &Scope::Program)?.0,
            AskScope::Sprite(name) => sprite_text(program, name)?,
        };
        let task = PromptTask::Ask {
            question: question.trim().to_string(),
            scope: scope.clone(),
        };
        let prompt = self.render(&task, &code);
        self.complete(&prompt, &self.prose_params)
    }

    /// Asks the model for issues or perfumes in one sprite. The answer is
    /// expected as `KIND | TITLE | SPRITE | DESCRIPTION` lines.
    pub fn analyze(&self, program: &Program, target: &str, mode: AnalyzeMode) -> Result<AnalyzeReport, LlmError> {
        let code = sprite_text(program, target)?;
        let prompt = self.render(
            &PromptTask::Analyze {
                mode,
                target: target.to_string(),
            },
            &code,
        );
        let answer = self.complete(&prompt, &self.code_params)?;
        Ok(parse_findings(&answer, program, target, mode))
    }

    /// Asks the model to extend a script, using the rest of its sprite as
    /// context. The response must contain the script under its id.
    pub fn complete_script(&self, program: &Program, script: &ScriptId) -> Result<FixOutcome, LlmError> {
        let owner = program.owner_of(script).ok_or_else(|| LlmError::UnknownScript(script.clone()))?;
        let (code, skipped) = print_program_lossy(program, &Scope::Sprite(owner.name.clone()))?;
        if skipped.contains(script) {
            return Err(LlmError::Unprintable(script.clone()));
        }
        let prompt = self.render(&PromptTask::Complete(script.clone()), &code);
        self.run_code_task(program, &owner.name, &prompt, Some(script))
    }

    fn run_code_task(
        &self,
        program: &Program,
        default_target: &str,
        prompt: &str,
        required: Option<&ScriptId>,
    ) -> Result<FixOutcome, LlmError> {
        let ctx = ParseContext {
            prototypes: all_prototypes(program),
        };
        let response = self.complete(prompt, &self.code_params)?;
        let mut round = Round::default();
        round.absorb(parse_chunks(&repair_text(&response), &ctx), None);

        let mut attempts = 0;
        while attempts < MAX_REPROMPTS {
            let missing = required.filter(|id| !round.has(id));
            let (code, errors, inherit) = if !round.failing.is_empty() {
                let inherit = match round.failing.as_slice() {
                    [only] => only.script_id.clone(),
                    _ => None,
                };
                (round.failing_text(), round.failing_errors(), inherit)
            } else if let Some(id) = missing {
                (
                    sprite_text(program, default_target)?,
                    format!("The response must contain the script with the ID-comment `{SCRIPT_MARKER}{id}`."),
                    None,
                )
            } else {
                break;
            };
            attempts += 1;
            log::info!("re-prompt {attempts}/{MAX_REPROMPTS}");
            let prompt = self.render(&PromptTask::Retry { errors }, &code);
            let response = self.complete(&prompt, &self.code_params)?;
            round.absorb(parse_chunks(&repair_text(&response), &ctx), inherit);
        }

        let dropped: Vec<Dropped> = round
            .failing
            .iter()
            .map(|c| Dropped {
                text: c.text.clone(),
                diagnostics: c.result.clone().err().unwrap_or_default(),
            })
            .collect();
        if let Some(id) = required.filter(|id| !round.has(id)) {
            return Err(LlmError::TargetScriptMissing {
                script: id.clone(),
                dropped,
                attempts_used: attempts,
            });
        }
        if round.accepted.is_empty() {
            return Err(LlmError::NothingUsable {
                dropped,
                attempts_used: attempts,
            });
        }
        let merge = merge_fragments(program, &round.accepted, default_target);
        let mut dropped = dropped;
        for (fragment, reasons) in &merge.rejected {
            dropped.push(Dropped {
                text: fragment_text(fragment),
                diagnostics: reasons
                    .iter()
                    .map(|r| ParseDiagnostic {
                        line: 0,
                        column: 0,
                        message: r.clone(),
                        offending_text: String::new(),
                    })
                    .collect(),
            });
        }
        if merge.replaced.is_empty() && merge.added_scripts.is_empty() {
            return Err(LlmError::NothingUsable {
                dropped,
                attempts_used: attempts,
            });
        }
        if let Some(id) = required.filter(|id| !merge.replaced.contains(id)) {
            return Err(LlmError::TargetScriptMissing {
                script: id.clone(),
                dropped,
                attempts_used: attempts,
            });
        }
        Ok(FixOutcome {
            updated: merge.updated,
            replaced: merge.replaced,
            added_scripts: merge.added_scripts,
            added_sprites: merge.added_sprites,
            dropped,
            attempts_used: attempts,
        })
    }
}

/// Fragments gathered over the rounds of one request.
#[derive(Default)]
struct Round {
    accepted: Vec<ParsedFragment>,
    failing: Vec<Chunk>,
}

impl Round {
    fn has(&self, id: &ScriptId) -> bool {
        self.accepted.iter().any(|f| f.script_id.as_ref() == Some(id))
    }

    /// Takes in the chunks of one response. When the response answers a
    /// re-prompt for a single script, a lone chunk without an ID-comment
    /// is taken to be that script.
    fn absorb(&mut self, mut chunks: Vec<Chunk>, inherit: Option<ScriptId>) {
        if let ([chunk], Some(id)) = (chunks.as_mut_slice(), &inherit) {
            if chunk.script_id.is_none() {
                chunk.script_id = Some(id.clone());
            }
        }
        for chunk in chunks {
            match chunk.fragment() {
                Some(fragment) => {
                    self.failing.retain(|c| c.script_id != fragment.script_id);
                    match self
                        .accepted
                        .iter_mut()
                        .find(|f| f.script_id.is_some() && f.script_id == fragment.script_id)
                    {
                        Some(existing) => *existing = fragment,
                        None => self.accepted.push(fragment),
                    }
                }
                None => {
                    self.failing.retain(|c| c.script_id != chunk.script_id);
                    self.failing.push(chunk);
                }
            }
        }
    }

    fn failing_text(&self) -> String {
        let mut out = String::new();
        for chunk in &self.failing {
            if let Some(id) = &chunk.script_id {
                out.push_str(&format!("{SCRIPT_MARKER}{id}\n"));
            }
            out.push_str(chunk.text.trim_end());
            out.push_str("\n\n");
        }
        out
    }

    fn failing_errors(&self) -> String {
        let mut out = Vec::new();
        for chunk in &self.failing {
            let label = chunk.script_id.as_ref().map_or("script".to_string(), |id| format!("script {id}"));
            for d in chunk.result.as_ref().err().into_iter().flatten() {
                out.push(format!("- {label}, line {}: {} `{}`", d.line, d.message, d.offending_text));
            }
        }
        out.join("\n")
    }
}

fn fragment_text(fragment: &ParsedFragment) -> String {
    let id = fragment.script_id.as_ref().map(|id| id.to_string()).unwrap_or_default();
    format!("{SCRIPT_MARKER}{id}")
}

fn sprite_text(program: &Program, name: &str) -> Result<String, LlmError> {
    Ok(print_program_lossy(program, &Scope::Sprite(name.to_string()))?.0)
}

fn all_prototypes(program: &Program) -> Vec<Prototype> {
    let mut out: Vec<Prototype> = Vec::new();
    for t in program.targets() {
        for p in &t.procedures {
            if !out.iter().any(|q| q.proccode == p.prototype.proccode) {
                out.push(p.prototype.clone());
            }
        }
    }
    out
}

/// Parses `KIND | TITLE | SPRITE | DESCRIPTION` lines. Blank lines and a
/// header row are skipped silently; other lines that do not fit count as
/// warnings.
pub fn parse_findings(text: &str, program: &Program, target: &str, mode: AnalyzeMode) -> AnalyzeReport {
    let mut issues = Vec::new();
    let mut warnings = 0;
    for line in text.lines() {
        let line = line
            .trim()
            .trim_start_matches(['-', '*', '`'])
            .trim()
            .trim_matches('|')
            .trim();
        if line.is_empty() || line.eq_ignore_ascii_case("kind | title | sprite | description") || line.starts_with("```") {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '|').map(str::trim).collect();
        let [kind, title, sprite, description] = fields.as_slice() else {
            warnings += 1;
            continue;
        };
        let kind = match (mode, kind.to_ascii_lowercase().as_str()) {
            (AnalyzeMode::Perfumes, _) => IssueKind::Perfume,
            (AnalyzeMode::NewIssues, "bug") => IssueKind::Bug,
            (AnalyzeMode::NewIssues, "smell" | "code smell") => IssueKind::Smell,
            _ => {
                warnings += 1;
                continue;
            }
        };
        if title.is_empty() || description.is_empty() {
            warnings += 1;
            continue;
        }
        let sprite = if program.target(sprite).is_some() { sprite } else { target };
        let location = Location {
            target: sprite.to_string(),
            script: None,
            block: None,
        };
        issues.push(Issue {
            id: format!("llm@{sprite}#{}", issues.len() + 1),
            finder: "llm".to_string(),
            title: title.to_string(),
            kind,
            severity: match kind {
                IssueKind::Bug => Severity::Warn,
                _ => Severity::Info,
            },
            generic_description: description.to_string(),
            location,
            llm_explanation: None,
        });
    }
    AnalyzeReport { issues, warnings }
}

#[cfg(test)]
mod tests;
