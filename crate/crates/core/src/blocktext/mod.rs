//! Conversion between programs and scratchblocks text.
//!
//! Printed text carries comment lines that tie every script back to the
//! program: a heading per target (`// sprite: Boat` or `// stage: Stage`)
//! and an ID-comment before every script (`// script-id: Boat:1`). The
//! grammar is described in `docs/scratchblocks-grammar.md`.

mod lex;
mod parse;
mod print;
mod repair;

pub use parse::{parse_chunks, parse_fragments, parse_fragments_with, Chunk, ParseContext};
pub use print::{print_block_line, print_condition, print_program, print_program_lossy, print_target};
pub use repair::repair_text;

use serde::Serialize;
use thiserror::Error;

use crate::model::{ProcedureDefinition, Script, ScriptId};

pub const SPRITE_HEADING: &str = "// sprite: ";
pub const STAGE_HEADING: &str = "// stage: ";
pub const SCRIPT_MARKER: &str = "// script-id: ";

/// Which part of a program to print.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Program,
    Sprite(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrintError {
    #[error("unknown sprite `{0}`")]
    UnknownSprite(String),
    #[error("scripts contain blocks without a text form: {}", .0.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))]
    Unprintable(Vec<ScriptId>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FragmentBody {
    Script(Script),
    Procedure(ProcedureDefinition),
}

impl FragmentBody {
    pub fn blocks(&self) -> &[crate::model::Block] {
        match self {
            FragmentBody::Script(s) => &s.blocks,
            FragmentBody::Procedure(p) => &p.body.blocks,
        }
    }
}

/// One script recovered from text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFragment {
    pub sprite_name: Option<String>,
    pub script_id: Option<ScriptId>,
    /// Trailing note on the ID-comment, such as `modified version`.
    pub id_suffix: Option<String>,
    pub body: FragmentBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub offending_text: String,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {} `{}`", self.line, self.column, self.message, self.offending_text)
    }
}

#[cfg(test)]
mod tests;
