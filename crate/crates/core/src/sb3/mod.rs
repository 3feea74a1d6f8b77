//! Reading and writing the Scratch 3 `.sb3` container.
//!
//! Only a documented subset of `project.json` is interpreted: targets with
//! their names, blocks, variables, lists and costume names. Everything else
//! (monitors, sounds, asset files, layout keys) is carried through as-is.
//! Block ids are regenerated on save from a depth-first counter, and the
//! top-level block of every stack is saved under its [`ScriptId`], so a
//! save/load/save cycle is byte-stable.
//!
//! [`ScriptId`]: crate::model::ScriptId

mod load;
mod save;

pub use load::{load_project_json, load_sb3};
pub use save::{pack_archive, save_sb3, to_project_json};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Sb3Error {
    #[error("malformed archive at {path}: {message}")]
    MalformedArchive { path: String, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Sb3Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Sb3Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            Sb3Error::MalformedArchive { path, .. } | Sb3Error::Schema { path, .. } => Some(path),
            Sb3Error::Io(_) => None,
        }
    }
}

/// sb3 primitive type codes used inside input arrays.
pub(crate) mod prim {
    pub const NUMBER: u64 = 4;
    pub const COLOR: u64 = 9;
    pub const TEXT: u64 = 10;
    pub const BROADCAST: u64 = 11;
    pub const VARIABLE: u64 = 12;
    pub const LIST: u64 = 13;
}

#[cfg(test)]
mod tests;
