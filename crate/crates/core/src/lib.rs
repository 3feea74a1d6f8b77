pub mod blocktext;
pub mod diff;
pub mod lint;
pub mod llm;
pub mod model;
pub mod opcodes;
pub mod sb3;

#[cfg(any(test, feature = "test-support"))]
pub mod testing;
