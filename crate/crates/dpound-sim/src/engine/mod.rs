//! Scenario engine: world and scenario files, the message bus, the flows for
//! each design option, postcondition checks, the privacy matrix and replay.

use thiserror::Error;

use crate::domain::Tick;

pub mod config;
mod flows;
pub mod matrix;
pub mod message;
pub mod replay;
pub mod report;
pub mod sim;
pub mod world;

pub use config::{Clause, Scenario, ScriptEvent, WorldConfig};
pub use matrix::{check_expectations, evaluate_matrix, parse_expectations, render_matrix, Expectation, MatrixRow};
pub use message::{Message, MsgKind};
pub use replay::{check_trace, replay};
pub use report::{PostconditionReport, Verdict};
pub use sim::{run, validate, RunOutput};
pub use world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("deadlock at tick {tick}: {detail}")]
    Deadlock { tick: Tick, detail: String },
    #[error("tick budget of {budget} exceeded")]
    BudgetExceeded { budget: Tick },
    #[error("trace mismatch at line {line}: expected `{expected}`, found `{found}`")]
    TraceMismatch { line: usize, expected: String, found: String },
    #[error("trace invariant violated at line {line}: {detail}")]
    TraceInvariant { line: usize, detail: String },
    #[error("i/o: {0}")]
    Io(String),
}
