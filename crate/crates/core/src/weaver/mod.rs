//! Micro-program weaver: the desk-scale stand-in for locating syscall
//! sites in a binary, hooking them, and re-tracing.
//!
//! A micro-program is an ordered list of located statements (emits and
//! counted loops). Executing one yields a trace whose events carry their
//! source location and per-location occurrence index. A perturbation plan
//! anchors inserted behaviors to those (location, occurrence) pairs;
//! instrumenting places guarded hooks before the anchors, and re-executing
//! must reproduce the adversarial sequence token for token.

mod instrument;
mod interp;
mod parse;
mod plan;

pub use instrument::{check_argument_safety, instrument, non_interference, verify_roundtrip, Mismatch, RoundtripReport};
pub use interp::execute;
pub use parse::{plan_from_text, plan_to_text, program_from_text, program_to_text};
pub use plan::derive_plan;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::TokenId;

/// Reserved file name for the synthetic end-of-program anchor.
pub const END_FILE: &str = "__end__";
/// Reserved file name for hook statements added by instrumentation.
pub const HOOK_FILE: &str = "__hook__";

pub const MAX_NESTING: usize = 4;

/// A `file:line` source position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

impl Location {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        Location {
            file: file.into(),
            line,
        }
    }

    pub fn end() -> Self {
        Location::new(END_FILE, 0)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (file, line) = text
            .rsplit_once(':')
            .ok_or_else(|| Error::Program(format!("location {text:?} is not file:line")))?;
        let line: u32 = line
            .parse()
            .map_err(|_| Error::Program(format!("invalid line number in {text:?}")))?;
        if file.is_empty() {
            return Err(Error::Program(format!("empty file name in {text:?}")));
        }
        Ok(Location::new(file, line))
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

/// When a hook fires relative to its anchor's dynamic hit count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OccurrenceCond {
    /// Before every hit of the anchor.
    Every,
    /// Before exactly the k-th hit (1-based).
    Nth(usize),
}

/// Handle flow of one inserted behavior's arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgumentBinding {
    /// Allocates a fresh handle (e.g. an open).
    Produces(usize),
    /// Reads through an open handle without closing it.
    Uses(usize),
    /// Consumes and closes an open handle.
    Closes(usize),
    /// Inert constant arguments.
    Const,
}

/// One behavior a hook emits, with its argument binding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedEmit {
    pub behavior: TokenId,
    pub binding: ArgumentBinding,
}

/// Where a plan entry attaches: a program statement or the program end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    At(Location),
    End,
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::At(loc) => write!(f, "{loc}"),
            Anchor::End => write!(f, "{}", Location::end()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub anchor: Anchor,
    pub condition: OccurrenceCond,
    pub emits: Vec<PlannedEmit>,
}

/// The configuration mapping inserted behaviors to code locations,
/// occurrence conditions and argument bindings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InsertionPlan {
    pub entries: Vec<PlanEntry>,
}

impl InsertionPlan {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks handle chains in entry order: handles are defined before
    /// use, closed at most once, and never used after closing.
    pub fn validate_bindings(&self) -> Result<()> {
        let mut open: Vec<usize> = Vec::new();
        let mut seen: Vec<usize> = Vec::new();
        for entry in &self.entries {
            for emit in &entry.emits {
                match emit.binding {
                    ArgumentBinding::Produces(h) => {
                        if seen.contains(&h) {
                            return Err(Error::Plan(format!("handle h{h} produced twice")));
                        }
                        seen.push(h);
                        open.push(h);
                    }
                    ArgumentBinding::Uses(h) => {
                        if !open.contains(&h) {
                            return Err(Error::Plan(format!(
                                "handle h{h} used while not open (def-before-use)"
                            )));
                        }
                    }
                    ArgumentBinding::Closes(h) => {
                        let Some(idx) = open.iter().position(|&o| o == h) else {
                            return Err(Error::Plan(format!(
                                "handle h{h} closed while not open"
                            )));
                        };
                        open.remove(idx);
                    }
                    ArgumentBinding::Const => {}
                }
            }
        }
        Ok(())
    }
}

/// Hook added by instrumentation: fires its emits just before the anchor
/// statement when the occurrence condition matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookStatement {
    pub anchor: Anchor,
    pub condition: OccurrenceCond,
    pub emits: Vec<PlannedEmit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatementKind {
    Emit { behavior: TokenId, args: Vec<String> },
    Loop { count: usize, body: Vec<Statement> },
    Nop,
    Hook(HookStatement),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub location: Location,
    pub kind: StatementKind,
}

/// An executable toy program of located statements.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MicroProgram {
    pub statements: Vec<Statement>,
}

impl MicroProgram {
    pub fn new(statements: Vec<Statement>) -> Result<Self> {
        let program = MicroProgram { statements };
        program.validate()?;
        Ok(program)
    }

    /// Well-formedness: unique statement locations, loop counts >= 1,
    /// nesting depth <= 4, reserved file names only where they belong.
    pub fn validate(&self) -> Result<()> {
        let mut seen: Vec<&Location> = Vec::new();
        validate_block(&self.statements, 1, &mut seen)
    }

    pub fn is_instrumented(&self) -> bool {
        fn any_hook(block: &[Statement]) -> bool {
            block.iter().any(|s| match &s.kind {
                StatementKind::Hook(_) => true,
                StatementKind::Loop { body, .. } => any_hook(body),
                _ => false,
            })
        }
        any_hook(&self.statements)
    }
}

fn validate_block<'a>(
    block: &'a [Statement],
    depth: usize,
    seen: &mut Vec<&'a Location>,
) -> Result<()> {
    if depth > MAX_NESTING {
        return Err(Error::Program(format!(
            "nesting depth exceeds {MAX_NESTING}"
        )));
    }
    for statement in block {
        if seen.contains(&&statement.location) {
            return Err(Error::Program(format!(
                "duplicate statement location {}",
                statement.location
            )));
        }
        seen.push(&statement.location);
        let is_hook = matches!(statement.kind, StatementKind::Hook(_));
        if statement.location.file == END_FILE || (statement.location.file == HOOK_FILE && !is_hook)
        {
            return Err(Error::Program(format!(
                "location {} uses a reserved file name",
                statement.location
            )));
        }
        match &statement.kind {
            StatementKind::Loop { count, body } => {
                if *count == 0 {
                    return Err(Error::Program(format!(
                        "loop at {} has zero count",
                        statement.location
                    )));
                }
                validate_block(body, depth + 1, seen)?;
            }
            StatementKind::Hook(hook) => {
                if statement.location.file != HOOK_FILE {
                    return Err(Error::Program(format!(
                        "hook at {} must live in {HOOK_FILE}",
                        statement.location
                    )));
                }
                if hook.emits.is_empty() {
                    return Err(Error::Program("hook with no emits".into()));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// One traced event: which behavior fired, where, and which dynamic hit of
/// that location it was (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub behavior: TokenId,
    pub location: Location,
    pub occurrence: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LocatedTrace {
    pub events: Vec<TraceEvent>,
}

impl LocatedTrace {
    pub fn behaviors(&self) -> Vec<TokenId> {
        self.events.iter().map(|e| e.behavior).collect()
    }
}
