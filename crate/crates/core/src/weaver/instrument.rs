//! Hook insertion, round-trip verification, and the non-interference and
//! argument-safety checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::TokenId;
use crate::weaver::interp::execute_full;
use crate::weaver::{
    execute, Anchor, ArgumentBinding, HookStatement, InsertionPlan, LocatedTrace, Location,
    MicroProgram, Statement, StatementKind, HOOK_FILE,
};

/// Inserts guarded hook statements before each plan anchor (or at program
/// end). Original statements are untouched; the result is well-formed.
pub fn instrument(program: &MicroProgram, plan: &InsertionPlan) -> Result<MicroProgram> {
    program.validate()?;
    plan.validate_bindings()
        .map_err(|e| Error::Instrument(e.to_string()))?;
    let mut out = program.clone();
    let mut hook_line = next_hook_line(&out);

    for entry in &plan.entries {
        if entry.emits.is_empty() {
            continue;
        }
        let hook = Statement {
            location: Location::new(HOOK_FILE, hook_line),
            kind: StatementKind::Hook(HookStatement {
                anchor: entry.anchor.clone(),
                condition: entry.condition,
                emits: entry.emits.clone(),
            }),
        };
        hook_line += 1;
        match &entry.anchor {
            Anchor::End => out.statements.push(hook),
            Anchor::At(location) => {
                if !insert_before(&mut out.statements, location, hook) {
                    return Err(Error::Instrument(format!(
                        "plan references missing location {location}"
                    )));
                }
            }
        }
    }
    out.validate()?;
    Ok(out)
}

fn next_hook_line(program: &MicroProgram) -> u32 {
    fn scan(block: &[Statement], max: &mut u32) {
        for s in block {
            if s.location.file == HOOK_FILE {
                *max = (*max).max(s.location.line);
            }
            if let StatementKind::Loop { body, .. } = &s.kind {
                scan(body, max);
            }
        }
    }
    let mut max = 0;
    scan(&program.statements, &mut max);
    max + 1
}

fn insert_before(block: &mut Vec<Statement>, target: &Location, hook: Statement) -> bool {
    if let Some(index) = block.iter().position(|s| s.location == *target) {
        block.insert(index, hook);
        return true;
    }
    for statement in block.iter_mut() {
        if let StatementKind::Loop { body, .. } = &mut statement.kind {
            if insert_before(body, target, hook.clone()) {
                return true;
            }
        }
    }
    false
}

/// First point of divergence between the re-executed trace and the
/// adversarial target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub index: usize,
    pub expected: Option<TokenId>,
    pub actual: Option<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub matches: bool,
    pub mismatch: Option<Mismatch>,
    /// Trace of the instrumented run.
    pub trace: LocatedTrace,
}

/// Instruments, re-executes, and compares the emitted behaviors against
/// the adversarial sequence token for token.
pub fn verify_roundtrip(
    program: &MicroProgram,
    plan: &InsertionPlan,
    adversarial: &[TokenId],
) -> Result<RoundtripReport> {
    let instrumented = instrument(program, plan)?;
    let trace = execute(&instrumented)?;
    let produced = trace.behaviors();
    let mismatch = first_mismatch(adversarial, &produced);
    Ok(RoundtripReport {
        matches: mismatch.is_none(),
        mismatch,
        trace,
    })
}

fn first_mismatch(expected: &[TokenId], actual: &[TokenId]) -> Option<Mismatch> {
    let longest = expected.len().max(actual.len());
    for index in 0..longest {
        let e = expected.get(index).copied();
        let a = actual.get(index).copied();
        if e != a {
            return Some(Mismatch {
                index,
                expected: e,
                actual: a,
            });
        }
    }
    None
}

/// Functionality preservation: the instrumented trace restricted to
/// non-hook locations must equal the original trace exactly.
pub fn non_interference(program: &MicroProgram, instrumented: &MicroProgram) -> Result<bool> {
    let original = execute(program)?;
    let full = execute(instrumented)?;
    let restricted: Vec<_> = full
        .events
        .into_iter()
        .filter(|e| e.location.file != HOOK_FILE)
        .collect();
    Ok(restricted == original.events)
}

/// Handle discipline along the single execution path of an instrumented
/// program: def-before-use, one close per open, no use-after-close.
pub fn check_argument_safety(instrumented: &MicroProgram) -> Result<()> {
    let execution = execute_full(instrumented)?;
    let mut open: Vec<usize> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for fired in &execution.fired {
        match fired.binding {
            ArgumentBinding::Produces(h) => {
                if seen.contains(&h) {
                    return Err(Error::Plan(format!("handle h{h} produced twice at runtime")));
                }
                seen.push(h);
                open.push(h);
            }
            ArgumentBinding::Uses(h) => {
                if !open.contains(&h) {
                    return Err(Error::Plan(format!("handle h{h} used while not open")));
                }
            }
            ArgumentBinding::Closes(h) => {
                let Some(idx) = open.iter().position(|&o| o == h) else {
                    return Err(Error::Plan(format!("handle h{h} closed while not open")));
                };
                open.remove(idx);
            }
            ArgumentBinding::Const => {}
        }
    }
    Ok(())
}
