//! Plan derivation: align an adversarial sequence against the original
//! trace, anchor each inserted run to the next surviving original event,
//! and bind arguments for the known producer/consumer families.

use crate::error::{Error, Result};
use crate::seq::{TokenId, Vocabulary};
use crate::weaver::{
    Anchor, ArgumentBinding, InsertionPlan, LocatedTrace, OccurrenceCond, PlanEntry, PlannedEmit,
};

/// Behaviors that allocate a handle their arguments hand out.
const PRODUCERS: &[&str] = &["open", "openat", "creat", "dup", "pipe", "socket"];
/// Behaviors that take an open handle without releasing it.
const USERS: &[&str] = &["read", "write", "readv", "writev", "pread64", "pwrite64", "fstat", "lseek"];
/// Behaviors that release a handle.
const CLOSERS: &[&str] = &["close"];

enum Family {
    Producer,
    User,
    Closer,
    Other,
}

fn family(behavior: TokenId, vocab: &Vocabulary) -> Family {
    match vocab.name(behavior) {
        Some(name) if PRODUCERS.contains(&name) => Family::Producer,
        Some(name) if USERS.contains(&name) => Family::User,
        Some(name) if CLOSERS.contains(&name) => Family::Closer,
        _ => Family::Other,
    }
}

/// Greedy subsequence alignment: returns, per adversarial index, the
/// matched original index or `None` for insertions. Errors when the
/// original is not a subsequence of the adversarial.
fn align(original: &[TokenId], adversarial: &[TokenId]) -> Result<Vec<Option<usize>>> {
    let mut matches = Vec::with_capacity(adversarial.len());
    let mut next_original = 0usize;
    for &token in adversarial {
        if next_original < original.len() && original[next_original] == token {
            matches.push(Some(next_original));
            next_original += 1;
        } else {
            matches.push(None);
        }
    }
    if next_original != original.len() {
        return Err(Error::Plan(format!(
            "adversarial sequence is not an insertion superset: {} of {} original tokens matched",
            next_original,
            original.len()
        )));
    }
    Ok(matches)
}

/// Derives the insertion plan that turns the traced program's sequence
/// into `adversarial`. Each maximal inserted run anchors to the
/// (location, occurrence) of the next original event; a trailing run
/// anchors to the synthetic end of program.
pub fn derive_plan(
    original_trace: &LocatedTrace,
    adversarial: &[TokenId],
    vocab: &Vocabulary,
) -> Result<InsertionPlan> {
    let original = original_trace.behaviors();
    let matches = align(&original, adversarial)?;

    // Split into runs of consecutive insertions and find each run's
    // anchoring original event.
    let mut entries: Vec<PlanEntry> = Vec::new();
    let mut run: Vec<TokenId> = Vec::new();
    let mut handle_stack: Vec<usize> = Vec::new();
    let mut next_handle = 1usize;

    let mut bind = |behavior: TokenId,
                    handle_stack: &mut Vec<usize>,
                    next_handle: &mut usize|
     -> ArgumentBinding {
        match family(behavior, vocab) {
            Family::Producer => {
                let h = *next_handle;
                *next_handle += 1;
                handle_stack.push(h);
                ArgumentBinding::Produces(h)
            }
            Family::User => match handle_stack.last() {
                Some(&h) => ArgumentBinding::Uses(h),
                None => ArgumentBinding::Const,
            },
            Family::Closer => match handle_stack.pop() {
                Some(h) => ArgumentBinding::Closes(h),
                None => ArgumentBinding::Const,
            },
            Family::Other => ArgumentBinding::Const,
        }
    };

    let mut flush = |run: &mut Vec<TokenId>,
                     anchor: Anchor,
                     condition: OccurrenceCond,
                     handle_stack: &mut Vec<usize>,
                     next_handle: &mut usize,
                     entries: &mut Vec<PlanEntry>| {
        if run.is_empty() {
            return;
        }
        let emits = run
            .drain(..)
            .map(|behavior| PlannedEmit {
                behavior,
                binding: bind(behavior, handle_stack, next_handle),
            })
            .collect();
        entries.push(PlanEntry {
            anchor,
            condition,
            emits,
        });
    };

    for (adv_index, matched) in matches.iter().enumerate() {
        match matched {
            None => run.push(adversarial[adv_index]),
            Some(original_index) => {
                let event = &original_trace.events[*original_index];
                flush(
                    &mut run,
                    Anchor::At(event.location.clone()),
                    OccurrenceCond::Nth(event.occurrence),
                    &mut handle_stack,
                    &mut next_handle,
                    &mut entries,
                );
            }
        }
    }
    flush(
        &mut run,
        Anchor::End,
        OccurrenceCond::Nth(1),
        &mut handle_stack,
        &mut next_handle,
        &mut entries,
    );

    let plan = InsertionPlan { entries };
    plan.validate_bindings()
        .map_err(|e| Error::Plan(format!("derived plan has invalid bindings: {e}")))?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weaver::{execute, Location, MicroProgram, Statement, StatementKind};

    fn vocab() -> Vocabulary {
        Vocabulary::new([
            "clone",
            "execve",
            "setuid",
            "exit_group",
            "openat",
            "read",
            "close",
        ])
        .unwrap()
    }

    fn emit(vocab: &Vocabulary, line: u32, name: &str) -> Statement {
        Statement {
            location: Location::new("main.c", line),
            kind: StatementKind::Emit {
                behavior: vocab.id(name).unwrap(),
                args: vec![],
            },
        }
    }

    #[test]
    fn plan_anchors_runs_to_next_original_event_with_handle_chain() {
        let v = vocab();
        let program = MicroProgram::new(vec![
            emit(&v, 9, "clone"),
            emit(&v, 11, "execve"),
            emit(&v, 12, "setuid"),
            emit(&v, 13, "exit_group"),
        ])
        .unwrap();
        let trace = execute(&program).unwrap();
        let adversarial: Vec<usize> = ["clone", "openat", "execve", "read", "close", "setuid", "exit_group"]
            .iter()
            .map(|n| v.id(n).unwrap())
            .collect();
        let plan = derive_plan(&trace, &adversarial, &v).unwrap();
        assert_eq!(plan.entries.len(), 2);

        let first = &plan.entries[0];
        assert_eq!(first.anchor, Anchor::At(Location::new("main.c", 11)));
        assert_eq!(first.condition, OccurrenceCond::Nth(1));
        assert_eq!(first.emits.len(), 1);
        assert_eq!(first.emits[0].binding, ArgumentBinding::Produces(1));

        let second = &plan.entries[1];
        assert_eq!(second.anchor, Anchor::At(Location::new("main.c", 12)));
        assert_eq!(second.emits.len(), 2);
        assert_eq!(second.emits[0].binding, ArgumentBinding::Uses(1));
        assert_eq!(second.emits[1].binding, ArgumentBinding::Closes(1));
    }

    #[test]
    fn unreachable_adversarial_is_a_plan_error() {
        let v = vocab();
        let program = MicroProgram::new(vec![emit(&v, 1, "clone"), emit(&v, 2, "setuid")]).unwrap();
        let trace = execute(&program).unwrap();
        // Original order violated: setuid before clone.
        let adversarial = vec![v.id("setuid").unwrap(), v.id("clone").unwrap()];
        assert!(matches!(
            derive_plan(&trace, &adversarial, &v),
            Err(Error::Plan(_))
        ));
    }

    #[test]
    fn zero_insertions_gives_empty_plan() {
        let v = vocab();
        let program = MicroProgram::new(vec![emit(&v, 1, "clone")]).unwrap();
        let trace = execute(&program).unwrap();
        let plan = derive_plan(&trace, &trace.behaviors(), &v).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn consumers_without_open_handles_take_constants() {
        let v = vocab();
        let program = MicroProgram::new(vec![emit(&v, 1, "clone")]).unwrap();
        let trace = execute(&program).unwrap();
        // read and close inserted with no preceding open.
        let adversarial = vec![
            v.id("read").unwrap(),
            v.id("close").unwrap(),
            v.id("clone").unwrap(),
        ];
        let plan = derive_plan(&trace, &adversarial, &v).unwrap();
        assert_eq!(plan.entries[0].emits[0].binding, ArgumentBinding::Const);
        assert_eq!(plan.entries[0].emits[1].binding, ArgumentBinding::Const);
    }

    #[test]
    fn trailing_insertions_anchor_to_end() {
        let v = vocab();
        let program = MicroProgram::new(vec![emit(&v, 1, "clone")]).unwrap();
        let trace = execute(&program).unwrap();
        let adversarial = vec![v.id("clone").unwrap(), v.id("openat").unwrap()];
        let plan = derive_plan(&trace, &adversarial, &v).unwrap();
        assert_eq!(plan.entries.len(), 1);
        assert_eq!(plan.entries[0].anchor, Anchor::End);
    }
}
