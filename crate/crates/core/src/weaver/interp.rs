//! Deterministic micro-program interpreter.

use std::collections::HashMap;

use crate::error::Result;
use crate::weaver::{
    Anchor, ArgumentBinding, Location, LocatedTrace, MicroProgram, OccurrenceCond, Statement,
    StatementKind, TraceEvent,
};

/// A hook emission observed during execution, for argument-safety checks.
#[derive(Debug, Clone)]
pub(crate) struct FiredBinding {
    pub binding: ArgumentBinding,
}

pub(crate) struct Execution {
    pub trace: LocatedTrace,
    pub fired: Vec<FiredBinding>,
}

struct Interp {
    hits: HashMap<Location, usize>,
    events: Vec<TraceEvent>,
    fired: Vec<FiredBinding>,
}

impl Interp {
    fn hit(&mut self, location: &Location) -> usize {
        let counter = self.hits.entry(location.clone()).or_insert(0);
        *counter += 1;
        *counter
    }

    fn upcoming(&self, location: &Location) -> usize {
        self.hits.get(location).copied().unwrap_or(0) + 1
    }

    fn run_block(&mut self, block: &[Statement]) {
        for statement in block {
            match &statement.kind {
                StatementKind::Emit { behavior, .. } => {
                    let occurrence = self.hit(&statement.location);
                    self.events.push(TraceEvent {
                        behavior: *behavior,
                        location: statement.location.clone(),
                        occurrence,
                    });
                }
                StatementKind::Nop => {
                    self.hit(&statement.location);
                }
                StatementKind::Loop { count, body } => {
                    self.hit(&statement.location);
                    for _ in 0..*count {
                        self.run_block(body);
                    }
                }
                StatementKind::Hook(hook) => {
                    let fires = match (&hook.anchor, hook.condition) {
                        (_, OccurrenceCond::Every) => true,
                        (Anchor::At(loc), OccurrenceCond::Nth(k)) => self.upcoming(loc) == k,
                        (Anchor::End, OccurrenceCond::Nth(k)) => k == 1,
                    };
                    if fires {
                        for emit in &hook.emits {
                            let occurrence = self.hit(&statement.location);
                            self.events.push(TraceEvent {
                                behavior: emit.behavior,
                                location: statement.location.clone(),
                                occurrence,
                            });
                            self.fired.push(FiredBinding {
                                binding: emit.binding,
                            });
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn execute_full(program: &MicroProgram) -> Result<Execution> {
    program.validate()?;
    let mut interp = Interp {
        hits: HashMap::new(),
        events: Vec::new(),
        fired: Vec::new(),
    };
    interp.run_block(&program.statements);
    Ok(Execution {
        trace: LocatedTrace {
            events: interp.events,
        },
        fired: interp.fired,
    })
}

/// Runs the program and returns its located trace. Loops unroll their
/// counted bodies; occurrence indices count per location from 1.
pub fn execute(program: &MicroProgram) -> Result<LocatedTrace> {
    Ok(execute_full(program)?.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weaver::{Location, StatementKind};

    fn emit(file: &str, line: u32, behavior: usize) -> Statement {
        Statement {
            location: Location::new(file, line),
            kind: StatementKind::Emit {
                behavior,
                args: vec![],
            },
        }
    }

    #[test]
    fn straight_line_trace_with_single_occurrences() {
        // clone=0, execve=1, setuid=2, exit_group=3
        let program = MicroProgram::new(vec![
            emit("main.c", 9, 0),
            emit("main.c", 11, 1),
            emit("main.c", 12, 2),
            emit("main.c", 13, 3),
        ])
        .unwrap();
        let trace = execute(&program).unwrap();
        assert_eq!(trace.behaviors(), vec![0, 1, 2, 3]);
        assert!(trace.events.iter().all(|e| e.occurrence == 1));
    }

    #[test]
    fn loops_unroll_with_occurrence_counting() {
        let program = MicroProgram::new(vec![Statement {
            location: Location::new("main.c", 4),
            kind: StatementKind::Loop {
                count: 3,
                body: vec![emit("main.c", 5, 7)],
            },
        }])
        .unwrap();
        let trace = execute(&program).unwrap();
        assert_eq!(trace.behaviors(), vec![7, 7, 7]);
        let occurrences: Vec<usize> = trace.events.iter().map(|e| e.occurrence).collect();
        assert_eq!(occurrences, vec![1, 2, 3]);
    }

    #[test]
    fn empty_program_gives_empty_trace() {
        let program = MicroProgram::default();
        assert!(execute(&program).unwrap().events.is_empty());
    }

    #[test]
    fn malformed_programs_are_rejected() {
        // Duplicate location.
        let program = MicroProgram {
            statements: vec![emit("a.c", 1, 0), emit("a.c", 1, 1)],
        };
        assert!(execute(&program).is_err());

        // Zero-count loop.
        let program = MicroProgram {
            statements: vec![Statement {
                location: Location::new("a.c", 1),
                kind: StatementKind::Loop {
                    count: 0,
                    body: vec![],
                },
            }],
        };
        assert!(execute(&program).is_err());

        // Nesting depth 5.
        let mut inner = emit("a.c", 10, 0);
        for i in 0..4 {
            inner = Statement {
                location: Location::new("a.c", i),
                kind: StatementKind::Loop {
                    count: 1,
                    body: vec![inner],
                },
            };
        }
        let program = MicroProgram {
            statements: vec![inner],
        };
        assert!(execute(&program).is_err());
    }
}
