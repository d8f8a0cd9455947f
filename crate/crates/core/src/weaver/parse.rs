//! Text formats for programs and plans.
//!
//! Program grammar, one directive per line (`#` starts a comment):
//!
//! ```text
//! LOC file:line EMIT <behavior> [args...]
//! LOC file:line LOOP <count>
//! ...
//! END
//! LOC file:line NOP
//! ```
//!
//! Plan grammar:
//!
//! ```text
//! AT file:line OCC <k|*> INSERT behav[(new hN|use hN|close hN)] ...
//! AT __end__:0 OCC 1 INSERT behav
//! ```
//!
//! Unknown directives are rejected.

use crate::error::{Error, Result};
use crate::seq::Vocabulary;
use crate::weaver::{
    Anchor, ArgumentBinding, InsertionPlan, Location, MicroProgram, OccurrenceCond, PlanEntry,
    PlannedEmit, Statement, StatementKind, END_FILE,
};

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

pub fn program_from_text(text: &str, vocab: &Vocabulary, source_name: &str) -> Result<MicroProgram> {
    // Stack of open blocks; the bottom entry is the program body.
    let mut stack: Vec<(Option<Statement>, Vec<Statement>)> = vec![(None, Vec::new())];

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "LOC" => {
                if fields.len() < 3 {
                    return Err(parse_err(source_name, lineno, "LOC needs a location and a directive"));
                }
                let location = Location::parse(fields[1])
                    .map_err(|e| parse_err(source_name, lineno, e.to_string()))?;
                match fields[2] {
                    "EMIT" => {
                        let Some(name) = fields.get(3) else {
                            return Err(parse_err(source_name, lineno, "EMIT needs a behavior"));
                        };
                        let behavior = vocab.id(name).ok_or_else(|| {
                            parse_err(source_name, lineno, format!("unknown behavior {name:?}"))
                        })?;
                        let args = fields[4..].iter().map(|s| s.to_string()).collect();
                        stack.last_mut().unwrap().1.push(Statement {
                            location,
                            kind: StatementKind::Emit { behavior, args },
                        });
                    }
                    "LOOP" => {
                        let count: usize = fields
                            .get(3)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| parse_err(source_name, lineno, "LOOP needs a count"))?;
                        let header = Statement {
                            location,
                            kind: StatementKind::Loop {
                                count,
                                body: Vec::new(),
                            },
                        };
                        stack.push((Some(header), Vec::new()));
                    }
                    "NOP" => {
                        stack.last_mut().unwrap().1.push(Statement {
                            location,
                            kind: StatementKind::Nop,
                        });
                    }
                    other => {
                        return Err(parse_err(
                            source_name,
                            lineno,
                            format!("unknown directive {other:?}"),
                        ))
                    }
                }
            }
            "END" => {
                let (header, body) = stack.pop().unwrap();
                let Some(mut header) = header else {
                    return Err(parse_err(source_name, lineno, "END without open LOOP"));
                };
                if let StatementKind::Loop { body: b, .. } = &mut header.kind {
                    *b = body;
                }
                stack.last_mut().unwrap().1.push(header);
            }
            other => {
                return Err(parse_err(
                    source_name,
                    lineno,
                    format!("unknown directive {other:?}"),
                ))
            }
        }
    }
    if stack.len() != 1 {
        return Err(parse_err(source_name, text.lines().count(), "unclosed LOOP"));
    }
    MicroProgram::new(stack.pop().unwrap().1)
}

/// Serializes a (non-instrumented) program back to the text grammar.
pub fn program_to_text(program: &MicroProgram, vocab: &Vocabulary) -> Result<String> {
    if program.is_instrumented() {
        return Err(Error::Program(
            "instrumented programs are in-memory artifacts and have no text form".into(),
        ));
    }
    let mut out = String::new();
    fn write_block(
        block: &[Statement],
        vocab: &Vocabulary,
        out: &mut String,
    ) -> Result<()> {
        for statement in block {
            match &statement.kind {
                StatementKind::Emit { behavior, args } => {
                    let name = vocab.name(*behavior).ok_or_else(|| {
                        Error::Lookup(format!("behavior id {behavior} has no name"))
                    })?;
                    out.push_str(&format!("LOC {} EMIT {name}", statement.location));
                    for arg in args {
                        out.push_str(&format!(" {arg}"));
                    }
                    out.push('\n');
                }
                StatementKind::Nop => {
                    out.push_str(&format!("LOC {} NOP\n", statement.location));
                }
                StatementKind::Loop { count, body } => {
                    out.push_str(&format!("LOC {} LOOP {count}\n", statement.location));
                    write_block(body, vocab, out)?;
                    out.push_str("END\n");
                }
                StatementKind::Hook(_) => unreachable!("checked above"),
            }
        }
        Ok(())
    }
    write_block(&program.statements, vocab, &mut out)?;
    Ok(out)
}

fn binding_to_text(binding: &ArgumentBinding) -> Option<String> {
    match binding {
        ArgumentBinding::Produces(h) => Some(format!("new h{h}")),
        ArgumentBinding::Uses(h) => Some(format!("use h{h}")),
        ArgumentBinding::Closes(h) => Some(format!("close h{h}")),
        ArgumentBinding::Const => None,
    }
}

pub fn plan_to_text(plan: &InsertionPlan, vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for entry in &plan.entries {
        let occ = match entry.condition {
            OccurrenceCond::Every => "*".to_string(),
            OccurrenceCond::Nth(k) => k.to_string(),
        };
        out.push_str(&format!("AT {} OCC {occ} INSERT", entry.anchor));
        for emit in &entry.emits {
            let name = vocab
                .name(emit.behavior)
                .ok_or_else(|| Error::Lookup(format!("behavior id {} has no name", emit.behavior)))?;
            match binding_to_text(&emit.binding) {
                Some(b) => out.push_str(&format!(" {name}({b})")),
                None => out.push_str(&format!(" {name}")),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn parse_handle(text: &str, path: &str, lineno: usize) -> Result<usize> {
    text.strip_prefix('h')
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, lineno, format!("invalid handle {text:?}")))
}

pub fn plan_from_text(text: &str, vocab: &Vocabulary, source_name: &str) -> Result<InsertionPlan> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "AT" {
            return Err(parse_err(
                source_name,
                lineno,
                format!("unknown directive {:?}", fields[0]),
            ));
        }
        if fields.len() < 5 || fields[2] != "OCC" || fields[4] != "INSERT" {
            return Err(parse_err(
                source_name,
                lineno,
                "expected AT <loc> OCC <k|*> INSERT <behaviors>",
            ));
        }
        let location = Location::parse(fields[1])
            .map_err(|e| parse_err(source_name, lineno, e.to_string()))?;
        let anchor = if location.file == END_FILE {
            Anchor::End
        } else {
            Anchor::At(location)
        };
        let condition = match fields[3] {
            "*" => OccurrenceCond::Every,
            k => OccurrenceCond::Nth(k.parse().map_err(|_| {
                parse_err(source_name, lineno, format!("invalid occurrence {k:?}"))
            })?),
        };
        if fields.len() == 5 {
            return Err(parse_err(source_name, lineno, "INSERT lists no behaviors"));
        }

        // Re-join so bindings with spaces, e.g. read(use h1), survive the
        // whitespace split.
        let items_text = line
            .splitn(2, " INSERT ")
            .nth(1)
            .ok_or_else(|| parse_err(source_name, lineno, "missing INSERT items"))?;
        let mut emits = Vec::new();
        for item in split_items(items_text) {
            let (name, binding) = match item.split_once('(') {
                None => (item.as_str(), ArgumentBinding::Const),
                Some((name, rest)) => {
                    let inner = rest.strip_suffix(')').ok_or_else(|| {
                        parse_err(source_name, lineno, format!("unclosed binding in {item:?}"))
                    })?;
                    let parts: Vec<&str> = inner.split_whitespace().collect();
                    let binding = match parts.as_slice() {
                        ["new", h] => ArgumentBinding::Produces(parse_handle(h, source_name, lineno)?),
                        ["use", h] => ArgumentBinding::Uses(parse_handle(h, source_name, lineno)?),
                        ["close", h] => {
                            ArgumentBinding::Closes(parse_handle(h, source_name, lineno)?)
                        }
                        _ => {
                            return Err(parse_err(
                                source_name,
                                lineno,
                                format!("invalid binding {inner:?}"),
                            ))
                        }
                    };
                    (name, binding)
                }
            };
            let behavior = vocab.id(name).ok_or_else(|| {
                parse_err(source_name, lineno, format!("unknown behavior {name:?}"))
            })?;
            emits.push(PlannedEmit { behavior, binding });
        }
        entries.push(PlanEntry {
            anchor,
            condition,
            emits,
        });
    }
    Ok(InsertionPlan { entries })
}

/// Splits `a(new h1) b c(use h2)` into items, respecting parentheses.
fn split_items(text: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    for ch in text.chars() {
        match ch {
            '(' => {
                depth += 1;
                current.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            c if c.is_whitespace() && depth == 0 => {
                if !current.is_empty() {
                    items.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        items.push(current);
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(["clone", "execve", "openat", "read", "close", "getuid"]).unwrap()
    }

    #[test]
    fn program_text_round_trip() {
        let v = vocab();
        let text = "\
# toy program
LOC main.c:1 EMIT clone
LOC main.c:2 LOOP 3
LOC main.c:3 EMIT read fd
END
LOC main.c:5 NOP
LOC main.c:6 EMIT execve
";
        let program = program_from_text(text, &v, "prog.mp").unwrap();
        let rendered = program_to_text(&program, &v).unwrap();
        let reparsed = program_from_text(&rendered, &v, "prog.mp").unwrap();
        assert_eq!(reparsed, program);
    }

    #[test]
    fn program_parser_rejects_unknown_directive_and_bad_nesting() {
        let v = vocab();
        assert!(matches!(
            program_from_text("JMP main.c:1\n", &v, "p"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            program_from_text("LOC a.c:1 SPAWN x\n", &v, "p"),
            Err(Error::Parse { .. })
        ));
        assert!(program_from_text("LOC a.c:1 LOOP 2\n", &v, "p").is_err());
        assert!(program_from_text("END\n", &v, "p").is_err());
        assert!(program_from_text("LOC a.c:1 EMIT who\n", &v, "p").is_err());
    }

    #[test]
    fn plan_text_round_trip_with_bindings() {
        let v = vocab();
        let text = "\
AT main.c:2 OCC 1 INSERT openat(new h1)
AT main.c:3 OCC * INSERT read(use h1) close(close h1) getuid
AT __end__:0 OCC 1 INSERT getuid
";
        let plan = plan_from_text(text, &v, "plan.cfg").unwrap();
        assert_eq!(plan.entries.len(), 3);
        assert_eq!(plan.entries[1].condition, OccurrenceCond::Every);
        assert_eq!(plan.entries[2].anchor, Anchor::End);
        let rendered = plan_to_text(&plan, &v).unwrap();
        let reparsed = plan_from_text(&rendered, &v, "plan.cfg").unwrap();
        assert_eq!(reparsed, plan);
    }

    #[test]
    fn plan_parser_rejects_unknown_directives() {
        let v = vocab();
        assert!(plan_from_text("INSERT getuid\n", &v, "p").is_err());
        assert!(plan_from_text("AT main.c:1 WHEN 1 INSERT getuid\n", &v, "p").is_err());
        assert!(plan_from_text("AT main.c:1 OCC x INSERT getuid\n", &v, "p").is_err());
        assert!(plan_from_text("AT main.c:1 OCC 1 INSERT\n", &v, "p").is_err());
        assert!(plan_from_text("AT main.c:1 OCC 1 INSERT read(take h1)\n", &v, "p").is_err());
    }
}
