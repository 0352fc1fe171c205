use std::path::Path;

use zebu_core::engine::{AccessError, CompiledGrammar, ParsedMessage, TypedValue, Verdict};

use crate::{load_artifact, Failure};

/// Whether every component of `Entry.sub[.sub...]` names something the
/// grammar declares.
fn selector_known(g: &CompiledGrammar, selector: &str) -> bool {
    let mut parts = selector.split('.');
    let Some(p) = parts.next().and_then(|e| g.entry_pattern(e)) else {
        return false;
    };
    let subs: Vec<&str> = parts.collect();
    !subs.is_empty() && subs.iter().all(|s| p.slot(s).is_some())
}

pub fn run(artifact: &Path, message: &Path, fields: &[String]) -> Result<u8, Failure> {
    let artifact = load_artifact(artifact)?;
    let g = &artifact.compiled;
    if let Some(bad) = fields.iter().find(|f| !selector_known(g, f)) {
        return Err(Failure::new(2, format!("unknown selector `{bad}`")));
    }
    let raw = std::fs::read(message).map_err(|e| Failure::new(2, format!("cannot read {}: {e}", message.display())))?;

    let (verdict, exec) = match ParsedMessage::open(g, &raw) {
        Ok(mut msg) => {
            let verdict = msg.validate();
            for field in fields {
                match msg.select(field) {
                    Ok(TypedValue::Absent) => println!("{field} = ABSENT"),
                    Ok(v) => println!("{field} = {v}"),
                    Err(e @ (AccessError::UnknownEntry(_) | AccessError::UnknownSubfield { .. })) => {
                        return Err(Failure::new(2, format!("unknown selector `{field}`: {e}")));
                    }
                    Err(e) => println!("{field} = ERROR ({e})"),
                }
            }
            (verdict, msg.exec_counter())
        }
        Err(reason) => {
            for field in fields {
                println!("{field} = ABSENT");
            }
            (Verdict::from_reasons(vec![reason]), 0)
        }
    };
    print!("{verdict}");
    println!("exec_counter {exec}");
    Ok(if verdict.accepted() { 0 } else { 1 })
}
