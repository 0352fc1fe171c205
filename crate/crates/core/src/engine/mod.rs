//! Two-level message parsing: a line scan, then per-header patterns run on
//! demand, lazy subfields forced on request, and constraint enforcement.

mod eval;
mod index;
mod session;
mod value;
mod verdict;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::abnf::Element;
use crate::frontend::{
    self, AnnotatedGrammar, Constraint, ConstraintExpr, EntryRef, FieldBinding, FrontendError, Presence,
    RangeBound, SubfieldInfo,
};
use crate::matcher::{compile_pattern, CompileError, Pattern};
use crate::verifier::{self, Diagnostic};

pub use eval::{eval, Val};
pub use index::{index_message, unfold, HeaderLine, LineIndex};
pub use session::{parse_entry_value, AccessError, HeaderState, MessageKind, ParsedHeader, ParsedMessage};
pub use value::{LazyHandle, TypedValue};
pub use verdict::{Outcome, Reason, ReasonCode, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// A conjunction of bounds on one numeric field; violations are RANGE.
    Range { field: FieldBinding, bound: RangeBound },
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledConstraint {
    pub text: String,
    pub expr: ConstraintExpr,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledHeader {
    pub name: String,
    pub keys: Vec<String>,
    pub mandatory_in: Presence,
    pub multiple: bool,
    pub readonly: bool,
    pub pattern: Pattern,
    /// Local constraints not lowered to parse-time range checks.
    pub constraints: Vec<CompiledConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledGrammar {
    pub protocol: String,
    pub request_line: Option<Pattern>,
    pub status_line: Option<Pattern>,
    pub headers: Vec<CompiledHeader>,
    /// Case-folded key spelling to index in `headers`.
    pub header_table: BTreeMap<String, usize>,
    pub request_constraints: Vec<CompiledConstraint>,
    pub response_constraints: Vec<CompiledConstraint>,
    /// `Entry.subfield` for every lazy subfield.
    pub lazy_set: BTreeSet<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("grammar failed verification ({} error(s))", .0.iter().filter(|d| d.severity == verifier::Severity::Error).count())]
    Verification(Vec<Diagnostic>),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Frontend(Vec<FrontendError>),
    #[error(transparent)]
    Pattern(#[from] CompileError),
    #[error("header key `{key}` is declared by both `{first}` and `{second}`")]
    KeyCollision { key: String, first: String, second: String },
}

/// Lowers `expr` to a range on a single field, if it has that form.
fn as_range(expr: &ConstraintExpr) -> Option<(FieldBinding, RangeBound)> {
    let fields = expr.fields();
    let target = fields.first()?.binding.clone()?;
    if fields.iter().any(|f| f.binding.as_ref() != Some(&target)) {
        return None;
    }
    let bound = RangeBound::from_expr(expr, |f| f.binding.as_ref() == Some(&target))?;
    Some((target, bound))
}

fn compile_constraints(list: &[Constraint]) -> Vec<CompiledConstraint> {
    list.iter()
        .map(|c| CompiledConstraint {
            text: c.expr.to_string(),
            expr: c.expr.clone(),
            kind: match as_range(&c.expr) {
                Some((field, bound)) => ConstraintKind::Range { field, bound },
                None => ConstraintKind::General,
            },
        })
        .collect()
}

fn intersect(a: RangeBound, b: RangeBound) -> RangeBound {
    let hi = match (a.first_above(), b.first_above()) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) | (None, x) => x,
    };
    RangeBound {
        lo: a.lo.max(b.lo),
        hi,
        hi_strict: true,
    }
}

/// Parse-time range checks for one entry: ranges declared on the rules the
/// subfields reference, plus range-form local constraints.
fn deferred_ranges(g: &AnnotatedGrammar, space: &[SubfieldInfo], local: &[CompiledConstraint]) -> BTreeMap<String, RangeBound> {
    let mut out: BTreeMap<String, RangeBound> = BTreeMap::new();
    let mut add = |name: &str, bound: RangeBound| {
        let merged = match out.get(name) {
            Some(prev) => intersect(*prev, bound),
            None => bound,
        };
        out.insert(name.to_string(), merged);
    };
    for sub in space {
        if let Some(rule) = &sub.attached_to {
            if let Some(bound) = g.range_constraints.get(&rule.to_ascii_lowercase()) {
                add(&sub.name, *bound);
            }
        }
    }
    for c in local {
        if let ConstraintKind::Range { field, bound } = &c.kind {
            add(&field.subfield, *bound);
        }
    }
    out
}

fn entry_pattern(
    g: &AnnotatedGrammar,
    spaces: &BTreeMap<EntryRef, Vec<SubfieldInfo>>,
    entry: &EntryRef,
    body: &Element,
    local: &[CompiledConstraint],
) -> Result<Pattern, CompileError> {
    let space = spaces.get(entry).map(Vec::as_slice).unwrap_or_default();
    compile_pattern(body, g, space, &deferred_ranges(g, space, local))
}

/// Verifies and compiles an annotated grammar.
pub fn compile(source: &AnnotatedGrammar) -> Result<CompiledGrammar, EngineError> {
    let diags = verifier::verify_all(source);
    if verifier::has_errors(&diags) {
        return Err(EngineError::Verification(diags));
    }
    let mut g = source.clone();
    let spaces = frontend::resolve_all(&mut g).map_err(EngineError::Frontend)?;

    let mut lazy_set = BTreeSet::new();
    for (entry, space) in &spaces {
        for sub in space.iter().filter(|s| s.lazy) {
            lazy_set.insert(format!("{entry}.{}", sub.name));
        }
    }

    let request_line = match &g.request_line {
        Some(rule) => Some(entry_pattern(&g, &spaces, &EntryRef::RequestLine, &rule.body, &[])?),
        None => None,
    };
    let status_line = match &g.status_line {
        Some(rule) => Some(entry_pattern(&g, &spaces, &EntryRef::StatusLine, &rule.body, &[])?),
        None => None,
    };

    let mut headers = Vec::new();
    let mut header_table: BTreeMap<String, usize> = BTreeMap::new();
    for decl in &g.headers {
        let local = compile_constraints(&decl.local_constraints);
        let entry = EntryRef::Header(decl.name.clone());
        let pattern = entry_pattern(&g, &spaces, &entry, &decl.body, &local)?;
        let index = headers.len();
        for key in decl.keys() {
            let folded = key.to_ascii_lowercase();
            if let Some(&other) = header_table.get(&folded) {
                let first: &CompiledHeader = &headers[other];
                return Err(EngineError::KeyCollision {
                    key,
                    first: first.name.clone(),
                    second: decl.name.clone(),
                });
            }
            header_table.insert(folded, index);
        }
        headers.push(CompiledHeader {
            name: decl.name.clone(),
            keys: decl.keys(),
            mandatory_in: decl.mandatory_in,
            multiple: decl.multiple,
            readonly: decl.readonly,
            pattern,
            constraints: local.into_iter().filter(|c| c.kind == ConstraintKind::General).collect(),
        });
    }

    Ok(CompiledGrammar {
        protocol: g.protocol.clone(),
        request_line,
        status_line,
        headers,
        header_table,
        request_constraints: compile_constraints(&g.request_block),
        response_constraints: compile_constraints(&g.response_block),
        lazy_set,
    })
}

impl CompiledGrammar {
    pub fn header_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.name.eq_ignore_ascii_case(name))
    }

    /// Pattern of `requestLine`, `statusLine` or a header.
    pub fn entry_pattern(&self, entry: &str) -> Option<&Pattern> {
        match entry {
            "requestLine" => self.request_line.as_ref(),
            "statusLine" => self.status_line.as_ref(),
            name => self.header_index(name).map(|h| &self.headers[h].pattern),
        }
    }

    pub fn header_by_key(&self, key: &[u8]) -> Option<usize> {
        let key = std::str::from_utf8(key).ok()?.to_ascii_lowercase();
        self.header_table.get(&key).copied()
    }
}

/// Full validation of one message.
pub fn validate(g: &CompiledGrammar, raw: &[u8]) -> Verdict {
    match ParsedMessage::open(g, raw) {
        Ok(mut msg) => msg.validate(),
        Err(reason) => Verdict::from_reasons(vec![reason]),
    }
}
