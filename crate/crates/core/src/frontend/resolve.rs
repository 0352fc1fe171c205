//! Subfield namespaces and constraint field binding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnnotatedGrammar, Constraint, EntryRef, FieldBinding, FieldRef, FrontendError};
use crate::abnf::{Capture, Element, Shape, Span};

/// A named subfield reachable from an entry point once every rule reference
/// in its body is inlined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubfieldInfo {
    pub name: String,
    /// Inline type if given, else the definition-level type of the
    /// referenced rule, else `RawSlice`.
    pub shape: Shape,
    pub lazy: bool,
    pub span: Span,
    pub attached_to: Option<String>,
    /// Nearest enclosing subfield.
    pub parent: Option<String>,
    /// Enclosing lazy subfield; its region must be forced first.
    pub within_lazy: Option<String>,
    pub under_repetition: bool,
}

/// Effective type of a capture, and the definition-level type when it
/// disagrees with an explicit inline one.
pub(crate) fn capture_shape(g: &AnnotatedGrammar, cap: &Capture) -> (Shape, Option<Shape>) {
    let defined = match &cap.inner {
        Element::RuleRef(name) => g.rule_shapes.get(&name.to_ascii_lowercase()).copied(),
        _ => None,
    };
    match (cap.shape, defined) {
        (Some(inline), Some(def)) if inline != def => (inline, Some(def)),
        (Some(inline), _) => (inline, None),
        (None, Some(def)) => (def, None),
        (None, None) => (Shape::RawSlice, None),
    }
}

struct Walk<'g> {
    g: &'g AnnotatedGrammar,
    entry: &'g EntryRef,
    stack: Vec<String>,
    out: Vec<SubfieldInfo>,
    errors: Vec<FrontendError>,
}

impl Walk<'_> {
    fn element(&mut self, e: &Element, repeated: bool, lazy: Option<&str>, parent: Option<&str>) {
        match e {
            Element::RuleRef(name) => {
                let key = name.to_ascii_lowercase();
                if self.stack.contains(&key) {
                    return;
                }
                let Some(rule) = self.g.base.get(name) else {
                    return;
                };
                self.stack.push(key);
                self.element(&rule.body, repeated, lazy, parent);
                self.stack.pop();
            }
            Element::Sequence(items) | Element::Alternation(items) => {
                for item in items {
                    self.element(item, repeated, lazy, parent);
                }
            }
            Element::Repetition { max, inner, .. } => {
                self.element(inner, repeated || *max != Some(1), lazy, parent)
            }
            Element::Capture(cap) => {
                self.capture(cap, repeated, lazy, parent);
                let inner_lazy = if cap.lazy { Some(cap.name.as_str()) } else { lazy };
                self.element(&cap.inner, repeated, inner_lazy, Some(&cap.name));
            }
            Element::LiteralCi(_) | Element::CharCodes(_) | Element::CharRange(..) => {}
        }
    }

    fn capture(&mut self, cap: &Capture, repeated: bool, lazy: Option<&str>, parent: Option<&str>) {
        if let Some(existing) = self.out.iter_mut().find(|s| s.name == cap.name) {
            if existing.span == cap.span {
                existing.under_repetition |= repeated;
            } else if !self
                .errors
                .iter()
                .any(|e| matches!(e, FrontendError::DuplicateSubfield { name, .. } if *name == cap.name))
            {
                self.errors.push(FrontendError::DuplicateSubfield {
                    entry: self.entry.to_string(),
                    name: cap.name.clone(),
                    span: cap.span,
                });
            }
            return;
        }
        self.out.push(SubfieldInfo {
            name: cap.name.clone(),
            shape: capture_shape(self.g, cap).0,
            lazy: cap.lazy,
            span: cap.span,
            attached_to: match &cap.inner {
                Element::RuleRef(name) => Some(name.clone()),
                _ => None,
            },
            parent: parent.map(str::to_string),
            within_lazy: lazy.map(str::to_string),
            under_repetition: repeated,
        });
    }
}

/// Subfields of one entry in first-occurrence order.
pub fn subfields_of(g: &AnnotatedGrammar, entry: &EntryRef) -> Result<Vec<SubfieldInfo>, Vec<FrontendError>> {
    let Some(body) = g.entry_body(entry) else {
        return Ok(Vec::new());
    };
    let mut walk = Walk {
        g,
        entry,
        stack: Vec::new(),
        out: Vec::new(),
        errors: Vec::new(),
    };
    walk.element(body, false, None, None);
    if walk.errors.is_empty() {
        Ok(walk.out)
    } else {
        Err(walk.errors)
    }
}

fn entry_by_name(g: &AnnotatedGrammar, name: &str) -> Option<EntryRef> {
    match name {
        "requestLine" if g.request_line.is_some() => Some(EntryRef::RequestLine),
        "statusLine" if g.status_line.is_some() => Some(EntryRef::StatusLine),
        _ => g.header(name).map(|h| EntryRef::Header(h.name.clone())),
    }
}

fn bind(
    field: &mut FieldRef,
    constraint: &str,
    local: Option<&EntryRef>,
    g: &AnnotatedGrammar,
    spaces: &BTreeMap<EntryRef, Vec<SubfieldInfo>>,
) -> Result<(), FrontendError> {
    let unresolved = |reason: String| FrontendError::UnresolvedFieldRef {
        path: field.path.join("."),
        constraint: constraint.to_string(),
        reason,
        span: field.span,
    };
    let (entry, subfield) = match (field.path.as_slice(), local) {
        ([sub], Some(entry)) => (entry.clone(), sub.clone()),
        ([head, sub], _) => {
            let entry = entry_by_name(g, head).ok_or_else(|| unresolved(format!("no entry named `{head}`")))?;
            (entry, sub.clone())
        }
        _ => {
            return Err(unresolved(
                "expected `entry.subfield` (or a bare subfield inside a header)".to_string(),
            ))
        }
    };
    let known = spaces
        .get(&entry)
        .is_some_and(|space| space.iter().any(|s| s.name == subfield));
    if !known {
        return Err(unresolved(format!("`{entry}` has no subfield `{subfield}`")));
    }
    field.binding = Some(FieldBinding { entry, subfield });
    Ok(())
}

fn bind_all(
    constraints: &mut [Constraint],
    local: Option<&EntryRef>,
    g: &AnnotatedGrammar,
    spaces: &BTreeMap<EntryRef, Vec<SubfieldInfo>>,
    errors: &mut Vec<FrontendError>,
) {
    for c in constraints {
        let text = c.expr.to_string();
        c.expr.fields_mut(&mut |field| {
            if let Err(e) = bind(field, &text, local, g, spaces) {
                errors.push(e);
            }
        });
    }
}

/// Binds every field path in block and header-local constraints to an
/// entry and subfield. Returns the references that could not be bound.
pub fn resolve_constraint_refs(
    g: &mut AnnotatedGrammar,
    spaces: &BTreeMap<EntryRef, Vec<SubfieldInfo>>,
) -> Vec<FrontendError> {
    let snapshot = g.clone();
    let mut errors = Vec::new();
    bind_all(&mut g.request_block, None, &snapshot, spaces, &mut errors);
    bind_all(&mut g.response_block, None, &snapshot, spaces, &mut errors);
    for header in &mut g.headers {
        let entry = EntryRef::Header(header.name.clone());
        bind_all(&mut header.local_constraints, Some(&entry), &snapshot, spaces, &mut errors);
    }
    errors
}

/// Namespaces for every entry, then constraint binding.
pub(crate) fn resolve_all(
    g: &mut AnnotatedGrammar,
) -> Result<BTreeMap<EntryRef, Vec<SubfieldInfo>>, Vec<FrontendError>> {
    let mut spaces = BTreeMap::new();
    let mut errors = Vec::new();
    for entry in g.entries() {
        match subfields_of(g, &entry) {
            Ok(space) => {
                spaces.insert(entry, space);
            }
            Err(errs) => {
                errors.extend(errs);
                spaces.insert(entry, Vec::new());
            }
        }
    }
    errors.extend(resolve_constraint_refs(g, &spaces));
    if errors.is_empty() {
        Ok(spaces)
    } else {
        Err(errors)
    }
}
