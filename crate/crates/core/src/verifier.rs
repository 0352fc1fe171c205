//! Static consistency checks run before compilation.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::abnf::{core_rules, Element, Shape, Span};
use crate::frontend::{self, AnnotatedGrammar, FrontendError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagCode {
    UndefinedRule,
    DuplicateRule,
    RuleCycle,
    TypeMismatch,
    UnresolvedRef,
    UnreachableRule,
    DuplicateSubfield,
    CaptureUnderRepetition,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::UndefinedRule => "UNDEFINED_RULE",
            DiagCode::DuplicateRule => "DUPLICATE_RULE",
            DiagCode::RuleCycle => "RULE_CYCLE",
            DiagCode::TypeMismatch => "TYPE_MISMATCH",
            DiagCode::UnresolvedRef => "UNRESOLVED_REF",
            DiagCode::UnreachableRule => "UNREACHABLE_RULE",
            DiagCode::DuplicateSubfield => "DUPLICATE_SUBFIELD",
            DiagCode::CaptureUnderRepetition => "CAPTURE_UNDER_REPETITION",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
    pub span: Span,
    pub cycle_path: Option<Vec<String>>,
}

impl Diagnostic {
    fn error(code: DiagCode, span: Span, message: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            message,
            span,
            cycle_path: None,
        }
    }

    fn warning(code: DiagCode, span: Span, message: String) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            ..Diagnostic::error(code, span, message)
        }
    }

    /// `file:line:col: severity[CODE]: message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{file}:{}:{}: {}[{}]: {}",
            self.span.line, self.span.col, self.severity, self.code, self.message
        )
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Every body the grammar defines, with the span reported for it.
fn bodies(g: &AnnotatedGrammar) -> Vec<(&str, &Element, Span)> {
    let mut out = Vec::new();
    for rule in [&g.request_line, &g.status_line].into_iter().flatten() {
        out.push((rule.name.as_str(), &rule.body, rule.span));
    }
    for h in &g.headers {
        out.push((h.name.as_str(), &h.body, h.span));
    }
    for rule in g.base.iter() {
        out.push((rule.name.as_str(), &rule.body, rule.span));
    }
    out
}

fn is_defined(g: &AnnotatedGrammar, name: &str) -> bool {
    g.base.contains(name) || core_rules().contains(name)
}

pub fn check_no_omission(g: &AnnotatedGrammar) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if g.request_line.is_none() && g.status_line.is_none() {
        out.push(Diagnostic::error(
            DiagCode::UndefinedRule,
            Span::new(1, 1),
            "no entry point: neither requestLine nor statusLine is defined".to_string(),
        ));
    }
    let mut seen = HashSet::new();
    for (owner, body, span) in bodies(g) {
        body.visit_refs(&mut |name| {
            if !is_defined(g, name) && seen.insert(name.to_ascii_lowercase()) {
                out.push(Diagnostic::error(
                    DiagCode::UndefinedRule,
                    span,
                    format!("rule `{name}` referenced from `{owner}` is not defined"),
                ));
            }
        });
    }
    out
}

pub fn check_no_duplicates(g: &AnnotatedGrammar) -> Vec<Diagnostic> {
    let mut first: HashMap<String, Span> = HashMap::new();
    let mut out = Vec::new();
    for rule in g.base.iter() {
        let key = rule.name.to_ascii_lowercase();
        match first.get(&key) {
            Some(at) => out.push(Diagnostic::error(
                DiagCode::DuplicateRule,
                rule.span,
                format!("rule `{}` is already defined at {at}", rule.name),
            )),
            None => {
                first.insert(key, rule.span);
            }
        }
    }
    out
}

pub fn check_no_cycles(g: &AnnotatedGrammar) -> Vec<Diagnostic> {
    let mut graph: DiGraph<usize, ()> = DiGraph::new();
    let mut nodes: BTreeMap<String, NodeIndex> = BTreeMap::new();
    // First definition wins, as in lookups.
    let rules: Vec<_> = g
        .base
        .iter()
        .filter(|r| g.base.get(&r.name).is_some_and(|first| std::ptr::eq(first, *r)))
        .collect();
    for (i, rule) in rules.iter().enumerate() {
        nodes.insert(rule.name.to_ascii_lowercase(), graph.add_node(i));
    }
    for rule in &rules {
        let from = nodes[&rule.name.to_ascii_lowercase()];
        rule.body.visit_refs(&mut |name| {
            if let Some(&to) = nodes.get(&name.to_ascii_lowercase()) {
                graph.update_edge(from, to, ());
            }
        });
    }

    let mut cycles: Vec<(usize, Vec<String>)> = Vec::new();
    for scc in tarjan_scc(&graph) {
        let self_loop = scc.len() == 1 && graph.contains_edge(scc[0], scc[0]);
        if scc.len() < 2 && !self_loop {
            continue;
        }
        let members: HashSet<NodeIndex> = scc.iter().copied().collect();
        let start = *scc.iter().min_by_key(|n| graph[**n]).unwrap();
        let path = witness(&graph, &members, start)
            .into_iter()
            .map(|n| rules[graph[n]].name.clone())
            .collect();
        cycles.push((graph[start], path));
    }
    cycles.sort();
    cycles
        .into_iter()
        .map(|(i, path)| Diagnostic {
            cycle_path: Some(path.clone()),
            ..Diagnostic::error(
                DiagCode::RuleCycle,
                rules[i].span,
                format!("rule cycle: {}", path.join(" -> ")),
            )
        })
        .collect()
}

/// Shortest path from `start` back to itself inside one component.
fn witness(graph: &DiGraph<usize, ()>, members: &HashSet<NodeIndex>, start: NodeIndex) -> Vec<NodeIndex> {
    let mut parent: HashMap<NodeIndex, NodeIndex> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        let mut succ: Vec<_> = graph.neighbors(n).filter(|m| members.contains(m)).collect();
        succ.sort_by_key(|m| graph[*m]);
        for m in succ {
            if m == start {
                let mut back = Vec::new();
                let mut cur = n;
                while cur != start {
                    back.push(cur);
                    cur = parent[&cur];
                }
                let mut path = vec![start];
                path.extend(back.into_iter().rev());
                path.push(start);
                return path;
            }
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(m) {
                e.insert(n);
                queue.push_back(m);
            }
        }
    }
    vec![start, start]
}

/// Follows rule references until a structural element is reached.
fn deref<'g>(g: &'g AnnotatedGrammar, mut e: &'g Element) -> &'g Element {
    let mut hops = 0;
    loop {
        match e {
            Element::RuleRef(name) if hops < 64 => match g.base.resolve(name) {
                Some(rule) => {
                    e = &rule.body;
                    hops += 1;
                }
                None => return e,
            },
            Element::Capture(cap) => e = &cap.inner,
            _ => return e,
        }
    }
}

/// Whether every byte `e` can produce is an ASCII digit.
fn digits_only(g: &AnnotatedGrammar, e: &Element, stack: &mut Vec<String>) -> bool {
    match e {
        Element::LiteralCi(text) => text.bytes().all(|b| b.is_ascii_digit()),
        Element::CharCodes(bytes) => bytes.iter().all(u8::is_ascii_digit),
        Element::CharRange(lo, hi) => lo.is_ascii_digit() && hi.is_ascii_digit(),
        Element::RuleRef(name) => {
            let key = name.to_ascii_lowercase();
            if stack.contains(&key) {
                return true;
            }
            let Some(rule) = g.base.resolve(name) else {
                return false;
            };
            stack.push(key);
            let ok = digits_only(g, &rule.body, stack);
            stack.pop();
            ok
        }
        Element::Sequence(items) | Element::Alternation(items) => {
            items.iter().all(|i| digits_only(g, i, stack))
        }
        Element::Repetition { inner, .. } => digits_only(g, inner, stack),
        Element::Capture(cap) => digits_only(g, &cap.inner, stack),
    }
}

/// The literal strings of a finite alternation of terminals, if it is one.
fn literal_set(g: &AnnotatedGrammar, e: &Element) -> Option<Vec<String>> {
    match deref(g, e) {
        Element::LiteralCi(text) => Some(vec![text.clone()]),
        Element::CharCodes(bytes) => Some(vec![String::from_utf8_lossy(bytes).into_owned()]),
        Element::Alternation(items) => {
            let mut out = Vec::new();
            for item in items {
                out.extend(literal_set(g, item)?);
            }
            Some(out)
        }
        _ => None,
    }
}

fn shape_problem(g: &AnnotatedGrammar, shape: Shape, target: &Element) -> Option<String> {
    match shape {
        Shape::Uint16 | Shape::Uint32 => {
            let limit = shape.numeric_limit().unwrap();
            if let Some(values) = literal_set(g, target) {
                for v in values {
                    match v.parse::<u64>() {
                        Ok(n) if n < limit && v.bytes().all(|b| b.is_ascii_digit()) => {}
                        Ok(_) => return Some(format!("value {v} does not fit in {}", shape.keyword())),
                        Err(_) => return Some(format!("\"{v}\" is not an unsigned decimal integer")),
                    }
                }
                None
            } else if digits_only(g, target, &mut Vec::new()) {
                None
            } else {
                Some(format!("`{target}` can derive non-digit text"))
            }
        }
        Shape::Union | Shape::Enum => match deref(g, target) {
            Element::Alternation(_) => None,
            _ => Some(format!("{} requires an alternation, found `{target}`", shape.keyword())),
        },
        Shape::Struct | Shape::RawSlice => None,
    }
}

pub fn check_type_annotations(g: &AnnotatedGrammar) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (owner, body, _) in bodies(g) {
        body.visit_captures(&mut |cap| {
            let (shape, collision) = frontend::capture_shape(g, cap);
            if let Some(defined) = collision {
                out.push(Diagnostic::error(
                    DiagCode::TypeMismatch,
                    cap.span,
                    format!(
                        "subfield `{}` in `{owner}` is typed {} but its rule is declared {}",
                        cap.name,
                        shape.keyword(),
                        defined.keyword()
                    ),
                ));
            } else if let Some(problem) = shape_problem(g, shape, &cap.inner) {
                out.push(Diagnostic::error(
                    DiagCode::TypeMismatch,
                    cap.span,
                    format!("subfield `{}` in `{owner}`: {problem}", cap.name),
                ));
            }
        });
    }
    for (key, shape) in &g.rule_shapes {
        let Some(rule) = g.base.get(key) else { continue };
        if let Some(problem) = shape_problem(g, *shape, &rule.body) {
            let span = g.rule_shape_spans.get(key).copied().unwrap_or(rule.span);
            out.push(Diagnostic::error(
                DiagCode::TypeMismatch,
                span,
                format!("rule `{}`: {problem}", rule.name),
            ));
        }
    }
    out.sort_by_key(|d| d.span);
    out
}

/// Constraint binding and subfield namespace errors.
pub fn check_references(g: &AnnotatedGrammar) -> Vec<Diagnostic> {
    let mut copy = g.clone();
    let Err(errors) = frontend::resolve_all(&mut copy) else {
        return Vec::new();
    };
    errors
        .into_iter()
        .map(|e| {
            let code = match e {
                FrontendError::DuplicateSubfield { .. } => DiagCode::DuplicateSubfield,
                _ => DiagCode::UnresolvedRef,
            };
            let message = match &e {
                FrontendError::UnresolvedFieldRef {
                    path,
                    constraint,
                    reason,
                    ..
                } => format!("unresolved field `{path}` in constraint `{constraint}`: {reason}"),
                FrontendError::DuplicateSubfield { entry, name, .. } => {
                    format!("subfield `{name}` declared twice in `{entry}`")
                }
                other => other.to_string(),
            };
            Diagnostic::error(code, e.span(), message)
        })
        .collect()
}

pub fn check_warnings(g: &AnnotatedGrammar) -> Vec<Diagnostic> {
    let mut reachable: HashSet<String> = HashSet::new();
    let mut work: Vec<String> = Vec::new();
    let mut roots = |e: &Element| e.visit_refs(&mut |n| work.push(n.to_ascii_lowercase()));
    for rule in [&g.request_line, &g.status_line].into_iter().flatten() {
        roots(&rule.body);
    }
    for h in &g.headers {
        roots(&h.body);
    }
    while let Some(name) = work.pop() {
        if !reachable.insert(name.clone()) {
            continue;
        }
        if let Some(rule) = g.base.get(&name) {
            rule.body.visit_refs(&mut |n| work.push(n.to_ascii_lowercase()));
        }
    }
    let mut out = Vec::new();
    let mut reported = HashSet::new();
    for rule in g.base.iter() {
        let key = rule.name.to_ascii_lowercase();
        if !reachable.contains(&key) && reported.insert(key) {
            out.push(Diagnostic::warning(
                DiagCode::UnreachableRule,
                rule.span,
                format!("rule `{}` is not reachable from any entry point", rule.name),
            ));
        }
    }
    for entry in g.entries() {
        let Ok(space) = frontend::subfields_of(g, &entry) else { continue };
        for sub in space.iter().filter(|s| s.under_repetition) {
            out.push(Diagnostic::warning(
                DiagCode::CaptureUnderRepetition,
                sub.span,
                format!("subfield `{}` of `{entry}` sits under a repetition; the last iteration is kept", sub.name),
            ));
        }
    }
    out
}

/// All checks in order. Type checks are skipped while cycles remain, since
/// they walk rule definitions.
pub fn verify_all(g: &AnnotatedGrammar) -> Vec<Diagnostic> {
    let mut out = check_no_omission(g);
    out.extend(check_no_duplicates(g));
    let cycles = check_no_cycles(g);
    let cyclic = !cycles.is_empty();
    out.extend(cycles);
    if !cyclic {
        out.extend(check_type_annotations(g));
    }
    out.extend(check_references(g));
    out.extend(check_warnings(g));
    out
}
