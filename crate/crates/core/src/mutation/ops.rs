//! The four mutation families.
//!
//! Every operator works on a derivation tree and checks its result against
//! the ground truth: CHARSET, REPETITION and CONSTRAINT mutants must be
//! labelled INVALID, TORTURE mutants VALID. Candidates that miss their
//! label are discarded and resampled.

use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::engine::{ConstraintKind, MessageKind};
use crate::frontend::{ConstraintExpr, EntryRef, Operand, RangeBound};

use super::gen::Generator;
use super::tree::{DerivationTree, NodeKind};
use super::{Harness, Label, Mutant, MutationError, MutationRule, Position, Provenance};

const ATTEMPTS: usize = 48;

/// Replacement of `range` by `bytes`; an empty range is an insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Edit {
    range: Range<usize>,
    bytes: Vec<u8>,
}

impl Edit {
    fn new(range: Range<usize>, bytes: impl Into<Vec<u8>>) -> Self {
        Edit {
            range,
            bytes: bytes.into(),
        }
    }

    fn conflicts(&self, other: &Edit) -> bool {
        let (a, b) = (&self.range, &other.range);
        match (a.is_empty(), b.is_empty()) {
            (false, false) => a.start < b.end && b.start < a.end,
            (true, true) => a.start == b.start,
            (true, false) => b.start < a.start && a.start < b.end,
            (false, true) => a.start < b.start && b.start < a.end,
        }
    }
}

/// Applies non-overlapping edits, back to front.
fn apply(src: &[u8], edits: &[Edit]) -> Vec<u8> {
    let mut order: Vec<&Edit> = edits.iter().collect();
    order.sort_by(|a, b| b.range.start.cmp(&a.range.start).then(b.range.end.cmp(&a.range.end)));
    let mut out = src.to_vec();
    for e in order {
        out.splice(e.range.clone(), e.bytes.iter().copied());
    }
    out
}

fn escape(bytes: &[u8]) -> String {
    bytes.escape_ascii().to_string()
}

impl Harness<'_> {
    fn labelled(&self, bytes: &[u8], want: Label) -> bool {
        self.ground_truth().label(bytes) == Ok(want)
    }

    fn mutant(&self, bytes: Vec<u8>, rule: MutationRule, node: String, description: String) -> Mutant {
        Mutant {
            bytes,
            rule,
            ground_truth: rule.expected(),
            provenance: Provenance { node, description },
            seed: 0,
            position: None,
            constraint: None,
        }
    }
}

/// Replaces the byte at `position` of a random terminal by a byte the
/// terminal does not allow. CR and LF are never introduced, so the line
/// structure is kept.
pub fn mutate_charset(
    h: &Harness,
    tree: &DerivationTree,
    position: Position,
    rng: &mut impl Rng,
) -> Result<Mutant, MutationError> {
    let terminals: Vec<_> = tree.terminals().collect();
    if terminals.is_empty() {
        return Err(MutationError::Exhausted(MutationRule::Charset));
    }
    for _ in 0..ATTEMPTS {
        let (id, node, terminal) = *terminals.choose(rng).expect("nonempty");
        let offset = position.offset(node.span.len());
        let allowed = terminal.allowed(offset);
        let outside: Vec<u8> = (0..=255u8)
            .filter(|b| !allowed.contains(*b) && *b != b'\r' && *b != b'\n')
            .collect();
        let Some(&byte) = outside.choose(rng) else {
            continue;
        };
        let at = node.span.start + offset;
        let mut bytes = tree.bytes.clone();
        let old = bytes[at];
        bytes[at] = byte;
        if h.labelled(&bytes, Label::Invalid) {
            let description = format!(
                "{position} byte of {terminal} at offset {at}: '{}' -> '{}'",
                escape(&[old]),
                escape(&[byte])
            );
            let mut m = h.mutant(bytes, MutationRule::Charset, tree.describe(id), description);
            m.position = Some(position);
            return Ok(m);
        }
    }
    Err(MutationError::Exhausted(MutationRule::Charset))
}

/// Moves the iteration count of a bounded repetition below its minimum or
/// above its maximum.
pub fn mutate_repetition(h: &Harness, tree: &DerivationTree, rng: &mut impl Rng) -> Result<Mutant, MutationError> {
    let reps: Vec<usize> = tree
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n.kind, NodeKind::Repetition { min, max, .. } if min > 0 || max.is_some()))
        .map(|(i, _)| i)
        .collect();
    if reps.is_empty() {
        return Err(MutationError::Exhausted(MutationRule::Repetition));
    }
    let mut gen = Generator::new(h.source, h.size_budget);
    for _ in 0..ATTEMPTS {
        let id = *reps.choose(rng).expect("nonempty");
        let node = &tree.nodes[id];
        let NodeKind::Repetition {
            min,
            max,
            iterations,
            inner,
        } = &node.kind
        else {
            unreachable!()
        };
        let count = iterations.len() as u32;
        let under = *min > 0;
        let go_under = match (under, max.is_some()) {
            (true, true) => rng.random_bool(0.5),
            (u, _) => u,
        };
        let (target, edit) = if go_under {
            let target = rng.random_range(0..*min);
            let cut = iterations.get(target as usize).map_or(node.span.end, |r| r.start);
            (target, Edit::new(cut..node.span.end, Vec::new()))
        } else {
            let max = max.expect("bounded");
            let target = rng.random_range(max + 1..=max + 3);
            if !gen.single_line(inner) {
                continue;
            }
            let mut text = Vec::new();
            for _ in count..target {
                gen.generate(inner, rng, &mut text);
            }
            (target, Edit::new(node.span.end..node.span.end, text))
        };
        let bytes = apply(&tree.bytes, &[edit]);
        if h.labelled(&bytes, Label::Invalid) {
            let bound = match max {
                Some(m) => format!("{min}*{m}"),
                None => format!("{min}*"),
            };
            let description = format!("{count} -> {target} iterations of {bound}");
            return Ok(h.mutant(bytes, MutationRule::Repetition, tree.describe(id), description));
        }
    }
    Err(MutationError::Exhausted(MutationRule::Repetition))
}

/// A semantic rule a CONSTRAINT mutant can break.
#[derive(Debug, Clone)]
enum Target {
    /// A numeric subfield and the values it may take.
    Range { line: usize, name: String, bound: RangeBound },
    Mandatory { header: usize },
    Single { header: usize },
    General { text: String, expr: ConstraintExpr, lines: Vec<usize> },
}

impl Target {
    fn label(&self, h: &Harness, tree: &DerivationTree) -> String {
        match self {
            Target::Range { line, name, .. } => format!("range {}.{name}", tree.lines[*line].entry),
            Target::Mandatory { header } => format!("mandatory {}", h.compiled.headers[*header].name),
            Target::Single { header } => format!("single {}", h.compiled.headers[*header].name),
            Target::General { text, .. } => format!("constraint {text}"),
        }
    }
}

/// Every numeric subfield of `entry` with the bound it must satisfy in a
/// message of kind `kind`.
fn numeric_bounds(h: &Harness, kind: Option<MessageKind>, entry: &str) -> Vec<(String, RangeBound)> {
    let Some(p) = h.compiled.entry_pattern(entry) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for slot in &p.slots {
        let mut bound = slot.shape.numeric_limit().map(|limit| RangeBound {
            lo: 0,
            hi: Some(limit),
            hi_strict: true,
        });
        let mut narrow = |b: RangeBound| {
            bound = Some(match bound {
                Some(prev) => RangeBound {
                    lo: prev.lo.max(b.lo),
                    hi: match (prev.first_above(), b.first_above()) {
                        (Some(x), Some(y)) => Some(x.min(y)),
                        (x, None) | (None, x) => x,
                    },
                    hi_strict: true,
                },
                None => b,
            })
        };
        if let Some(b) = p.deferred_range_checks.get(&slot.name) {
            narrow(*b);
        }
        for k in kind.into_iter() {
            for c in h.block(k) {
                if let ConstraintKind::Range { field, bound: b } = &c.kind {
                    if field.entry.to_string() == entry && field.subfield == slot.name {
                        narrow(*b);
                    }
                }
            }
        }
        if let Some(b) = bound {
            out.push((slot.name.clone(), b));
        }
    }
    out
}

/// Coverage labels of every semantic rule in the grammar, in a stable
/// order.
pub(crate) fn constraint_labels(h: &Harness) -> Vec<String> {
    let mut out = Vec::new();
    let mut entries: Vec<(String, Option<MessageKind>)> = Vec::new();
    if h.compiled.request_line.is_some() {
        entries.push(("requestLine".into(), Some(MessageKind::Request)));
    }
    if h.compiled.status_line.is_some() {
        entries.push(("statusLine".into(), Some(MessageKind::Response)));
    }
    for decl in &h.compiled.headers {
        entries.push((decl.name.clone(), None));
    }
    for (entry, kind) in &entries {
        let kinds: Vec<Option<MessageKind>> = match kind {
            Some(k) => vec![Some(*k)],
            None => h.kinds().into_iter().map(Some).collect(),
        };
        let mut names: Vec<String> = kinds
            .into_iter()
            .flat_map(|k| numeric_bounds(h, k, entry))
            .map(|(name, _)| format!("range {entry}.{name}"))
            .collect();
        names.dedup();
        for n in names {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    for decl in &h.compiled.headers {
        if decl.mandatory_in.in_request() || decl.mandatory_in.in_response() {
            out.push(format!("mandatory {}", decl.name));
        }
    }
    for decl in &h.compiled.headers {
        if !decl.multiple {
            out.push(format!("single {}", decl.name));
        }
    }
    let general = h
        .compiled
        .request_constraints
        .iter()
        .chain(&h.compiled.response_constraints)
        .chain(h.compiled.headers.iter().flat_map(|d| &d.constraints))
        .filter(|c| c.kind == ConstraintKind::General);
    for c in general {
        let label = format!("constraint {}", c.text);
        if !out.contains(&label) {
            out.push(label);
        }
    }
    out
}

fn targets(h: &Harness, tree: &DerivationTree) -> Vec<Target> {
    let mut out = Vec::new();
    for (line, info) in tree.lines.iter().enumerate() {
        for (name, bound) in numeric_bounds(h, Some(tree.kind), &info.entry) {
            if tree.capture(line, &name).is_some() {
                out.push(Target::Range { line, name, bound });
            }
        }
    }
    for (header, decl) in h.compiled.headers.iter().enumerate() {
        let present = tree.header_lines(header).next().is_some();
        let mandatory = match tree.kind {
            MessageKind::Request => decl.mandatory_in.in_request(),
            MessageKind::Response => decl.mandatory_in.in_response(),
        };
        if present && mandatory {
            out.push(Target::Mandatory { header });
        }
        if present && !decl.multiple {
            out.push(Target::Single { header });
        }
        for c in &decl.constraints {
            let lines: Vec<usize> = tree.header_lines(header).collect();
            if !lines.is_empty() {
                out.push(Target::General {
                    text: c.text.clone(),
                    expr: c.expr.clone(),
                    lines,
                });
            }
        }
    }
    for c in h.block(tree.kind) {
        if c.kind != ConstraintKind::General {
            continue;
        }
        // The first instance of each entry the constraint reads.
        let mut lines = Vec::new();
        for f in c.expr.fields() {
            let Some(b) = &f.binding else { continue };
            let line = match &b.entry {
                EntryRef::Header(name) => h
                    .compiled
                    .header_index(name)
                    .and_then(|i| tree.header_lines(i).next()),
                other if other.to_string() == tree.kind.entry() => Some(0),
                _ => None,
            };
            if let Some(line) = line.filter(|l| !lines.contains(l)) {
                lines.push(line);
            }
        }
        if !lines.is_empty() {
            out.push(Target::General {
                text: c.text.clone(),
                expr: c.expr.clone(),
                lines,
            });
        }
    }
    out
}

fn integer_constants(e: &ConstraintExpr, out: &mut Vec<u64>) {
    match e {
        ConstraintExpr::Compare { lhs, rhs, .. } => {
            for o in [lhs, rhs] {
                if let Operand::Int(v) = o {
                    out.push(*v);
                }
            }
        }
        ConstraintExpr::And(a, b) | ConstraintExpr::Or(a, b) => {
            integer_constants(a, out);
            integer_constants(b, out);
        }
        ConstraintExpr::Not(a) => integer_constants(a, out),
    }
}

impl Harness<'_> {
    /// Out-of-range rewrites of a numeric field, syntactic ones first.
    fn range_candidates(&self, tree: &DerivationTree, span: Range<usize>, bound: RangeBound, rng: &mut impl Rng) -> Vec<Vec<u8>> {
        let mut values = Vec::new();
        if let Some(below) = bound.last_below() {
            values.push(below);
        }
        if let Some(above) = bound.first_above() {
            values.push(above);
            values.push(above.saturating_add(rng.random_range(1..=above.clamp(1, 1000))));
        }
        let width = span.len();
        let gt = self.ground_truth();
        let mut syntactic = Vec::new();
        let mut other = Vec::new();
        for v in values {
            let plain = v.to_string().into_bytes();
            let padded = format!("{v:0width$}").into_bytes();
            for text in [padded, plain] {
                let mut bytes = tree.bytes.clone();
                bytes.splice(span.clone(), text.iter().copied());
                if gt.syntax_ok(&bytes) == Ok(true) {
                    syntactic.push(bytes);
                } else {
                    other.push(bytes);
                }
            }
        }
        syntactic.extend(other);
        syntactic.dedup();
        syntactic
    }

    fn constraint_attempt(&self, tree: &DerivationTree, target: &Target, gen: &mut Generator, rng: &mut impl Rng) -> Option<(Vec<u8>, String, String)> {
        match target {
            Target::Range { line, name, bound } => {
                let node = tree.capture(*line, name)?;
                let old = escape(&tree.bytes[node.span.clone()]);
                let entry = &tree.lines[*line].entry;
                self.range_candidates(tree, node.span.clone(), *bound, rng)
                    .into_iter()
                    .find(|b| self.labelled(b, Label::Invalid))
                    .map(|b| {
                        let new = escape(&b[node.span.start..node.span.end + b.len() - tree.bytes.len()]);
                        (b, format!("{entry}.{name}"), format!("{old} -> {new} outside {}", show_bound(bound)))
                    })
            }
            Target::Mandatory { header } => {
                let edits: Vec<Edit> = tree
                    .header_lines(*header)
                    .map(|l| Edit::new(tree.line_with_crlf(l), Vec::new()))
                    .collect();
                let bytes = apply(&tree.bytes, &edits);
                let name = &self.compiled.headers[*header].name;
                self.labelled(&bytes, Label::Invalid)
                    .then(|| (bytes, name.clone(), format!("removed {} instance(s)", edits.len())))
            }
            Target::Single { header } => {
                let lines: Vec<usize> = tree.header_lines(*header).collect();
                let line = *lines.choose(rng)?;
                let copy = tree.bytes[tree.line_with_crlf(line)].to_vec();
                let at = tree.line_with_crlf(line).end;
                let bytes = apply(&tree.bytes, &[Edit::new(at..at, copy)]);
                let name = &self.compiled.headers[*header].name;
                self.labelled(&bytes, Label::Invalid)
                    .then(|| (bytes, name.clone(), format!("duplicated line {}", line + 1)))
            }
            Target::General { expr, lines, .. } => {
                // Pick one operand field present in the message and rewrite it.
                let mut fields = Vec::new();
                for f in expr.fields() {
                    let Some(b) = &f.binding else { continue };
                    for &l in lines {
                        if tree.lines[l].entry == b.entry.to_string() {
                            if let Some(node) = tree.capture(l, &b.subfield) {
                                fields.push((l, b.subfield.clone(), node));
                            }
                        }
                    }
                }
                let (line, name, node) = fields.choose(rng)?.clone();
                let NodeKind::Capture { inner, .. } = &node.kind else {
                    return None;
                };
                let old = &tree.bytes[node.span.clone()];
                let numeric = self
                    .compiled
                    .entry_pattern(&tree.lines[line].entry)
                    .and_then(|p| p.slot(&name).map(|s| p.slots[s].shape.is_numeric()))
                    .unwrap_or(false);
                let mut candidates: Vec<Vec<u8>> = Vec::new();
                if numeric {
                    let mut consts = Vec::new();
                    integer_constants(expr, &mut consts);
                    for c in consts {
                        for v in [c.checked_sub(1), Some(c), c.checked_add(1)].into_iter().flatten() {
                            candidates.push(v.to_string().into_bytes());
                        }
                    }
                }
                for _ in 0..8 {
                    if gen.single_line(inner) {
                        candidates.push(gen.string(inner, rng));
                    }
                }
                candidates.retain(|c| c != old);
                let entry = &tree.lines[line].entry;
                for text in candidates {
                    let bytes = apply(&tree.bytes, &[Edit::new(node.span.clone(), text.clone())]);
                    if self.labelled(&bytes, Label::Invalid) {
                        let description = format!("{} -> {}", escape(old), escape(&text));
                        return Some((bytes, format!("{entry}.{name}"), description));
                    }
                }
                None
            }
        }
    }
}

fn show_bound(b: &RangeBound) -> String {
    match b.first_above() {
        Some(hi) => format!("[{}, {hi})", b.lo),
        None => format!("[{}, inf)", b.lo),
    }
}

/// Breaks one semantic rule: a range or width bound, a mandatory header,
/// single-instance multiplicity, or a general constraint.
pub fn mutate_constraint(h: &Harness, tree: &DerivationTree, rng: &mut impl Rng) -> Result<Mutant, MutationError> {
    let targets = targets(h, tree);
    if targets.is_empty() {
        return Err(MutationError::Exhausted(MutationRule::Constraint));
    }
    let mut gen = Generator::new(h.source, h.size_budget);
    for _ in 0..ATTEMPTS / 4 {
        let target = targets.choose(rng).expect("nonempty");
        if let Some((bytes, node, description)) = h.constraint_attempt(tree, target, &mut gen, rng) {
            let mut m = h.mutant(bytes, MutationRule::Constraint, node, description);
            m.constraint = Some(target.label(h, tree));
            return Ok(m);
        }
    }
    Err(MutationError::Exhausted(MutationRule::Constraint))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tweak {
    CaseFlip,
    SpaceBeforeColon,
    SpaceAfterColon,
    Fold,
    Boundary,
}

const TWEAKS: [Tweak; 5] = [
    Tweak::CaseFlip,
    Tweak::SpaceBeforeColon,
    Tweak::SpaceAfterColon,
    Tweak::Fold,
    Tweak::Boundary,
];

fn wsp(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| if rng.random_bool(0.5) { b' ' } else { b'\t' }).collect()
}

fn tweak(tree: &DerivationTree, t: Tweak, gen: &mut Generator, rng: &mut impl Rng) -> Option<(Edit, String)> {
    let headers: Vec<usize> = (1..tree.lines.len()).collect();
    match t {
        Tweak::CaseFlip => {
            let literals: Vec<_> = tree
                .terminals()
                .filter(|(_, n, t)| {
                    matches!(t, super::Terminal::Literal(_)) && tree.bytes[n.span.clone()].iter().any(u8::is_ascii_alphabetic)
                })
                .collect();
            let (_, node, _) = literals.choose(rng)?;
            let old = &tree.bytes[node.span.clone()];
            let letters: Vec<usize> = (0..old.len()).filter(|i| old[*i].is_ascii_alphabetic()).collect();
            let forced = *letters.choose(rng)?;
            let new: Vec<u8> = old
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    if b.is_ascii_alphabetic() && (i == forced || rng.random_bool(0.5)) {
                        b ^ 0x20
                    } else {
                        *b
                    }
                })
                .collect();
            let what = format!("case {} -> {}", escape(old), escape(&new));
            Some((Edit::new(node.span.clone(), new), what))
        }
        Tweak::SpaceBeforeColon | Tweak::SpaceAfterColon => {
            let line = *headers.choose(rng)?;
            let key = tree.lines[line].key.clone()?;
            let at = if t == Tweak::SpaceBeforeColon { key.end } else { key.end + 1 };
            let n = rng.random_range(1..=3);
            let text = wsp(rng, n);
            let what = format!(
                "{} {} on line {}",
                escape(&text),
                if t == Tweak::SpaceBeforeColon { "before colon" } else { "after colon" },
                line + 1
            );
            Some((Edit::new(at..at, text), what))
        }
        Tweak::Fold => {
            // A whitespace byte followed by a non-whitespace byte on the
            // same line: a CRLF before it unfolds back to the same value.
            let mut points = Vec::new();
            for &line in &headers {
                let info = &tree.lines[line];
                let from = info.key.as_ref()?.end + 1;
                for p in from..info.span.end - 1 {
                    let (b, next) = (tree.bytes[p], tree.bytes[p + 1]);
                    if (b == b' ' || b == b'\t') && next != b' ' && next != b'\t' {
                        points.push((line, p));
                    }
                }
            }
            let &(line, p) = points.choose(rng)?;
            Some((Edit::new(p..p, b"\r\n".to_vec()), format!("fold at offset {p} on line {}", line + 1)))
        }
        Tweak::Boundary => {
            let reps: Vec<&super::Node> = tree
                .nodes
                .iter()
                .filter(|n| match &n.kind {
                    NodeKind::Repetition { min, max, iterations, .. } => {
                        let c = iterations.len() as u32;
                        c > *min || max.is_some_and(|m| c < m && m - c <= 4)
                    }
                    _ => false,
                })
                .collect();
            let node = *reps.choose(rng)?;
            let NodeKind::Repetition {
                min,
                max,
                iterations,
                inner,
            } = &node.kind
            else {
                unreachable!()
            };
            let count = iterations.len() as u32;
            let to_max = max.is_some_and(|m| count < m && m - count <= 4) && (count == *min || rng.random_bool(0.5));
            if to_max {
                let m = max.expect("bounded");
                if !gen.single_line(inner) {
                    return None;
                }
                let mut text = Vec::new();
                for _ in count..m {
                    gen.generate(inner, rng, &mut text);
                }
                let what = format!("{count} -> {m} iterations (max)");
                Some((Edit::new(node.span.end..node.span.end, text), what))
            } else {
                let cut = iterations.get(*min as usize).map_or(node.span.end, |r| r.start);
                let what = format!("{count} -> {min} iterations (min)");
                Some((Edit::new(cut..node.span.end, Vec::new()), what))
            }
        }
    }
}

/// Applies one to three meaning-preserving surface changes: case flips in
/// case-insensitive literals, whitespace around the colon, line folding,
/// and repetition counts moved to their bounds. Falls back to the
/// unchanged message when no combination stays VALID.
pub fn mutate_torture(h: &Harness, tree: &DerivationTree, rng: &mut impl Rng) -> Result<Mutant, MutationError> {
    let mut gen = Generator::new(h.source, h.size_budget);
    for _ in 0..ATTEMPTS / 3 {
        let wanted = rng.random_range(1..=3);
        let mut edits: Vec<Edit> = Vec::new();
        let mut notes = Vec::new();
        for _ in 0..wanted * 2 {
            if edits.len() == wanted {
                break;
            }
            let t = *TWEAKS.choose(rng).expect("nonempty");
            let Some((edit, note)) = tweak(tree, t, &mut gen, rng) else {
                continue;
            };
            if edits.iter().any(|e| e.conflicts(&edit)) {
                continue;
            }
            edits.push(edit);
            notes.push(note);
        }
        if edits.is_empty() {
            continue;
        }
        let bytes = apply(&tree.bytes, &edits);
        if h.labelled(&bytes, Label::Valid) {
            return Ok(h.mutant(bytes, MutationRule::Torture, "message".into(), notes.join("; ")));
        }
    }
    Ok(h.mutant(tree.bytes.clone(), MutationRule::Torture, "message".into(), "identity".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edits_apply_back_to_front() {
        let src = b"abcdef";
        let edits = [Edit::new(1..2, "XY"), Edit::new(4..4, "_"), Edit::new(5..6, "")];
        assert_eq!(apply(src, &edits), b"aXYcd_e");
        assert!(Edit::new(1..3, "").conflicts(&Edit::new(2..2, "")));
        assert!(!Edit::new(1..3, "").conflicts(&Edit::new(3..3, "")));
        assert!(!Edit::new(1..3, "").conflicts(&Edit::new(1..1, "")));
        assert!(Edit::new(1..1, "").conflicts(&Edit::new(1..1, "")));
    }
}
