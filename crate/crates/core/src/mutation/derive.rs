//! Valid message derivation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{self, parse_entry_value, CompiledConstraint, ConstraintKind, MessageKind, ParsedHeader, TypedValue};
use crate::frontend::{CmpOp, ConstraintExpr, EntryRef, FieldBinding, Operand};

use super::gen::Generator;
use super::tree::{DerivationTree, DraftLine};
use super::{Harness, Label, MutationError};

const MESSAGE_ATTEMPTS: usize = 64;
const LINE_ATTEMPTS: usize = 64;

/// Numeric reading of a subfield value.
pub(crate) fn numeric(v: &TypedValue) -> Option<u64> {
    match v {
        TypedValue::Raw(text) | TypedValue::Enum { text, .. } => std::str::from_utf8(text).ok()?.parse().ok(),
        other => other.as_u64(),
    }
}

impl Harness<'_> {
    pub(crate) fn block(&self, kind: MessageKind) -> &[CompiledConstraint] {
        match kind {
            MessageKind::Request => &self.compiled.request_constraints,
            MessageKind::Response => &self.compiled.response_constraints,
        }
    }

    pub(crate) fn kinds(&self) -> Vec<MessageKind> {
        let mut out = Vec::new();
        if self.compiled.request_line.is_some() {
            out.push(MessageKind::Request);
        }
        if self.compiled.status_line.is_some() {
            out.push(MessageKind::Response);
        }
        out
    }

    /// Whether a parsed line satisfies the block range constraints that
    /// target it.
    fn block_ranges_hold(&self, kind: MessageKind, entry: &str, h: &ParsedHeader) -> bool {
        self.block(kind).iter().all(|c| match &c.kind {
            ConstraintKind::Range { field, bound } if field.entry.to_string() == entry => h
                .get_subfield(&field.subfield)
                .ok()
                .and_then(numeric)
                .is_none_or(|v| bound.contains(v)),
            _ => true,
        })
    }

    fn line_ok(&self, kind: MessageKind, entry: &str, value: &[u8]) -> bool {
        parse_entry_value(self.compiled, entry, value).is_ok_and(|h| self.block_ranges_hold(kind, entry, &h))
    }

    /// A random value for `entry` that parses on its own.
    fn derive_line(&self, gen: &mut Generator, kind: MessageKind, entry: &str, rng: &mut ChaCha8Rng) -> Option<Vec<u8>> {
        let body = self.source.entry_body(&entry_ref(entry))?;
        let header = entry != kind.entry();
        for _ in 0..LINE_ATTEMPTS {
            let mut value = gen.string(body, rng);
            if header {
                let lead = value.iter().take_while(|b| **b == b' ' || **b == b'\t').count();
                value.drain(..lead);
            }
            if self.line_ok(kind, entry, &value) {
                return Some(value);
            }
        }
        None
    }

    /// Makes `a == b` field equalities hold by copying the text of one
    /// side into the other.
    fn fix_equalities(&self, kind: MessageKind, command: &[u8], lines: &mut [DraftLine]) -> Option<Vec<u8>> {
        let mut command = command.to_vec();
        for c in self.block(kind) {
            let ConstraintExpr::Compare {
                op: CmpOp::Eq,
                lhs: Operand::Field(a),
                rhs: Operand::Field(b),
            } = &c.expr
            else {
                continue;
            };
            let (Some(a), Some(b)) = (&a.binding, &b.binding) else {
                continue;
            };
            // Rewrite a header side; copy from the other.
            let (src, dst) = match (&a.entry, &b.entry) {
                (EntryRef::Header(_), _) => (b, a),
                _ => (a, b),
            };
            let Some(text) = self.field_text(kind, &command, lines, src) else {
                continue;
            };
            let dst_entry = dst.entry.to_string();
            if matches!(dst.entry, EntryRef::Header(_)) {
                let h = self.compiled.header_index(&dst_entry)?;
                for line in lines.iter_mut().filter(|l| l.header == Some(h)) {
                    line.value = self.rewrite(kind, &dst_entry, &line.value, &dst.subfield, &text)?;
                }
            } else {
                command = self.rewrite(kind, &dst_entry, &command, &dst.subfield, &text)?;
            }
        }
        Some(command)
    }

    fn field_text(&self, kind: MessageKind, command: &[u8], lines: &[DraftLine], f: &FieldBinding) -> Option<Vec<u8>> {
        let entry = f.entry.to_string();
        let value = match &f.entry {
            EntryRef::Header(_) => {
                let h = self.compiled.header_index(&entry)?;
                &lines.iter().find(|l| l.header == Some(h))?.value[..]
            }
            _ if entry == kind.entry() => command,
            _ => return None,
        };
        let parsed = parse_entry_value(self.compiled, &entry, value).ok()?;
        let span = parsed.span(self.compiled.entry_pattern(&entry)?, &f.subfield)?;
        Some(value[span].to_vec())
    }

    fn rewrite(&self, kind: MessageKind, entry: &str, value: &[u8], subfield: &str, text: &[u8]) -> Option<Vec<u8>> {
        let parsed = parse_entry_value(self.compiled, entry, value).ok()?;
        let span = parsed.span(self.compiled.entry_pattern(entry)?, subfield)?;
        let mut out = value[..span.start].to_vec();
        out.extend_from_slice(text);
        out.extend_from_slice(&value[span.end..]);
        self.line_ok(kind, entry, &out).then_some(out)
    }

    fn attempt(&self, gen: &mut Generator, rng: &mut ChaCha8Rng) -> Option<DerivationTree> {
        let kinds = self.kinds();
        let kind = *kinds.get(rng.random_range(0..kinds.len().max(1)))?;
        let command = self.derive_line(gen, kind, kind.entry(), rng)?;

        let mut lines = Vec::new();
        for (h, decl) in self.compiled.headers.iter().enumerate() {
            let mandatory = match kind {
                MessageKind::Request => decl.mandatory_in.in_request(),
                MessageKind::Response => decl.mandatory_in.in_response(),
            };
            if !mandatory && !rng.random_bool(0.5) {
                continue;
            }
            let count = if decl.multiple { 1 + rng.random_range(0..2) } else { 1 };
            for _ in 0..count {
                let value = self.derive_line(gen, kind, &decl.name, rng)?;
                let key = decl.keys[rng.random_range(0..decl.keys.len())].clone();
                lines.push(DraftLine {
                    header: Some(h),
                    key,
                    value,
                });
            }
        }
        lines.shuffle(rng);
        let command = self.fix_equalities(kind, &command, &mut lines)?;

        let tree = DerivationTree::build(self.source, kind, &command, &lines)?;
        if !engine::validate(self.compiled, &tree.bytes).accepted() {
            return None;
        }
        (self.ground_truth().label(&tree.bytes).ok()? == Label::Valid).then_some(tree)
    }
}

fn entry_ref(entry: &str) -> EntryRef {
    match entry {
        "requestLine" => EntryRef::RequestLine,
        "statusLine" => EntryRef::StatusLine,
        name => EntryRef::Header(name.to_string()),
    }
}

/// A random message the engine accepts and the ground truth labels VALID,
/// with its derivation tree.
pub fn derive_valid(h: &Harness, seed: u64) -> Result<DerivationTree, MutationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = Generator::new(h.source, h.size_budget);
    (0..MESSAGE_ATTEMPTS)
        .find_map(|_| h.attempt(&mut gen, &mut rng))
        .ok_or(MutationError::BudgetExhausted)
}
