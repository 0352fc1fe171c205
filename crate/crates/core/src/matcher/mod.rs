//! Entry bodies compiled to fully inlined match patterns.
//!
//! A [`Pattern`] is a structural tree (serialized into the artifact) plus a
//! lazily built program for the backtracking interpreter in [`vm`]. Lazy
//! subfields are replaced in the header-level pattern by a run over the
//! byte closure of their content; each gets its own exact sub-pattern that
//! runs only when forced.

mod reference;
mod vm;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::abnf::{Element, Shape};
use crate::frontend::{AnnotatedGrammar, RangeBound, SubfieldInfo};

pub use reference::{reference_match, reference_match_with_budget, RecursionBudgetExceeded, DEFAULT_RECURSION_BUDGET};
pub use vm::{MatchOutcome, DEFAULT_STEP_BUDGET};

/// Set of bytes, one bit per value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ByteSet([u64; 4]);

impl ByteSet {
    pub fn new() -> Self {
        ByteSet([0; 4])
    }

    pub fn range(lo: u8, hi: u8) -> Self {
        let mut s = ByteSet::new();
        for b in lo..=hi {
            s.insert(b);
        }
        s
    }

    pub fn insert(&mut self, b: u8) {
        self.0[(b >> 6) as usize] |= 1 << (b & 63);
    }

    pub fn contains(&self, b: u8) -> bool {
        self.0[(b >> 6) as usize] & (1 << (b & 63)) != 0
    }

    pub fn union(&mut self, other: &ByteSet) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a |= b;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..=255u8).filter(|b| self.contains(*b))
    }

    /// Both ASCII cases of `b`.
    pub fn caseless(b: u8) -> Self {
        let mut s = ByteSet::new();
        s.insert(b.to_ascii_lowercase());
        s.insert(b.to_ascii_uppercase());
        s
    }

    fn ranges(&self) -> Vec<[u8; 2]> {
        let mut out: Vec<[u8; 2]> = Vec::new();
        for b in self.iter() {
            match out.last_mut() {
                Some(r) if r[1] as u16 + 1 == b as u16 => r[1] = b,
                _ => out.push([b, b]),
            }
        }
        out
    }
}

impl fmt::Debug for ByteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for [lo, hi] in self.ranges() {
            if lo == hi {
                write!(f, "{lo:02x}")?;
            } else {
                write!(f, "{lo:02x}-{hi:02x}")?;
            }
            f.write_str(" ")?;
        }
        f.write_str("]")
    }
}

impl Serialize for ByteSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.ranges().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ByteSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ranges = Vec::<[u8; 2]>::deserialize(d)?;
        let mut s = ByteSet::new();
        for [lo, hi] in ranges {
            s.union(&ByteSet::range(lo, hi));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternNode {
    /// ASCII case-insensitive text.
    LiteralCi(String),
    Bytes(Vec<u8>),
    Set(ByteSet),
    Seq(Vec<PatternNode>),
    Alt(Vec<PatternNode>),
    Repeat {
        min: u32,
        max: Option<u32>,
        inner: Box<PatternNode>,
    },
    Capture {
        slot: usize,
        /// Record which branch of the inner alternation matched.
        tag_branch: bool,
        inner: Box<PatternNode>,
    },
}

impl PatternNode {
    pub fn nullable(&self) -> bool {
        match self {
            PatternNode::LiteralCi(t) => t.is_empty(),
            PatternNode::Bytes(b) => b.is_empty(),
            PatternNode::Set(_) => false,
            PatternNode::Seq(items) => items.iter().all(PatternNode::nullable),
            PatternNode::Alt(items) => items.iter().any(PatternNode::nullable),
            PatternNode::Repeat { min, inner, .. } => *min == 0 || inner.nullable(),
            PatternNode::Capture { inner, .. } => inner.nullable(),
        }
    }

    /// Every byte that can appear in a matching subject.
    pub fn closure(&self) -> ByteSet {
        let mut set = ByteSet::new();
        self.collect_bytes(&mut set);
        set
    }

    fn collect_bytes(&self, set: &mut ByteSet) {
        match self {
            PatternNode::LiteralCi(t) => t.bytes().for_each(|b| set.union(&ByteSet::caseless(b))),
            PatternNode::Bytes(bytes) => bytes.iter().for_each(|b| set.insert(*b)),
            PatternNode::Set(s) => set.union(s),
            PatternNode::Seq(items) | PatternNode::Alt(items) => {
                items.iter().for_each(|i| i.collect_bytes(set))
            }
            PatternNode::Repeat { max: Some(0), .. } => {}
            PatternNode::Repeat { inner, .. } | PatternNode::Capture { inner, .. } => {
                inner.collect_bytes(set)
            }
        }
    }

    fn only_literals(&self) -> bool {
        match self {
            PatternNode::LiteralCi(_) => true,
            PatternNode::Bytes(_) | PatternNode::Set(_) => false,
            PatternNode::Seq(items) | PatternNode::Alt(items) => items.iter().all(PatternNode::only_literals),
            PatternNode::Repeat { inner, .. } | PatternNode::Capture { inner, .. } => inner.only_literals(),
        }
    }

    fn size(&self) -> usize {
        match self {
            PatternNode::Seq(items) | PatternNode::Alt(items) => 1 + items.iter().map(PatternNode::size).sum::<usize>(),
            PatternNode::Repeat { inner, .. } | PatternNode::Capture { inner, .. } => 1 + inner.size(),
            _ => 1,
        }
    }
}

/// Per-capture metadata shared by an entry's pattern and its lazy
/// sub-patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub name: String,
    pub shape: Shape,
    pub lazy: bool,
    pub parent: Option<String>,
    pub within_lazy: Option<String>,
    /// Every terminal below the capture is a case-insensitive literal.
    #[serde(default)]
    pub caseless: bool,
    /// Display text of each alternation branch, for union and enum slots.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branch_labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Pattern {
    pub root: PatternNode,
    /// Subfield name to slot id.
    pub capture_index: BTreeMap<String, usize>,
    pub slots: Vec<SlotInfo>,
    pub deferred_range_checks: BTreeMap<String, RangeBound>,
    /// Exact patterns for lazy subfields, keyed by subfield name. Each one's
    /// root is the capture of that subfield.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub lazy: BTreeMap<String, Pattern>,
    #[serde(skip)]
    program: OnceLock<vm::Program>,
}

impl Clone for Pattern {
    fn clone(&self) -> Self {
        Pattern {
            root: self.root.clone(),
            capture_index: self.capture_index.clone(),
            slots: self.slots.clone(),
            deferred_range_checks: self.deferred_range_checks.clone(),
            lazy: self.lazy.clone(),
            program: OnceLock::new(),
        }
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
            && self.capture_index == other.capture_index
            && self.slots == other.slots
            && self.deferred_range_checks == other.deferred_range_checks
            && self.lazy == other.lazy
    }
}

impl Eq for Pattern {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureSpan {
    pub start: usize,
    pub end: usize,
    pub branch: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub matched: bool,
    /// Indexed by slot; `None` for captures the derivation never entered.
    pub captures: Vec<Option<CaptureSpan>>,
}

impl MatchResult {
    pub fn capture(&self, slot: usize) -> Option<CaptureSpan> {
        self.captures.get(slot).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("rule inlining exceeded depth {depth} at `{rule}` (cyclic grammar?)")]
    InliningDepthExceeded { rule: String, depth: usize },
    #[error("undefined rule `{0}`")]
    UndefinedRule(String),
    #[error("pattern for `{0}` exceeds the size limit")]
    TooLarge(String),
}

const MAX_INLINE_DEPTH: usize = 256;
const MAX_PATTERN_NODES: usize = 1 << 20;

struct Inliner<'g> {
    g: &'g AnnotatedGrammar,
    space: &'g [SubfieldInfo],
    depth: usize,
    labels: Vec<Vec<String>>,
}

impl Inliner<'_> {
    fn slot(&self, name: &str) -> usize {
        self.space
            .iter()
            .position(|s| s.name == name)
            .expect("subfield namespace covers every capture")
    }

    fn node(&mut self, e: &Element) -> Result<PatternNode, CompileError> {
        Ok(match e {
            Element::LiteralCi(t) => PatternNode::LiteralCi(t.clone()),
            Element::CharCodes(b) => PatternNode::Bytes(b.clone()),
            Element::CharRange(lo, hi) => PatternNode::Set(ByteSet::range(*lo, *hi)),
            Element::RuleRef(name) => {
                if self.depth >= MAX_INLINE_DEPTH {
                    return Err(CompileError::InliningDepthExceeded {
                        rule: name.clone(),
                        depth: self.depth,
                    });
                }
                let rule = self
                    .g
                    .base
                    .resolve(name)
                    .ok_or_else(|| CompileError::UndefinedRule(name.clone()))?;
                self.depth += 1;
                let node = self.node(&rule.body);
                self.depth -= 1;
                node?
            }
            Element::Sequence(items) => PatternNode::Seq(items.iter().map(|i| self.node(i)).collect::<Result<_, _>>()?),
            Element::Alternation(items) => {
                PatternNode::Alt(items.iter().map(|i| self.node(i)).collect::<Result<_, _>>()?)
            }
            Element::Repetition { min, max, inner } => PatternNode::Repeat {
                min: *min,
                max: *max,
                inner: Box::new(self.node(inner)?),
            },
            Element::Capture(cap) => {
                let slot = self.slot(&cap.name);
                let inner = self.node(&cap.inner)?;
                let tag_branch = matches!(self.space[slot].shape, Shape::Union | Shape::Enum)
                    && matches!(inner, PatternNode::Alt(_));
                if tag_branch && self.labels[slot].is_empty() {
                    self.labels[slot] = branch_labels(self.g, &cap.inner);
                }
                PatternNode::Capture {
                    slot,
                    tag_branch,
                    inner: Box::new(inner),
                }
            }
        })
    }
}

/// Replaces every lazy capture below the root by a run over its closure.
fn skip_lazy(node: &PatternNode, slots: &[SlotInfo], is_root: bool) -> PatternNode {
    match node {
        PatternNode::Capture { slot, inner, .. } if slots[*slot].lazy && !is_root => PatternNode::Capture {
            slot: *slot,
            tag_branch: false,
            inner: Box::new(PatternNode::Repeat {
                min: u32::from(!inner.nullable()),
                max: None,
                inner: Box::new(PatternNode::Set(inner.closure())),
            }),
        },
        PatternNode::Capture { slot, tag_branch, inner } => PatternNode::Capture {
            slot: *slot,
            tag_branch: *tag_branch,
            inner: Box::new(skip_lazy(inner, slots, false)),
        },
        PatternNode::Seq(items) => PatternNode::Seq(items.iter().map(|i| skip_lazy(i, slots, false)).collect()),
        PatternNode::Alt(items) => PatternNode::Alt(items.iter().map(|i| skip_lazy(i, slots, false)).collect()),
        PatternNode::Repeat { min, max, inner } => PatternNode::Repeat {
            min: *min,
            max: *max,
            inner: Box::new(skip_lazy(inner, slots, false)),
        },
        other => other.clone(),
    }
}

fn find_capture(node: &PatternNode, target: usize) -> Option<&PatternNode> {
    match node {
        PatternNode::Capture { slot, .. } if *slot == target => Some(node),
        PatternNode::Capture { inner, .. } | PatternNode::Repeat { inner, .. } => find_capture(inner, target),
        PatternNode::Seq(items) | PatternNode::Alt(items) => items.iter().find_map(|i| find_capture(i, target)),
        _ => None,
    }
}

fn branch_labels(g: &AnnotatedGrammar, e: &Element) -> Vec<String> {
    let mut e = e;
    for _ in 0..MAX_INLINE_DEPTH {
        match e {
            Element::RuleRef(name) => match g.base.resolve(name) {
                Some(rule) => e = &rule.body,
                None => break,
            },
            Element::Capture(cap) => e = &cap.inner,
            Element::Alternation(items) => {
                return items
                    .iter()
                    .map(|item| match item {
                        Element::LiteralCi(t) => t.clone(),
                        Element::CharCodes(b) => String::from_utf8_lossy(b).into_owned(),
                        other => other.to_string(),
                    })
                    .collect()
            }
            _ => break,
        }
    }
    Vec::new()
}

/// Compiles an entry body against its subfield namespace.
pub fn compile_pattern(
    body: &Element,
    g: &AnnotatedGrammar,
    space: &[SubfieldInfo],
    ranges: &BTreeMap<String, RangeBound>,
) -> Result<Pattern, CompileError> {
    let mut inliner = Inliner {
        g,
        space,
        depth: 0,
        labels: vec![Vec::new(); space.len()],
    };
    let eager = inliner.node(body)?;
    if eager.size() > MAX_PATTERN_NODES {
        return Err(CompileError::TooLarge(body.to_string()));
    }
    let mut slots: Vec<SlotInfo> = space
        .iter()
        .zip(inliner.labels)
        .map(|(s, branch_labels)| SlotInfo {
            name: s.name.clone(),
            shape: s.shape,
            lazy: s.lazy,
            parent: s.parent.clone(),
            within_lazy: s.within_lazy.clone(),
            caseless: false,
            branch_labels,
        })
        .collect();
    for (i, slot) in slots.iter_mut().enumerate() {
        slot.caseless = find_capture(&eager, i).is_some_and(PatternNode::only_literals);
    }
    let capture_index: BTreeMap<String, usize> =
        slots.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
    let mut lazy = BTreeMap::new();
    for (i, slot) in slots.iter().enumerate().filter(|(_, s)| s.lazy) {
        let Some(node) = find_capture(&eager, i) else { continue };
        lazy.insert(
            slot.name.clone(),
            Pattern::new(skip_lazy(node, &slots, true), capture_index.clone(), slots.clone(), ranges.clone(), BTreeMap::new()),
        );
    }
    Ok(Pattern::new(
        skip_lazy(&eager, &slots, false),
        capture_index,
        slots,
        ranges.clone(),
        lazy,
    ))
}

impl Pattern {
    pub fn new(
        root: PatternNode,
        capture_index: BTreeMap<String, usize>,
        slots: Vec<SlotInfo>,
        deferred_range_checks: BTreeMap<String, RangeBound>,
        lazy: BTreeMap<String, Pattern>,
    ) -> Self {
        Pattern {
            root,
            capture_index,
            slots,
            deferred_range_checks,
            lazy,
            program: OnceLock::new(),
        }
    }

    /// Pattern with no captures, for tests and the oracle comparisons.
    pub fn bare(body: &Element, g: &AnnotatedGrammar) -> Result<Pattern, CompileError> {
        compile_pattern(&body.strip_captures(), g, &[], &BTreeMap::new())
    }

    fn program(&self) -> &vm::Program {
        self.program.get_or_init(|| vm::Program::compile(&self.root))
    }

    /// Full-subject match with the default step budget. A budget overrun
    /// counts as a non-match here; use [`Pattern::run`] to tell them apart.
    pub fn match_full(&self, subject: &[u8]) -> MatchResult {
        match self.run(subject, DEFAULT_STEP_BUDGET) {
            MatchOutcome::Matched(captures) => MatchResult {
                matched: true,
                captures,
            },
            _ => MatchResult {
                matched: false,
                captures: Vec::new(),
            },
        }
    }

    pub fn run(&self, subject: &[u8], budget: u64) -> MatchOutcome {
        self.program().exec(subject, self.slots.len(), budget)
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.capture_index.get(name).copied()
    }
}

/// Free-function form of [`Pattern::match_full`].
pub fn match_full(p: &Pattern, subject: &[u8]) -> MatchResult {
    p.match_full(subject)
}

#[cfg(test)]
mod tests;
