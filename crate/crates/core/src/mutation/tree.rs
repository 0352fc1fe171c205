//! Derivation trees of generated messages.
//!
//! Each line is re-derived against its grammar entry with an ends-set
//! matcher, then one derivation is read back top-down. Node spans are in
//! message coordinates.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::rc::Rc;

use crate::abnf::Element;
use crate::engine::MessageKind;
use crate::frontend::AnnotatedGrammar;
use crate::matcher::ByteSet;

const EXTRACT_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminal {
    Literal(String),
    Codes(Vec<u8>),
    Range(u8, u8),
}

impl Terminal {
    /// Bytes the grammar allows at `offset` within this terminal.
    pub fn allowed(&self, offset: usize) -> ByteSet {
        match self {
            Terminal::Literal(t) => ByteSet::caseless(t.as_bytes()[offset]),
            Terminal::Codes(b) => {
                let mut s = ByteSet::new();
                s.insert(b[offset]);
                s
            }
            Terminal::Range(lo, hi) => ByteSet::range(*lo, *hi),
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Literal(t) => write!(f, "{t:?}"),
            Terminal::Codes(b) => {
                f.write_str("%x")?;
                for (i, byte) in b.iter().enumerate() {
                    if i > 0 {
                        f.write_str(".")?;
                    }
                    write!(f, "{byte:02X}")?;
                }
                Ok(())
            }
            Terminal::Range(lo, hi) => write!(f, "%x{lo:02X}-{hi:02X}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    /// A whole line; the root of its subtree.
    Line,
    /// The header key.
    Key,
    Rule(String),
    Terminal(Terminal),
    Alternation { branch: u32 },
    Repetition {
        min: u32,
        max: Option<u32>,
        iterations: Vec<Range<usize>>,
        inner: Element,
    },
    Capture { name: String, inner: Element },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub span: Range<usize>,
    pub parent: Option<usize>,
    /// Index into [`DerivationTree::lines`].
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineInfo {
    /// `requestLine`, `statusLine` or a header name.
    pub entry: String,
    /// Index of the header declaration.
    pub header: Option<usize>,
    /// The line without its CRLF.
    pub span: Range<usize>,
    pub key: Option<Range<usize>>,
    pub value: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationTree {
    pub bytes: Vec<u8>,
    pub kind: MessageKind,
    pub lines: Vec<LineInfo>,
    pub nodes: Vec<Node>,
}

/// One line of a message under construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DraftLine {
    pub header: Option<usize>,
    pub key: String,
    pub value: Vec<u8>,
}

type Ends = Rc<BTreeSet<usize>>;

struct Extractor<'a> {
    g: &'a AnnotatedGrammar,
    s: &'a [u8],
    base: usize,
    line: usize,
    memo: HashMap<(*const Element, usize), Ends>,
    evaluations: u64,
    nodes: Vec<Node>,
}

struct OverBudget;

impl<'a> Extractor<'a> {
    fn ends(&mut self, e: &Element, at: usize) -> Result<Ends, OverBudget> {
        let key = (e as *const Element, at);
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        self.evaluations += 1;
        if self.evaluations > EXTRACT_BUDGET {
            return Err(OverBudget);
        }
        let s = self.s;
        let mut out = BTreeSet::new();
        match e {
            Element::LiteralCi(t) => {
                let t = t.as_bytes();
                if s.get(at..at + t.len()).is_some_and(|w| w.eq_ignore_ascii_case(t)) {
                    out.insert(at + t.len());
                }
            }
            Element::CharCodes(b) => {
                if s.get(at..at + b.len()) == Some(b.as_slice()) {
                    out.insert(at + b.len());
                }
            }
            Element::CharRange(lo, hi) => {
                if s.get(at).is_some_and(|b| (*lo..=*hi).contains(b)) {
                    out.insert(at + 1);
                }
            }
            Element::RuleRef(name) => {
                self.memo.insert(key, Rc::default());
                if let Some(rule) = self.g.base.resolve(name) {
                    out = (*self.ends(&rule.body, at)?).clone();
                }
            }
            Element::Capture(cap) => out = (*self.ends(&cap.inner, at)?).clone(),
            Element::Sequence(items) => {
                out.insert(at);
                for item in items {
                    let mut next = BTreeSet::new();
                    for p in out {
                        next.extend(self.ends(item, p)?.iter());
                    }
                    out = next;
                }
            }
            Element::Alternation(items) => {
                for item in items {
                    out.extend(self.ends(item, at)?.iter());
                }
            }
            Element::Repetition { min, max, inner } => {
                for level in self.levels(*min, *max, inner, at, s.len())? {
                    out.extend(level.1.iter());
                }
            }
        }
        let ends = Rc::new(out);
        self.memo.insert(key, ends.clone());
        Ok(ends)
    }

    /// Offsets reachable after exactly `c` iterations, for every count that
    /// can end a derivation. Returns `(count, offsets)` for counts at or
    /// above `min`, after all the intermediate levels.
    #[allow(clippy::type_complexity)]
    fn levels(
        &mut self,
        min: u32,
        max: Option<u32>,
        inner: &Element,
        at: usize,
        len: usize,
    ) -> Result<Vec<(u32, BTreeSet<usize>)>, OverBudget> {
        // Past `min + remaining bytes` only empty iterations are possible.
        let cap = max.unwrap_or(u32::MAX).min(min.saturating_add((len - at) as u32 + 1));
        let mut out = Vec::new();
        let mut frontier = BTreeSet::from([at]);
        let mut count = 0;
        loop {
            if count >= min {
                out.push((count, frontier.clone()));
            }
            if count == cap || frontier.is_empty() {
                break;
            }
            let mut next = BTreeSet::new();
            for p in &frontier {
                next.extend(self.ends(inner, *p)?.iter());
            }
            frontier = next;
            count += 1;
        }
        Ok(out)
    }

    fn push(&mut self, kind: NodeKind, span: Range<usize>, parent: Option<usize>) -> usize {
        self.nodes.push(Node {
            kind,
            span: self.base + span.start..self.base + span.end,
            parent,
            line: self.line,
        });
        self.nodes.len() - 1
    }

    /// Records one derivation of `e` over `at..end`, which must be in the
    /// ends set of `e` at `at`.
    fn extract(&mut self, e: &Element, at: usize, end: usize, parent: Option<usize>) -> Result<(), OverBudget> {
        match e {
            Element::LiteralCi(t) => {
                if !t.is_empty() {
                    self.push(NodeKind::Terminal(Terminal::Literal(t.clone())), at..end, parent);
                }
            }
            Element::CharCodes(b) => {
                if !b.is_empty() {
                    self.push(NodeKind::Terminal(Terminal::Codes(b.clone())), at..end, parent);
                }
            }
            Element::CharRange(lo, hi) => {
                self.push(NodeKind::Terminal(Terminal::Range(*lo, *hi)), at..end, parent);
            }
            Element::RuleRef(name) => {
                let g = self.g;
                let rule = g.base.resolve(name).expect("matched rule resolves");
                let id = self.push(NodeKind::Rule(rule.name.clone()), at..end, parent);
                self.extract(&rule.body, at, end, Some(id))?;
            }
            Element::Capture(cap) => {
                let kind = NodeKind::Capture {
                    name: cap.name.clone(),
                    inner: cap.inner.clone(),
                };
                let id = self.push(kind, at..end, parent);
                self.extract(&cap.inner, at, end, Some(id))?;
            }
            Element::Alternation(items) => {
                for (i, item) in items.iter().enumerate() {
                    if self.ends(item, at)?.contains(&end) {
                        let id = self.push(NodeKind::Alternation { branch: i as u32 }, at..end, parent);
                        return self.extract(item, at, end, Some(id));
                    }
                }
                unreachable!("alternation matched without a matching branch");
            }
            Element::Sequence(items) => {
                let mut frontiers = vec![BTreeSet::from([at])];
                for item in &items[..items.len().saturating_sub(1)] {
                    let mut next = BTreeSet::new();
                    for p in frontiers.last().unwrap() {
                        next.extend(self.ends(item, *p)?.iter());
                    }
                    frontiers.push(next);
                }
                let mut bounds = vec![end; items.len() + 1];
                for j in (0..items.len()).rev() {
                    let target = bounds[j + 1];
                    let mut found = None;
                    for p in frontiers[j].iter().rev() {
                        if self.ends(&items[j], *p)?.contains(&target) {
                            found = Some(*p);
                            break;
                        }
                    }
                    bounds[j] = found.expect("sequence split exists");
                }
                for (j, item) in items.iter().enumerate() {
                    self.extract(item, bounds[j], bounds[j + 1], parent)?;
                }
            }
            Element::Repetition { min, max, inner } => {
                let levels = self.levels(*min, *max, inner, at, self.s.len())?;
                let (count, _) = levels
                    .iter()
                    .find(|(_, reach)| reach.contains(&end))
                    .cloned()
                    .expect("repetition count exists");
                // Offsets after exactly j iterations, for j < count.
                let mut reach = vec![BTreeSet::from([at])];
                for _ in 1..count {
                    let mut next = BTreeSet::new();
                    for p in reach.last().unwrap() {
                        next.extend(self.ends(inner, *p)?.iter());
                    }
                    reach.push(next);
                }
                let mut bounds = vec![end; count as usize + 1];
                for j in (0..count as usize).rev() {
                    let target = bounds[j + 1];
                    let mut found = None;
                    for p in reach[j].iter().rev() {
                        if self.ends(inner, *p)?.contains(&target) {
                            found = Some(*p);
                            break;
                        }
                    }
                    bounds[j] = found.expect("iteration split exists");
                }
                let iterations = bounds
                    .windows(2)
                    .map(|w| self.base + w[0]..self.base + w[1])
                    .collect();
                let id = self.push(
                    NodeKind::Repetition {
                        min: *min,
                        max: *max,
                        iterations,
                        inner: (**inner).clone(),
                    },
                    at..end,
                    parent,
                );
                for j in 0..count as usize {
                    self.extract(inner, bounds[j], bounds[j + 1], Some(id))?;
                }
            }
        }
        Ok(())
    }
}

/// Derives `subject` from `e` and appends the nodes, offset by `base`.
/// `None` if it does not derive or the work budget runs out.
fn derive_line(
    g: &AnnotatedGrammar,
    e: &Element,
    subject: &[u8],
    base: usize,
    line: usize,
    parent: Option<usize>,
    nodes: &mut Vec<Node>,
) -> Option<()> {
    let mut x = Extractor {
        g,
        s: subject,
        base,
        line,
        memo: HashMap::new(),
        evaluations: 0,
        nodes: std::mem::take(nodes),
    };
    let ok = x.ends(e, 0).ok()?.contains(&subject.len()) && x.extract(e, 0, subject.len(), parent).is_ok();
    *nodes = x.nodes;
    ok.then_some(())
}

impl DerivationTree {
    /// Lays out `command` and the header lines as a message and derives
    /// every line.
    pub(crate) fn build(g: &AnnotatedGrammar, kind: MessageKind, command: &[u8], headers: &[DraftLine]) -> Option<Self> {
        let mut bytes = Vec::new();
        let mut lines = Vec::new();
        let mut nodes = Vec::new();

        let entry_rule = match kind {
            MessageKind::Request => g.request_line.as_ref()?,
            MessageKind::Response => g.status_line.as_ref()?,
        };
        bytes.extend_from_slice(command);
        let span = 0..command.len();
        let root = Some(push_root(&mut nodes, NodeKind::Line, span.clone(), 0));
        derive_line(g, &entry_rule.body, command, 0, 0, root, &mut nodes)?;
        lines.push(LineInfo {
            entry: kind.entry().to_string(),
            header: None,
            span: span.clone(),
            key: None,
            value: span,
        });
        bytes.extend_from_slice(b"\r\n");

        for draft in headers {
            let decl = &g.headers[draft.header?];
            let n = lines.len();
            let start = bytes.len();
            bytes.extend_from_slice(draft.key.as_bytes());
            let key = start..bytes.len();
            bytes.extend_from_slice(b": ");
            let value = bytes.len()..bytes.len() + draft.value.len();
            bytes.extend_from_slice(&draft.value);
            let span = start..bytes.len();
            let root = Some(push_root(&mut nodes, NodeKind::Line, span.clone(), n));
            let key_node = Some(push_root(&mut nodes, NodeKind::Key, key.clone(), n));
            nodes.last_mut().unwrap().parent = root;
            derive_line(g, &decl.key_pattern, draft.key.as_bytes(), key.start, n, key_node, &mut nodes)?;
            nodes.push(Node {
                kind: NodeKind::Terminal(Terminal::Codes(b":".to_vec())),
                span: key.end..key.end + 1,
                parent: root,
                line: n,
            });
            derive_line(g, &decl.body, &draft.value, value.start, n, root, &mut nodes)?;
            lines.push(LineInfo {
                entry: decl.name.clone(),
                header: draft.header,
                span,
                key: Some(key),
                value,
            });
            bytes.extend_from_slice(b"\r\n");
        }
        bytes.extend_from_slice(b"\r\n");
        Some(DerivationTree { bytes, kind, lines, nodes })
    }

    pub fn terminals(&self) -> impl Iterator<Item = (usize, &Node, &Terminal)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match &n.kind {
            NodeKind::Terminal(t) if !n.span.is_empty() => Some((i, n, t)),
            _ => None,
        })
    }

    /// Capture nodes named `name` on line `line`.
    pub fn capture(&self, line: usize, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| {
            n.line == line && matches!(&n.kind, NodeKind::Capture { name: c, .. } if c == name)
        })
    }

    /// Lines holding instances of header `h`.
    pub fn header_lines(&self, h: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.lines.len()).filter(move |&i| self.lines[i].header == Some(h))
    }

    /// Byte range of a line including its CRLF.
    pub fn line_with_crlf(&self, line: usize) -> Range<usize> {
        let span = &self.lines[line].span;
        span.start..span.end + 2
    }

    /// Short name of a node for provenance: the innermost enclosing rule.
    pub fn describe(&self, node: usize) -> String {
        let entry = &self.lines[self.nodes[node].line].entry;
        let mut cur = Some(node);
        while let Some(i) = cur {
            match &self.nodes[i].kind {
                NodeKind::Rule(name) => return format!("{entry}/{name}"),
                NodeKind::Capture { name, .. } => return format!("{entry}.{name}"),
                NodeKind::Key => return format!("{entry}/key"),
                _ => cur = self.nodes[i].parent,
            }
        }
        entry.clone()
    }
}

fn push_root(nodes: &mut Vec<Node>, kind: NodeKind, span: Range<usize>, line: usize) -> usize {
    nodes.push(Node {
        kind,
        span,
        parent: None,
        line,
    });
    nodes.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn draft(g: &AnnotatedGrammar, name: &str, key: &str, value: &str) -> DraftLine {
        DraftLine {
            header: g.headers.iter().position(|h| h.name == name),
            key: key.to_string(),
            value: value.as_bytes().to_vec(),
        }
    }

    #[test]
    fn spans_cover_lines_and_terminals_tile_values() {
        let g = bundled::sip();
        let headers = vec![
            draft(&g, "CSeq", "CSeq", "17 INVITE"),
            draft(&g, "Call-ID", "i", "abc@host"),
        ];
        let t = DerivationTree::build(&g, MessageKind::Request, b"INVITE sip:bob@biloxi.com SIP/2.0", &headers).unwrap();
        assert_eq!(&t.bytes[..], &b"INVITE sip:bob@biloxi.com SIP/2.0\r\nCSeq: 17 INVITE\r\ni: abc@host\r\n\r\n"[..]);
        assert_eq!(t.lines.len(), 3);
        assert_eq!(&t.bytes[t.lines[1].value.clone()], b"17 INVITE");

        // Terminals of the CSeq line cover key, colon and value bytes once.
        let mut covered: Vec<usize> = t
            .terminals()
            .filter(|(_, n, _)| n.line == 1)
            .flat_map(|(_, n, _)| n.span.clone())
            .collect();
        covered.sort();
        let line = &t.lines[1];
        let mut expected: Vec<usize> = line.span.clone().filter(|i| *i != line.key.as_ref().unwrap().end + 1).collect();
        expected.sort();
        assert_eq!(covered, expected);

        let number = t.capture(1, "number").unwrap();
        assert_eq!(&t.bytes[number.span.clone()], b"17");
        let reps: Vec<_> = t
            .nodes
            .iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Repetition { min: 1, iterations, .. } if n.parent == Some(t.nodes.iter().position(|m| m == number).unwrap()) => Some(iterations.len()),
                _ => None,
            })
            .collect();
        assert_eq!(reps, vec![2]);
    }

    #[test]
    fn non_derivable_line_gives_none() {
        let g = bundled::sip();
        let headers = vec![draft(&g, "CSeq", "CSeq", "x INVITE")];
        assert!(DerivationTree::build(&g, MessageKind::Request, b"INVITE sip:a SIP/2.0", &headers).is_none());
    }
}
