//! Reference matcher used as a test oracle.
//!
//! Interprets the grammar AST directly: each element maps a start offset to
//! the set of offsets where a derivation of it can end. Rule references are
//! looked up on demand and capture annotations are transparent, so lazy
//! content is always checked exactly. Shares no code with the compiler or
//! the interpreter.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::abnf::Element;
use crate::frontend::AnnotatedGrammar;

pub const DEFAULT_RECURSION_BUDGET: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("reference matcher exceeded its budget of {0} evaluations")]
pub struct RecursionBudgetExceeded(pub u64);

type Ends = Rc<BTreeSet<usize>>;

struct Oracle<'a> {
    g: &'a AnnotatedGrammar,
    subject: &'a [u8],
    memo: HashMap<(*const Element, usize), Ends>,
    evaluations: u64,
    budget: u64,
}

impl Oracle<'_> {
    fn ends(&mut self, e: &Element, at: usize) -> Result<Ends, RecursionBudgetExceeded> {
        let key = (e as *const Element, at);
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        self.evaluations += 1;
        if self.evaluations > self.budget {
            return Err(RecursionBudgetExceeded(self.budget));
        }
        let s = self.subject;
        let mut out = BTreeSet::new();
        match e {
            Element::LiteralCi(text) => {
                let t = text.as_bytes();
                if s.len() >= at + t.len() && s[at..at + t.len()].eq_ignore_ascii_case(t) {
                    out.insert(at + t.len());
                }
            }
            Element::CharCodes(bytes) => {
                if s[at..].starts_with(bytes) {
                    out.insert(at + bytes.len());
                }
            }
            Element::CharRange(lo, hi) => {
                if s.get(at).is_some_and(|b| (lo..=hi).contains(&b)) {
                    out.insert(at + 1);
                }
            }
            Element::RuleRef(name) => {
                // Re-entering a rule at the same offset (a cycle, which the
                // verifier rejects) derives nothing; an undefined rule neither.
                self.memo.insert(key, Rc::default());
                if let Some(rule) = self.g.base.resolve(name) {
                    out.extend(self.ends(&rule.body, at)?.iter());
                }
            }
            Element::Capture(cap) => out.extend(self.ends(&cap.inner, at)?.iter()),
            Element::Sequence(items) => {
                let mut frontier = BTreeSet::from([at]);
                for item in items {
                    let mut next = BTreeSet::new();
                    for p in frontier {
                        next.extend(self.ends(item, p)?.iter());
                    }
                    frontier = next;
                    if frontier.is_empty() {
                        break;
                    }
                }
                out = frontier;
            }
            Element::Alternation(items) => {
                for item in items {
                    out.extend(self.ends(item, at)?.iter());
                }
            }
            Element::Repetition { min, max, inner } => {
                if *min == 0 {
                    out.insert(at);
                }
                let mut frontier = BTreeSet::from([at]);
                let mut count = 0u32;
                while !frontier.is_empty() && max.is_none_or(|m| count < m) {
                    let mut next = BTreeSet::new();
                    for p in &frontier {
                        next.extend(self.ends(inner, *p)?.iter());
                    }
                    count += 1;
                    if count >= *min {
                        if max.is_none() {
                            // Past the minimum only unseen offsets can add ends.
                            next.retain(|p| !out.contains(p));
                        }
                        out.extend(next.iter());
                    }
                    frontier = next;
                }
            }
        }
        let ends = Rc::new(out);
        self.memo.insert(key, ends.clone());
        Ok(ends)
    }
}

/// Whether `subject` as a whole derives from `entry`.
pub fn reference_match(entry: &Element, g: &AnnotatedGrammar, subject: &[u8]) -> Result<bool, RecursionBudgetExceeded> {
    reference_match_with_budget(entry, g, subject, DEFAULT_RECURSION_BUDGET)
}

pub fn reference_match_with_budget(
    entry: &Element,
    g: &AnnotatedGrammar,
    subject: &[u8],
    budget: u64,
) -> Result<bool, RecursionBudgetExceeded> {
    let mut oracle = Oracle {
        g,
        subject,
        memo: HashMap::new(),
        evaluations: 0,
        budget,
    };
    Ok(oracle.ends(entry, 0)?.contains(&subject.len()))
}
