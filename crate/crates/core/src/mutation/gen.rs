//! Random derivations of grammar elements.

use std::collections::HashMap;

use rand::Rng;

use crate::abnf::Element;
use crate::frontend::AnnotatedGrammar;

fn is_newline(b: u8) -> bool {
    b == b'\r' || b == b'\n'
}

/// Produces random strings derived from grammar elements. Every output
/// stays on one line: branches and repetitions that could only produce CR
/// or LF are never taken.
pub(crate) struct Generator<'g> {
    g: &'g AnnotatedGrammar,
    size_budget: u32,
    single_line: HashMap<String, bool>,
}

impl<'g> Generator<'g> {
    pub fn new(g: &'g AnnotatedGrammar, size_budget: u32) -> Self {
        Generator {
            g,
            size_budget,
            single_line: HashMap::new(),
        }
    }

    /// Whether `e` derives at least one string without CR or LF.
    pub fn single_line(&mut self, e: &Element) -> bool {
        match e {
            Element::LiteralCi(t) => !t.bytes().any(is_newline),
            Element::CharCodes(b) => !b.iter().any(|b| is_newline(*b)),
            Element::CharRange(lo, hi) => (*lo..=*hi).any(|b| !is_newline(b)),
            Element::RuleRef(name) => {
                let key = name.to_ascii_lowercase();
                if let Some(&known) = self.single_line.get(&key) {
                    return known;
                }
                // A cycle back into this rule cannot help.
                self.single_line.insert(key.clone(), false);
                let g = self.g;
                let ok = g.base.resolve(name).is_some_and(|r| self.single_line(&r.body));
                self.single_line.insert(key, ok);
                ok
            }
            Element::Sequence(items) => items.iter().all(|i| self.single_line(i)),
            Element::Alternation(items) => items.iter().any(|i| self.single_line(i)),
            Element::Repetition { min, inner, .. } => *min == 0 || self.single_line(inner),
            Element::Capture(cap) => self.single_line(&cap.inner),
        }
    }

    /// Count of iterations for a repetition: the minimum plus a geometric
    /// number of extras, within the bound and the size budget.
    pub fn iterations(&self, min: u32, max: Option<u32>, rng: &mut impl Rng) -> u32 {
        let room = max.map_or(self.size_budget, |m| m.saturating_sub(min).min(self.size_budget));
        let mut extra = 0;
        while extra < room && rng.random_bool(0.5) {
            extra += 1;
        }
        min + extra
    }

    pub fn generate(&mut self, e: &Element, rng: &mut impl Rng, out: &mut Vec<u8>) {
        match e {
            Element::LiteralCi(t) => out.extend_from_slice(t.as_bytes()),
            Element::CharCodes(b) => out.extend_from_slice(b),
            Element::CharRange(lo, hi) => {
                let choices: Vec<u8> = (*lo..=*hi).filter(|b| !is_newline(*b)).collect();
                out.push(choices[rng.random_range(0..choices.len())]);
            }
            Element::RuleRef(name) => {
                let g = self.g;
                if let Some(rule) = g.base.resolve(name) {
                    self.generate(&rule.body, rng, out);
                }
            }
            Element::Sequence(items) => items.iter().for_each(|i| self.generate(i, rng, out)),
            Element::Alternation(items) => {
                let usable: Vec<&Element> = items.iter().filter(|i| self.single_line(i)).collect();
                let pick = usable[rng.random_range(0..usable.len())];
                self.generate(pick, rng, out);
            }
            Element::Repetition { min, max, inner } => {
                let count = if self.single_line(inner) {
                    self.iterations(*min, *max, rng)
                } else {
                    0
                };
                for _ in 0..count {
                    self.generate(inner, rng, out);
                }
            }
            Element::Capture(cap) => self.generate(&cap.inner, rng, out),
        }
    }

    pub fn string(&mut self, e: &Element, rng: &mut impl Rng) -> Vec<u8> {
        let mut out = Vec::new();
        self.generate(e, rng, &mut out);
        out
    }
}
