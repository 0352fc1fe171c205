//! ABNF abstract syntax and the meta-syntax parser.
//!
//! The parser accepts the rule syntax used in RFC grammar extracts:
//! `name = elements`, incremental `name =/ elements`, quoted
//! case-insensitive strings, `%x`/`%d` numeric terminals (single values,
//! dotted concatenations and ranges), groups, options and every repetition
//! form. Repetition shorthands are normalized while parsing, so a parsed
//! [`Grammar`] only ever contains explicit `[min, max]` bounds.

mod core_rules;
mod parser;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use core_rules::core_rules;
pub(crate) use parser::{Cursor, Dialect, ElementParser};

/// Position in a source file, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct SyntaxError {
    pub span: Span,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(span: Span, message: impl Into<String>) -> Self {
        SyntaxError {
            span,
            message: message.into(),
        }
    }
}

/// Value shape a named subfield is converted to once its header is parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    RawSlice,
    Uint16,
    Uint32,
    Struct,
    Union,
    Enum,
}

impl Shape {
    pub fn keyword(self) -> &'static str {
        match self {
            Shape::RawSlice => "raw",
            Shape::Uint16 => "uint16",
            Shape::Uint32 => "uint32",
            Shape::Struct => "struct",
            Shape::Union => "union",
            Shape::Enum => "enum",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Shape> {
        Some(match word {
            "raw" => Shape::RawSlice,
            "uint16" => Shape::Uint16,
            "uint32" => Shape::Uint32,
            "struct" => Shape::Struct,
            "union" => Shape::Union,
            "enum" => Shape::Enum,
            _ => return None,
        })
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Shape::Uint16 | Shape::Uint32)
    }

    /// Exclusive upper bound of a numeric shape.
    pub fn numeric_limit(self) -> Option<u64> {
        match self {
            Shape::Uint16 => Some(1 << 16),
            Shape::Uint32 => Some(1 << 32),
            _ => None,
        }
    }

    /// Whether named subfields inside this shape are kept.
    pub fn is_aggregate(self) -> bool {
        matches!(self, Shape::Struct | Shape::Union)
    }
}

/// A named subfield annotation attached inline to an element
/// (`Nonterminal:name[:type][:lazy]`). Only the annotated dialect produces
/// these; plain ABNF never does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capture {
    pub name: String,
    pub shape: Option<Shape>,
    pub lazy: bool,
    pub span: Span,
    pub inner: Element,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    /// Quoted string, matched case-insensitively.
    LiteralCi(String),
    /// Explicit character codes, matched exactly.
    CharCodes(Vec<u8>),
    CharRange(u8, u8),
    RuleRef(String),
    Sequence(Vec<Element>),
    Alternation(Vec<Element>),
    Repetition {
        min: u32,
        max: Option<u32>,
        inner: Box<Element>,
    },
    Capture(Box<Capture>),
}

impl Element {
    pub fn repetition(min: u32, max: Option<u32>, inner: Element) -> Element {
        Element::Repetition {
            min,
            max,
            inner: Box::new(inner),
        }
    }

    pub fn rule(name: &str) -> Element {
        Element::RuleRef(name.to_string())
    }

    /// Calls `f` on every rule name referenced from this element, in order.
    pub fn visit_refs<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Element::RuleRef(name) => f(name),
            Element::Sequence(items) | Element::Alternation(items) => {
                items.iter().for_each(|item| item.visit_refs(f))
            }
            Element::Repetition { inner, .. } => inner.visit_refs(f),
            Element::Capture(cap) => cap.inner.visit_refs(f),
            Element::LiteralCi(_) | Element::CharCodes(_) | Element::CharRange(..) => {}
        }
    }

    pub fn visit_captures<'a>(&'a self, f: &mut impl FnMut(&'a Capture)) {
        match self {
            Element::Sequence(items) | Element::Alternation(items) => {
                items.iter().for_each(|item| item.visit_captures(f))
            }
            Element::Repetition { inner, .. } => inner.visit_captures(f),
            Element::Capture(cap) => {
                f(cap);
                cap.inner.visit_captures(f)
            }
            _ => {}
        }
    }

    /// Copy of this element with every capture annotation removed.
    pub fn strip_captures(&self) -> Element {
        match self {
            Element::Sequence(items) => {
                Element::Sequence(items.iter().map(Element::strip_captures).collect())
            }
            Element::Alternation(items) => {
                Element::Alternation(items.iter().map(Element::strip_captures).collect())
            }
            Element::Repetition { min, max, inner } => {
                Element::repetition(*min, *max, inner.strip_captures())
            }
            Element::Capture(cap) => cap.inner.strip_captures(),
            other => other.clone(),
        }
    }

    fn is_atom(&self) -> bool {
        matches!(
            self,
            Element::LiteralCi(_) | Element::CharCodes(_) | Element::CharRange(..) | Element::RuleRef(_)
        )
    }
}

fn write_codes(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    f.write_str("%x")?;
    for (i, b) in bytes.iter().enumerate() {
        if i > 0 {
            f.write_str(".")?;
        }
        write!(f, "{b:02X}")?;
    }
    Ok(())
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::LiteralCi(text) => write!(f, "\"{text}\""),
            Element::CharCodes(bytes) => write_codes(f, bytes),
            Element::CharRange(lo, hi) => write!(f, "%x{lo:02X}-{hi:02X}"),
            Element::RuleRef(name) => f.write_str(name),
            Element::Sequence(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    match item {
                        Element::Sequence(_) | Element::Alternation(_) => write!(f, "({item})")?,
                        _ => write!(f, "{item}")?,
                    }
                }
                Ok(())
            }
            Element::Alternation(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" / ")?;
                    }
                    match item {
                        Element::Alternation(_) => write!(f, "({item})")?,
                        _ => write!(f, "{item}")?,
                    }
                }
                Ok(())
            }
            Element::Repetition { min: 0, max: Some(1), inner } => write!(f, "[{inner}]"),
            Element::Repetition { min, max, inner } => {
                match (min, max) {
                    (n, Some(m)) if n == m => write!(f, "{n}")?,
                    (0, None) => f.write_str("*")?,
                    (n, None) => write!(f, "{n}*")?,
                    (0, Some(m)) => write!(f, "*{m}")?,
                    (n, Some(m)) => write!(f, "{n}*{m}")?,
                }
                if inner.is_atom() {
                    write!(f, "{inner}")
                } else {
                    write!(f, "({inner})")
                }
            }
            Element::Capture(cap) => {
                if cap.inner.is_atom() || matches!(cap.inner, Element::Repetition { .. }) {
                    write!(f, "{}", cap.inner)?;
                } else {
                    write!(f, "({})", cap.inner)?;
                }
                write!(f, ":{}", cap.name)?;
                if let Some(shape) = cap.shape {
                    write!(f, ":{}", shape.keyword())?;
                }
                if cap.lazy {
                    f.write_str(":lazy")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub body: Element,
    pub span: Span,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.name, self.body)
    }
}

/// Rules in source order. Duplicate definitions are kept (detecting them is
/// the verifier's job); lookups return the first definition.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Rule>", into = "Vec<Rule>")]
pub struct Grammar {
    rules: Vec<Rule>,
    index: HashMap<String, usize>,
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl Eq for Grammar {}

impl From<Vec<Rule>> for Grammar {
    fn from(rules: Vec<Rule>) -> Self {
        let mut grammar = Grammar::default();
        for rule in rules {
            grammar.push(rule);
        }
        grammar
    }
}

impl From<Grammar> for Vec<Rule> {
    fn from(grammar: Grammar) -> Self {
        grammar.rules
    }
}

impl Grammar {
    pub fn new() -> Self {
        Grammar::default()
    }

    pub fn push(&mut self, rule: Rule) {
        self.index
            .entry(rule.name.to_ascii_lowercase())
            .or_insert(self.rules.len());
        self.rules.push(rule);
    }

    pub fn get(&self, name: &str) -> Option<&Rule> {
        self.index
            .get(&name.to_ascii_lowercase())
            .map(|&i| &self.rules[i])
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Option<&mut Rule> {
        let i = *self.index.get(&name.to_ascii_lowercase())?;
        Some(&mut self.rules[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(&name.to_ascii_lowercase())
    }

    /// Looks the name up in this grammar, then among the core rules.
    pub fn resolve(&self, name: &str) -> Option<&Rule> {
        self.get(name).or_else(|| core_rules().get(name))
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn iter(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}

/// Parses plain ABNF rule definitions.
pub fn parse_abnf(source: &str) -> Result<Grammar, SyntaxError> {
    let mut cursor = Cursor::new(source);
    let mut grammar = Grammar::new();
    loop {
        cursor.skip_trivia();
        if cursor.at_end() {
            break;
        }
        let span = cursor.span();
        let name = cursor
            .rulename()
            .ok_or_else(|| SyntaxError::new(span, "expected a rule name"))?;
        cursor.skip_trivia();
        let incremental = cursor.defined_as(&name)?;
        let body = ElementParser::new(&mut cursor, Dialect::Abnf).alternation()?;
        add_rule(&mut grammar, Rule { name, body, span }, incremental);
    }
    Ok(grammar)
}

/// Adds a rule, merging `=/` definitions into the existing alternation.
pub(crate) fn add_rule(grammar: &mut Grammar, rule: Rule, incremental: bool) {
    if incremental {
        if let Some(existing) = grammar.get_mut(&rule.name) {
            let old = std::mem::replace(&mut existing.body, Element::Alternation(Vec::new()));
            let mut branches = match old {
                Element::Alternation(items) => items,
                other => vec![other],
            };
            match rule.body {
                Element::Alternation(items) => branches.extend(items),
                other => branches.push(other),
            }
            existing.body = Element::Alternation(branches);
            return;
        }
    }
    grammar.push(rule);
}

#[cfg(test)]
mod tests;
