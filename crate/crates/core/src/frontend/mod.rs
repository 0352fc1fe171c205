//! The annotation layer on top of ABNF.
//!
//! A specification file mixes plain ABNF rules with annotated items:
//!
//! ```text
//! protocol sip3261
//!
//! request {
//!   requestLine = Method:method SP Request-URI:uri:struct:lazy SP SIP-Version;
//!   CSeq.method == requestLine.method;
//!   mandatory Max-Forwards;
//! }
//! response {
//!   statusLine = SIP-Version SP Status-Code:code:uint16 SP Reason-Phrase;
//!   100 <= statusLine.code && statusLine.code < 699;
//! }
//! header CSeq = 1*DIGIT:number:uint32 LWS Method:method { mandatory; number < 2147483648 }
//! header To { "To" / "t" } = ( name-addr / addr-spec ) *( SEMI to-param ) { mandatory; readonly }
//! Method = INVITEm / ACKm / extension-method { enum }
//! ```
//!
//! `X:name[:type][:lazy]` names the text derived by `X` as a subfield.
//! Braces after a header name list its key variants; braces at the end of
//! an item hold flags and constraints separated by `;`. Inside braces `;`
//! separates statements; elsewhere it starts a comment.

mod constraint;
mod resolve;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::abnf::{self, Capture, Cursor, Dialect, Element, ElementParser, Grammar, Rule, Shape, Span, SyntaxError};

pub use constraint::{CmpOp, Constraint, ConstraintExpr, EntryRef, FieldBinding, FieldRef, Operand};
pub(crate) use constraint::ExprParser;
pub use resolve::{resolve_constraint_refs, subfields_of, SubfieldInfo};
pub(crate) use resolve::{capture_shape, resolve_all};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrontendError {
    #[error("{0}")]
    Syntax(#[from] SyntaxError),
    #[error("{span}: duplicate entry point `{name}`")]
    DuplicateEntryPoint { name: String, span: Span },
    #[error("{span}: unknown annotation `{word}`")]
    UnknownAnnotation { word: String, span: Span },
    #[error("{span}: unresolved field reference `{path}` in constraint `{constraint}`: {reason}")]
    UnresolvedFieldRef {
        path: String,
        constraint: String,
        reason: String,
        span: Span,
    },
    #[error("{span}: subfield `{name}` declared twice in `{entry}`")]
    DuplicateSubfield { entry: String, name: String, span: Span },
}

impl FrontendError {
    pub fn span(&self) -> Span {
        match self {
            FrontendError::Syntax(e) => e.span,
            FrontendError::DuplicateEntryPoint { span, .. }
            | FrontendError::UnknownAnnotation { span, .. }
            | FrontendError::UnresolvedFieldRef { span, .. }
            | FrontendError::DuplicateSubfield { span, .. } => *span,
        }
    }
}

/// Message kinds a header is mandatory in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    #[default]
    None,
    Request,
    Response,
    Both,
}

impl Presence {
    pub fn merge(self, other: Presence) -> Presence {
        use Presence::*;
        match (self, other) {
            (None, x) | (x, None) => x,
            (Request, Request) => Request,
            (Response, Response) => Response,
            _ => Both,
        }
    }

    pub fn in_request(self) -> bool {
        matches!(self, Presence::Request | Presence::Both)
    }

    pub fn in_response(self) -> bool {
        matches!(self, Presence::Response | Presence::Both)
    }
}

/// Inclusive lower bound and optional upper bound on a numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeBound {
    pub lo: u64,
    pub hi: Option<u64>,
    pub hi_strict: bool,
}

impl RangeBound {
    pub fn contains(&self, value: u64) -> bool {
        value >= self.lo
            && match self.hi {
                None => true,
                Some(hi) if self.hi_strict => value < hi,
                Some(hi) => value <= hi,
            }
    }

    /// Smallest value above the range, if any.
    pub fn first_above(&self) -> Option<u64> {
        self.hi.map(|hi| if self.hi_strict { hi } else { hi + 1 })
    }

    pub fn last_below(&self) -> Option<u64> {
        self.lo.checked_sub(1)
    }

    /// Lowers a conjunction of `field <op> integer` comparisons over the
    /// fields accepted by `is_target` into a single range.
    pub fn from_expr(expr: &ConstraintExpr, is_target: impl Fn(&FieldRef) -> bool) -> Option<RangeBound> {
        let mut lo = 0u64;
        let mut hi: Option<(u64, bool)> = None;
        fn exclusive(v: u64, strict: bool) -> u128 {
            if strict { v as u128 } else { v as u128 + 1 }
        }
        for (op, a, b) in expr.conjuncts()? {
            let (op, value) = match (a, b) {
                (Operand::Field(f), Operand::Int(v)) if is_target(f) => (op, *v),
                (Operand::Int(v), Operand::Field(f)) if is_target(f) => (op.flipped(), *v),
                _ => return None,
            };
            let tighten_hi = |hi: &mut Option<(u64, bool)>, v: u64, strict: bool| match hi {
                Some((h, s)) if exclusive(*h, *s) <= exclusive(v, strict) => {}
                _ => *hi = Some((v, strict)),
            };
            match op {
                CmpOp::Lt => tighten_hi(&mut hi, value, true),
                CmpOp::Le => tighten_hi(&mut hi, value, false),
                CmpOp::Gt => lo = lo.max(value.checked_add(1)?),
                CmpOp::Ge => lo = lo.max(value),
                CmpOp::Eq => {
                    lo = lo.max(value);
                    tighten_hi(&mut hi, value, false);
                }
                CmpOp::Ne => return None,
            }
        }
        Some(RangeBound {
            lo,
            hi: hi.map(|(h, _)| h),
            hi_strict: hi.is_some_and(|(_, s)| s),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubfieldAnnotation {
    pub name: String,
    pub shape: Shape,
    pub lazy: bool,
    /// Referenced rule name, or `None` for an inline element.
    pub attached_to: Option<String>,
    pub span: Span,
}

impl SubfieldAnnotation {
    pub(crate) fn from_capture(cap: &Capture) -> Self {
        SubfieldAnnotation {
            name: cap.name.clone(),
            shape: cap.shape.unwrap_or(Shape::RawSlice),
            lazy: cap.lazy,
            attached_to: match &cap.inner {
                Element::RuleRef(name) => Some(name.clone()),
                _ => None,
            },
            span: cap.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderDecl {
    pub name: String,
    /// Case-insensitive literal, or an alternation of them.
    pub key_pattern: Element,
    /// Value grammar, key and delimiter removed.
    pub body: Element,
    pub mandatory_in: Presence,
    pub multiple: bool,
    /// Accepted for compatibility; carries no runtime semantics.
    pub readonly: bool,
    /// Annotations written directly in the body, in declaration order.
    pub subfields: Vec<SubfieldAnnotation>,
    pub local_constraints: Vec<Constraint>,
    pub span: Span,
}

impl HeaderDecl {
    /// Every key spelling, in declaration order.
    pub fn keys(&self) -> Vec<String> {
        match &self.key_pattern {
            Element::LiteralCi(k) => vec![k.clone()],
            Element::Alternation(items) => items
                .iter()
                .filter_map(|e| match e {
                    Element::LiteralCi(k) => Some(k.clone()),
                    _ => None,
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotatedGrammar {
    pub protocol: String,
    pub base: Grammar,
    pub request_line: Option<Rule>,
    pub status_line: Option<Rule>,
    pub headers: Vec<HeaderDecl>,
    pub request_block: Vec<Constraint>,
    pub response_block: Vec<Constraint>,
    /// Keyed by lower-cased rule name.
    pub range_constraints: BTreeMap<String, RangeBound>,
    /// Definition-level types, keyed by lower-cased rule name.
    pub rule_shapes: BTreeMap<String, Shape>,
    /// Spans of definition-level type annotations, for diagnostics.
    #[serde(default)]
    pub rule_shape_spans: BTreeMap<String, Span>,
}

impl AnnotatedGrammar {
    pub fn header(&self, name: &str) -> Option<&HeaderDecl> {
        self.headers.iter().find(|h| h.name.eq_ignore_ascii_case(name))
    }

    pub fn entry_body(&self, entry: &EntryRef) -> Option<&Element> {
        match entry {
            EntryRef::RequestLine => self.request_line.as_ref().map(|r| &r.body),
            EntryRef::StatusLine => self.status_line.as_ref().map(|r| &r.body),
            EntryRef::Header(name) => self.header(name).map(|h| &h.body),
        }
    }

    /// Every entry point: the command lines first, then headers in order.
    pub fn entries(&self) -> Vec<EntryRef> {
        let mut out = Vec::new();
        if self.request_line.is_some() {
            out.push(EntryRef::RequestLine);
        }
        if self.status_line.is_some() {
            out.push(EntryRef::StatusLine);
        }
        out.extend(self.headers.iter().map(|h| EntryRef::Header(h.name.clone())));
        out
    }

    pub fn has_annotations(&self) -> bool {
        self.request_line.is_some()
            || self.status_line.is_some()
            || !self.headers.is_empty()
            || !self.request_block.is_empty()
            || !self.response_block.is_empty()
            || !self.range_constraints.is_empty()
            || !self.rule_shapes.is_empty()
    }
}

const FLAG_WORDS: &[&str] = &["mandatory", "multiple", "readonly", "lazy"];

enum BlockItem {
    Flag(String, Span),
    Constraint(Constraint),
}

struct ZebuParser<'s> {
    cursor: Cursor<'s>,
    g: AnnotatedGrammar,
    /// `mandatory X` statements from request/response blocks; the header
    /// may be declared after the block.
    pending_mandatory: Vec<(String, Presence, Span)>,
}

/// Parses an annotated grammar file.
pub fn parse_zebu(source: &str) -> Result<AnnotatedGrammar, FrontendError> {
    let mut p = ZebuParser {
        cursor: Cursor::new(source),
        g: AnnotatedGrammar {
            protocol: "zebu".to_string(),
            ..Default::default()
        },
        pending_mandatory: Vec::new(),
    };
    p.cursor.skip_trivia();
    if let Some((word, probe)) = p.cursor.after_word() {
        if word == "protocol" && probe.peek() != Some(b'=') {
            p.cursor = probe;
            p.g.protocol = p
                .cursor
                .rulename()
                .ok_or_else(|| p.cursor.error("expected a protocol name"))?;
        }
    }
    loop {
        p.cursor.skip_trivia();
        if p.cursor.at_end() {
            break;
        }
        p.item()?;
    }
    for (name, presence, span) in std::mem::take(&mut p.pending_mandatory) {
        let header = p
            .g
            .headers
            .iter_mut()
            .find(|h| h.name.eq_ignore_ascii_case(&name))
            .ok_or_else(|| SyntaxError::new(span, format!("mandatory header `{name}` is not declared")))?;
        header.mandatory_in = header.mandatory_in.merge(presence);
    }
    Ok(p.g)
}

impl<'s> ZebuParser<'s> {
    fn item(&mut self) -> Result<(), FrontendError> {
        let span = self.cursor.span();
        let Some((word, probe)) = self.cursor.after_word() else {
            return Err(self.cursor.error("expected a rule, header or block").into());
        };
        match word.as_str() {
            "request" | "response" if probe.peek() == Some(b'{') => {
                self.cursor = probe;
                self.block(word == "request")
            }
            "header" if probe.peek() != Some(b'=') => {
                self.cursor = probe;
                self.header(span)
            }
            "requestLine" | "statusLine" => {
                self.cursor = probe;
                let request = word == "requestLine";
                self.entry_line(request, span)?;
                self.cursor.skip_trivia();
                if self.cursor.peek() == Some(b'{') {
                    for item in self.annotation_block()? {
                        match item {
                            BlockItem::Constraint(c) => self.block_list(request).push(c),
                            BlockItem::Flag(word, span) => {
                                return Err(FrontendError::UnknownAnnotation { word, span })
                            }
                        }
                    }
                }
                Ok(())
            }
            _ => self.plain_rule(span),
        }
    }

    fn block_list(&mut self, request: bool) -> &mut Vec<Constraint> {
        if request {
            &mut self.g.request_block
        } else {
            &mut self.g.response_block
        }
    }

    fn entry_line(&mut self, request: bool, span: Span) -> Result<(), FrontendError> {
        let name = if request { "requestLine" } else { "statusLine" };
        if !self.cursor.eat(b'=') {
            return Err(self.cursor.error(format!("expected `=` after `{name}`")).into());
        }
        let body = ElementParser::new(&mut self.cursor, Dialect::Annotated)
            .for_rule(name)
            .alternation()?;
        let slot = if request {
            &mut self.g.request_line
        } else {
            &mut self.g.status_line
        };
        if slot.is_some() {
            return Err(FrontendError::DuplicateEntryPoint {
                name: name.to_string(),
                span,
            });
        }
        *slot = Some(Rule {
            name: name.to_string(),
            body,
            span,
        });
        Ok(())
    }

    fn block(&mut self, request: bool) -> Result<(), FrontendError> {
        self.cursor.bump();
        self.cursor.in_block += 1;
        loop {
            self.cursor.skip_trivia();
            if self.cursor.eat(b'}') {
                break;
            }
            if self.cursor.eat(b';') {
                continue;
            }
            if self.cursor.at_end() {
                return Err(self.cursor.error("unterminated block").into());
            }
            let span = self.cursor.span();
            let word = self.cursor.peek_word();
            let line_word = if request { "requestLine" } else { "statusLine" };
            if word.as_deref() == Some(line_word) && self.cursor.at_definition() {
                self.cursor.rulename();
                self.cursor.skip_trivia();
                self.entry_line(request, span)?;
            } else if word.as_deref() == Some("mandatory") && !self.at_expression_word() {
                self.cursor.rulename();
                let presence = if request {
                    Presence::Request
                } else {
                    Presence::Response
                };
                loop {
                    self.cursor.skip_trivia();
                    let at = self.cursor.span();
                    let name = self
                        .cursor
                        .rulename()
                        .ok_or_else(|| self.cursor.error("expected a header name after `mandatory`"))?;
                    self.pending_mandatory.push((name, presence, at));
                    self.cursor.skip_trivia();
                    if !self.cursor.eat(b',') {
                        break;
                    }
                }
            } else {
                let expr = ExprParser {
                    cursor: &mut self.cursor,
                }
                .expr()?;
                self.block_list(request).push(Constraint { expr, span });
            }
            self.cursor.skip_trivia();
            match self.cursor.peek() {
                Some(b';') | Some(b'}') => {}
                _ => return Err(self.cursor.error("expected `;` or `}`").into()),
            }
        }
        self.cursor.in_block -= 1;
        Ok(())
    }

    /// `mandatory` used as a field path or operand rather than a statement.
    fn at_expression_word(&self) -> bool {
        let Some((_, probe)) = self.cursor.after_word() else {
            return false;
        };
        matches!(probe.peek(), Some(b'.' | b'=' | b'!' | b'<' | b'>'))
    }

    fn header(&mut self, span: Span) -> Result<(), FrontendError> {
        let name = self
            .cursor
            .rulename()
            .ok_or_else(|| self.cursor.error("expected a header name"))?;
        if self.g.header(&name).is_some() {
            return Err(FrontendError::DuplicateEntryPoint { name, span });
        }
        self.cursor.skip_trivia();
        let key_pattern = if self.cursor.peek() == Some(b'{') {
            self.cursor.bump();
            self.cursor.in_block += 1;
            let at = self.cursor.span();
            let keys = ElementParser::new(&mut self.cursor, Dialect::Abnf)
                .for_rule(&name)
                .alternation()?;
            self.cursor.skip_trivia();
            self.cursor.expect(b'}', "`}` closing the key variants")?;
            self.cursor.in_block -= 1;
            let literal_only = match &keys {
                Element::LiteralCi(_) => true,
                Element::Alternation(items) => items.iter().all(|e| matches!(e, Element::LiteralCi(_))),
                _ => false,
            };
            if !literal_only {
                return Err(SyntaxError::new(at, "header key variants must be quoted strings separated by `/`").into());
            }
            self.cursor.skip_trivia();
            keys
        } else {
            Element::LiteralCi(name.clone())
        };
        if !self.cursor.eat(b'=') {
            return Err(self.cursor.error(format!("expected `=` after header `{name}`")).into());
        }
        let body = ElementParser::new(&mut self.cursor, Dialect::Annotated)
            .for_rule(&name)
            .alternation()?;
        let mut subfields = Vec::new();
        body.visit_captures(&mut |cap| subfields.push(SubfieldAnnotation::from_capture(cap)));
        let mut decl = HeaderDecl {
            name,
            key_pattern,
            body,
            mandatory_in: Presence::None,
            multiple: false,
            readonly: false,
            subfields,
            local_constraints: Vec::new(),
            span,
        };
        self.cursor.skip_trivia();
        if self.cursor.peek() == Some(b'{') {
            for item in self.annotation_block()? {
                match item {
                    BlockItem::Flag(word, span) => match word.as_str() {
                        "mandatory" => decl.mandatory_in = Presence::Both,
                        "multiple" => decl.multiple = true,
                        "readonly" => decl.readonly = true,
                        _ => return Err(FrontendError::UnknownAnnotation { word, span }),
                    },
                    BlockItem::Constraint(c) => decl.local_constraints.push(c),
                }
            }
        }
        self.g.headers.push(decl);
        Ok(())
    }

    fn plain_rule(&mut self, span: Span) -> Result<(), FrontendError> {
        let name = self
            .cursor
            .rulename()
            .ok_or_else(|| self.cursor.error("expected a rule name"))?;
        self.cursor.skip_trivia();
        let incremental = self.cursor.defined_as(&name)?;
        let body = ElementParser::new(&mut self.cursor, Dialect::Annotated)
            .for_rule(&name)
            .alternation()?;
        self.cursor.skip_trivia();
        if self.cursor.peek() == Some(b'{') {
            let key = name.to_ascii_lowercase();
            for item in self.annotation_block()? {
                match item {
                    BlockItem::Flag(word, at) => match Shape::from_keyword(&word) {
                        Some(shape) => {
                            self.g.rule_shapes.insert(key.clone(), shape);
                            self.g.rule_shape_spans.insert(key.clone(), at);
                        }
                        None => return Err(FrontendError::UnknownAnnotation { word, span: at }),
                    },
                    BlockItem::Constraint(c) => {
                        let range = RangeBound::from_expr(&c.expr, |f| f.path == ["value"]).ok_or_else(|| {
                            SyntaxError::new(
                                c.span,
                                "rule constraints must compare `value` with integer bounds",
                            )
                        })?;
                        self.g.range_constraints.insert(key.clone(), range);
                    }
                }
            }
        }
        abnf::add_rule(&mut self.g.base, Rule { name, body, span }, incremental);
        Ok(())
    }

    fn annotation_block(&mut self) -> Result<Vec<BlockItem>, FrontendError> {
        self.cursor.bump();
        self.cursor.in_block += 1;
        let mut items = Vec::new();
        loop {
            self.cursor.skip_trivia();
            if self.cursor.eat(b'}') {
                break;
            }
            if self.cursor.eat(b';') {
                continue;
            }
            if self.cursor.at_end() {
                return Err(self.cursor.error("unterminated annotation block").into());
            }
            let span = self.cursor.span();
            if let Some((word, probe)) = self.cursor.after_word() {
                if matches!(probe.peek(), Some(b';' | b'}')) {
                    if FLAG_WORDS.contains(&word.as_str()) || Shape::from_keyword(&word).is_some() {
                        self.cursor = probe;
                        items.push(BlockItem::Flag(word, span));
                        continue;
                    }
                    return Err(FrontendError::UnknownAnnotation { word, span });
                }
            }
            let expr = ExprParser {
                cursor: &mut self.cursor,
            }
            .expr()?;
            items.push(BlockItem::Constraint(Constraint { expr, span }));
            self.cursor.skip_trivia();
            match self.cursor.peek() {
                Some(b';') | Some(b'}') => {}
                _ => return Err(self.cursor.error("expected `;` or `}` in annotation block").into()),
            }
        }
        self.cursor.in_block -= 1;
        Ok(items)
    }
}

#[cfg(test)]
mod tests;
