use super::{Capture, Element, Shape, Span, SyntaxError};

pub(crate) fn is_rulename_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'-' || b == b'_'
}

/// Byte cursor with line/column tracking.
///
/// Outside brace blocks `;` starts a comment running to the end of the line.
/// Inside blocks (`in_block > 0`) it is a statement separator instead.
#[derive(Clone)]
pub(crate) struct Cursor<'s> {
    src: &'s [u8],
    pos: usize,
    line: u32,
    col: u32,
    pub in_block: u32,
}

impl<'s> Cursor<'s> {
    pub fn new(src: &'s str) -> Self {
        Cursor {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
            in_block: 0,
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    pub fn peek_at(&self, offset: usize) -> Option<u8> {
        self.src.get(self.pos + offset).copied()
    }

    pub fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    pub fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    pub fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError::new(self.span(), message)
    }

    pub fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, b: u8, what: &str) -> Result<(), SyntaxError> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    pub fn skip_trivia(&mut self) {
        while let Some(b) = self.peek() {
            match b {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b';' if self.in_block == 0 => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    pub fn rulename(&mut self) -> Option<String> {
        if !self.peek()?.is_ascii_alphabetic() {
            return None;
        }
        let start = self.pos;
        while self.peek().is_some_and(is_rulename_byte) {
            self.bump();
        }
        Some(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    /// Identifier at the cursor, without consuming it.
    pub fn peek_word(&self) -> Option<String> {
        self.clone().rulename()
    }

    /// `word` followed by trivia, without consuming anything.
    pub fn after_word(&self) -> Option<(String, Cursor<'s>)> {
        let mut probe = self.clone();
        let word = probe.rulename()?;
        probe.skip_trivia();
        Some((word, probe))
    }

    /// True when the cursor sits on `name =` or `name =/`.
    pub fn at_definition(&self) -> bool {
        matches!(self.after_word(), Some((_, probe)) if probe.peek() == Some(b'='))
    }

    /// Consumes `=` or `=/`; returns whether the definition is incremental.
    pub fn defined_as(&mut self, rule: &str) -> Result<bool, SyntaxError> {
        if !self.eat(b'=') {
            return Err(self.error(format!("missing '=' after rule name `{rule}`")));
        }
        Ok(self.eat(b'/'))
    }

    fn digits(&mut self, radix: u32) -> Option<u64> {
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(d) = self.peek().and_then(|b| (b as char).to_digit(radix)) {
            value = value.saturating_mul(radix as u64).saturating_add(d as u64);
            self.bump();
        }
        (self.pos > start).then_some(value)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Dialect {
    Abnf,
    Annotated,
}

/// Recursive-descent parser for rule bodies.
pub(crate) struct ElementParser<'c, 's> {
    cursor: &'c mut Cursor<'s>,
    dialect: Dialect,
    rule: String,
}

impl<'c, 's> ElementParser<'c, 's> {
    pub fn new(cursor: &'c mut Cursor<'s>, dialect: Dialect) -> Self {
        ElementParser {
            cursor,
            dialect,
            rule: String::new(),
        }
    }

    pub fn for_rule(mut self, rule: &str) -> Self {
        self.rule = rule.to_string();
        self
    }

    pub fn alternation(&mut self) -> Result<Element, SyntaxError> {
        let mut branches = vec![self.concatenation()?];
        loop {
            self.cursor.skip_trivia();
            if !self.cursor.eat(b'/') {
                break;
            }
            branches.push(self.concatenation()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Element::Alternation(branches)
        })
    }

    fn at_item_boundary(&self) -> bool {
        let c = &*self.cursor;
        match c.peek() {
            None => true,
            Some(b'/' | b')' | b']' | b'{' | b'}') => true,
            Some(b';') => c.in_block > 0,
            Some(b) if b.is_ascii_alphabetic() => {
                if c.at_definition() {
                    return true;
                }
                self.dialect == Dialect::Annotated && at_annotated_item(c)
            }
            _ => false,
        }
    }

    fn concatenation(&mut self) -> Result<Element, SyntaxError> {
        let mut items = Vec::new();
        loop {
            self.cursor.skip_trivia();
            if self.at_item_boundary() {
                break;
            }
            items.push(self.repetition()?);
        }
        match items.len() {
            0 => Err(self.cursor.error(match self.cursor.peek() {
                None => "unexpected end of input, expected an element".to_string(),
                Some(b) => format!("expected an element, found `{}`", b as char),
            })),
            1 => Ok(items.pop().unwrap()),
            _ => Ok(Element::Sequence(items)),
        }
    }

    fn repetition(&mut self) -> Result<Element, SyntaxError> {
        let start = self.cursor.span();
        let min = self.cursor.digits(10);
        let (min, max, repeated) = if self.cursor.eat(b'*') {
            let max = self.cursor.digits(10);
            (min.unwrap_or(0), max, true)
        } else if let Some(n) = min {
            (n, Some(n), true)
        } else {
            (0, None, false)
        };
        let element = if repeated {
            if let Some(max) = max {
                if min > max {
                    return Err(SyntaxError::new(
                        start,
                        format!("bad repetition spec: minimum {min} exceeds maximum {max}"),
                    ));
                }
            }
            if min > u32::MAX as u64 || max.is_some_and(|m| m > u32::MAX as u64) {
                return Err(SyntaxError::new(start, "bad repetition spec: count too large"));
            }
            match self.cursor.peek() {
                Some(b) if !b" \t\r\n/)]".contains(&b) => {}
                _ => {
                    return Err(SyntaxError::new(
                        start,
                        "bad repetition spec: expected an element after the repeat count",
                    ))
                }
            }
            let inner = self.element()?;
            Element::repetition(min as u32, max.map(|m| m as u32), inner)
        } else {
            self.element()?
        };
        self.postfix(element)
    }

    fn postfix(&mut self, element: Element) -> Result<Element, SyntaxError> {
        if self.cursor.peek() != Some(b':') {
            return Ok(element);
        }
        if self.dialect == Dialect::Abnf {
            return Err(self.cursor.error("unexpected `:` in ABNF rule"));
        }
        let span = self.cursor.span();
        self.cursor.bump();
        let name = self
            .cursor
            .rulename()
            .ok_or_else(|| self.cursor.error("expected a subfield name after `:`"))?;
        let mut shape = None;
        let mut lazy = false;
        while self.cursor.eat(b':') {
            let at = self.cursor.span();
            let word = self
                .cursor
                .rulename()
                .ok_or_else(|| self.cursor.error("expected a subfield type after `:`"))?;
            if word == "lazy" {
                lazy = true;
            } else if let Some(s) = Shape::from_keyword(&word) {
                if shape.replace(s).is_some() {
                    return Err(SyntaxError::new(at, format!("subfield `{name}` has two types")));
                }
            } else {
                return Err(SyntaxError::new(at, format!("unknown subfield modifier `{word}`")));
            }
        }
        Ok(Element::Capture(Box::new(Capture {
            name,
            shape,
            lazy,
            span,
            inner: element,
        })))
    }

    fn element(&mut self) -> Result<Element, SyntaxError> {
        match self.cursor.peek() {
            Some(b'(') => {
                self.cursor.bump();
                let inner = self.alternation()?;
                self.cursor.skip_trivia();
                self.cursor.expect(b')', "`)` closing group")?;
                Ok(inner)
            }
            Some(b'[') => {
                self.cursor.bump();
                let inner = self.alternation()?;
                self.cursor.skip_trivia();
                self.cursor.expect(b']', "`]` closing option")?;
                Ok(Element::repetition(0, Some(1), inner))
            }
            Some(b'"') => self.quoted(),
            Some(b'%') => self.numeric(),
            Some(b'<') => Err(self.cursor.error(if self.rule.is_empty() {
                "prose values (<...>) are not supported".to_string()
            } else {
                format!("prose values (<...>) are not supported in rule `{}`", self.rule)
            })),
            Some(b) if b.is_ascii_alphabetic() => {
                Ok(Element::RuleRef(self.cursor.rulename().unwrap()))
            }
            Some(b) => Err(self.cursor.error(format!("unexpected character `{}`", b as char))),
            None => Err(self.cursor.error("unexpected end of input")),
        }
    }

    fn quoted(&mut self) -> Result<Element, SyntaxError> {
        let start = self.cursor.span();
        self.cursor.bump();
        let mut text = String::new();
        loop {
            match self.cursor.peek() {
                Some(b'"') => {
                    self.cursor.bump();
                    break;
                }
                Some(b) if (0x20..=0x7E).contains(&b) => {
                    text.push(b as char);
                    self.cursor.bump();
                }
                _ => return Err(SyntaxError::new(start, "unterminated string")),
            }
        }
        if text.is_empty() {
            return Err(SyntaxError::new(start, "empty string literal"));
        }
        Ok(Element::LiteralCi(text))
    }

    fn numeric(&mut self) -> Result<Element, SyntaxError> {
        let start = self.cursor.span();
        self.cursor.bump();
        let radix = match self.cursor.bump().map(|b| b.to_ascii_lowercase()) {
            Some(b'x') => 16,
            Some(b'd') => 10,
            Some(b'b') => {
                return Err(SyntaxError::new(
                    start,
                    "binary numeric values (%b) are not supported",
                ))
            }
            _ => return Err(SyntaxError::new(start, "expected x or d after `%`")),
        };
        let value = |c: &mut Cursor<'_>| -> Result<u8, SyntaxError> {
            let v = c
                .digits(radix)
                .ok_or_else(|| c.error("expected digits in numeric value"))?;
            u8::try_from(v).map_err(|_| SyntaxError::new(start, format!("numeric value {v} exceeds one byte")))
        };
        let first = value(self.cursor)?;
        if self.cursor.eat(b'-') {
            let hi = value(self.cursor)?;
            if hi < first {
                return Err(SyntaxError::new(start, "empty numeric range"));
            }
            return Ok(Element::CharRange(first, hi));
        }
        let mut bytes = vec![first];
        while self.cursor.peek() == Some(b'.')
            && self
                .cursor
                .peek_at(1)
                .is_some_and(|b| (b as char).is_digit(radix))
        {
            self.cursor.bump();
            bytes.push(value(self.cursor)?);
        }
        Ok(Element::CharCodes(bytes))
    }
}

/// Start of an annotated-dialect item that is not a plain definition.
fn at_annotated_item(c: &Cursor<'_>) -> bool {
    let Some((word, probe)) = c.after_word() else {
        return false;
    };
    match word.as_str() {
        "header" => match probe.after_word() {
            Some((_, after)) => matches!(after.peek(), Some(b'=' | b'{')),
            None => false,
        },
        "request" | "response" => probe.peek() == Some(b'{'),
        "mandatory" => c.in_block > 0,
        _ => false,
    }
}
