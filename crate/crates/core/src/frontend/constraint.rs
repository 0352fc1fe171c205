//! Boolean constraint expressions with C-like syntax and precedence.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::abnf::{Cursor, Span, SyntaxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// The operator with its operands swapped (`a < b` == `b > a`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn holds<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Which command line or header a field reference lives in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryRef {
    RequestLine,
    StatusLine,
    Header(String),
}

impl fmt::Display for EntryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryRef::RequestLine => f.write_str("requestLine"),
            EntryRef::StatusLine => f.write_str("statusLine"),
            EntryRef::Header(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldBinding {
    pub entry: EntryRef,
    pub subfield: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRef {
    pub path: Vec<String>,
    pub span: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<FieldBinding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Field(FieldRef),
    Int(u64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintExpr {
    Compare { op: CmpOp, lhs: Operand, rhs: Operand },
    And(Box<ConstraintExpr>, Box<ConstraintExpr>),
    Or(Box<ConstraintExpr>, Box<ConstraintExpr>),
    Not(Box<ConstraintExpr>),
}

impl ConstraintExpr {
    pub fn fields(&self) -> Vec<&FieldRef> {
        let mut out = Vec::new();
        self.visit_fields(&mut |f| out.push(f));
        out
    }

    fn visit_fields<'a>(&'a self, f: &mut impl FnMut(&'a FieldRef)) {
        match self {
            ConstraintExpr::Compare { lhs, rhs, .. } => {
                for operand in [lhs, rhs] {
                    if let Operand::Field(field) = operand {
                        f(field);
                    }
                }
            }
            ConstraintExpr::And(a, b) | ConstraintExpr::Or(a, b) => {
                a.visit_fields(f);
                b.visit_fields(f);
            }
            ConstraintExpr::Not(a) => a.visit_fields(f),
        }
    }

    pub(crate) fn fields_mut(&mut self, f: &mut impl FnMut(&mut FieldRef)) {
        match self {
            ConstraintExpr::Compare { lhs, rhs, .. } => {
                for operand in [lhs, rhs] {
                    if let Operand::Field(field) = operand {
                        f(field);
                    }
                }
            }
            ConstraintExpr::And(a, b) | ConstraintExpr::Or(a, b) => {
                a.fields_mut(f);
                b.fields_mut(f);
            }
            ConstraintExpr::Not(a) => a.fields_mut(f),
        }
    }

    /// Flattens a conjunction of comparisons; `None` if any other connective
    /// appears.
    pub fn conjuncts(&self) -> Option<Vec<(CmpOp, &Operand, &Operand)>> {
        match self {
            ConstraintExpr::Compare { op, lhs, rhs } => Some(vec![(*op, lhs, rhs)]),
            ConstraintExpr::And(a, b) => {
                let mut out = a.conjuncts()?;
                out.extend(b.conjuncts()?);
                Some(out)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Field(field) => f.write_str(&field.path.join(".")),
            Operand::Int(v) => write!(f, "{v}"),
            Operand::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

impl fmt::Display for ConstraintExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &ConstraintExpr, parent_and: bool) -> fmt::Result {
            match e {
                ConstraintExpr::Or(..) if parent_and => write!(f, "({e})"),
                _ => write!(f, "{e}"),
            }
        }
        match self {
            ConstraintExpr::Compare { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            ConstraintExpr::And(a, b) => {
                child(f, a, true)?;
                f.write_str(" && ")?;
                child(f, b, true)
            }
            ConstraintExpr::Or(a, b) => write!(f, "{a} || {b}"),
            ConstraintExpr::Not(a) => match **a {
                ConstraintExpr::Not(_) => write!(f, "!{a}"),
                _ => write!(f, "!({a})"),
            },
        }
    }
}

/// A constraint as written in the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub expr: ConstraintExpr,
    pub span: Span,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

/// Parsed inside a brace block; stops before `;` or `}`.
pub(crate) struct ExprParser<'c, 's> {
    pub cursor: &'c mut Cursor<'s>,
}

impl ExprParser<'_, '_> {
    pub fn expr(&mut self) -> Result<ConstraintExpr, SyntaxError> {
        let mut lhs = self.and()?;
        while self.op("||") {
            let rhs = self.and()?;
            lhs = ConstraintExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<ConstraintExpr, SyntaxError> {
        let mut lhs = self.unary()?;
        while self.op("&&") {
            let rhs = self.unary()?;
            lhs = ConstraintExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<ConstraintExpr, SyntaxError> {
        self.cursor.skip_trivia();
        if self.cursor.peek() == Some(b'!') && self.cursor.peek_at(1) != Some(b'=') {
            self.cursor.bump();
            return Ok(ConstraintExpr::Not(Box::new(self.unary()?)));
        }
        if self.cursor.peek() == Some(b'(') {
            self.cursor.bump();
            let inner = self.expr()?;
            self.cursor.skip_trivia();
            self.cursor.expect(b')', "`)`")?;
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<ConstraintExpr, SyntaxError> {
        let lhs = self.operand()?;
        self.cursor.skip_trivia();
        let op = self.cmp_op().ok_or_else(|| {
            self.cursor
                .error("expected a comparison operator (==, !=, <, <=, >, >=)")
        })?;
        let rhs = self.operand()?;
        Ok(ConstraintExpr::Compare { op, lhs, rhs })
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        for (text, op) in [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ] {
            if self.op(text) {
                return Some(op);
            }
        }
        None
    }

    fn op(&mut self, text: &str) -> bool {
        self.cursor.skip_trivia();
        let bytes = text.as_bytes();
        if bytes
            .iter()
            .enumerate()
            .all(|(i, b)| self.cursor.peek_at(i) == Some(*b))
        {
            for _ in bytes {
                self.cursor.bump();
            }
            true
        } else {
            false
        }
    }

    pub fn operand(&mut self) -> Result<Operand, SyntaxError> {
        self.cursor.skip_trivia();
        let span = self.cursor.span();
        match self.cursor.peek() {
            Some(b) if b.is_ascii_digit() => {
                let mut value: u64 = 0;
                while let Some(d) = self.cursor.peek().filter(u8::is_ascii_digit) {
                    value = value
                        .checked_mul(10)
                        .and_then(|v| v.checked_add((d - b'0') as u64))
                        .ok_or_else(|| SyntaxError::new(span, "integer literal too large"))?;
                    self.cursor.bump();
                }
                Ok(Operand::Int(value))
            }
            Some(b'"') => {
                self.cursor.bump();
                let mut text = String::new();
                loop {
                    match self.cursor.bump() {
                        Some(b'"') => break,
                        Some(b) if b != b'\n' => text.push(b as char),
                        _ => return Err(SyntaxError::new(span, "unterminated string")),
                    }
                }
                Ok(Operand::Str(text))
            }
            Some(b) if b.is_ascii_alphabetic() => {
                let mut path = vec![self.cursor.rulename().unwrap()];
                while self.cursor.peek() == Some(b'.')
                    && self.cursor.peek_at(1).is_some_and(|b| b.is_ascii_alphabetic())
                {
                    self.cursor.bump();
                    path.push(self.cursor.rulename().unwrap());
                }
                Ok(Operand::Field(FieldRef {
                    path,
                    span,
                    binding: None,
                }))
            }
            _ => Err(self.cursor.error("expected a field, integer or string")),
        }
    }
}
