//! Constraint evaluation over parsed values.

use std::cmp::Ordering;

use crate::frontend::{ConstraintExpr, FieldBinding, Operand};

/// A constraint operand after lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Val {
    Num(u64),
    /// Captured text; `caseless` when it derives only from quoted strings.
    Text { bytes: Vec<u8>, caseless: bool },
}

fn parse_decimal(bytes: &[u8]) -> Option<u64> {
    if bytes.is_empty() || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    std::str::from_utf8(bytes).ok()?.parse().ok()
}

fn compare(a: &Val, b: &Val) -> Option<Ordering> {
    match (a, b) {
        (Val::Num(x), Val::Num(y)) => Some(x.cmp(y)),
        (Val::Num(x), Val::Text { bytes, .. }) => parse_decimal(bytes).map(|y| x.cmp(&y)),
        (Val::Text { bytes, .. }, Val::Num(y)) => parse_decimal(bytes).map(|x| x.cmp(y)),
        (
            Val::Text { bytes: x, caseless: cx },
            Val::Text { bytes: y, caseless: cy },
        ) => Some(if *cx && *cy {
            x.to_ascii_lowercase().cmp(&y.to_ascii_lowercase())
        } else {
            x.cmp(y)
        }),
    }
}

/// `None` when an operand is missing; the constraint is then not applicable.
pub fn eval(expr: &ConstraintExpr, lookup: &mut impl FnMut(&FieldBinding) -> Option<Val>) -> Option<bool> {
    match expr {
        ConstraintExpr::Compare { op, lhs, rhs } => {
            let l = operand(lhs, rhs, lookup)?;
            let r = operand(rhs, lhs, lookup)?;
            // Incomparable operands (text against a number) fail the check.
            Some(compare(&l, &r).is_some_and(|ord| op.holds(ord, Ordering::Equal)))
        }
        ConstraintExpr::And(a, b) => Some(eval(a, lookup)? && eval(b, lookup)?),
        ConstraintExpr::Or(a, b) => Some(eval(a, lookup)? || eval(b, lookup)?),
        ConstraintExpr::Not(a) => Some(!eval(a, lookup)?),
    }
}

fn operand(o: &Operand, other: &Operand, lookup: &mut impl FnMut(&FieldBinding) -> Option<Val>) -> Option<Val> {
    match o {
        Operand::Int(v) => Some(Val::Num(*v)),
        // A string literal takes the case rule of the field it is compared to.
        Operand::Str(s) => Some(Val::Text {
            bytes: s.as_bytes().to_vec(),
            caseless: match other {
                Operand::Field(f) => f.binding.as_ref().and_then(&mut *lookup).is_some_and(|v| {
                    matches!(v, Val::Text { caseless: true, .. })
                }),
                _ => false,
            },
        }),
        Operand::Field(f) => lookup(f.binding.as_ref()?),
    }
}
