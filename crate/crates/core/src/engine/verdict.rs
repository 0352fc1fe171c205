use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    Syntax,
    Constraint,
    Range,
    MandatoryMissing,
    DuplicateHeader,
    Folding,
    Budget,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::Syntax => "SYNTAX",
            ReasonCode::Constraint => "CONSTRAINT",
            ReasonCode::Range => "RANGE",
            ReasonCode::MandatoryMissing => "MANDATORY_MISSING",
            ReasonCode::DuplicateHeader => "DUPLICATE_HEADER",
            ReasonCode::Folding => "FOLDING",
            ReasonCode::Budget => "BUDGET",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reason {
    pub code: ReasonCode,
    /// `line:N`, an entry name, or `message`.
    pub location: String,
    pub message: String,
}

impl Reason {
    pub fn new(code: ReasonCode, location: impl Into<String>, message: impl Into<String>) -> Self {
        Reason {
            code,
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.code, self.location, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub reasons: Vec<Reason>,
}

impl Verdict {
    pub fn from_reasons(reasons: Vec<Reason>) -> Self {
        Verdict {
            outcome: if reasons.is_empty() {
                Outcome::Accept
            } else {
                Outcome::Reject
            },
            reasons,
        }
    }

    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accept
    }

    pub fn has(&self, code: ReasonCode) -> bool {
        self.reasons.iter().any(|r| r.code == code)
    }
}

/// `ACCEPT`, or one `REJECT <code> <location> <message>` line per reason.
impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.reasons.is_empty() {
            return writeln!(f, "ACCEPT");
        }
        for r in &self.reasons {
            writeln!(f, "REJECT {r}")?;
        }
        Ok(())
    }
}
