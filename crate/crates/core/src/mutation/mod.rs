//! Mutation analysis: derive valid messages from a grammar, mutate them
//! into labelled invalid (or torture-style valid) messages, and measure how
//! a validation function classifies them.

mod campaign;
mod derive;
mod gen;
mod ops;
mod oracle;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::CompiledGrammar;
use crate::frontend::AnnotatedGrammar;

pub use campaign::{mutant_seed, mutate_one, run_campaign, write_corpus, Campaign, CampaignConfig, MutationReport, RuleTally};
pub use oracle::GroundTruth;
pub use tree::{DerivationTree, LineInfo, Node, NodeKind, Terminal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationRule {
    Charset,
    Repetition,
    Constraint,
    Torture,
}

impl MutationRule {
    pub const ALL: [MutationRule; 4] = [
        MutationRule::Charset,
        MutationRule::Repetition,
        MutationRule::Constraint,
        MutationRule::Torture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationRule::Charset => "CHARSET",
            MutationRule::Repetition => "REPETITION",
            MutationRule::Constraint => "CONSTRAINT",
            MutationRule::Torture => "TORTURE",
        }
    }

    pub fn expected(self) -> Label {
        match self {
            MutationRule::Torture => Label::Valid,
            _ => Label::Invalid,
        }
    }
}

impl fmt::Display for MutationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Valid,
    Invalid,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Valid => "VALID",
            Label::Invalid => "INVALID",
        })
    }
}

/// Which byte of a terminal a charset mutation replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Position {
    First,
    Middle,
    Last,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::First, Position::Middle, Position::Last];

    pub fn offset(self, len: usize) -> usize {
        match self {
            Position::First => 0,
            Position::Middle => len / 2,
            Position::Last => len - 1,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::First => "FIRST",
            Position::Middle => "MIDDLE",
            Position::Last => "LAST",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    /// The derivation node the mutation was applied to.
    pub node: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutant {
    pub bytes: Vec<u8>,
    pub rule: MutationRule,
    pub ground_truth: Label,
    pub provenance: Provenance,
    pub seed: u64,
    pub position: Option<Position>,
    /// Coverage label of the constraint a CONSTRAINT mutant violates.
    pub constraint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutationError {
    #[error("could not derive a valid message within the retry budget")]
    BudgetExhausted,
    #[error("no {0} mutation applies to this message")]
    Exhausted(MutationRule),
}

/// Relative weights of the mutation rules in a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mix {
    pub weights: [u32; 4],
}

impl Default for Mix {
    fn default() -> Self {
        Mix { weights: [1; 4] }
    }
}

impl Mix {
    pub fn only(rule: MutationRule) -> Self {
        let mut weights = [0; 4];
        weights[rule as usize] = 1;
        Mix { weights }
    }

    pub fn weight(&self, rule: MutationRule) -> u32 {
        self.weights[rule as usize]
    }

    pub fn total(&self) -> u32 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad mix `{0}`: expected `rule=weight,...` over charset, repetition, constraint, torture, or `<rule>-only`")]
pub struct MixParseError(String);

impl FromStr for Mix {
    type Err = MixParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MixParseError(s.to_string());
        let rule = |name: &str| {
            MutationRule::ALL
                .into_iter()
                .find(|r| r.as_str().eq_ignore_ascii_case(name.trim()))
        };
        if let Some(name) = s.strip_suffix("-only") {
            return rule(name).map(Mix::only).ok_or_else(err);
        }
        let mut weights = [0; 4];
        for part in s.split(',') {
            let (name, weight) = part.split_once('=').ok_or_else(err)?;
            let r = rule(name).ok_or_else(err)?;
            weights[r as usize] = weight.trim().parse().map_err(|_| err())?;
        }
        let mix = Mix { weights };
        if mix.total() == 0 {
            return Err(err());
        }
        Ok(mix)
    }
}

/// A grammar in both forms plus derivation settings.
pub struct Harness<'a> {
    pub source: &'a AnnotatedGrammar,
    pub compiled: &'a CompiledGrammar,
    /// Cap on extra iterations of any repetition.
    pub size_budget: u32,
}

pub const DEFAULT_SIZE_BUDGET: u32 = 4;

impl<'a> Harness<'a> {
    pub fn new(source: &'a AnnotatedGrammar, compiled: &'a CompiledGrammar) -> Self {
        Harness {
            source,
            compiled,
            size_budget: DEFAULT_SIZE_BUDGET,
        }
    }

    pub fn ground_truth(&self) -> GroundTruth<'a> {
        GroundTruth::new(self.source, self.compiled)
    }
}

pub use derive::derive_valid;
pub use ops::{mutate_charset, mutate_constraint, mutate_repetition, mutate_torture};

#[cfg(test)]
mod tests;
