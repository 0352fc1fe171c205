//! On-disk form of a compiled grammar.
//!
//! Pretty-printed JSON. Every map in the model is ordered, so the same
//! grammar always serializes to the same bytes.

use serde::{Deserialize, Serialize};

use crate::engine::{compile, CompiledGrammar, EngineError};
use crate::frontend::AnnotatedGrammar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarArtifact {
    pub format_version: u32,
    pub protocol: String,
    pub compiled: CompiledGrammar,
    /// The annotated grammar it was compiled from; the mutation harness
    /// derives messages from it.
    pub source: AnnotatedGrammar,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("malformed artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("artifact format version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { found: u32 },
}

impl GrammarArtifact {
    pub fn build(source: &AnnotatedGrammar) -> Result<Self, EngineError> {
        let compiled = compile(source)?;
        Ok(GrammarArtifact {
            format_version: FORMAT_VERSION,
            protocol: compiled.protocol.clone(),
            compiled,
            source: source.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("artifact model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let artifact: GrammarArtifact = serde_json::from_str(text)?;
        if artifact.format_version != FORMAT_VERSION {
            return Err(ArtifactError::Version {
                found: artifact.format_version,
            });
        }
        Ok(artifact)
    }
}
