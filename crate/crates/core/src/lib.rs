//! Annotated-ABNF parser compiler with two-level lazy message parsing and a
//! grammar-driven mutation harness.

pub mod abnf;
pub mod frontend;
pub mod verifier;
pub mod matcher;
pub mod engine;
pub mod artifact;
pub mod bundled;
pub mod par;
pub mod mutation;
