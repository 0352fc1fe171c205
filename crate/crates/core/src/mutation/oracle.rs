//! Ground-truth labels for mutated messages.
//!
//! Syntax is decided here without the engine: the message is split into
//! lines, folded values are joined, and every line is checked with the
//! reference matcher. Semantic checks (constraints, ranges, presence,
//! multiplicity) come from the engine's verdict, minus its syntax reasons.

use crate::engine::{self, CompiledGrammar, ReasonCode};
use crate::frontend::AnnotatedGrammar;
use crate::matcher::{reference_match, RecursionBudgetExceeded};

use super::Label;

fn is_wsp(b: u8) -> bool {
    b == b' ' || b == b'\t'
}

fn is_token(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b"-.!%*_+`'~".contains(&b)
}

pub struct GroundTruth<'a> {
    source: &'a AnnotatedGrammar,
    compiled: &'a CompiledGrammar,
}

impl<'a> GroundTruth<'a> {
    pub fn new(source: &'a AnnotatedGrammar, compiled: &'a CompiledGrammar) -> Self {
        GroundTruth { source, compiled }
    }

    /// Whether the message is well formed: framing, folding and every line
    /// against its grammar entry. Undeclared headers are not checked.
    pub fn syntax_ok(&self, raw: &[u8]) -> Result<bool, RecursionBudgetExceeded> {
        let Some(end) = raw.windows(4).position(|w| w == b"\r\n\r\n") else {
            return Ok(false);
        };
        let head = &raw[..end];
        let lines: Vec<&[u8]> = split_crlf(head);
        if lines.iter().any(|l| l.contains(&b'\r') || l.contains(&b'\n')) {
            return Ok(false);
        }
        let (command, rest) = lines.split_first().expect("split yields a line");
        if command.is_empty() {
            return Ok(false);
        }
        let g = self.source;
        let mut command_ok = false;
        for rule in [&g.request_line, &g.status_line].into_iter().flatten() {
            if reference_match(&rule.body, g, command)? {
                command_ok = true;
                break;
            }
        }
        if !command_ok {
            return Ok(false);
        }

        // Logical headers: a key line plus its continuation lines.
        let mut logical: Vec<(&[u8], Vec<u8>)> = Vec::new();
        for line in rest {
            if line.first().is_some_and(|b| is_wsp(*b)) {
                let Some((_, value)) = logical.last_mut() else {
                    return Ok(false);
                };
                if line.iter().all(|b| is_wsp(*b)) {
                    return Ok(false);
                }
                value.extend_from_slice(b"\r\n");
                value.extend_from_slice(line);
                continue;
            }
            let Some(colon) = line.iter().position(|b| *b == b':') else {
                return Ok(false);
            };
            let key = trim_end_wsp(&line[..colon]);
            if key.is_empty() || !key.iter().all(|b| is_token(*b)) {
                return Ok(false);
            }
            logical.push((key, line[colon + 1..].to_vec()));
        }

        for (key, value) in logical {
            let Some(decl) = self.declaration(key)? else {
                continue;
            };
            if !reference_match(&decl.body, g, &join_folds(&value))? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn declaration(&self, key: &[u8]) -> Result<Option<&'a crate::frontend::HeaderDecl>, RecursionBudgetExceeded> {
        let g = self.source;
        for decl in &g.headers {
            if reference_match(&decl.key_pattern, g, key)? {
                return Ok(Some(decl));
            }
        }
        Ok(None)
    }

    pub fn label(&self, raw: &[u8]) -> Result<Label, RecursionBudgetExceeded> {
        if !self.syntax_ok(raw)? {
            return Ok(Label::Invalid);
        }
        let verdict = engine::validate(self.compiled, raw);
        if verdict.reasons.iter().any(|r| r.code != ReasonCode::Syntax) {
            Ok(Label::Invalid)
        } else {
            Ok(Label::Valid)
        }
    }
}

fn split_crlf(s: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i + 1 < s.len() {
        if &s[i..i + 2] == b"\r\n" {
            out.push(&s[start..i]);
            i += 2;
            start = i;
        } else {
            i += 1;
        }
    }
    out.push(&s[start..]);
    out
}

fn trim_end_wsp(s: &[u8]) -> &[u8] {
    let n = s.iter().rev().take_while(|b| is_wsp(**b)).count();
    &s[..s.len() - n]
}

/// Replaces every CRLF and the whitespace run after it by one SP, then
/// drops leading whitespace.
fn join_folds(value: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(value.len());
    let mut i = 0;
    while i < value.len() {
        if value[i..].starts_with(b"\r\n") {
            out.push(b' ');
            i += 2;
            while i < value.len() && is_wsp(value[i]) {
                i += 1;
            }
        } else {
            out.push(value[i]);
            i += 1;
        }
    }
    let lead = out.iter().take_while(|b| is_wsp(**b)).count();
    out.split_off(lead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn corpus_is_valid_and_breakage_is_invalid() {
        let g = bundled::sip();
        let c = engine::compile(&g).unwrap();
        let gt = GroundTruth::new(&g, &c);
        for (name, raw) in bundled::sip_corpus() {
            assert_eq!(gt.label(raw).unwrap(), Label::Valid, "{name}");
        }
        let raw = bundled::SIP_INVITE1;
        let text = String::from_utf8_lossy(raw);
        let broken = text.replacen("CSeq: ", "CSeq: x", 1);
        assert_eq!(gt.label(broken.as_bytes()).unwrap(), Label::Invalid);
        let bare_lf = text.replacen("\r\n", "\n", 1);
        assert_eq!(gt.label(bare_lf.as_bytes()).unwrap(), Label::Invalid);
        let no_end = &raw[..raw.len() - 2];
        assert!(!gt.syntax_ok(no_end).unwrap());
    }

    #[test]
    fn folds_join_to_one_space() {
        assert_eq!(join_folds(b" a\r\n \t b"), b"a b");
        assert_eq!(join_folds(b"a \r\n b"), b"a  b");
        assert_eq!(split_crlf(b"a\r\nb"), vec![&b"a"[..], b"b"]);
    }
}
