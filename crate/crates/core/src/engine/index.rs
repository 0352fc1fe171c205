//! First level: line scan of a raw message. Runs no patterns.

use std::ops::Range;

use super::verdict::{Reason, ReasonCode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderLine {
    pub key: Range<usize>,
    /// Physical segments of the value: text after the colon, then each
    /// continuation line including its leading whitespace.
    pub segments: Vec<Range<usize>>,
    /// 1-based line number of the key.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIndex {
    pub command_line: Range<usize>,
    pub headers: Vec<HeaderLine>,
    pub body: Range<usize>,
}

fn is_wsp(b: u8) -> bool {
    b == b' ' || b == b'\t'
}

/// RFC token characters, the only ones allowed in a header key.
fn is_token(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b"-.!%*_+`'~".contains(&b)
}

fn syntax(line: usize, message: impl Into<String>) -> Reason {
    Reason::new(ReasonCode::Syntax, format!("line:{line}"), message)
}

pub fn index_message(raw: &[u8]) -> Result<LineIndex, Reason> {
    if raw.is_empty() {
        return Err(syntax(1, "empty message"));
    }
    let mut lines: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let body_start = loop {
        let line = lines.len() + 1;
        match raw.get(i) {
            None => return Err(syntax(line, "missing CRLF terminator")),
            Some(b'\r') if raw.get(i + 1) == Some(&b'\n') => {
                if i == start && !lines.is_empty() {
                    break i + 2;
                }
                lines.push(start..i);
                i += 2;
                start = i;
            }
            Some(b'\r') => return Err(syntax(line, "bare CR")),
            Some(b'\n') => return Err(syntax(line, "bare LF")),
            Some(_) => i += 1,
        }
    };

    let command_line = lines[0].clone();
    if command_line.is_empty() {
        return Err(syntax(1, "no command line"));
    }
    let mut headers: Vec<HeaderLine> = Vec::new();
    for (n, line) in lines.iter().enumerate().skip(1) {
        let lineno = n + 1;
        let text = &raw[line.clone()];
        if is_wsp(text[0]) {
            let Some(last) = headers.last_mut() else {
                return Err(syntax(lineno, "continuation line before any header"));
            };
            if text.iter().all(|b| is_wsp(*b)) {
                return Err(Reason::new(
                    ReasonCode::Folding,
                    format!("line:{lineno}"),
                    "continuation line holds only whitespace",
                ));
            }
            last.segments.push(line.clone());
            continue;
        }
        let Some(colon) = text.iter().position(|b| *b == b':') else {
            return Err(syntax(lineno, "header line without `:`"));
        };
        let mut key_end = colon;
        while key_end > 0 && is_wsp(text[key_end - 1]) {
            key_end -= 1;
        }
        let key = &text[..key_end];
        if key.is_empty() || !key.iter().all(|b| is_token(*b)) {
            return Err(syntax(lineno, "malformed header name"));
        }
        headers.push(HeaderLine {
            key: line.start..line.start + key_end,
            segments: std::iter::once(line.start + colon + 1..line.end).collect(),
            line: lineno,
        });
    }
    Ok(LineIndex {
        command_line,
        headers,
        body: body_start..raw.len(),
    })
}

/// Joins the value segments, turning each fold into one SP and dropping
/// whitespace before the first value character.
pub fn unfold(raw: &[u8], segments: &[Range<usize>]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let text = &raw[seg.clone()];
        if i > 0 {
            out.push(b' ');
            let skip = text.iter().take_while(|b| is_wsp(**b)).count();
            out.extend_from_slice(&text[skip..]);
        } else {
            out.extend_from_slice(text);
        }
    }
    let lead = out.iter().take_while(|b| is_wsp(**b)).count();
    out.drain(..lead);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_request() {
        let raw = b"INVITE sip:a@b SIP/2.0\r\nCSeq: 1 INVITE\r\n\r\n";
        let idx = index_message(raw).unwrap();
        assert_eq!(&raw[idx.command_line.clone()], b"INVITE sip:a@b SIP/2.0");
        assert_eq!(idx.headers.len(), 1);
        assert_eq!(&raw[idx.headers[0].key.clone()], b"CSeq");
        assert_eq!(unfold(raw, &idx.headers[0].segments), b"1 INVITE");
        assert!(idx.body.is_empty());
    }

    #[test]
    fn folded_value() {
        let raw = b"X y\r\nSubject: a\r\n\tb  c\r\n\r\nbody";
        let idx = index_message(raw).unwrap();
        assert_eq!(idx.headers.len(), 1);
        assert_eq!(idx.headers[0].segments.len(), 2);
        assert_eq!(unfold(raw, &idx.headers[0].segments), b"a b  c");
        assert_eq!(&raw[idx.body.clone()], b"body");
    }

    #[test]
    fn space_before_colon_and_fold_after_it() {
        let raw = b"X y\r\nCSeq  \t: \r\n  4 ACK\r\n\r\n";
        let idx = index_message(raw).unwrap();
        assert_eq!(&raw[idx.headers[0].key.clone()], b"CSeq");
        assert_eq!(unfold(raw, &idx.headers[0].segments), b"4 ACK");
    }

    #[test]
    fn rejects() {
        let cases: [(&[u8], &str); 8] = [
            (b"", "empty"),
            (b"X y\r\nA: b\r\n", "missing CRLF"),
            (b"X y\r\nA: b\nB: c\r\n\r\n", "bare LF"),
            (b"X y\r\nA: b\rB: c\r\n\r\n", "bare CR"),
            (b"\r\n\r\n", "no command line"),
            (b"X y\r\n cont\r\n\r\n", "continuation line before"),
            (b"X y\r\nNoColon\r\n\r\n", "without `:`"),
            (b"X y\r\nBad Key: v\r\n\r\n", "malformed header name"),
        ];
        for (raw, needle) in cases {
            let err = index_message(raw).unwrap_err();
            assert_eq!(err.code, ReasonCode::Syntax);
            assert!(err.message.contains(needle), "{needle}: {err}");
        }
        let err = index_message(b"X y\r\nA: b\r\n \r\n\r\n").unwrap_err();
        assert_eq!(err.code, ReasonCode::Folding);
    }
}
