use std::sync::OnceLock;

use super::{parse_abnf, Grammar};

const CORE_RULES: &str = r#"
ALPHA  = %x41-5A / %x61-7A
CHAR   = %x01-7F
CR     = %x0D
CRLF   = CR LF
DIGIT  = %x30-39
DQUOTE = %x22
HEXDIG = DIGIT / "A" / "B" / "C" / "D" / "E" / "F"
HTAB   = %x09
LF     = %x0A
OCTET  = %x00-FF
SP     = %x20
VCHAR  = %x21-7E
WSP    = SP / HTAB
"#;

/// The ABNF core rules (ALPHA, DIGIT, HEXDIG, SP, HTAB, WSP, CRLF, CR, LF,
/// DQUOTE, VCHAR, OCTET, CHAR). Rules defined by a grammar take precedence.
pub fn core_rules() -> &'static Grammar {
    static CORE: OnceLock<Grammar> = OnceLock::new();
    CORE.get_or_init(|| parse_abnf(CORE_RULES).expect("core rules parse"))
}
