use super::*;
use crate::frontend::{parse_zebu, subfields_of, EntryRef};

const GRAMMAR: &str = r#"
requestLine = Method:method SP Request-URI:uri:struct:lazy SP SIP-Version
header CSeq = 1*DIGIT:number:uint32 LWS Method:method
header Digits = *DIGIT
header Pair = 2*3DIGIT
Method = INVITEm / ACKm / BYEm / token { enum }
INVITEm = %x49.4E.56.49.54.45
ACKm = %x41.43.4B
BYEm = %x42.59.45
token = 1*( ALPHA / DIGIT / "-" / "." / "!" )
Request-URI = "sip:" [ user:user "@" ] host:host
user = 1*( ALPHA / DIGIT )
host = 1*( ALPHA / DIGIT / "." )
SIP-Version = "SIP" "/" 1*DIGIT "." 1*DIGIT
LWS = [*WSP CRLF] 1*WSP
HCOLON = *( SP / HTAB ) ":" SWS
SWS = [LWS]
"#;

fn grammar() -> AnnotatedGrammar {
    parse_zebu(GRAMMAR).unwrap()
}

fn entry_pattern(g: &AnnotatedGrammar, entry: EntryRef) -> Pattern {
    let space = subfields_of(g, &entry).unwrap();
    compile_pattern(g.entry_body(&entry).unwrap(), g, &space, &BTreeMap::new()).unwrap()
}

fn rule_pattern(g: &AnnotatedGrammar, rule: &str) -> Pattern {
    Pattern::bare(&Element::rule(rule), g).unwrap()
}

#[test]
fn sip_version() {
    let g = grammar();
    let p = rule_pattern(&g, "SIP-Version");
    assert!(p.match_full(b"SIP/2.0").matched);
    assert!(p.match_full(b"sip/10.4").matched);
    assert!(!p.match_full(b"SIP/.0").matched);
}

#[test]
fn char_codes_are_case_sensitive() {
    let g = grammar();
    let p = rule_pattern(&g, "INVITEm");
    assert!(p.match_full(b"INVITE").matched);
    assert!(!p.match_full(b"invite").matched);
}

#[test]
fn digit_capture_span() {
    let g = parse_zebu("header N = 1*DIGIT:number\n").unwrap();
    let p = entry_pattern(&g, EntryRef::Header("N".into()));
    let m = p.match_full(b"4711");
    assert!(m.matched);
    let span = m.capture(p.slot("number").unwrap()).unwrap();
    assert_eq!((span.start, span.end), (0, 4));
}

#[test]
fn cseq_body() {
    let g = grammar();
    let p = entry_pattern(&g, EntryRef::Header("CSeq".into()));
    let m = p.match_full(b"1 INVITE");
    assert!(m.matched);
    let number = m.capture(p.slot("number").unwrap()).unwrap();
    assert_eq!((number.start, number.end), (0, 1));
    let method = m.capture(p.slot("method").unwrap()).unwrap();
    assert_eq!(method.branch, Some(0));
    assert_eq!(p.slots[p.slot("method").unwrap()].branch_labels[0], "INVITEm");
    assert_eq!(p.match_full(b"1 invite").capture(1).unwrap().branch, Some(3));
    assert!(!p.match_full(b"x INVITE").matched);
}

#[test]
fn empty_repetition_matches_empty() {
    let g = grammar();
    let p = entry_pattern(&g, EntryRef::Header("Digits".into()));
    assert!(p.match_full(b"").matched);
    let p = rule_pattern(&g, "user");
    assert!(!p.match_full(b"").matched);
}

#[test]
fn lazy_region_is_skipped_then_checked() {
    let g = grammar();
    let p = entry_pattern(&g, EntryRef::RequestLine);
    // The closure of the URI admits this, the exact rule does not.
    let m = p.match_full(b"INVITE sip:@@x SIP/2.0");
    assert!(m.matched);
    let uri = m.capture(p.slot("uri").unwrap()).unwrap();
    assert_eq!((uri.start, uri.end), (7, 14));
    assert!(m.capture(p.slot("host").unwrap()).is_none());
    let sub = &p.lazy["uri"];
    assert!(!sub.match_full(b"sip:@@x").matched);

    let m = sub.match_full(b"sip:alice@host.example");
    assert!(m.matched);
    let host = m.capture(p.slot("host").unwrap()).unwrap();
    assert_eq!((host.start, host.end), (10, 22));
}

#[test]
fn optional_capture_absent() {
    let g = grammar();
    let sub = &entry_pattern(&g, EntryRef::RequestLine).lazy["uri"];
    let m = sub.match_full(b"sip:host");
    assert!(m.matched);
    assert!(m.capture(sub.slot("user").unwrap()).is_none());
}

#[test]
fn budget_is_reported_distinctly() {
    let g = parse_zebu("header X = *( *\"a\" ) \"b\"\n").unwrap();
    let p = entry_pattern(&g, EntryRef::Header("X".into()));
    let subject = vec![b'a'; 200];
    assert_eq!(p.run(&subject, 50), MatchOutcome::BudgetExceeded);
    assert_eq!(p.run(&subject, DEFAULT_STEP_BUDGET), MatchOutcome::NoMatch);
}

#[test]
fn oracle_budget() {
    let g = grammar();
    let err = reference_match_with_budget(&Element::rule("SIP-Version"), &g, b"SIP/2.0", 2);
    assert_eq!(err, Err(RecursionBudgetExceeded(2)));
}

#[test]
fn oracle_basics() {
    let g = grammar();
    let digits = Element::repetition(1, None, Element::rule("DIGIT"));
    assert!(!reference_match(&digits, &g, b"").unwrap());
    assert!(reference_match(&Element::rule("SIP-Version"), &g, b"SIP/2.0").unwrap());
    assert!(reference_match(&Element::rule("LWS"), &g, b"\r\n\t").unwrap());
}

#[test]
fn artifact_round_trip_keeps_behavior() {
    let g = grammar();
    let p = entry_pattern(&g, EntryRef::RequestLine);
    let json = serde_json::to_string(&p).unwrap();
    let back: Pattern = serde_json::from_str(&json).unwrap();
    assert_eq!(back, p);
    assert_eq!(back.match_full(b"ACK sip:h SIP/2.0"), p.match_full(b"ACK sip:h SIP/2.0"));
}

/// Every string over `alphabet` up to `max_len`.
fn all_strings(alphabet: &[u8], max_len: usize) -> impl Iterator<Item = Vec<u8>> + '_ {
    (0..=max_len).flat_map(move |len| {
        let total = alphabet.len().pow(len as u32);
        (0..total).map(move |mut n| {
            (0..len)
                .map(|_| {
                    let b = alphabet[n % alphabet.len()];
                    n /= alphabet.len();
                    b
                })
                .collect()
        })
    })
}

#[test]
fn exhaustive_agreement_small() {
    let g = grammar();
    for (rule, alphabet) in [
        ("token", &b"a.!-1 "[..]),
        ("LWS", &b" \t\r\nx"[..]),
        ("Method", &b"ACKBYE"[..]),
    ] {
        let p = rule_pattern(&g, rule);
        for s in all_strings(alphabet, 5) {
            assert_eq!(
                p.match_full(&s).matched,
                reference_match(&Element::rule(rule), &g, &s).unwrap(),
                "{rule} on {:?}",
                String::from_utf8_lossy(&s)
            );
        }
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn repetition_exactness(n in 0u32..5, extra in 0u32..4, k in 0usize..10) {
            let g = parse_zebu("requestLine = \"x\"\n").unwrap();
            let e = Element::repetition(n, Some(n + extra), Element::rule("DIGIT"));
            let p = Pattern::bare(&e, &g).unwrap();
            let subject = vec![b'7'; k];
            prop_assert_eq!(p.match_full(&subject).matched, (n as usize..=(n + extra) as usize).contains(&k));
        }

        #[test]
        fn literal_case_insensitive(flips in prop::collection::vec(any::<bool>(), 3)) {
            let g = grammar();
            let p = rule_pattern(&g, "SIP-Version");
            let s: Vec<u8> = b"SIP".iter().zip(&flips)
                .map(|(b, f)| if *f { b.to_ascii_lowercase() } else { *b })
                .chain(*b"/2.0")
                .collect();
            prop_assert!(p.match_full(&s).matched);
        }

        #[test]
        fn branch_order_does_not_change_acceptance(s in "[a-c]{0,6}") {
            let g1 = parse_zebu("requestLine = \"x\"\nR = 1*( \"a\" / \"ab\" / \"c\" ) [\"b\"]\n").unwrap();
            let g2 = parse_zebu("requestLine = \"x\"\nR = 1*( \"c\" / \"ab\" / \"a\" ) [\"b\"]\n").unwrap();
            let a = rule_pattern(&g1, "R").match_full(s.as_bytes()).matched;
            let b = rule_pattern(&g2, "R").match_full(s.as_bytes()).matched;
            prop_assert_eq!(a, b);
            prop_assert_eq!(a, reference_match(&Element::rule("R"), &g1, s.as_bytes()).unwrap());
        }
    }
}
