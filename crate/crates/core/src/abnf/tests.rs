use super::*;

fn body(src: &str) -> Element {
    let g = parse_abnf(src).unwrap();
    g.rules()[0].body.clone()
}

#[test]
fn cseq_rule() {
    let e = body(r#"CSeq = "CSeq" HCOLON 1*DIGIT LWS Method"#);
    assert_eq!(
        e,
        Element::Sequence(vec![
            Element::LiteralCi("CSeq".into()),
            Element::rule("HCOLON"),
            Element::repetition(1, None, Element::rule("DIGIT")),
            Element::rule("LWS"),
            Element::rule("Method"),
        ])
    );
}

#[test]
fn lws_rule() {
    let e = body("X = [*WSP CRLF] 1*WSP");
    assert_eq!(
        e,
        Element::Sequence(vec![
            Element::repetition(
                0,
                Some(1),
                Element::Sequence(vec![
                    Element::repetition(0, None, Element::rule("WSP")),
                    Element::rule("CRLF"),
                ])
            ),
            Element::repetition(1, None, Element::rule("WSP")),
        ])
    );
}

#[test]
fn minimal_rule() {
    assert_eq!(body(r#"A = "x""#), Element::LiteralCi("x".into()));
}

#[test]
fn char_codes_decode_to_invite() {
    let e = body("M = %x49.4E.56.49.54.45");
    assert_eq!(e, Element::CharCodes(b"INVITE".to_vec()));
    assert_eq!(body("M = %d73.78.86.73.84.69"), e);
}

#[test]
fn repetition_shorthands() {
    let cases = [
        ("R = 2*X", 2, None),
        ("R = *3X", 0, Some(3)),
        ("R = *X", 0, None),
        ("R = 4X", 4, Some(4)),
        ("R = 2*5X", 2, Some(5)),
        ("R = [X]", 0, Some(1)),
    ];
    for (src, min, max) in cases {
        assert_eq!(body(src), Element::repetition(min, max, Element::rule("X")), "{src}");
    }
}

#[test]
fn ranges_and_groups() {
    assert_eq!(body("R = %x41-5A"), Element::CharRange(0x41, 0x5A));
    assert_eq!(
        body("R = (A / B) C"),
        Element::Sequence(vec![
            Element::Alternation(vec![Element::rule("A"), Element::rule("B")]),
            Element::rule("C"),
        ])
    );
}

#[test]
fn continuation_lines_and_comments() {
    let g = parse_abnf(
        "Method = INVITEm / ACKm ; comment\n         / BYEm\n; full-line comment\nNext = \"x\"\n",
    )
    .unwrap();
    assert_eq!(g.len(), 2);
    assert_eq!(
        g.rules()[0].body,
        Element::Alternation(vec![
            Element::rule("INVITEm"),
            Element::rule("ACKm"),
            Element::rule("BYEm"),
        ])
    );
    assert_eq!(g.rules()[1].span, Span::new(4, 1));
}

#[test]
fn incremental_alternatives() {
    let g = parse_abnf("A = \"x\"\nA =/ \"y\"\n").unwrap();
    assert_eq!(g.len(), 1);
    assert_eq!(
        g.rules()[0].body,
        Element::Alternation(vec![Element::LiteralCi("x".into()), Element::LiteralCi("y".into())])
    );
}

#[test]
fn duplicates_are_kept_for_the_verifier() {
    let g = parse_abnf("a = \"x\"\nA = \"y\"\n").unwrap();
    assert_eq!(g.len(), 2);
    assert_eq!(g.get("A").unwrap().body, Element::LiteralCi("x".into()));
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse_abnf("A = \"abc\nB = x").unwrap_err();
    assert_eq!(err.span, Span::new(1, 5));
    assert!(err.message.contains("unterminated"));

    let err = parse_abnf("A = 3*2DIGIT").unwrap_err();
    assert!(err.message.contains("bad repetition"), "{err}");

    let err = parse_abnf("A \"x\"").unwrap_err();
    assert!(err.message.contains("missing '='"), "{err}");

    let err = parse_abnf("A = %b0101").unwrap_err();
    assert!(err.message.contains("binary"), "{err}");

    let err = parse_abnf("Host = <a host name>").unwrap_err();
    assert!(err.message.contains("Host") || err.message.contains("prose"), "{err}");

    let err = parse_abnf("A = B:name").unwrap_err();
    assert!(err.message.contains(':'), "{err}");
}

#[test]
fn core_rule_shapes() {
    let core = core_rules();
    assert_eq!(core.get("DIGIT").unwrap().body, Element::CharRange(0x30, 0x39));
    assert_eq!(
        core.get("WSP").unwrap().body,
        Element::Alternation(vec![Element::rule("SP"), Element::rule("HTAB")])
    );
    assert_eq!(
        core.get("CRLF").unwrap().body,
        Element::Sequence(vec![Element::rule("CR"), Element::rule("LF")])
    );
    for name in [
        "ALPHA", "DIGIT", "HEXDIG", "SP", "HTAB", "WSP", "CRLF", "CR", "LF", "DQUOTE", "VCHAR",
        "OCTET", "CHAR",
    ] {
        assert!(core.contains(name), "{name}");
    }
    assert!(core.contains("digit"));
}

#[test]
fn pretty_print_round_trip() {
    let src = r#"
SIP-Version = "SIP" "/" 1*DIGIT "." 1*DIGIT
LWS = [*WSP CRLF] 1*WSP
HCOLON = *( SP / HTAB ) ":" SWS
R = 2*3(A / B C) %x41-5A %x49.4E *5"x" 3X (A B) / C
"#;
    let g = parse_abnf(src).unwrap();
    let printed = g.to_string();
    let again = parse_abnf(&printed).unwrap();
    assert_eq!(g.rules().len(), again.rules().len());
    for (a, b) in g.rules().iter().zip(again.rules()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.body, b.body);
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_element() -> impl Strategy<Value = Element> {
        let leaf = prop_oneof![
            "[a-zA-Z0-9 !#$&-]{1,4}".prop_map(Element::LiteralCi),
            prop::collection::vec(any::<u8>(), 1..4).prop_map(Element::CharCodes),
            (any::<u8>(), any::<u8>()).prop_map(|(a, b)| Element::CharRange(a.min(b), a.max(b))),
            "[A-Za-z][A-Za-z0-9-]{0,5}".prop_map(Element::RuleRef),
        ];
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(Element::Sequence),
                prop::collection::vec(inner.clone(), 2..4).prop_map(Element::Alternation),
                (0u32..4, prop::option::of(0u32..4), inner).prop_map(|(min, extra, e)| {
                    Element::repetition(min, extra.map(|x| min + x), e)
                }),
            ]
        })
    }

    // Sequence-in-sequence and alternation-in-alternation are printed with
    // parentheses, so the round trip is exact for every tree.
    proptest! {
        #[test]
        fn print_then_parse_is_identity(body in arb_element()) {
            let rule = Rule { name: "R".into(), body: body.clone(), span: Span::new(1, 1) };
            let printed = rule.to_string();
            let g = parse_abnf(&printed).unwrap();
            prop_assert_eq!(&g.rules()[0].body, &body, "printed: {}", printed);
        }

        #[test]
        fn parsing_is_deterministic(body in arb_element()) {
            let text = Rule { name: "R".into(), body, span: Span::new(1, 1) }.to_string();
            prop_assert_eq!(parse_abnf(&text).unwrap(), parse_abnf(&text).unwrap());
        }
    }
}
