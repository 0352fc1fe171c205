use super::*;

const SAMPLE: &str = r#"
protocol demo

request {
  requestLine = Method:method SP Request-URI:uri:struct:lazy SP SIP-Version;
  CSeq.method == requestLine.method;
  mandatory Max-Forwards;
}
response {
  statusLine = SIP-Version SP Status-Code:code:uint16 SP Reason;
  100 <= statusLine.code && statusLine.code < 699;
}
header CSeq = 1*DIGIT:number:uint32 LWS Method:method { mandatory; number < 2147483648 }
header Max-Forwards = 1*DIGIT:hops:uint32 {}
header To { "To" / "t" } = token:name { mandatory; readonly }

Method = %x49.4E.56.49.54.45 / %x42.59.45 / token { enum }
Request-URI = "sip:" host:host
host = 1*( ALPHA / DIGIT / "." )
SIP-Version = "SIP" "/" 1*DIGIT "." 1*DIGIT
Status-Code = 3DIGIT
Reason = *( ALPHA / SP )
token = 1*( ALPHA / DIGIT / "-" )
LWS = [*WSP CRLF] 1*WSP
"#;

#[test]
fn parses_entry_points_headers_and_blocks() {
    let g = parse_zebu(SAMPLE).unwrap();
    assert_eq!(g.protocol, "demo");
    assert!(g.request_line.is_some() && g.status_line.is_some());
    assert_eq!(g.headers.len(), 3);
    assert_eq!(g.request_block.len(), 1);
    assert_eq!(g.response_block.len(), 1);

    let cseq = g.header("cseq").unwrap();
    assert_eq!(cseq.mandatory_in, Presence::Both);
    assert_eq!(cseq.subfields[0].name, "number");
    assert_eq!(cseq.subfields[0].shape, Shape::Uint32);
    assert_eq!(cseq.local_constraints.len(), 1);

    let mf = g.header("Max-Forwards").unwrap();
    assert_eq!(mf.mandatory_in, Presence::Request);
    assert!(mf.local_constraints.is_empty() && !mf.multiple);

    let to = g.header("To").unwrap();
    assert_eq!(to.keys(), ["To", "t"]);
    assert!(to.readonly);

    assert_eq!(g.rule_shapes.get("method"), Some(&Shape::Enum));
    assert!(g.base.contains("LWS"));
    assert!(!g.base.contains("CSeq"));
}

#[test]
fn request_line_subfields() {
    let g = parse_zebu(SAMPLE).unwrap();
    let names: Vec<_> = subfields_of(&g, &EntryRef::RequestLine)
        .unwrap()
        .into_iter()
        .map(|s| (s.name, s.shape, s.within_lazy))
        .collect();
    assert_eq!(
        names,
        [
            ("method".to_string(), Shape::Enum, None),
            ("uri".to_string(), Shape::Struct, None),
            ("host".to_string(), Shape::RawSlice, Some("uri".to_string())),
        ]
    );
}

#[test]
fn constraint_refs_bind() {
    let mut g = parse_zebu(SAMPLE).unwrap();
    resolve_all(&mut g).unwrap();
    let fields = g.request_block[0].expr.fields();
    let bindings: Vec<_> = fields.iter().map(|f| f.binding.clone().unwrap()).collect();
    assert_eq!(bindings[0].entry, EntryRef::Header("CSeq".into()));
    assert_eq!(bindings[1].entry, EntryRef::RequestLine);
    assert!(bindings.iter().all(|b| b.subfield == "method"));
    let local = &g.header("CSeq").unwrap().local_constraints[0];
    assert_eq!(local.expr.fields()[0].binding.as_ref().unwrap().subfield, "number");

    let again = g.clone();
    resolve_all(&mut g).unwrap();
    assert_eq!(g, again);
}

#[test]
fn unresolved_ref_names_the_constraint() {
    let src = SAMPLE.replace("CSeq.method == requestLine.method", "Foo.bar == 1");
    let mut g = parse_zebu(&src).unwrap();
    let errs = resolve_all(&mut g).unwrap_err();
    match &errs[0] {
        FrontendError::UnresolvedFieldRef { path, constraint, .. } => {
            assert_eq!(path, "Foo.bar");
            assert_eq!(constraint, "Foo.bar == 1");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn status_range_lowers_to_bounds() {
    let g = parse_zebu(SAMPLE).unwrap();
    let range = RangeBound::from_expr(&g.response_block[0].expr, |_| true).unwrap();
    assert_eq!(range, RangeBound { lo: 100, hi: Some(699), hi_strict: true });
    assert!(range.contains(698) && !range.contains(699) && !range.contains(99));
    assert_eq!(range.first_above(), Some(699));
    assert_eq!(range.last_below(), Some(99));
}

#[test]
fn empty_block_is_neutral() {
    let g = parse_zebu("header X = \"a\" {}\n").unwrap();
    let x = g.header("X").unwrap();
    assert_eq!(x.mandatory_in, Presence::None);
    assert!(!x.multiple && x.local_constraints.is_empty());
}

#[test]
fn plain_abnf_round_trips() {
    let src = "A = B 1*DIGIT\nB = \"x\" / %x41-5A\n";
    let g = parse_zebu(src).unwrap();
    assert!(!g.has_annotations());
    assert_eq!(g.base, abnf::parse_abnf(src).unwrap());
    assert_eq!(abnf::parse_abnf(&g.base.to_string()).unwrap().rules()[1].body, g.base.rules()[1].body);
}

#[test]
fn errors() {
    let err = parse_zebu("requestLine = \"A\"\nrequestLine = \"B\"\n").unwrap_err();
    assert!(matches!(err, FrontendError::DuplicateEntryPoint { .. }), "{err}");

    let err = parse_zebu("header X = \"a\" { sticky }\n").unwrap_err();
    assert!(matches!(err, FrontendError::UnknownAnnotation { ref word, .. } if word == "sticky"), "{err}");

    let err = parse_zebu("header X = \"a\" { mandatory \n").unwrap_err();
    assert!(matches!(err, FrontendError::Syntax(_)), "{err}");

    let err = parse_zebu("header X { \"x\" / y } = \"a\"\n").unwrap_err();
    assert!(err.to_string().contains("quoted"), "{err}");

    let src = "header X = A:v SP B:v\nA = \"a\"\nB = \"b\"\n";
    let mut g = parse_zebu(src).unwrap();
    let errs = resolve_all(&mut g).unwrap_err();
    assert!(matches!(errs[0], FrontendError::DuplicateSubfield { ref name, .. } if name == "v"));
}

#[test]
fn shared_annotation_is_one_slot() {
    let src = "header X = P SP P\nP = 1*DIGIT:n:uint16\n";
    let g = parse_zebu(src).unwrap();
    let space = subfields_of(&g, &EntryRef::Header("X".into())).unwrap();
    assert_eq!(space.len(), 1);
}
