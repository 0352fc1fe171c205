use zebu_core::artifact::{ArtifactError, GrammarArtifact};
use zebu_core::bundled;
use zebu_core::engine;

#[test]
fn round_trip_is_byte_stable() {
    for g in [bundled::sip(), bundled::rtsp()] {
        let a = GrammarArtifact::build(&g).unwrap();
        let text = a.to_json();
        let back = GrammarArtifact::from_json(&text).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_json(), text);
        assert_eq!(GrammarArtifact::build(&g).unwrap().to_json(), text);
    }
}

#[test]
fn loaded_artifact_validates_like_the_original() {
    let a = GrammarArtifact::build(&bundled::sip()).unwrap();
    let back = GrammarArtifact::from_json(&a.to_json()).unwrap();
    for (name, raw) in bundled::sip_corpus() {
        let v = engine::validate(&back.compiled, raw);
        assert!(v.accepted(), "{name}: {v}");
        assert_eq!(v, engine::validate(&a.compiled, raw));
    }
    let rtsp = GrammarArtifact::build(&bundled::rtsp()).unwrap();
    for raw in bundled::RTSP_MESSAGES {
        assert!(engine::validate(&rtsp.compiled, raw).accepted());
    }
}

#[test]
fn version_and_shape_are_checked() {
    let a = GrammarArtifact::build(&bundled::sip()).unwrap();
    let bumped = a.to_json().replacen("\"format_version\": 1", "\"format_version\": 99", 1);
    assert!(matches!(GrammarArtifact::from_json(&bumped), Err(ArtifactError::Version { found: 99 })));
    assert!(matches!(GrammarArtifact::from_json("{}"), Err(ArtifactError::Json(_))));
}
