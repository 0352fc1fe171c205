use zebu_core::artifact::GrammarArtifact;
use zebu_core::bundled;
use zebu_core::engine;
use zebu_core::mutation::{run_campaign, CampaignConfig, Harness, Label, Mix};

/// Every mutant of a large fixed-seed campaign is classified by the
/// validator exactly as the independent ground truth labels it.
#[test]
fn validator_agrees_with_ground_truth() {
    let a = GrammarArtifact::from_json(&GrammarArtifact::build(&bundled::sip()).unwrap().to_json()).unwrap();
    let h = Harness::new(&a.source, &a.compiled);
    let config = CampaignConfig {
        count: 10_000,
        seed: 2024,
        mix: Mix::default(),
        jobs: None,
    };
    let run = run_campaign(&h, |raw: &[u8]| engine::validate(&a.compiled, raw).accepted(), &config);
    let report = run.report.render();
    assert_eq!(run.report.exhausted(), 0, "{report}");
    assert_eq!(run.report.emitted(), 10_000);
    for (i, m, accepted) in &run.mutants {
        assert_eq!(*accepted, m.ground_truth == Label::Valid, "mutant {i}: {:?}", m.provenance);
    }
    assert!(run.report.constraints.iter().all(|(_, n)| *n > 0), "{report}");
}

#[test]
fn rtsp_campaign_is_clean() {
    let g = bundled::rtsp();
    let c = engine::compile(&g).unwrap();
    let h = Harness::new(&g, &c);
    let config = CampaignConfig {
        count: 400,
        seed: 8,
        mix: Mix::default(),
        jobs: None,
    };
    let run = run_campaign(&h, |raw: &[u8]| engine::validate(&c, raw).accepted(), &config);
    assert!(run.report.passed(), "{}", run.report.render());
}
