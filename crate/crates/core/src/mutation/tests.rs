use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::campaign::{mutant_seed, mutate_one};
use super::*;
use crate::bundled;
use crate::engine::{self, CompiledGrammar};

fn sip() -> (AnnotatedGrammar, CompiledGrammar) {
    let g = bundled::sip();
    let c = engine::compile(&g).unwrap();
    (g, c)
}

fn accepts(c: &CompiledGrammar) -> impl Fn(&[u8]) -> bool + Sync + '_ {
    move |raw| engine::validate(c, raw).accepted()
}

#[test]
fn derived_messages_are_accepted_and_reproducible() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    for seed in 0..30 {
        let t = derive_valid(&h, seed).unwrap();
        assert!(engine::validate(&c, &t.bytes).accepted(), "{}", String::from_utf8_lossy(&t.bytes));
        assert_eq!(derive_valid(&h, seed).unwrap(), t);
    }
}

#[test]
fn both_kinds_are_derived() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let kinds: Vec<_> = (0..20).map(|s| derive_valid(&h, s).unwrap().kind).collect();
    assert!(kinds.contains(&engine::MessageKind::Request));
    assert!(kinds.contains(&engine::MessageKind::Response));
}

#[test]
fn each_rule_produces_its_label() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let gt = h.ground_truth();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let t = derive_valid(&h, seed).unwrap();
        for m in [
            mutate_charset(&h, &t, Position::Middle, &mut rng),
            mutate_repetition(&h, &t, &mut rng),
            mutate_constraint(&h, &t, &mut rng),
            mutate_torture(&h, &t, &mut rng),
        ]
        .into_iter()
        .flatten()
        {
            assert_eq!(gt.label(&m.bytes).unwrap(), m.ground_truth, "{:?}", m.provenance);
            let crlf = |b: &[u8]| b.windows(2).filter(|w| w == b"\r\n").count();
            if m.rule == MutationRule::Charset {
                assert_eq!(crlf(&m.bytes), crlf(&t.bytes));
            }
        }
    }
}

#[test]
fn mutants_are_reproducible_from_their_seed() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let mix = Mix::default();
    for i in 0..12 {
        let seed = mutant_seed(9, i);
        let (rule, a) = mutate_one(&h, seed, &mix);
        let (_, b) = mutate_one(&h, seed, &mix);
        assert_eq!(a, b);
        assert_eq!(a.unwrap().rule, rule);
    }
}

#[test]
fn small_campaign_is_clean_and_job_independent() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let config = CampaignConfig {
        count: 120,
        seed: 5,
        mix: Mix::default(),
        jobs: None,
    };
    let a = run_campaign(&h, accepts(&c), &config);
    assert_eq!(a.report.missed(), 0, "{}", a.report.render());
    assert_eq!(a.report.false_rejects(), 0, "{}", a.report.render());
    let b = run_campaign(&h, accepts(&c), &CampaignConfig { jobs: Some(1), ..config });
    assert_eq!(a.mutants, b.mutants);
    assert_eq!(a.report, b.report);
}

#[test]
fn accept_all_target_misses_every_invalid_mutant() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let config = CampaignConfig {
        count: 40,
        seed: 1,
        mix: Mix::default(),
        jobs: None,
    };
    let run = run_campaign(&h, |_: &[u8]| true, &config);
    let invalid = run.mutants.iter().filter(|(_, m, _)| m.ground_truth == Label::Invalid).count();
    assert!(invalid > 0);
    assert_eq!(run.report.missed(), invalid);
}

#[test]
fn torture_only_mix() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let config = CampaignConfig {
        count: 30,
        seed: 2,
        mix: "torture-only".parse().unwrap(),
        jobs: None,
    };
    let run = run_campaign(&h, accepts(&c), &config);
    assert_eq!(run.report.per_rule.keys().collect::<Vec<_>>(), vec![&MutationRule::Torture]);
    assert_eq!(run.report.false_rejects(), 0);
    assert!(run.mutants.iter().all(|(_, m, _)| m.ground_truth == Label::Valid));
}

#[test]
fn mix_parsing() {
    let m: Mix = "charset=2,torture=1".parse().unwrap();
    assert_eq!(m.weights, [2, 0, 0, 1]);
    assert!("charset=0".parse::<Mix>().is_err());
    assert!("bogus=1".parse::<Mix>().is_err());
    assert_eq!("REPETITION-only".parse::<Mix>().unwrap(), Mix::only(MutationRule::Repetition));
}

#[test]
fn report_table_has_fixed_columns() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let config = CampaignConfig {
        count: 8,
        seed: 4,
        mix: Mix::default(),
        jobs: Some(1),
    };
    let text = run_campaign(&h, accepts(&c), &config).report.render();
    let lines: Vec<&str> = text.lines().take(5).collect();
    let width = lines[0].len();
    assert!(lines[1..].iter().all(|l| l.len() == width), "{text}");
    assert!(text.contains("constraint CSeq.method == requestLine.method"));
}

#[test]
fn reject_all_target_false_rejects_every_torture_mutant() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let config = CampaignConfig {
        count: 40,
        seed: 6,
        mix: Mix::default(),
        jobs: None,
    };
    let run = run_campaign(&h, |_: &[u8]| false, &config);
    let torture = run.mutants.iter().filter(|(_, m, _)| m.rule == MutationRule::Torture).count();
    assert!(torture > 0);
    assert_eq!(run.report.false_rejects(), torture);
    assert_eq!(run.report.missed(), 0);
}

#[test]
fn zero_size_budget_gives_minimal_repetitions() {
    let (g, c) = sip();
    let mut h = Harness::new(&g, &c);
    h.size_budget = 0;
    for seed in 0..5 {
        let t = derive_valid(&h, seed).unwrap();
        for n in &t.nodes {
            if let NodeKind::Repetition { min, iterations, .. } = &n.kind {
                assert_eq!(iterations.len() as u32, *min);
            }
        }
    }
}

#[test]
fn derived_requests_carry_max_forwards() {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let mf = c.header_index("Max-Forwards").unwrap();
    for seed in 0..20 {
        let t = derive_valid(&h, seed).unwrap();
        if t.kind == engine::MessageKind::Request {
            assert!(t.header_lines(mf).next().is_some());
        }
    }
}
