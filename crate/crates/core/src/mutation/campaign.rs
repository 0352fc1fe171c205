//! Mutation campaigns: generate, classify, and tally.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::par;

use super::ops::constraint_labels;
use super::{
    derive_valid, mutate_charset, mutate_constraint, mutate_repetition, mutate_torture, Harness, Label, Mix, Mutant,
    MutationError, MutationRule, Position,
};

/// Fresh base messages tried per mutant before giving up.
const BASE_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CampaignConfig {
    pub count: usize,
    pub seed: u64,
    pub mix: Mix,
    /// Worker threads; `None` lets the pool decide, `Some(1)` runs inline.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RuleTally {
    pub emitted: usize,
    /// INVALID mutants the target rejected.
    pub detected: usize,
    /// INVALID mutants the target accepted.
    pub missed: usize,
    /// VALID mutants the target rejected.
    pub false_rejects: usize,
    /// Mutants that could not be produced.
    pub exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationReport {
    pub seed: u64,
    pub requested: usize,
    pub per_rule: BTreeMap<MutationRule, RuleTally>,
    pub positions: BTreeMap<Position, usize>,
    /// Every semantic rule of the grammar with the number of CONSTRAINT
    /// mutants that broke it.
    pub constraints: Vec<(String, usize)>,
}

impl MutationReport {
    pub fn missed(&self) -> usize {
        self.per_rule.values().map(|t| t.missed).sum()
    }

    pub fn false_rejects(&self) -> usize {
        self.per_rule.values().map(|t| t.false_rejects).sum()
    }

    pub fn emitted(&self) -> usize {
        self.per_rule.values().map(|t| t.emitted).sum()
    }

    pub fn exhausted(&self) -> usize {
        self.per_rule.values().map(|t| t.exhausted).sum()
    }

    pub fn passed(&self) -> bool {
        self.missed() == 0 && self.false_rejects() == 0
    }

    /// Fixed-column text table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12}{:>9}{:>10}{:>8}{:>14}{:>11}{:>11}",
            "rule", "emitted", "detected", "missed", "falseRejects", "exhausted", "rate"
        );
        let mut total = RuleTally::default();
        for (rule, t) in &self.per_rule {
            let rate = if rule.expected() == Label::Valid {
                ratio(t.emitted - t.false_rejects, t.emitted)
            } else {
                ratio(t.detected, t.emitted)
            };
            let _ = writeln!(
                s,
                "{:<12}{:>9}{:>10}{:>8}{:>14}{:>11}{:>11}",
                rule.as_str(),
                t.emitted,
                t.detected,
                t.missed,
                t.false_rejects,
                t.exhausted,
                rate
            );
            total.emitted += t.emitted;
            total.detected += t.detected;
            total.missed += t.missed;
            total.false_rejects += t.false_rejects;
            total.exhausted += t.exhausted;
        }
        let _ = writeln!(
            s,
            "{:<12}{:>9}{:>10}{:>8}{:>14}{:>11}",
            "total", total.emitted, total.detected, total.missed, total.false_rejects, total.exhausted
        );
        if self.per_rule.contains_key(&MutationRule::Torture) {
            let _ = writeln!(s, "TORTURE rows are torture-style: case, colon whitespace, folding and repetition bounds only");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "seed {}  requested {}", self.seed, self.requested);
        let positions: Vec<String> = Position::ALL
            .iter()
            .map(|p| format!("{p}={}", self.positions.get(p).copied().unwrap_or(0)))
            .collect();
        let _ = writeln!(s, "charset positions: {}", positions.join(" "));
        let hit = self.constraints.iter().filter(|(_, n)| *n > 0).count();
        let _ = writeln!(s, "constraints exercised: {hit}/{}", self.constraints.len());
        for (label, n) in &self.constraints {
            let _ = writeln!(s, "  {n:>6}  {label}");
        }
        s
    }
}

fn ratio(num: usize, den: usize) -> String {
    if den == 0 {
        "-".to_string()
    } else {
        format!("{:.2}%", 100.0 * num as f64 / den as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Campaign {
    /// Produced mutants with the target's decision (`true` = accepted),
    /// in index order.
    pub mutants: Vec<(usize, Mutant, bool)>,
    pub report: MutationReport,
}

/// Seed of mutant `index` in a campaign seeded with `seed`.
pub fn mutant_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 over the pair, so neighbouring indices get unrelated streams.
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pick_rule(mix: &Mix, rng: &mut impl Rng) -> MutationRule {
    let mut roll = rng.random_range(0..mix.total());
    for rule in MutationRule::ALL {
        let w = mix.weight(rule);
        if roll < w {
            return rule;
        }
        roll -= w;
    }
    unreachable!("roll below total weight")
}

/// One mutant from its own seed; the rule is drawn from `mix`.
pub fn mutate_one(h: &Harness, seed: u64, mix: &Mix) -> (MutationRule, Result<Mutant, MutationError>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rule = pick_rule(mix, &mut rng);
    let position = Position::ALL[rng.random_range(0..3)];
    let mut last = MutationError::BudgetExhausted;
    for _ in 0..BASE_ATTEMPTS {
        let tree = match derive_valid(h, rng.random()) {
            Ok(t) => t,
            Err(e) => {
                last = e;
                continue;
            }
        };
        let result = match rule {
            MutationRule::Charset => mutate_charset(h, &tree, position, &mut rng),
            MutationRule::Repetition => mutate_repetition(h, &tree, &mut rng),
            MutationRule::Constraint => mutate_constraint(h, &tree, &mut rng),
            MutationRule::Torture => mutate_torture(h, &tree, &mut rng),
        };
        match result {
            Ok(mut m) => {
                m.seed = seed;
                return (rule, Ok(m));
            }
            Err(e) => last = e,
        }
    }
    (rule, Err(last))
}

/// Generates `config.count` mutants and classifies each with `target`,
/// which returns whether it accepts the message. Output is independent of
/// the number of jobs.
pub fn run_campaign<F>(h: &Harness, target: F, config: &CampaignConfig) -> Campaign
where
    F: Fn(&[u8]) -> bool + Sync,
{
    let results = par::map_indexed(config.count, config.jobs, |i| {
        let (rule, m) = mutate_one(h, mutant_seed(config.seed, i), &config.mix);
        let m = m.map(|m| {
            let accepted = target(&m.bytes);
            (m, accepted)
        });
        (rule, m)
    });

    let mut per_rule: BTreeMap<MutationRule, RuleTally> = MutationRule::ALL
        .into_iter()
        .filter(|r| config.mix.weight(*r) > 0)
        .map(|r| (r, RuleTally::default()))
        .collect();
    let mut positions = BTreeMap::new();
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    let mut mutants = Vec::new();
    for (i, (rule, outcome)) in results.into_iter().enumerate() {
        let tally = per_rule.entry(rule).or_default();
        let Ok((m, accepted)) = outcome else {
            tally.exhausted += 1;
            continue;
        };
        tally.emitted += 1;
        match (m.ground_truth, accepted) {
            (Label::Invalid, false) => tally.detected += 1,
            (Label::Invalid, true) => tally.missed += 1,
            (Label::Valid, false) => tally.false_rejects += 1,
            (Label::Valid, true) => {}
        }
        if let Some(p) = m.position {
            *positions.entry(p).or_insert(0) += 1;
        }
        if let Some(c) = &m.constraint {
            *hits.entry(c.clone()).or_insert(0) += 1;
        }
        mutants.push((i, m, accepted));
    }
    let mut constraints: Vec<(String, usize)> = constraint_labels(h)
        .into_iter()
        .map(|l| {
            let n = hits.remove(&l).unwrap_or(0);
            (l, n)
        })
        .collect();
    constraints.extend(hits);

    Campaign {
        mutants,
        report: MutationReport {
            seed: config.seed,
            requested: config.count,
            per_rule,
            positions,
            constraints,
        },
    }
}

/// Writes `NNNNN.raw` per mutant, `manifest.txt` with one line per mutant
/// (`<index> <rule> <groundTruth> <seed> <description>`) and `report.txt`.
pub fn write_corpus(dir: &Path, campaign: &Campaign) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = io::BufWriter::new(std::fs::File::create(dir.join("manifest.txt"))?);
    for (i, m, _) in &campaign.mutants {
        std::fs::write(dir.join(format!("{i:05}.raw")), &m.bytes)?;
        writeln!(
            manifest,
            "{i} {} {} {} {}: {}",
            m.rule, m.ground_truth, m.seed, m.provenance.node, m.provenance.description
        )?;
    }
    manifest.flush()?;
    std::fs::write(dir.join("report.txt"), campaign.report.render())
}
