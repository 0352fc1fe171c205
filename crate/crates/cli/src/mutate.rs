use std::path::PathBuf;

use zebu_core::artifact::GrammarArtifact;
use zebu_core::engine;
use zebu_core::mutation::{run_campaign, write_corpus, CampaignConfig, Harness, Mix};

use crate::{load_artifact, load_spec, read_text, Failure};

#[derive(clap::Args)]
pub struct Args {
    /// Compiled artifact, or a `.zebu` specification.
    pub grammar: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long)]
    pub seed: u64,
    /// Rule weights, e.g. `charset=1,repetition=1,constraint=1,torture=1`.
    #[arg(long, default_value = "charset=1,repetition=1,constraint=1,torture=1")]
    pub mix: Mix,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn load(path: &std::path::Path) -> Result<GrammarArtifact, Failure> {
    if read_text(path)?.trim_start().starts_with('{') {
        return load_artifact(path);
    }
    let g = load_spec(path)?;
    GrammarArtifact::build(&g).map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))
}

pub fn run(args: &Args) -> Result<u8, Failure> {
    let artifact = load(&args.grammar)?;
    let harness = Harness::new(&artifact.source, &artifact.compiled);
    let config = CampaignConfig {
        count: args.count as usize,
        seed: args.seed,
        mix: args.mix,
        jobs: args.jobs,
    };
    let compiled = &artifact.compiled;
    let campaign = run_campaign(&harness, |raw: &[u8]| engine::validate(compiled, raw).accepted(), &config);
    write_corpus(&args.out, &campaign)
        .map_err(|e| Failure::new(2, format!("cannot write corpus to {}: {e}", args.out.display())))?;
    print!("{}", campaign.report.render());
    Ok(if campaign.report.passed() { 0 } else { 1 })
}
