use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zebu_core::artifact::GrammarArtifact;
use zebu_core::frontend::{parse_zebu, AnnotatedGrammar};
use zebu_core::verifier;

mod bench;
mod mutate;
mod parse;

#[derive(Parser)]
#[command(name = "zebu", version, about = "Annotated-ABNF protocol parser compiler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify a grammar specification.
    Check { spec: PathBuf },
    /// Verify and compile a specification to an artifact.
    Compile {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Validate a message and print selected fields.
    Parse {
        artifact: PathBuf,
        message: PathBuf,
        /// `Header.sub[.sub...]`; repeatable.
        #[arg(long = "field")]
        fields: Vec<String>,
    },
    /// Run a mutation campaign against the grammar's own validator.
    Mutate(mutate::Args),
    /// Time header access on the canonical corpus shapes.
    Bench(bench::Args),
}

/// Exit status with a message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(2, format!("cannot read {}: {e}", path.display())))
}

/// Parses and verifies a specification, printing diagnostics. Exit 1 when
/// it does not verify.
pub fn load_spec(path: &Path) -> Result<AnnotatedGrammar, Failure> {
    let text = read_text(path)?;
    let file = path.display().to_string();
    let g = parse_zebu(&text).map_err(|e| Failure::new(1, format!("{file}:{e}")))?;
    let diags = verifier::verify_all(&g);
    for d in &diags {
        eprintln!("{}", d.render(&file));
    }
    if verifier::has_errors(&diags) {
        return Err(Failure::new(1, format!("{file}: verification failed")));
    }
    Ok(g)
}

pub fn load_artifact(path: &Path) -> Result<GrammarArtifact, Failure> {
    let text = read_text(path)?;
    GrammarArtifact::from_json(&text).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn check(spec: &Path) -> Result<u8, Failure> {
    load_spec(spec).map(|_| 0)
}

fn compile(spec: &Path, output: &Path) -> Result<u8, Failure> {
    let g = load_spec(spec)?;
    let artifact = GrammarArtifact::build(&g).map_err(|e| Failure::new(1, format!("{}: {e}", spec.display())))?;
    std::fs::write(output, artifact.to_json())
        .map_err(|e| Failure::new(3, format!("cannot write {}: {e}", output.display())))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { spec } => check(spec),
        Command::Compile { spec, output } => compile(spec, output),
        Command::Parse {
            artifact,
            message,
            fields,
        } => parse::run(artifact, message, fields),
        Command::Mutate(args) => mutate::run(args),
        Command::Bench(args) => bench::run(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("zebu: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
