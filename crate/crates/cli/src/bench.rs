use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use zebu_core::engine::{CompiledGrammar, ParsedMessage};

use crate::{load_artifact, Failure};

/// Corpus files every bench run needs.
pub const SHAPES: [&str; 4] = ["invite1", "invite2", "invite3", "bye"];

#[derive(clap::Args)]
pub struct Args {
    pub artifact: PathBuf,
    pub corpus: PathBuf,
    /// Comma-separated header names to access.
    #[arg(long, value_delimiter = ',', default_value = "")]
    pub headers: Vec<String>,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    pub iters: u32,
}

struct Row {
    name: String,
    bytes: usize,
    median_ns: u128,
    exec: u64,
    lazy: u64,
}

/// Command-line classification plus one access per requested header.
/// Returns the pattern and lazy counters.
fn access(g: &CompiledGrammar, raw: &[u8], headers: &[String]) -> Result<(u64, u64), Failure> {
    let mut msg = ParsedMessage::open(g, raw).map_err(|r| Failure::new(1, format!("message does not index: {r}")))?;
    let _ = msg.message_type();
    for h in headers {
        let parsed = msg
            .parse_header(h)
            .map_err(|e| Failure::new(2, format!("header `{h}`: {e}")))?;
        black_box(parsed);
    }
    Ok((msg.exec_counter(), msg.lazy_exec_counter()))
}

fn measure(g: &CompiledGrammar, name: &str, raw: &[u8], headers: &[String], iters: u32) -> Result<Row, Failure> {
    let (exec, lazy) = access(g, raw, headers)?;
    for _ in 0..iters.div_ceil(10) {
        access(g, raw, headers)?;
    }
    let mut samples: Vec<u128> = (0..iters)
        .map(|_| {
            let start = Instant::now();
            let r = access(g, black_box(raw), headers);
            let elapsed = start.elapsed().as_nanos();
            r.map(|_| elapsed)
        })
        .collect::<Result<_, _>>()?;
    samples.sort_unstable();
    Ok(Row {
        name: name.to_string(),
        bytes: raw.len(),
        median_ns: samples[samples.len() / 2],
        exec,
        lazy,
    })
}

pub fn run(args: &Args) -> Result<u8, Failure> {
    let artifact = load_artifact(&args.artifact)?;
    let g = &artifact.compiled;
    let headers: Vec<String> = args.headers.iter().filter(|h| !h.is_empty()).cloned().collect();
    if let Some(bad) = headers.iter().find(|h| g.header_index(h).is_none()) {
        return Err(Failure::new(2, format!("header `{bad}` is not declared")));
    }

    let mut messages = Vec::new();
    for shape in SHAPES {
        let path = args.corpus.join(format!("{shape}.raw"));
        let raw = std::fs::read(&path)
            .map_err(|e| Failure::new(2, format!("corpus shape `{shape}` missing ({}): {e}", path.display())))?;
        messages.push((shape.to_string(), raw));
    }
    let mut extra: Vec<PathBuf> = std::fs::read_dir(&args.corpus)
        .map_err(|e| Failure::new(2, format!("cannot list {}: {e}", args.corpus.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "raw"))
        .filter(|p| !SHAPES.iter().any(|s| p.file_stem().is_some_and(|stem| stem == *s)))
        .collect();
    extra.sort();
    for path in extra {
        let raw = std::fs::read(&path).map_err(|e| Failure::new(2, format!("cannot read {}: {e}", path.display())))?;
        let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        messages.push((name, raw));
    }

    let rows: Vec<Row> = messages
        .iter()
        .map(|(name, raw)| measure(g, name, raw, &headers, args.iters))
        .collect::<Result<_, _>>()?;

    println!("headers: {}", if headers.is_empty() { "(none)".to_string() } else { headers.join(",") });
    println!("{:<12}{:>8}{:>12}{:>14}{:>14}", "message", "bytes", "median_ns", "exec_counter", "lazy_counter");
    for r in &rows {
        println!("{:<12}{:>8}{:>12}{:>14}{:>14}", r.name, r.bytes, r.median_ns, r.exec, r.lazy);
    }
    let counter = |name: &str| rows.iter().find(|r| r.name == name).map(|r| r.exec);
    let (two, three) = (counter("invite2"), counter("invite3"));
    if two == three {
        println!("counter check: invite2 == invite3 ({})", two.unwrap_or(0));
        Ok(0)
    } else {
        println!("counter check FAILED: invite2 {two:?} != invite3 {three:?}");
        Ok(1)
    }
}
