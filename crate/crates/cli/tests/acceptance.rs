//! One PASS/FAIL line per acceptance criterion; exits nonzero on any failure.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zebu_core::bundled;
use zebu_core::abnf::Element;
use zebu_core::engine::{self, CompiledGrammar, ParsedMessage, ReasonCode};
use zebu_core::frontend::{parse_zebu, AnnotatedGrammar};
use zebu_core::matcher::{reference_match, Pattern};
use zebu_core::mutation::{derive_valid, Harness};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn zebu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zebu")).args(args).output().expect("zebu runs")
}

fn sip() -> (AnnotatedGrammar, CompiledGrammar) {
    let g = bundled::sip();
    let c = engine::compile(&g).expect("SIP compiles");
    (g, c)
}

fn sip_file(dir: &Path) -> PathBuf {
    let p = dir.join("sip.zebu");
    std::fs::write(&p, bundled::SIP_SUBSET).unwrap();
    p
}

fn compile_artifact(dir: &Path) -> Result<PathBuf, String> {
    let spec = sip_file(dir);
    let out = dir.join("sip.json");
    let o = zebu(&["compile", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    if !o.status.success() {
        return Err(format!("compile failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(out)
}

/// `(missed, falseRejects)` from the report's total row.
fn totals(stdout: &[u8]) -> Option<(usize, usize)> {
    let text = String::from_utf8_lossy(stdout);
    let line = text.lines().find(|l| l.starts_with("total"))?;
    let cols: Vec<usize> = line.split_whitespace().skip(1).filter_map(|c| c.parse().ok()).collect();
    Some((*cols.get(2)?, *cols.get(3)?))
}

fn campaigns(count: &str, mix: &str, pick: impl Fn((usize, usize)) -> usize, what: &str) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let artifact = compile_artifact(dir.path())?;
    let mut seen = Vec::new();
    for seed in 1..=5u32 {
        let out = dir.path().join(format!("seed{seed}"));
        let o = zebu(&[
            "mutate",
            artifact.to_str().unwrap(),
            "--count",
            count,
            "--seed",
            &seed.to_string(),
            "--mix",
            mix,
            "--out",
            out.to_str().unwrap(),
        ]);
        let t = totals(&o.stdout).ok_or_else(|| format!("seed {seed}: no report ({})", String::from_utf8_lossy(&o.stderr)))?;
        seen.push(pick(t));
    }
    if seen.iter().all(|&n| n == 0) {
        Ok(format!("{what} per seed {seen:?}"))
    } else {
        Err(format!("{what} per seed {seen:?}"))
    }
}

fn c1_no_missed() -> Check {
    campaigns("2416", "charset=1,repetition=1,constraint=1,torture=1", |t| t.0, "missed")
}

fn c2_no_false_rejects() -> Check {
    campaigns("1000", "torture-only", |t| t.1, "falseRejects")
}

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

fn agree(name: &str, p: &Pattern, body: &Element, g: &AnnotatedGrammar, alphabet: &[u8]) -> Result<usize, String> {
    let mut n = 0;
    for s in all_strings(alphabet, 6) {
        let fast = p.match_full(&s).matched;
        let slow = reference_match(body, g, &s).map_err(|e| format!("{name}: {e}"))?;
        if fast != slow {
            return Err(format!("{name} disagrees on {:?}: vm {fast}, reference {slow}", String::from_utf8_lossy(&s)));
        }
        n += 1;
    }
    Ok(n)
}

fn c3_exhaustive_agreement() -> Check {
    let src = format!("{}\nHCOLON = *( SP / HTAB ) \":\" SWS\n", bundled::SIP_SUBSET);
    let g = parse_zebu(&src).map_err(|e| e.to_string())?;
    let c = engine::compile(&g).map_err(|e| e.to_string())?;

    let cseq = g.header("CSeq").ok_or("CSeq undeclared")?;
    let idx = c.header_index("CSeq").ok_or("CSeq not compiled")?;
    let a = agree("CSeq", &c.headers[idx].pattern, &cseq.body, &g, b"1 \tACKBYE")?;

    let mut total = a;
    for (rule, alphabet) in [("SIP-Version", &b"SIP/2.0s"[..]), ("HCOLON", &b" \t:\r\nxa;"[..])] {
        let e = Element::rule(rule);
        let p = Pattern::bare(&e, &g).map_err(|e| format!("{rule}: {e}"))?;
        total += agree(rule, &p, &e, &g, alphabet)?;
    }
    Ok(format!("{total} subjects compared"))
}

fn replace(raw: &[u8], from: &str, to: &str) -> Vec<u8> {
    String::from_utf8_lossy(raw).replacen(from, to, 1).into_bytes()
}

fn c4_constraint_fidelity() -> Check {
    let (_, c) = sip();
    let verdict = |raw: &[u8]| engine::validate(&c, raw);
    let mut notes = Vec::new();
    let mut expect = |label: String, raw: Vec<u8>, code: Option<ReasonCode>| {
        let v = verdict(&raw);
        let ok = match code {
            None => v.accepted(),
            Some(code) => !v.accepted() && v.has(code),
        };
        if !ok {
            notes.push(format!("{label}: got {}", v.to_string().trim()));
        }
    };
    let cseq = "CSeq: 314159 INVITE";
    expect("CSeq 2147483647".into(), replace(bundled::SIP_INVITE1, cseq, "CSeq: 2147483647 INVITE"), None);
    expect(
        "CSeq 2147483648".into(),
        replace(bundled::SIP_INVITE1, cseq, "CSeq: 2147483648 INVITE"),
        Some(ReasonCode::Range),
    );
    for (code, ok) in [(100u32, true), (698, true), (99, false), (699, false)] {
        let raw = replace(bundled::SIP_OK200, "SIP/2.0 200 OK", &format!("SIP/2.0 {code:03} OK"));
        expect(format!("status {code:03}"), raw, if ok { None } else { Some(ReasonCode::Range) });
    }
    expect(
        "method mismatch".into(),
        replace(bundled::SIP_INVITE1, cseq, "CSeq: 314159 BYE"),
        Some(ReasonCode::Constraint),
    );
    if notes.is_empty() {
        Ok("range, status bounds and method equality enforced".into())
    } else {
        Err(notes.join("; "))
    }
}

fn c5_exec_counter() -> Check {
    let (_, c) = sip();
    let mut counters = Vec::new();
    for raw in [bundled::SIP_INVITE1, bundled::SIP_INVITE2, bundled::SIP_INVITE3] {
        let mut m = ParsedMessage::open(&c, raw).map_err(|e| e.to_string())?;
        m.message_type().map_err(|e| e.to_string())?;
        m.parse_header("From").map_err(|e| e.to_string())?;
        counters.push((m.exec_counter(), m.lazy_exec_counter()));
    }
    let detail = format!("(exec, lazy) invite1 {:?} invite2 {:?} invite3 {:?}", counters[0], counters[1], counters[2]);
    if counters.iter().all(|&c| c == (2, 0)) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c6_check_diagnostics() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    for (name, src, code) in [
        ("undefined", "requestLine = A DIGIT\nA = B\n", "UNDEFINED_RULE"),
        ("duplicate", "requestLine = a\na = \"x\"\nA = \"y\"\n", "DUPLICATE_RULE"),
        ("cycle", "requestLine = A\nA = B\nB = A\n", "RULE_CYCLE"),
    ] {
        let p = dir.path().join(format!("{name}.zebu"));
        std::fs::write(&p, src).unwrap();
        let o = zebu(&["check", p.to_str().unwrap()]);
        let stderr = String::from_utf8_lossy(&o.stderr);
        let errors: Vec<&str> = stderr.lines().filter(|l| l.contains(": error[")).collect();
        let exact = errors.len() == 1 && errors[0].contains(&format!("error[{code}]"));
        if o.status.code() != Some(1) || !exact {
            notes.push(format!("{name}: exit {:?}, stderr {stderr:?}", o.status.code()));
        }
    }
    for (name, src) in [("sip", bundled::SIP_SUBSET), ("rtsp", bundled::RTSP_SUBSET)] {
        let p = dir.path().join(format!("{name}.zebu"));
        std::fs::write(&p, src).unwrap();
        let o = zebu(&["check", p.to_str().unwrap()]);
        if o.status.code() != Some(0) || !o.stderr.is_empty() {
            notes.push(format!("{name}: exit {:?}, stderr {:?}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
    }
    if notes.is_empty() {
        Ok("three bad grammars exit 1 with their code; SIP and RTSP exit 0".into())
    } else {
        Err(notes.join("; "))
    }
}

/// Offsets in `value` where a fold keeps the unfolded text unchanged: a WSP
/// byte followed by a non-WSP byte.
fn fold_points(raw: &[u8], value: std::ops::Range<usize>) -> Vec<usize> {
    let wsp = |b: u8| b == b' ' || b == b'\t';
    value
        .clone()
        .filter(|&i| i + 1 < value.end && wsp(raw[i]) && !wsp(raw[i + 1]))
        .collect()
}

fn c7_folding_invariance() -> Check {
    let (g, c) = sip();
    let h = Harness::new(&g, &c);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut folded = 0;
    let mut seed = 0u64;
    while folded < 100 {
        if seed >= 1000 {
            return Err(format!("only {folded} foldable messages in {seed} derivations"));
        }
        let t = derive_valid(&h, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        seed += 1;
        let candidates: Vec<(usize, usize)> = t
            .lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.header.is_some())
            .flat_map(|(i, l)| fold_points(&t.bytes, l.value.clone()).into_iter().map(move |p| (i, p)))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let (line, at) = candidates[rng.random_range(0..candidates.len())];
        let mut raw = t.bytes.clone();
        raw.splice(at..at, *b"\r\n");

        let info = &t.lines[line];
        let hidx = info.header.unwrap();
        let name = &c.headers[hidx].name;
        let nth = t.header_lines(hidx).position(|l| l == line).unwrap();

        let mut before = ParsedMessage::open(&c, &t.bytes).map_err(|e| e.to_string())?;
        let mut after = ParsedMessage::open(&c, &raw).map_err(|e| e.to_string())?;
        let (va, vb) = (before.validate(), after.validate());
        if !va.accepted() || !vb.accepted() {
            return Err(format!("seed {}: verdicts {} / {}", seed - 1, va.to_string().trim(), vb.to_string().trim()));
        }
        let x = before.parse_header_nth(name, nth).map_err(|e| e.to_string())?.map(|p| p.values().clone());
        let y = after.parse_header_nth(name, nth).map_err(|e| e.to_string())?.map(|p| p.values().clone());
        if x.is_none() || x != y {
            return Err(format!("seed {}: {name}#{nth} values differ after folding", seed - 1));
        }
        folded += 1;
    }
    Ok(format!("{folded} folded messages, {seed} derived"))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn c8_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let spec = sip_file(dir.path());
    let mut artifacts = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let o = zebu(&["compile", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]);
        if !o.status.success() {
            return Err(format!("compile failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        artifacts.push(std::fs::read(out).unwrap());
    }
    if artifacts[0] != artifacts[1] {
        return Err("artifacts differ".into());
    }
    let artifact = dir.path().join("a.json");
    let mut corpora = Vec::new();
    for name in ["m1", "m2"] {
        let out = dir.path().join(name);
        zebu(&[
            "mutate",
            artifact.to_str().unwrap(),
            "--count",
            "200",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        corpora.push(files(&out));
    }
    if corpora[0].is_empty() || corpora[0] != corpora[1] {
        return Err("mutation corpora differ".into());
    }
    Ok(format!("{} artifact bytes, {} corpus files identical", artifacts[0].len(), corpora[0].len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 mutate n=2416 x5 seeds: missed=0", c1_no_missed),
        ("2 torture-only n=1000 x5 seeds: falseRejects=0", c2_no_false_rejects),
        ("3 match_full == reference_match exhaustively", c3_exhaustive_agreement),
        ("4 constraint fidelity", c4_constraint_fidelity),
        ("5 exec_counter invite2 == invite3, lazy untouched", c5_exec_counter),
        ("6 verifier diagnostics and exit codes", c6_check_diagnostics),
        ("7 folding leaves typed values unchanged", c7_folding_invariance),
        ("8 deterministic compile and mutate", c8_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}  ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}  ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
