use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use zebu_core::bundled;

fn zebu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zebu")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

fn artifact(dir: &Path) -> PathBuf {
    let spec = write(dir, "sip.zebu", bundled::SIP_SUBSET);
    let out = dir.join("sip.json");
    assert_eq!(zebu(&["compile", s(&spec), "-o", s(&out)]).status.code(), Some(0));
    out
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.zebu", bundled::RTSP_SUBSET);
    assert_eq!(zebu(&["check", s(&good)]).status.code(), Some(0));

    let bad = write(dir.path(), "bad.zebu", "requestLine = A\n");
    let o = zebu(&["check", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.zebu:1:"), "{err}");
    assert!(err.contains("error[UNDEFINED_RULE]"), "{err}");

    let missing = dir.path().join("nope.zebu");
    assert_eq!(zebu(&["check", s(&missing)]).status.code(), Some(2));
}

#[test]
fn compile_failures_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.zebu", "requestLine = A\nA = B\nB = A\n");
    let out = dir.path().join("out.json");
    assert_eq!(zebu(&["compile", s(&bad), "-o", s(&out)]).status.code(), Some(1));
    assert!(!out.exists());

    let good = write(dir.path(), "sip.zebu", bundled::SIP_SUBSET);
    let unwritable = dir.path().join("no/such/dir/out.json");
    assert_eq!(zebu(&["compile", s(&good), "-o", s(&unwritable)]).status.code(), Some(3));
}

#[test]
fn parse_prints_fields_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let a = artifact(dir.path());
    let msg = write(dir.path(), "invite1.raw", bundled::SIP_INVITE1);
    let o = zebu(&["parse", s(&a), s(&msg), "--field", "From.uri.host", "--field", "CSeq.number"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("From.uri.host = atlanta.com"), "{out}");
    assert!(out.contains("CSeq.number = 314159"), "{out}");
    assert!(out.contains("ACCEPT"), "{out}");
    assert!(out.lines().last().unwrap().starts_with("exec_counter "), "{out}");
}

#[test]
fn parse_reject_and_unknown_selector() {
    let dir = tempfile::tempdir().unwrap();
    let a = artifact(dir.path());
    let bad = String::from_utf8_lossy(bundled::SIP_INVITE1).replace("CSeq: 314159 INVITE", "CSeq: 314159 BYE");
    let msg = write(dir.path(), "bad.raw", bad);
    let o = zebu(&["parse", s(&a), s(&msg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("REJECT CONSTRAINT"), "{}", stdout(&o));

    let good = write(dir.path(), "good.raw", bundled::SIP_INVITE1);
    assert_eq!(zebu(&["parse", s(&a), s(&good), "--field", "From.nope"]).status.code(), Some(2));
    assert_eq!(zebu(&["parse", s(&a), s(&good), "--field", "Bogus.x"]).status.code(), Some(2));
}

#[test]
fn mutate_rejects_zero_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sip.zebu", bundled::SIP_SUBSET);
    let o = zebu(&["mutate", s(&spec), "--count", "0", "--seed", "1", "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mutate_torture_only_writes_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sip.zebu", bundled::SIP_SUBSET);
    let out = dir.path().join("m");
    let o = zebu(&["mutate", s(&spec), "--count", "12", "--seed", "3", "--mix", "torture-only", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let report = stdout(&o);
    let rows: Vec<&str> = report.lines().skip(1).take_while(|l| !l.starts_with("total")).collect();
    assert_eq!(rows.len(), 1, "{report}");
    assert!(rows[0].starts_with("TORTURE"), "{report}");
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 12);
    assert!(manifest.lines().all(|l| l.contains(" TORTURE VALID ")), "{manifest}");
    assert!(out.join("00000.raw").exists());
    assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap(), report);
}

fn corpus(dir: &Path, skip: &str) -> PathBuf {
    let c = dir.join("corpus");
    std::fs::create_dir_all(&c).unwrap();
    for (name, raw) in bundled::sip_corpus() {
        if name != skip {
            write(&c, &format!("{name}.raw"), raw);
        }
    }
    c
}

#[test]
fn bench_needs_every_shape() {
    let dir = tempfile::tempdir().unwrap();
    let a = artifact(dir.path());
    let c = corpus(dir.path(), "invite3");
    assert_eq!(zebu(&["bench", s(&a), s(&c), "--iters", "2"]).status.code(), Some(2));
}

#[test]
fn bench_reports_counters() {
    let dir = tempfile::tempdir().unwrap();
    let a = artifact(dir.path());
    let c = corpus(dir.path(), "");
    let o = zebu(&["bench", s(&a), s(&c), "--headers", "From", "--iters", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let exec = |name: &str| -> u64 {
        let line = out.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().nth(3).unwrap().parse().unwrap()
    };
    assert_eq!(exec("invite2"), exec("invite3"));
    assert!(out.contains("ok200"), "{out}");

    let o = zebu(&["bench", s(&a), s(&c), "--iters", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for line in out.lines().skip(2).take(5) {
        let exec: u64 = line.split_whitespace().nth(3).unwrap().parse().unwrap();
        assert!(exec <= 2, "{line}");
    }

    assert_eq!(zebu(&["bench", s(&a), s(&c), "--headers", "Nope"]).status.code(), Some(2));
}
