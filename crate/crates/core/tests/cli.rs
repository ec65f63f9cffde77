use std::path::Path;

use comply_core::cli::{execute, fixture_files, CliOutput};

fn run(args: &[&str]) -> CliOutput {
    execute(std::iter::once("comply").chain(args.iter().copied()))
}

fn corpus() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (file, text) in fixture_files() {
        std::fs::write(dir.path().join(file), text).unwrap();
    }
    dir
}

fn p(dir: &Path, file: &str) -> String {
    dir.join(file).display().to_string()
}

#[test]
fn compliance_checks_and_exit_codes() {
    let d = corpus();
    let dir = d.path();
    let out = run(&[
        "check-local",
        "--chor",
        &p(dir, "running.json"),
        "--partner",
        "Manufacturer",
        "--rule",
        &p(dir, "c1.rule.json"),
    ]);
    assert_eq!((out.code, out.stdout.as_str()), (0, "compliant\n"));

    let out = run(&[
        "check-global",
        "--chor",
        &p(dir, "running.json"),
        "--rule",
        &p(dir, "c2.rule.json"),
        "--view",
        "public",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);

    let out = run(&[
        "check-global",
        "--chor",
        &p(dir, "running.json"),
        "--rule",
        &p(dir, "c3.rule.json"),
        "--view",
        "choreography-only",
    ]);
    assert_eq!(out.code, 1);
    assert!(out.stdout.starts_with("inapplicable"));

    // production without a final test
    let out = run(&["oracle", "--rule", &p(dir, "c1.rule.json"), "--trace", "act:Manufacturer.production"]);
    assert_eq!((out.code, out.stdout.lines().next()), (1, Some("violated")));

    let out =
        run(&["check-local", "--chor", &p(dir, "missing.json"), "--partner", "X", "--rule", &p(dir, "c1.rule.json")]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.starts_with("error:"));

    let out = run(&[
        "--state-budget",
        "2",
        "check-local",
        "--chor",
        &p(dir, "running.json"),
        "--partner",
        "Manufacturer",
        "--rule",
        &p(dir, "c1.rule.json"),
    ]);
    assert_eq!(out.code, 3, "{}", out.stderr);

    assert_eq!(run(&["no-such-command"]).code, 2);
    assert_eq!(run(&["--help"]).code, 0);
}

#[test]
fn decompose_then_verify_round_trip() {
    let d = corpus();
    let dir = d.path();
    let out = run(&[
        "--format",
        "json",
        "--no-timestamp",
        "decompose",
        "--chor",
        &p(dir, "running.json"),
        "--rule",
        &p(dir, "c3.rule.json"),
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let again = run(&[
        "--format",
        "json",
        "--no-timestamp",
        "decompose",
        "--chor",
        &p(dir, "running.json"),
        "--rule",
        &p(dir, "c3.rule.json"),
    ]);
    assert_eq!(out.stdout, again.stdout, "reports are byte-stable");
    let report: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(report["status"], "transitive");
    assert_eq!(report["assertions"].as_array().unwrap().len(), 2);
    std::fs::write(dir.join("report.json"), &out.stdout).unwrap();

    let v = run(&[
        "verify",
        "--assertions",
        &p(dir, "report.json"),
        "--rule",
        &p(dir, "c3.rule.json"),
        "--chor",
        &p(dir, "running.json"),
    ]);
    assert_eq!((v.code, v.stdout.as_str()), (0, "correct\n"), "{}", v.stderr);

    // one assertion alone does not imply the rule
    let first = serde_json::to_string(&[&report["assertions"][0]["rule"]]).unwrap();
    std::fs::write(dir.join("partial.json"), first).unwrap();
    let v = run(&["verify", "--assertions", &p(dir, "partial.json"), "--rule", &p(dir, "c3.rule.json")]);
    assert_eq!(v.code, 1);
    assert!(v.stdout.contains("witness:"));
}

#[test]
fn sync_insertion_writes_updated_choreography() {
    let d = corpus();
    let dir = d.path();
    let out_chor = p(dir, "synced.json");
    let out = run(&[
        "decompose",
        "--chor",
        &p(dir, "running.json"),
        "--rule",
        &p(dir, "example3.rule.json"),
        "--write-chor",
        &out_chor,
    ]);
    assert_eq!(out.code, 0);
    assert!(out
        .stdout
        .starts_with("E3: RequiredSync\nsync sync.E3.prepare_transport.safety_check Supplier -> SpecialCarrier\n"));
    let synced = std::fs::read_to_string(&out_chor).unwrap();
    assert!(synced.contains("sync.E3.prepare_transport.safety_check"));

    let strict =
        run(&["decompose", "--chor", &p(dir, "running.json"), "--rule", &p(dir, "example3.rule.json"), "--no-sync"]);
    assert_eq!((strict.code, strict.stdout.as_str()), (1, "E3: Failed\n"));

    let forced = run(&[
        "decompose",
        "--chor",
        &p(dir, "adapted.json"),
        "--rule",
        &p(dir, "example8.rule.json"),
        "--template",
        "T6",
    ]);
    assert_eq!(forced.code, 0);
    assert!(forced.stdout.contains("via T6"));
    assert!(forced.stdout.contains("request_details"));
}

#[test]
fn negotiation_writes_transcript() {
    let d = corpus();
    let dir = d.path();
    let t = p(dir, "t.jsonl");
    let out = run(&[
        "--seed",
        "3",
        "negotiate",
        "--chor",
        &p(dir, "adapted.json"),
        "--rule",
        &p(dir, "example9.rule.json"),
        "--strategy",
        "leaderless",
        "--transcript",
        &t,
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("via T7"));
    let text = std::fs::read_to_string(&t).unwrap();
    assert!(text.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn theorems_and_oracle() {
    let out = run(&["--max-len", "4", "theorems", "--id", "T1a-converse"]);
    assert_eq!((out.code, out.stdout.as_str()), (1, "T1a-converse: Counterexample [A, C]\n"));
    let out = run(&["--max-len", "5", "theorems", "--id", "T1b"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("T1b: Holds"));
    let out = run(&["--max-len", "11", "theorems", "--id", "T1b"]);
    assert_eq!(out.code, 2);
    let out = run(&["theorems", "--id", "T1a", "--alphabet", "A,B,C"]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("T1a: Holds"));
    assert_eq!(run(&["theorems", "--id", "T9"]).code, 2);

    let d = corpus();
    let out = run(&[
        "oracle",
        "--rule",
        &p(d.path(), "c1.rule.json"),
        "--chor",
        &p(d.path(), "running.json"),
        "--partner",
        "Manufacturer",
    ]);
    assert_eq!((out.code, out.stdout.as_str()), (0, "satisfied on all 1 runs\n"));
}

#[test]
fn gen_writes_fixtures_and_random_models() {
    let d = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--fixture", "all", "--out", &d.path().display().to_string()]);
    assert_eq!(out.code, 0);
    assert_eq!(out.stdout.lines().count(), fixture_files().len());
    let a = run(&["--seed", "9", "gen", "--random"]);
    let b = run(&["--seed", "9", "gen", "--random"]);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, run(&["--seed", "10", "gen", "--random"]).stdout);
    assert_eq!(run(&["gen", "--fixture", "nope"]).code, 2);
}

#[test]
fn dot_output_renders_automata() {
    let d = corpus();
    let out = run(&[
        "--format",
        "dot",
        "check-local",
        "--chor",
        &p(d.path(), "running.json"),
        "--partner",
        "Manufacturer",
        "--rule",
        &p(d.path(), "c1.rule.json"),
    ]);
    assert_eq!(out.code, 0);
    assert_eq!(out.stdout.matches("digraph").count(), 2);
}
