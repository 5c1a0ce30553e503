use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn focusq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_focusq"))
        .args(args)
        .output()
        .expect("spawn focusq")
}

fn ok(args: &[&str]) -> String {
    let out = focusq(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, model: &str, n: &str) {
    ok(&["synth", "--model", model, "--n", n, "--seed", "3", "--documents", "--out", p(dir)]);
}

#[test]
fn prints_version() {
    assert!(ok(&["--version"]).starts_with("focusq 0.1.0"));
}

#[test]
fn synth_then_run_writes_report_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, out) = (tmp.path().join("in"), tmp.path().join("out"));
    synth(&input, "citations", "80");
    let stdout = ok(&["run", "--input", p(&input), "--out", p(&out), "--workers", "1", "--manifest"]);
    let manifest = stdout.trim();
    assert!(manifest.starts_with('{') && manifest.ends_with('}'));
    assert!(manifest.contains("\"config_sha256\""));
    for name in ["profiles.csv", "report.csv", "regression.csv", "temporal.csv", "manifest.json"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    assert_eq!(fs::read_to_string(out.join("manifest.json")).unwrap().trim(), manifest);
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    synth(&input, "qa", "40");
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "# qa run\nmedium = qa\nlevel = 2\n").unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "run", "--config", p(&cfg), "--input", p(&input), "--out", p(&out), "--set", "level=1", "--workers", "1",
    ]);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("level = 1"), "{manifest}");

    let bad = focusq(&["run", "--input", p(&input), "--out", p(&out), "--set", "nonsense=1"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn missing_citations_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    synth(&input, "citations", "30");
    fs::remove_file(input.join("citations.csv")).unwrap();
    let out = focusq(&["run", "--input", p(&input), "--out", p(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("metrics"));
}

#[test]
fn stage_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    synth(&input, "citations", "60");
    let contributions = input.join("contributions.csv");

    assert!(ok(&["ingest", "--schema", "contributions", p(&contributions)]).starts_with("records="));

    let report = tmp.path().join("disambig.csv");
    ok(&["disambig", "--items", p(&input.join("items.csv")), "--out", p(&report)]);
    assert!(report.is_file());

    let sim = tmp.path().join("sim.csv");
    ok(&["similarity", "--contributions", p(&contributions), "--level", "1", "--out", p(&sim)]);
    assert!(fs::read_to_string(&sim).unwrap().starts_with("category,"));

    let theta = tmp.path().join("theta.csv");
    ok(&[
        "topics", "fit", "--documents", p(&input.join("documents.jsonl")), "--k", "4", "--iters", "10", "--out",
        p(&theta),
    ]);
    assert!(fs::read_to_string(&theta).unwrap().starts_with("doc_id,topic_0,"));

    let metrics = tmp.path().join("metrics");
    fs::create_dir_all(&metrics).unwrap();
    ok(&["metrics", "--input", p(&input), "--out", p(&metrics), "--workers", "1"]);
    let profiles = metrics.join("profiles.csv");
    assert!(profiles.is_file());

    let analysis = tmp.path().join("analysis");
    fs::create_dir_all(&analysis).unwrap();
    ok(&["analyze", "--profiles", p(&profiles), "--out", p(&analysis), "--min-bin-count", "2"]);
    for name in ["report.csv", "regression.csv", "bins_quality_vs_focus.csv"] {
        assert!(analysis.join(name).is_file(), "missing {name}");
    }

    let temporal = tmp.path().join("temporal");
    fs::create_dir_all(&temporal).unwrap();
    assert!(ok(&["temporal", "--input", p(&input), "--out", p(&temporal), "--workers", "1"]).contains("pct_increased_focus="));
}

#[test]
fn malformed_input_exits_with_ingest_code() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("contributions.csv");
    fs::write(&path, "contributor_id,item_id,timestamp,medium,categories,weights\nA:B,i1,5,articles,x,1\nA:B,i2,oops,articles,x,1\n").unwrap();
    assert_eq!(focusq(&["ingest", "--schema", "contributions", p(&path)]).status.code(), Some(2));
    assert!(ok(&["ingest", "--schema", "contributions", "--lenient", p(&path)]).contains("records=1 malformed=1"));
}
