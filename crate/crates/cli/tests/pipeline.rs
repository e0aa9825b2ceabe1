use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo/config.toml");

const STAGES: [&[&str]; 10] = [
    &["ingest"],
    &["cluster"],
    &["sieve"],
    &["featurize"],
    &["train"],
    &["eval", "indomain"],
    &["eval", "cross"],
    &["eval", "curve"],
    &["eval", "reviewer"],
    &["report"],
];

fn revspam(config: &str, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revspam"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn run_all(out: &Path) {
    for stage in STAGES {
        let o = revspam(DEMO, out, stage);
        assert!(o.status.success(), "{stage:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    run_all(tmp.path());
    let files = snapshot(tmp.path());
    for rel in [
        "corpus/reviews.jsonl",
        "cluster/deceptive_reviewers.txt",
        "cluster/em_trace.csv",
        "sieve/labeled.jsonl",
        "sieve/stats.txt",
        "features/space.txt",
        "features/vectors.svm",
        "model/model.txt",
        "eval/indomain/report.txt",
        "eval/cross/report.csv",
        "eval/curve/curve.csv",
        "eval/reviewer/report.json",
        "report.txt",
        "manifests/train.json",
        "manifests/eval-curve.json",
    ] {
        assert!(files.contains_key(Path::new(rel)), "{rel} missing");
    }
    let flagged = String::from_utf8(files[Path::new("cluster/deceptive_reviewers.txt")].clone()).unwrap();
    assert_eq!(flagged, "s1\ns2\ns3\ns4\n");

    let manifest: serde_json::Value =
        serde_json::from_slice(&files[Path::new("manifests/train.json")]).unwrap();
    assert_eq!(manifest["seed"], 20130801);
    assert_eq!(manifest["config"]["seed"], 20130801);
    assert!(manifest["inputs"]["features/space.txt"].is_string());
    assert!(manifest["outputs"]["model/model.txt"].is_string());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());
    let first = snapshot(a.path());
    assert_eq!(first, snapshot(b.path()));
    run_all(a.path());
    assert_eq!(first, snapshot(a.path()));
}

#[test]
fn stages_out_of_order_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = revspam(DEMO, tmp.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing feature manifest"), "{err}");
    assert!(err.contains("train"), "{err}");

    let o = revspam(DEMO, tmp.path(), &["cluster"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cluster: missing"));

    let o = revspam(DEMO, tmp.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_problems_are_listed_together() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "[paths]\nreviews = \"a\"\nproducts = \"b\"\ntasks = \"c\"\nseeds = \"d\"\n[protocol]\nk = 1\n",
    )
    .unwrap();
    let o = revspam(cfg.to_str().unwrap(), tmp.path(), &["ingest"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["seed: missing", "paths.reviews", "paths.seeds", "protocol.k", "paths.phrases"] {
        assert!(err.contains(needle), "{needle} not in {err}");
    }
}

#[test]
fn seed_flag_changes_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = revspam(DEMO, tmp.path(), &["--seed", "7", "ingest"]);
    assert!(o.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifests/ingest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
}

#[test]
fn complexity_mode_prints_csv() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(revspam(DEMO, tmp.path(), &["ingest"]).status.success());
    let o = revspam(DEMO, tmp.path(), &["complexity"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("review_id,W,S,C,DC,T,CP,VP,MLS"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 18);
    assert_eq!(lines.count(), 48);
}
