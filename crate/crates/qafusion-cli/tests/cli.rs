//! End-to-end pipeline tests through the compiled binary:
//! synth -> build-ref -> fuse -> eval -> compare, plus train -> fuse --model,
//! exit codes, and config-file handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qafusion"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn qafusion");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str], expected_code: i32) -> String {
    let out = bin().args(args).output().expect("spawn qafusion");
    assert_eq!(
        out.status.code(),
        Some(expected_code),
        "command {:?}\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const RETRIEVAL_SPEC: &str = r#"
num_queries = 40
gallery_size = 120
relevant_per_query = 3
seed = 42

[[features]]
name = "strong"
pos = { dist = "beta", alpha = 8.0, beta = 2.0 }
neg = { dist = "beta", alpha = 2.0, beta = 8.0 }

[[features]]
name = "weak"
pos = { dist = "beta", alpha = 2.0, beta = 2.0 }
neg = { dist = "beta", alpha = 2.0, beta = 2.0 }
"#;

const IRRELEVANT_SPEC: &str = r#"
num_queries = 80
gallery_size = 120
seed = 7
mode = "irrelevant"

[[features]]
name = "strong"
pos = { dist = "beta", alpha = 8.0, beta = 2.0 }
neg = { dist = "beta", alpha = 2.0, beta = 8.0 }

[[features]]
name = "weak"
pos = { dist = "beta", alpha = 2.0, beta = 2.0 }
neg = { dist = "beta", alpha = 2.0, beta = 2.0 }
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, contents: &str) -> String {
        let path = self.path(name);
        std::fs::write(&path, contents).unwrap();
        path.to_string_lossy().into_owned()
    }

    /// synth both corpora and build codebooks for the two features.
    fn prepared(&self) -> Prepared {
        let spec = self.write("bench.toml", RETRIEVAL_SPEC);
        run_ok(&["synth", "--spec", &spec, "--out-dir", &self.p("bench")]);
        let irr_spec = self.write("irr.toml", IRRELEVANT_SPEC);
        run_ok(&["synth", "--spec", &irr_spec, "--out-dir", &self.p("irr")]);

        for feature in ["strong", "weak"] {
            run_ok(&[
                "build-ref",
                "--scores",
                &self.p(&format!("irr/scores_{feature}.jsonl")),
                "--feature",
                feature,
                "--q",
                "50",
                "--len",
                "100",
                "--seed",
                "5",
                "--out",
                &self.p(&format!("cb_{feature}.json")),
            ]);
        }
        Prepared {
            scores: vec![
                self.p("bench/scores_strong.jsonl"),
                self.p("bench/scores_weak.jsonl"),
            ],
            qrels: self.p("bench/qrels.txt"),
            codebooks: vec![self.p("cb_strong.json"), self.p("cb_weak.json")],
        }
    }
}

struct Prepared {
    scores: Vec<String>,
    qrels: String,
    codebooks: Vec<String>,
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap()
}

#[test]
fn full_unsupervised_pipeline() {
    let ws = Workspace::new();
    let p = ws.prepared();

    // Artifacts carry provenance sidecars.
    assert!(ws.path("bench/scores_strong.jsonl.meta.json").is_file());
    assert!(ws.path("cb_strong.json.meta.json").is_file());

    run_ok(&[
        "fuse",
        "--scores",
        &p.scores[0],
        &p.scores[1],
        "--codebooks",
        &p.codebooks[0],
        &p.codebooks[1],
        "--rule",
        "product",
        "--out",
        &ws.p("ranking.csv"),
    ]);
    assert!(ws.path("ranking.weights.csv").is_file());

    let out = run_ok(&[
        "eval",
        "--ranking",
        &ws.p("ranking.csv"),
        "--qrels",
        &p.qrels,
        "--method",
        "qaf-product",
        "--out",
        &ws.p("report.json"),
        "--csv",
        &ws.p("per_query.csv"),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("qaf-product"), "stdout: {stdout}");

    let report: serde_json::Value = serde_json::from_slice(&read(ws.path("report.json"))).unwrap();
    assert_eq!(report["reports"][0]["method"], "qaf-product");
    let map = report["reports"][0]["map"].as_f64().unwrap();
    assert!(map > 0.5, "fused mAP unexpectedly low: {map}");
    // The resolved config is echoed into the report.
    assert_eq!(report["config"]["curve_len"], 1000);

    let per_query = String::from_utf8(read(ws.path("per_query.csv"))).unwrap();
    assert!(per_query.starts_with("method,query,ap\n"));
    assert_eq!(per_query.lines().count(), 1 + 40);
}

#[test]
fn supervised_pipeline_and_compare() {
    let ws = Workspace::new();
    let p = ws.prepared();

    run_ok(&[
        "train",
        "--scores",
        &p.scores[0],
        &p.scores[1],
        "--qrels",
        &p.qrels,
        "--m",
        "40",
        "--epochs",
        "8",
        "--batch-size",
        "8",
        "--seed",
        "3",
        "--out",
        &ws.p("model.json"),
    ]);

    run_ok(&[
        "fuse",
        "--scores",
        &p.scores[0],
        &p.scores[1],
        "--model",
        &ws.p("model.json"),
        "--rule",
        "sum",
        "--out",
        &ws.p("ranking_sqaf.csv"),
    ]);

    run_ok(&[
        "compare",
        "--scores",
        &p.scores[0],
        &p.scores[1],
        "--qrels",
        &p.qrels,
        "--methods",
        "single-feature,uniform,rank-aggregation,grid-search,qaf,sqaf",
        "--codebooks",
        &p.codebooks[0],
        &p.codebooks[1],
        "--model",
        &ws.p("model.json"),
        "--grid-step",
        "0.5",
        "--out-json",
        &ws.p("compare.json"),
        "--out-csv",
        &ws.p("compare.csv"),
    ]);

    let csv = String::from_utf8(read(ws.path("compare.csv"))).unwrap();
    assert!(csv.starts_with("method,map,ns_score,rank1,num_queries\n"));
    for method in [
        "single:strong",
        "single:weak",
        "uniform",
        "rank-aggregation",
        "grid-search",
        "qaf",
        "sqaf",
    ] {
        assert!(csv.contains(method), "missing {method} in:\n{csv}");
    }
}

#[test]
fn uniform_on_single_feature_equals_single_feature() {
    let ws = Workspace::new();
    let p = ws.prepared();
    run_ok(&[
        "compare",
        "--scores",
        &p.scores[0],
        "--qrels",
        &p.qrels,
        "--methods",
        "single-feature,uniform",
        "--out-json",
        &ws.p("cmp.json"),
        "--out-csv",
        &ws.p("cmp.csv"),
    ]);
    let doc: serde_json::Value = serde_json::from_slice(&read(ws.path("cmp.json"))).unwrap();
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["map"], reports[1]["map"]);
    assert_eq!(reports[0]["rank1"], reports[1]["rank1"]);
}

#[test]
fn switch_and_average_reports_both_directions() {
    let ws = Workspace::new();
    let p = ws.prepared();
    run_ok(&[
        "compare",
        "--scores",
        &p.scores[0],
        &p.scores[1],
        "--qrels",
        &p.qrels,
        "--methods",
        "uniform",
        "--switch-and-average",
        "--out-json",
        &ws.p("cmp.json"),
        "--out-csv",
        &ws.p("cmp.csv"),
    ]);
    let doc: serde_json::Value = serde_json::from_slice(&read(ws.path("cmp.json"))).unwrap();
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0]["method"], "uniform");
    assert_eq!(reports[1]["method"], "uniform:switched");
    assert_eq!(reports[2]["method"], "uniform:avg");
    let map_a = reports[0]["map"].as_f64().unwrap();
    let map_b = reports[1]["map"].as_f64().unwrap();
    let map_avg = reports[2]["map"].as_f64().unwrap();
    assert!((map_avg - (map_a + map_b) / 2.0).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    let ws = Workspace::new();
    let p = ws.prepared();

    let spec = ws.write("bench2.toml", RETRIEVAL_SPEC);
    run_ok(&["synth", "--spec", &spec, "--out-dir", &ws.p("bench2")]);
    assert_eq!(
        read(ws.path("bench/scores_strong.jsonl")),
        read(ws.path("bench2/scores_strong.jsonl"))
    );
    assert_eq!(
        read(ws.path("bench/qrels.txt")),
        read(ws.path("bench2/qrels.txt"))
    );

    for out in ["r1.csv", "r2.csv"] {
        run_ok(&[
            "fuse",
            "--scores",
            &p.scores[0],
            &p.scores[1],
            "--codebooks",
            &p.codebooks[0],
            &p.codebooks[1],
            "--out",
            &ws.p(out),
        ]);
    }
    assert_eq!(read(ws.path("r1.csv")), read(ws.path("r2.csv")));
    assert_eq!(
        read(ws.path("r1.weights.csv")),
        read(ws.path("r2.weights.csv"))
    );
}

#[test]
fn exit_codes_follow_error_classes() {
    let ws = Workspace::new();

    // Usage errors: unknown flag, missing file, missing artifact for method.
    run_err(&["fuse", "--nonsense"], 1);
    let stderr = run_err(
        &[
            "eval",
            "--ranking",
            &ws.p("missing.csv"),
            "--qrels",
            &ws.p("missing.txt"),
            "--out",
            &ws.p("r.json"),
        ],
        1,
    );
    assert!(stderr.contains("missing.csv"), "stderr: {stderr}");

    let p = ws.prepared();
    let stderr = run_err(
        &[
            "compare",
            "--scores",
            &p.scores[0],
            "--qrels",
            &p.qrels,
            "--methods",
            "qaf",
            "--out-json",
            &ws.p("c.json"),
            "--out-csv",
            &ws.p("c.csv"),
        ],
        1,
    );
    assert!(stderr.contains("codebooks"), "stderr: {stderr}");

    // Config typo is a usage error naming the key.
    let cfg = ws.write("bad.toml", "curve_length = 10\n");
    let stderr = run_err(
        &[
            "fuse",
            "--scores",
            &p.scores[0],
            "--codebooks",
            &p.codebooks[0],
            "--config",
            &cfg,
            "--out",
            &ws.p("r.csv"),
        ],
        1,
    );
    assert!(stderr.contains("curve_length"), "stderr: {stderr}");

    // Data-contract violation: corrupt score file.
    let bad_scores = ws.write(
        "bad.jsonl",
        "{\"feature\":\"f\",\"query\":\"q\",\"gallery\":\"g\",\"score\":0.5}\n\
         {\"feature\":\"f\",\"query\":\"q\",\"gallery\":\"g\",\"score\":0.6}\n",
    );
    run_err(
        &[
            "fuse",
            "--scores",
            &bad_scores,
            "--codebooks",
            &p.codebooks[0],
            "--out",
            &ws.p("r.csv"),
        ],
        2,
    );

    // Mismatched universes across features.
    let other = ws.write(
        "other.jsonl",
        "{\"feature\":\"zz\",\"query\":\"qx\",\"gallery\":\"gx\",\"score\":0.5}\n",
    );
    run_err(
        &[
            "compare",
            "--scores",
            &p.scores[0],
            &other,
            "--qrels",
            &p.qrels,
            "--methods",
            "uniform",
            "--out-json",
            &ws.p("c.json"),
            "--out-csv",
            &ws.p("c.csv"),
        ],
        2,
    );
}

#[test]
fn config_file_flows_into_pipeline() {
    let ws = Workspace::new();
    let p = ws.prepared();
    let cfg = ws.write("cfg.toml", "rule = \"sum\"\nmatch_v = 80\nmatch_u = 10\n");
    run_ok(&[
        "fuse",
        "--scores",
        &p.scores[0],
        &p.scores[1],
        "--codebooks",
        &p.codebooks[0],
        &p.codebooks[1],
        "--config",
        &cfg,
        "--out",
        &ws.p("rank_cfg.csv"),
    ]);
    let meta: serde_json::Value =
        serde_json::from_slice(&read(ws.path("rank_cfg.csv.meta.json"))).unwrap();
    assert_eq!(meta["command"], "fuse");
    assert_eq!(meta["config"]["rule"], "sum");
    assert_eq!(meta["config"]["match_v"], 80);
}
