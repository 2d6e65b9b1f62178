use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fallacy_forge::corpus::{expand_corpus, parse_corpus, PromptTemplate, MEDICAL_SAMPLE};
use fallacy_forge::eval::stub::{StubReply, StubServer};
use fallacy_forge::logic::{enumerate_rules, LogicalRule, NegationStyle};
use fallacy_forge::manifest::{manifest_path, RunManifest};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fallacy-forge"))
        .args(args)
        .env_remove("FALLACY_FORGE_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn sample_corpus(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("medical.jsonl");
    fs::write(&path, MEDICAL_SAMPLE).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(artifact: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(manifest_path(artifact)).unwrap()).unwrap()
}

fn pq_oracle() -> StubServer {
    let statements = parse_corpus(MEDICAL_SAMPLE).unwrap();
    let affirmative: HashSet<String> = expand_corpus(
        &statements,
        &[LogicalRule::AFFIRMATIVE],
        NegationStyle::PrefixNo,
        &PromptTemplate::default(),
    )
    .unwrap()
    .into_iter()
    .map(|p| p.prompt_text)
    .collect();
    StubServer::start(move |req| {
        StubReply::Text(
            if affirmative.contains(&req.prompt) {
                "TRUE"
            } else {
                "FALSE"
            }
            .into(),
        )
    })
    .unwrap()
}

fn endpoints_file(dir: &TempDir, base_url: &str) -> PathBuf {
    let path = dir.path().join("endpoints.json");
    let body = serde_json::json!([
        { "name": "stub", "base_url": base_url, "model_id": "scripted", "backoff_ms": 1, "max_retries": 1 }
    ]);
    fs::write(&path, body.to_string()).unwrap();
    path
}

#[test]
fn variants_writes_forty_records() {
    let dir = TempDir::new().unwrap();
    let corpus = sample_corpus(&dir);
    let out = dir.path().join("prompts.jsonl");
    let res = run(&["variants", "--corpus", s(&corpus), "--out", s(&out)]);
    assert!(res.status.success(), "{res:?}");
    assert!(stdout(&res).contains("40 prompts"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 40);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["rule"], "PQ");
    assert_eq!(first["valid"], true);

    let m = manifest(&out);
    assert_eq!(m.command, "variants");
    assert_eq!(m.corpus_checksum.as_deref().map(str::len), Some(64));
}

#[test]
fn variants_rule_filter_and_missing_corpus() {
    let dir = TempDir::new().unwrap();
    let corpus = sample_corpus(&dir);
    let out = dir.path().join("pq.jsonl");
    let res = run(&["variants", "--corpus", s(&corpus), "--out", s(&out), "--rules", "PQ"]);
    assert!(res.status.success());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 5);

    let res = run(&["variants", "--corpus", "does/not/exist.jsonl", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));

    let res = run(&["variants", "--corpus", s(&corpus), "--out", s(&out), "--rules", "PX"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn variants_are_reproducible_from_the_manifest() {
    let dir = TempDir::new().unwrap();
    let corpus = sample_corpus(&dir);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let res = run(&[
            "variants",
            "--corpus",
            s(&corpus),
            "--out",
            s(out),
            "--negation",
            "not",
            "--bare-template",
        ]);
        assert!(res.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.corpus_checksum, mb.corpus_checksum);
    assert_eq!(ma.config["template_text"], mb.config["template_text"]);
    assert!(!fs::read_to_string(&a).unwrap().contains("Respond"));
}

#[test]
fn eval_then_rerun_then_report() {
    let dir = TempDir::new().unwrap();
    let corpus = sample_corpus(&dir);
    let server = pq_oracle();
    let endpoints = endpoints_file(&dir, &server.base_url());
    let log = dir.path().join("run.jsonl");
    let args = [
        "eval",
        "--corpus",
        s(&corpus),
        "--endpoints",
        s(&endpoints),
        "--log",
        s(&log),
        "--concurrency",
        "4",
    ];

    let first = run(&args);
    assert!(first.status.success(), "{first:?}");
    assert!(
        stdout(&first).contains("40 new queries, 40 judgments in log"),
        "{}",
        stdout(&first)
    );
    assert_eq!(manifest(&log).command, "eval");

    let second = run(&args);
    assert!(second.status.success());
    assert!(stdout(&second).contains("0 new queries, 40 judgments in log"));
    assert_eq!(server.request_count(), 40);

    let csv = dir.path().join("table.csv");
    let res = run(&["report", "--log", s(&log), "--format", "csv", "--out", s(&csv)]);
    assert!(res.status.success(), "{res:?}");
    let table = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "rule,valid,stub,error,unparseable_total");
    assert_eq!(rows[1], "PQ,true,1,0,0");
    for row in &rows[2..] {
        assert!(row.ends_with(",false,0,0,0"), "{row}");
    }
    assert_eq!(rows.len(), 9);
    assert_eq!(manifest(&csv).command, "report");

    let res = run(&["report", "--log", s(&log)]);
    assert!(res.status.success());
    let md = stdout(&res);
    assert!(md.starts_with("| Rule | stub | Error | Unparseable |"), "{md}");
    assert!(md.contains("| *~Q=>~P |"));
}

#[test]
fn eval_with_unreachable_endpoint_is_not_fatal() {
    let dir = TempDir::new().unwrap();
    let corpus = sample_corpus(&dir);
    let url = StubServer::constant("x").unwrap().base_url();
    let endpoints = endpoints_file(&dir, &url);
    let log = dir.path().join("run.jsonl");
    let res = run(&[
        "eval",
        "--corpus",
        s(&corpus),
        "--endpoints",
        s(&endpoints),
        "--log",
        s(&log),
        "--rules",
        "PQ,QP",
    ]);
    assert!(res.status.success(), "{res:?}");
    assert!(stdout(&res).contains("10 new queries"));
    let text = fs::read_to_string(&log).unwrap();
    assert_eq!(text.matches("\"UNPARSEABLE\"").count(), 10);
}

#[test]
fn eval_fatal_io_and_bad_config() {
    let dir = TempDir::new().unwrap();
    let corpus = sample_corpus(&dir);
    let endpoints = endpoints_file(&dir, "http://127.0.0.1:9");
    let missing_dir = dir.path().join("nope").join("run.jsonl");
    let res = run(&[
        "eval",
        "--corpus",
        s(&corpus),
        "--endpoints",
        s(&endpoints),
        "--log",
        s(&missing_dir),
    ]);
    assert_eq!(res.status.code(), Some(3), "{res:?}");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let log = dir.path().join("run.jsonl");
    let res = run(&["eval", "--corpus", s(&corpus), "--endpoints", s(&bad), "--log", s(&log)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn report_empty_log_and_golden() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_eq!(run(&["report", "--log", s(&empty)]).status.code(), Some(2));
    assert_eq!(
        run(&["report", "--log", s(&dir.path().join("missing.jsonl"))])
            .status
            .code(),
        Some(2)
    );

    let res = run(&["report", "--golden", "medical"]);
    assert!(res.status.success());
    let text = stdout(&res);
    let pq = text.lines().find(|l| l.starts_with("| P=>Q |")).expect("PQ row");
    assert!(pq.contains("| 0.18 | 0.18 |"), "{pq}");
    assert!(text.contains("printed differs by +0.10"));

    assert_eq!(run(&["report", "--golden", "oceanic"]).status.code(), Some(2));
}

#[test]
fn train_writes_params_and_trace() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("train.json");
    fs::write(&config, r#"{"epochs": 40, "n_pairs": 6}"#).unwrap();
    let out = dir.path().join("params.json");
    let trace = dir.path().join("trace.csv");
    let res = run(&[
        "--seed",
        "3",
        "train",
        "--config",
        s(&config),
        "--out",
        s(&out),
        "--trace",
        s(&trace),
    ]);
    assert!(res.status.success(), "{res:?}");
    let body: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(body["config"]["seed"], 3);
    assert_eq!(body["params"]["premise"].as_array().unwrap().len(), 2 * 6 * 8);
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 1 + 41);
    assert_eq!(manifest(&out).config["config"]["epochs"], 40);

    let corpus = sample_corpus(&dir);
    let res = run(&[
        "train",
        "--config",
        s(&config),
        "--corpus",
        s(&corpus),
        "--out",
        s(&out),
    ]);
    assert!(res.status.success(), "{res:?}");

    fs::write(&config, r#"{"epochs": 10, "learning_rtae": 0.1}"#).unwrap();
    assert_eq!(
        run(&["train", "--config", s(&config), "--out", s(&out)]).status.code(),
        Some(2)
    );
}

#[test]
fn experiment_exit_codes_and_reproducibility() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let res = run(&["experiment", "--out", s(&a), "--seeds", "2"]);
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    let text = stdout(&res);
    assert!(
        text.contains("seed 0:") && text.contains("seed 1:") && text.contains("[separated]"),
        "{text}"
    );
    let (first_csv, first_manifest) = (fs::read(&a).unwrap(), manifest(&a));
    let res = run(&["experiment", "--out", s(&a), "--seeds", "2", "--sequential", "--quiet"]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), first_csv);
    assert!(manifest(&a).same_provenance(&first_manifest));

    let config = dir.path().join("zero.json");
    fs::write(&config, r#"{"epochs": 0}"#).unwrap();
    let res = run(&["experiment", "--config", s(&config), "--out", s(&a)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stdout(&res).contains("min margin 0.0000, positive-only min margin 0.0000, gap 0.0000"));
}

#[test]
fn import_corpus_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("rows.txt");
    fs::write(
        &input,
        "# scraped\nDeforestation => reduced carbon sequestration.\nDrought $\\implies$ crop failure\n",
    )
    .unwrap();
    let out = dir.path().join("env.jsonl");
    let res = run(&[
        "import-corpus",
        "--input",
        s(&input),
        "--out",
        s(&out),
        "--domain",
        "environmental",
        "--id-prefix",
        "x",
    ]);
    assert!(res.status.success(), "{res:?}");
    let statements = parse_corpus(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(statements.len(), 2);
    assert_eq!(statements[0].id, "x001");
    assert_eq!(statements[1].consequent, "crop failure");

    let prompts = dir.path().join("p.jsonl");
    assert!(run(&["variants", "--corpus", s(&out), "--out", s(&prompts)])
        .status
        .success());
    assert_eq!(
        fs::read_to_string(&prompts).unwrap().lines().count(),
        2 * enumerate_rules().len()
    );

    fs::write(&input, "no separator here\n").unwrap();
    assert_eq!(
        run(&["import-corpus", "--input", s(&input), "--out", s(&out), "--domain", "x"])
            .status
            .code(),
        Some(2)
    );
}
