//! End-to-end runs of the `corpusbias` binary.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{dead_url, not_found, StubServer};
use serde_json::{json, Value};

fn corpusbias(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_corpusbias"));
    cmd.args(args);
    for var in [
        "CORPUSBIAS_SCORER_ENDPOINT",
        "CORPUSBIAS_CLASSIFIER_ENDPOINT",
        "CORPUSBIAS_REWRITER_ENDPOINT",
        "CORPUSBIAS_PERTURBER_ENDPOINT",
        "CORPUSBIAS_CACHE_DIR",
    ] {
        cmd.env_remove(var);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("run corpusbias")
}

fn run(sub: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    corpusbias(&args, &[])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn write_json(dir: &Path, name: &str, v: &Value) -> std::path::PathBuf {
    write(dir, name, &serde_json::to_string_pretty(v).unwrap())
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn lexicon(dir: &Path) {
    write_json(
        dir,
        "lexicon.json",
        &json!({ "gender": { "male": ["he", "him", "boy"], "female": ["she", "her", "girl"] } }),
    );
}

const TRAIN: &str = "The boy ran to the park.\nThe girl ran to the park.\nHe said she would help.\nShe said he would help.\nA cat sat on the mat.\nThe doctor helped the nurse.\n";

fn benchmarks(dir: &Path) {
    write(dir, "train.txt", TRAIN);
    write(
        dir,
        "blimp.jsonl",
        "{\"sentence_good\": \"The boy ran to the park.\", \"sentence_bad\": \"The boy ran the to park.\", \"UID\": \"order\"}\n\
         {\"sentence_good\": \"A cat sat on the mat.\", \"sentence_bad\": \"A cat sat mat the on.\", \"UID\": \"order\"}\n",
    );
    write(
        dir,
        "crows.csv",
        "sent_more,sent_less,bias_type\n\"He said she would help.\",\"He said he would help.\",gender\n",
    );
}

fn suite_paths() -> Value {
    json!({ "blimp": "blimp.jsonl", "blimp_supplement": "supp.jsonl", "ewok": "ewok.jsonl",
            "crows": "crows.csv", "stereoset": "stereoset.json" })
}

fn full_suite(d: &Path) {
    benchmarks(d);
    write(d, "supp.jsonl", "{\"sentence_good\": \"She said he would help.\", \"sentence_bad\": \"She said would he help.\"}\n");
    write(d, "ewok.jsonl", "{\"Context1\": \"The boy ran.\", \"Context2\": \"The cat sat.\", \"Target1\": \"He ran to the park.\", \"Target2\": \"A cat sat on the mat.\", \"Domain\": \"agents\"}\n");
    write_json(
        d,
        "stereoset.json",
        &json!({ "data": { "intrasentence": [{
            "id": "x", "bias_type": "gender", "context": "The BLANK ran to the park.",
            "sentences": [
                { "sentence": "The boy ran to the park.", "gold_label": "stereotype" },
                { "sentence": "The girl ran to the park.", "gold_label": "anti-stereotype" },
                { "sentence": "The mat ran to the park.", "gold_label": "unrelated" }
            ]
        }] } }),
    );
}

#[test]
fn audit_on_three_sentences_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    lexicon(d);
    write(d, "tiny.txt", "The boy ran home. She smiled at him.\nThe girl is kind.\n");
    let cfg = write_json(
        d,
        "audit.json",
        &json!({
            "audit": { "corpus": "tiny.txt", "lexicon": "lexicon.json",
                       "sentiment": { "kind": "lexicon" }, "toxicity": { "kind": "lexicon" } }
        }),
    );
    let o = run("audit", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&d.join("out/audit_report.json"));
    assert_eq!(report["corpus"]["sentences"], 3);
    assert!(report["keyword_pct"]["gender"]["male"].as_f64().unwrap() > 0.0);
    assert!(report["structural"]["fkgl"].is_number());
    assert_eq!(report["toxicity"]["toxic_pct"], 0.0);
    assert!(d.join("out/audit_report.meta.json").exists());
    assert!(!d.join("out/toxicity.checkpoint.jsonl").exists());
}

#[test]
fn missing_lexicon_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "tiny.txt", "One. Two. Three.\n");
    let cfg = write_json(d, "a.json", &json!({ "audit": { "corpus": "tiny.txt" } }));
    let o = run("audit", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lexicon"), "{}", stderr(&o));

    let cfg = write_json(d, "b.json", &json!({ "audit": { "corpus": "tiny.txt", "lexicon": "nope.json" } }));
    let o = run("audit", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("audit.lexicon"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &json!({ "audit": { "corpus": "x.txt" }, "sede": 3 }));
    let o = run("audit", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sede"), "{}", stderr(&o));
}

#[test]
fn sweep_with_unreachable_checkpoint_records_gap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    full_suite(d);
    let ngram = json!({ "kind": "ngram", "corpus": "train.txt", "order": 2 });
    let cfg = write_json(
        d,
        "sweep.json",
        &json!({
            "seed": 5,
            "sweep": {
                "run_label": "tiny",
                "checkpoints": [
                    { "step": 100, "scorer": ngram },
                    { "step": 200, "scorer": { "kind": "remote", "endpoint": dead_url(), "retries": 0 } },
                    { "step": 300, "scorer": ngram }
                ],
                "benchmarks": suite_paths()
            }
        }),
    );
    let o = run("sweep", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("gap"), "{}", stderr(&o));

    let series = read_json(&d.join("out/trajectory.json"));
    let points = series["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    assert!(points[0]["gap"].is_null() && points[2]["gap"].is_null());
    assert!(points[1]["gap"].as_str().unwrap().contains("scorer bridge"));
    assert!(points[1]["scores"].is_null());
    let csv = fs::read_to_string(d.join("out/trajectory.csv")).unwrap();
    let header = csv.lines().find(|l| l.starts_with("run_label")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("tiny,5,200,")).unwrap();
    assert_eq!(row.split(',').count(), header.split(',').count());
    assert!(row.split(',').skip(3).all(str::is_empty), "{row}");
}

#[test]
fn sweep_with_full_suite_scores_every_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    full_suite(d);
    let ngram = json!({ "kind": "ngram", "corpus": "train.txt" });
    let cfg = write_json(
        d,
        "sweep.json",
        &json!({
            "sweep": {
                "run_label": "full",
                "checkpoints": [ { "step": 1, "scorer": ngram }, { "step": 2, "scorer": ngram } ],
                "benchmarks": suite_paths()
            }
        }),
    );
    let o = run("sweep", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let series = read_json(&d.join("out/trajectory.json"));
    for p in series["points"].as_array().unwrap() {
        assert!(p["gap"].is_null());
        assert!(p["scores"]["performance"]["composite_performance"].is_number());
    }
}

#[test]
fn bench_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    benchmarks(d);
    let cfg = write_json(
        d,
        "bench.json",
        &json!({
            "concurrency": 3,
            "bench": { "scorer": { "kind": "ngram", "corpus": "train.txt" },
                       "benchmarks": { "blimp": "blimp.jsonl", "crows": "crows.csv" },
                       "cache_dir": "cache" }
        }),
    );
    let o = run("bench", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = fs::read(d.join("out/bench_report.json")).unwrap();
    assert!(d.join("cache/scores.jsonl").exists());
    let o = run("bench", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, fs::read(d.join("out/bench_report.json")).unwrap());
    let report: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["blimp"]["scored"], 2);
}

#[test]
fn cda_intervention_writes_corpus_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "c.txt", "He ran home.\nThe cat sat.\n");
    let cfg = write_json(d, "iv.json", &json!({ "intervene": { "corpus": "c.txt", "operation": "cda" } }));
    let o = run("intervene", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<Value> = fs::read_to_string(d.join("out/cda.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let texts: Vec<&str> = lines.iter().map(|v| v["text"].as_str().unwrap()).collect();
    assert_eq!(texts, ["He ran home.", "She ran home.", "The cat sat."]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().count() >= 2);
}

#[test]
fn stochastic_operation_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "c.txt", "He ran home.\nThe cat sat.\n");
    let cfg = write_json(d, "iv.json", &json!({ "intervene": { "corpus": "c.txt", "operation": "duplicate_random" } }));
    let o = run("intervene", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let o = run("intervene", &cfg, &["--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = fs::read(d.join("out/duplicate_random.jsonl")).unwrap();
    let o = run("intervene", &cfg, &["--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, fs::read(d.join("out/duplicate_random.jsonl")).unwrap());
    // one CDA-matched sentence, so one duplicate by default
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 3);
}

#[test]
fn perturb_through_env_endpoint() {
    let server = StubServer::start(|_, path, body| {
        if path != "/perturb" {
            return not_found();
        }
        let chunk = body["chunk"].as_str().unwrap();
        (200, json!({ "perturbed": chunk.replace("mother", "father") }))
    });
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "c.txt", "The mother walked home.\n\nThe dog slept.\n");
    write_json(d, "targets.json", &json!({ "mother": ["gender"] }));
    let cfg = write_json(
        d,
        "iv.json",
        &json!({ "seed": 1, "intervene": { "corpus": "c.txt", "operation": "perturb", "targets": "targets.json" } }),
    );
    let o = corpusbias(
        &["intervene", "--config", cfg.to_str().unwrap()],
        &[("CORPUSBIAS_PERTURBER_ENDPOINT", &server.url)],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = fs::read_to_string(d.join("out/perturb.jsonl")).unwrap();
    assert!(out.contains("The father walked home."));
    assert!(out.contains("The dog slept."));
    let stats = read_json(&d.join("out/perturbation_stats.json"));
    assert_eq!(stats["chunks"], 2);
    assert_eq!(stats["any_change_pct"], 50.0);
}

#[test]
fn detox_outage_is_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut lines = String::new();
    for i in 0..3 {
        lines.push_str(&format!("{{\"text\": \"Sentence {i} is bad.\", \"flags\": {{\"toxic\": true, \"hate\": false}}}}\n"));
    }
    write(d, "flagged.jsonl", &lines);
    let cfg = write_json(
        d,
        "iv.json",
        &json!({ "intervene": { "corpus": "flagged.jsonl", "operation": "detox",
                                "rewriter_endpoint": dead_url() } }),
    );
    let o = run("intervene", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("--resume"), "{}", stderr(&o));

    let server = StubServer::start(|_, _, _| (200, json!({ "rewritten": "Sentence is fine." })));
    let resume = d.join("out/detox.checkpoint.jsonl");
    let o = corpusbias(
        &["intervene", "--config", cfg.to_str().unwrap(), "--resume", resume.to_str().unwrap()],
        &[("CORPUSBIAS_REWRITER_ENDPOINT", &server.url)],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(server.hits(), 3);
    assert!(!resume.exists());
}

#[test]
fn debias_and_analyze_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            vec![s * 2.0 + (i as f64 * 0.37).sin() * 0.1, (i as f64 * 1.3).cos(), (i as f64 * 0.7).sin()]
        })
        .collect();
    let labels: Vec<i64> = (0..40).map(|i| i % 2).collect();
    write_json(d, "emb.json", &json!({ "rows": rows, "labels": labels }));
    let cfg = write_json(
        d,
        "debias.json",
        &json!({ "debias": { "method": "inlp", "embeddings": "emb.json", "apply_to": "emb.json" } }),
    );
    let o = run("debias", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&d.join("out/debias_report.json"));
    assert!(report["removed_directions"].as_u64().unwrap() >= 1);
    assert!(report["idempotence_error"].as_f64().unwrap() < 1e-8);
    assert!(d.join("out/debiased.bin").exists());

    write_json(d, "pairs.json", &json!([["he ran", "she ran"], ["the boy", "the girl"], ["his book", "her book"]]));
    let cfg = write_json(
        d,
        "sd.json",
        &json!({ "debias": { "method": "sentdebias", "pairs": "pairs.json", "components": 1 } }),
    );
    let o = run("debias", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let bench = |perf: f64, bias: f64| {
        json!({
            "scorer": "x",
            "composites": {
                "performance": { "blimp": perf, "blimp_supplement": perf, "ewok": perf, "composite_performance": perf },
                "bias": { "stereoset_ss": bias, "stereoset_lms": 90.0, "crows": bias, "composite_bias": bias }
            }
        })
    };
    write_json(d, "base.json", &bench(70.0, 60.0));
    write_json(d, "cda.json", &bench(69.0, 55.0));
    write_json(d, "tox.json", &bench(70.5, 59.0));
    let cfg = write_json(
        d,
        "an.json",
        &json!({ "analyze": { "models": [
            { "model": "m1", "baseline": "base.json", "treated": { "cda": "cda.json", "remove_toxic": "tox.json" } }
        ] } }),
    );
    let o = run("analyze", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let shifts = fs::read_to_string(d.join("out/shifts.csv")).unwrap();
    assert!(shifts.contains("cda"));
    let report = read_json(&d.join("out/analysis_report.json"));
    let cda = report["shifts"].as_array().unwrap().iter().find(|r| r["method"] == "cda").unwrap();
    assert_eq!(cda["delta_performance"], -1.0);
    assert_eq!(cda["delta_bias"], -5.0);
}
