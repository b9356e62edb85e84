//! End-to-end runs of the `kcpm` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::JSONSchema;
use serde_json::Value;
use sha2::{Digest, Sha256};

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    crate_dir().join("tests/fixtures/sepsis_desk").join(name)
}

fn kcpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kcpm"))
        .args(args)
        .env_remove("KCPM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kcpm(args);
    assert!(
        out.status.success(),
        "kcpm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulated clean and corrupted logs of the desk scenario.
fn synth(dir: &Path) -> PathBuf {
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--model",
        s(&fixture("model.json")),
        "--cases",
        "200",
        "--seed",
        "5",
        "--drop-rate",
        "0.1",
        "--noise-rate",
        "0.2",
        "--noise-alphabet",
        "DuplicateEntry,TestMessage,SystemPing",
        "--out",
        s(&out),
    ]);
    out
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn pipeline_outputs_are_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let logs = synth(tmp.path());
    let corrupted = logs.join("corrupted.xes");
    let config = fixture("config.toml");
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("run{threads}"));
        let table = ok(&[
            "--config",
            s(&config),
            "--threads",
            threads,
            "pipeline",
            "--log",
            s(&corrupted),
            "--out",
            s(&out),
        ]);
        assert!(table.contains("Augmented event log"));
        runs.push(files(&out));
    }
    assert_eq!(
        runs[0].keys().collect::<Vec<_>>(),
        ["augmented.xes", "dfg.dot", "dfg.json", "manifest.json", "report.json", "rules.jsonl", "table.txt"]
    );
    assert_eq!(runs[0], runs[1]);

    let manifest: Value = serde_json::from_slice(&runs[0]["manifest.json"]).unwrap();
    for (name, digest) in manifest["outputs"].as_object().unwrap() {
        assert_eq!(digest.as_str().unwrap(), hex::encode(Sha256::digest(&runs[0][name])));
    }
    assert_eq!(manifest["inputs"]["log"].as_str().unwrap(), hex::encode(Sha256::digest(fs::read(&corrupted).unwrap())));
}

#[test]
fn env_thread_count_is_honoured_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let logs = synth(tmp.path());
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_kcpm"))
            .args(["stats", "--log", s(&logs.join("log.xes"))])
            .env("KCPM_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    assert_eq!(run("many").status.code(), Some(1));
    assert_eq!(run("0").status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(kcpm(&[]).status.code(), Some(1));
    assert_eq!(kcpm(&["--help"]).status.code(), Some(0));
    assert_eq!(kcpm(&["pipeline", "--help"]).status.code(), Some(0));
    assert_eq!(kcpm(&["no-such-command"]).status.code(), Some(1));
    // Missing required input.
    assert_eq!(kcpm(&["mine-dfg", "--out", s(tmp.path())]).status.code(), Some(1));

    let bad_key = tmp.path().join("bad.toml");
    fs::write(&bad_key, "[thresholds]\ndependency = 0.5\nmystery = 1\n").unwrap();
    let out = kcpm(&["--config", s(&bad_key), "stats", "--log", "x.xes"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));

    let bad_range = tmp.path().join("range.toml");
    fs::write(&bad_range, "[thresholds]\ndependency = 1.5\n").unwrap();
    assert_eq!(kcpm(&["--config", s(&bad_range), "stats", "--log", "x.xes"]).status.code(), Some(1));

    let broken = tmp.path().join("broken.xes");
    fs::write(&broken, "<log><trace><string key=\"concept:name\" value=\"c\"/><event>").unwrap();
    assert_eq!(kcpm(&["stats", "--log", s(&broken)]).status.code(), Some(2));

    let bad_csv = tmp.path().join("rows.csv");
    fs::write(&bad_csv, "case_id,activity,timestamp\nc1,a,not-a-time\n").unwrap();
    let out = kcpm(&["stats", "--log", s(&bad_csv)]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(kcpm(&["stats", "--log", s(&tmp.path().join("absent.xes"))]).status.code(), Some(2));
}

fn schema(name: &str) -> JSONSchema {
    let text = fs::read_to_string(crate_dir().join("schemas").join(name)).unwrap();
    JSONSchema::compile(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(schema: &JSONSchema, path: &Path) {
    let value: Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    let msgs: Vec<String> = match schema.validate(&value) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("{} violates its schema: {msgs:?}", path.display());
}

#[test]
fn every_subcommand_output_matches_its_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let logs = synth(t);
    let (clean, corrupted) = (logs.join("log.xes"), logs.join("corrupted.xes"));
    let (kg, rules, model) = (fixture("kg.tsv"), fixture("rules.txt"), fixture("model.json"));

    // Labels: ICU stays versus the rest, taken from the clean log.
    let mut labels = String::from("case_id,class\n");
    let xes = fs::read_to_string(&clean).unwrap();
    for chunk in xes.split("<trace>").skip(1) {
        let case = chunk.split("value=\"").nth(1).unwrap().split('"').next().unwrap();
        let class = if chunk.contains("value=\"ICU\"") { "icu" } else { "ward" };
        labels.push_str(&format!("{case},{class}\n"));
    }
    let labels_path = t.join("labels.csv");
    fs::write(&labels_path, labels).unwrap();

    let out = |n: &str| t.join(n);
    ok(&["ingest", "--log", s(&clean), "--out", s(&out("ingest"))]);
    ok(&["stats", "--log", s(&clean), "--out", s(&out("stats"))]);
    ok(&["mine-rules", "--kg", s(&kg), "--max-body-len", "3", "--out", s(&out("rules"))]);
    ok(&["mine-dfg", "--log", s(&clean), "--long-distance", "0.9", "--out", s(&out("dfg"))]);
    ok(&[
        "filter",
        "--dfg",
        s(&out("dfg").join("dfg.json")),
        "--kg",
        s(&kg),
        "--rules",
        s(&rules),
        "--mode",
        "strict",
        "--out",
        s(&out("filter")),
    ]);
    ok(&["augment", "--log", s(&corrupted), "--kg", s(&kg), "--rules", s(&rules), "--out", s(&out("augment"))]);
    ok(&[
        "variants-train",
        "--log",
        s(&clean),
        "--labels",
        s(&labels_path),
        "--epochs",
        "20",
        "--dim",
        "4",
        "--out",
        s(&out("vtrain")),
    ]);
    ok(&[
        "variants-classify",
        "--log",
        s(&clean),
        "--model",
        s(&out("vtrain").join("model.json")),
        "--labels",
        s(&labels_path),
        "--out",
        s(&out("vclass")),
    ]);
    let row = ok(&["conform", "--log", s(&clean), "--model", s(&model), "--out", s(&out("conform"))]);
    assert!(row.contains("Fitness") && row.contains("1.000"), "{row}");
    ok(&["--config", s(&fixture("config.toml")), "pipeline", "--log", s(&corrupted), "--out", s(&out("pipeline"))]);

    let (report, manifest, dfg, rule) = (
        schema("report.schema.json"),
        schema("manifest.schema.json"),
        schema("dependency_graph.schema.json"),
        schema("rule.schema.json"),
    );
    let dirs = ["synth", "ingest", "stats", "rules", "dfg", "filter", "augment", "vtrain", "vclass", "conform", "pipeline"];
    for d in dirs {
        assert_valid(&report, &out(d).join("report.json"));
        assert_valid(&manifest, &out(d).join("manifest.json"));
    }
    for d in ["dfg", "filter", "pipeline"] {
        assert_valid(&dfg, &out(d).join("dfg.json"));
    }
    for d in ["rules", "filter", "augment", "pipeline"] {
        let text = fs::read_to_string(out(d).join("rules.jsonl")).unwrap();
        for line in text.lines() {
            let v: Value = serde_json::from_str(line).unwrap();
            assert!(rule.is_valid(&v), "{line}");
        }
    }
    assert_valid(&schema("temporal_scorer.schema.json"), &out("augment").join("scorer.json"));
    assert_valid(&schema("variant_model.schema.json"), &out("vtrain").join("model.json"));
    assert_valid(&schema("ground_truth_model.schema.json"), &model);

    let partition = fs::read_to_string(out("vclass").join("partition.csv")).unwrap();
    assert!(partition.starts_with("case_id,class,score:icu,score:ward,prior_only"));
    assert_eq!(partition.lines().count(), 201);
}
