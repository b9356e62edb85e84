//! Runs every example binary built alongside the tests.

use std::path::PathBuf;
use std::process::Command;

fn examples_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join("examples")
}

fn run(name: &str, args: &[&str]) -> String {
    let path = examples_dir().join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
    assert!(path.exists(), "{} not built", path.display());
    let out = Command::new(&path).args(args).output().unwrap();
    assert!(out.status.success(), "{name} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn examples_run_to_completion() {
    for name in [
        "event_log_io",
        "property_graph",
        "rule_mining",
        "dependency_graph",
        "augmentation",
        "temporal_scorer",
        "variant_classification",
        "synth_corruption",
    ] {
        assert!(!run(name, &[]).is_empty(), "{name} printed nothing");
    }
}

#[test]
fn table_examples_print_both_rows() {
    for out in [run("conformance_table", &[]), run("desk_reproduction", &["300", "11"])] {
        assert!(out.contains("Raw event log") && out.contains("Augmented event log"), "{out}");
    }
}
