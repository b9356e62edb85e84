//! Simulates the emergency-care model, corrupts it, repairs it with the
//! hand-written knowledge base and compares raw and augmented logs.
//!
//!     cargo run --release --example desk_reproduction -- [cases] [seed]

use std::path::PathBuf;
use std::time::Instant;

use kcpm::augmentation::SYNTHETIC;
use kcpm::pipeline::{load_kg, load_rules, run_pipeline, PipelineConfig, PipelineInputs};
use kcpm::knowledge_graph::Alias;
use kcpm::synth::{audit_repair, corrupt, simulate, CorruptionSpec, GroundTruthModel};

fn main() -> kcpm::Result<()> {
    let mut args = std::env::args().skip(1);
    let cases: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2024);

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sepsis_desk");
    let model = GroundTruthModel::read_json(std::fs::File::open(dir.join("model.json"))?)?;
    let started = Instant::now();

    let clean = simulate(&model, cases, seed)?;
    let spec = CorruptionSpec {
        drop_rate: 0.1,
        noise_rate: 0.2,
        noise_alphabet: vec!["DuplicateEntry".into(), "TestMessage".into(), "SystemPing".into()],
        seed,
    };
    let noisy = corrupt(&clean, &spec)?;

    let cfg = PipelineConfig::load(&dir.join("config.toml"))?;
    let inputs = PipelineInputs {
        log: noisy.clone(),
        kg: load_kg(&dir.join("kg.tsv"))?,
        rules: load_rules(&dir.join("rules.txt"))?,
        alias: Alias::identity(),
        reference: Some(model.dependency_graph()),
    };
    let out = run_pipeline(&inputs, &cfg)?;
    print!("{}", out.report.table.to_text());

    let audit = audit_repair(&clean, &noisy, &out.augmented, SYNTHETIC);
    println!(
        "removed {} ({} injected), inserted {} ({} matched), rules {} ({} mined)",
        audit.removed,
        audit.removed_injected,
        audit.inserted,
        audit.inserted_matched,
        out.report.rules,
        out.report.mined_rules
    );
    println!("{:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
