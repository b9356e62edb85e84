//! Mines a heuristics dependency graph from a noisy log and filters it with
//! the rule base in both modes.
//!
//!     cargo run --example dependency_graph

use std::path::PathBuf;

use kcpm::dependency_mining::{filter_dependency_graph, mine_dependency_graph, FilterMode, MiningThresholds};
use kcpm::knowledge_graph::Alias;
use kcpm::pipeline::{load_kg, load_rules};
use kcpm::rule_mining::Closure;
use kcpm::synth::{corrupt, simulate, CorruptionSpec, GroundTruthModel};

fn main() -> kcpm::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sepsis_desk");
    let model = GroundTruthModel::read_json(std::fs::File::open(dir.join("model.json"))?)?;
    let spec = CorruptionSpec {
        drop_rate: 0.05,
        noise_rate: 0.05,
        noise_alphabet: vec!["TestMessage".into()],
        seed: 1,
    };
    let log = corrupt(&simulate(&model, 500, 1)?, &spec)?;
    let dg = mine_dependency_graph(&log, &MiningThresholds::new(0.5, 2))?;
    println!("mined {} edges over {} activities", dg.edges.len(), dg.activities.len());

    let closure = Closure::compute(&load_rules(&dir.join("rules.txt"))?, &load_kg(&dir.join("kg.tsv"))?);
    for mode in [FilterMode::Permissive, FilterMode::Strict] {
        let (filtered, report) = filter_dependency_graph(&dg, &closure, &Alias::identity(), mode);
        report.write_table(std::io::stdout().lock())?;
        if mode == FilterMode::Permissive {
            filtered.write_dot(std::io::stderr().lock())?;
        }
    }
    Ok(())
}
