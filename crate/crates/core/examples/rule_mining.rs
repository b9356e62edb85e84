//! Mines closed-path rules from the emergency-care knowledge graph, merges
//! them with the hand-written rule base and queries the closure.
//!
//!     cargo run --example rule_mining

use std::path::PathBuf;

use kcpm::knowledge_graph::Triple;
use kcpm::pipeline::{load_kg, load_rules};
use kcpm::rule_mining::{mine_rules, Closure, MiningParams};

fn main() -> kcpm::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sepsis_desk");
    let kg = load_kg(&dir.join("kg.tsv"))?;
    let mined = mine_rules(&kg, MiningParams { max_body_len: 2, min_support: 2, min_pca_conf: 0.8 })?;
    println!("mined {} rule(s):", mined.len());
    mined.write_text(std::io::stdout().lock())?;

    let rules = load_rules(&dir.join("rules.txt"))?.merge(&mined);
    let closure = Closure::compute(&rules, &kg);
    println!("closure: {} facts after {} round(s)", closure.len(), closure.rounds());
    for q in [
        Triple::new("Registration", "must_precede", "Discharge")?,
        Triple::new("TestMessage", "forbidden_before", "Labs")?,
        Triple::new("ICU", "must_precede", "NormalWard")?,
    ] {
        println!("{q}: {:?}", closure.entails(&q));
    }
    Ok(())
}
