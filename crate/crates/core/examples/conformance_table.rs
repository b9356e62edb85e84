//! Footprint conformance: the utility comparison of a raw and an augmented
//! log, first from reported fitness/precision pairs, then from footprints.
//!
//!     cargo run --example conformance_table

use kcpm::conformance::{conformance, footprint_of_log, footprint_of_model, ComparisonTable, ConformanceReport};
use kcpm::synth::{simulate, GroundTruthModel};

fn main() -> kcpm::Result<()> {
    let mut table = ComparisonTable::default();
    table.push("Raw event log", ConformanceReport::from_metrics(0.794, 0.573));
    table.push("Augmented event log", ConformanceReport::from_metrics(0.903, 0.671));
    print!("{}", table.to_text());

    let model = GroundTruthModel::linear(&["register", "triage", "treat", "release"]);
    let mut partial = GroundTruthModel::linear(&["register", "treat", "release"]);
    partial.start.clear();
    partial.start.insert("register".into(), 1.0);
    let log = simulate(&partial, 20, 3)?;
    let fp = footprint_of_log(&log)?;
    fp.write_text(std::io::stdout().lock())?;
    let report = conformance(&fp, &footprint_of_model(&model.dependency_graph()));
    println!(
        "fitness {:.3} precision {:.3} f-score {:.3}, {} deviating cell(s)",
        report.fitness,
        report.precision,
        report.f_score,
        report.deviations.len()
    );
    Ok(())
}
