//! Simulates a ground-truth model, corrupts it and reports the bookkeeping.
//!
//!     cargo run --example synth_corruption -- [drop_rate] [noise_rate]

use kcpm::synth::{corrupt, dropped_events, simulate, CorruptionSpec, GroundTruthModel, INJECTED};

fn main() -> kcpm::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>());
    let drop_rate = args.next().transpose().ok().flatten().unwrap_or(0.1);
    let noise_rate = args.next().transpose().ok().flatten().unwrap_or(0.2);

    let model = GroundTruthModel::linear(&["register", "triage", "labs", "treat", "release"]);
    model.write_json(std::io::stdout().lock())?;
    println!();
    let clean = simulate(&model, 1000, 42)?;
    let spec = CorruptionSpec { drop_rate, noise_rate, noise_alphabet: vec!["ping".into(), "dup".into()], seed: 42 };
    let noisy = corrupt(&clean, &spec)?;
    let injected = noisy.traces().iter().flat_map(|t| t.events()).filter(|e| e.flag(INJECTED)).count();
    println!(
        "{} -> {} events: {} dropped, {} injected, {} empty case(s) removed",
        clean.num_events(),
        noisy.num_events(),
        dropped_events(&clean, &noisy).len(),
        injected,
        clean.num_traces() - noisy.num_traces()
    );
    Ok(())
}
