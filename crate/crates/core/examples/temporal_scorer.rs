//! Trains the temporal directly-follows scorer and checks link prediction on
//! held-out cases.
//!
//!     cargo run --release --example temporal_scorer

use kcpm::augmentation::{directly_follows_degree, train_temporal_scorer, ScorerParams};
use kcpm::knowledge_graph::KnowledgeGraph;
use kcpm::synth::{simulate, GroundTruthModel};

fn main() -> kcpm::Result<()> {
    let acts: Vec<String> = (0..10).map(|i| format!("step{i}")).collect();
    let mut model = GroundTruthModel::linear(&acts);
    for i in 0..8 {
        let next = model.transitions.get_mut(&acts[i]).unwrap();
        next.insert(acts[i + 1].clone(), 0.7);
        next.insert(acts[i + 2].clone(), 0.3);
    }
    let train = simulate(&model, 300, 1)?;
    let test = simulate(&model, 100, 2)?;
    let scorer = train_temporal_scorer(&train, &KnowledgeGraph::new(), &ScorerParams::default())?;
    let pairs: Vec<_> = test
        .traces()
        .iter()
        .flat_map(|t| t.events().windows(2).map(|w| (w[0].activity.clone(), w[1].activity.clone(), w[1].timestamp)))
        .collect();
    println!(
        "hits@3 {:.3} (random {:.3}), loss {:.4} -> {:.4}",
        scorer.hits_at_k(&pairs, 3)?,
        3.0 / scorer.entities.len() as f64,
        scorer.loss_history.first().unwrap(),
        scorer.loss_history.last().unwrap()
    );
    let t = pairs[0].2;
    for b in ["step1", "step2", "step5"] {
        println!("degree(step0, {b}) = {:.4}", directly_follows_degree(&scorer, "step0", b, &t)?);
    }
    scorer.save(std::fs::File::create(std::env::temp_dir().join("kcpm-scorer.json"))?)?;
    Ok(())
}
