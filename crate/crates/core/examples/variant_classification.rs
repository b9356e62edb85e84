//! Learns care cohorts from context-enriched traces and partitions the log.
//!
//!     cargo run --release --example variant_classification

use std::collections::BTreeMap;

use kcpm::event_log::{annotate_context, AttrValue, ContextTable};
use kcpm::knowledge_graph::{build_lpg, KnowledgeGraph, LpgOptions};
use kcpm::synth::{simulate, GroundTruthModel};
use kcpm::variant_analysis::{accuracy, classify_log, train_variant_model, CohortClass, VariantParams};

fn main() -> kcpm::Result<()> {
    let mut model = GroundTruthModel::linear(&["register", "triage", "treat", "discharge"]);
    model.transitions.get_mut("register").unwrap().insert("treat".into(), 0.3);
    model.transitions.get_mut("register").unwrap().insert("triage".into(), 0.7);
    let log = simulate(&model, 150, 4)?;

    let cohorts = [("public", "effective care"), ("private", "preference-sensitive care"), ("none", "supply-sensitive care")];
    let mut ctx = ContextTable::new();
    let mut labels = BTreeMap::new();
    for (i, t) in log.traces().iter().enumerate() {
        let (payer, cohort) = cohorts[i % 3];
        ctx.insert(t.case_id(), [("payer".to_string(), AttrValue::from(payer))].into())?;
        labels.insert(t.case_id().to_string(), CohortClass::new(cohort));
    }
    let (log, _) = annotate_context(&log, &ctx);
    let lpg = build_lpg(&log, &KnowledgeGraph::new(), &LpgOptions { attribute_nodes: vec!["payer".into()], ..LpgOptions::default() });

    let train: BTreeMap<_, _> = labels.iter().take(100).map(|(k, v)| (k.clone(), v.clone())).collect();
    let test: BTreeMap<_, _> = labels.iter().skip(100).map(|(k, v)| (k.clone(), v.clone())).collect();
    let vm = train_variant_model(&lpg, &train, &VariantParams { epochs: 80, ..VariantParams::default() })?;
    let part = classify_log(&vm, &lpg, &log);
    for (cohort, cases) in part.cells() {
        println!("{cohort}: {} case(s)", cases.len());
    }
    println!("held-out accuracy {:.3}", accuracy(&part, &test));
    Ok(())
}
