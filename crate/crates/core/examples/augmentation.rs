//! Removes chaotic events and inserts missing ones on a handful of traces.
//!
//!     cargo run --example augmentation

use chrono::{TimeZone, Utc};
use kcpm::augmentation::{
    check_guideline_latency, filter_chaotic_events, infer_missing_events, FilterOptions, InferOptions,
};
use kcpm::event_log::{Event, EventLog, Trace};
use kcpm::knowledge_graph::{Alias, KnowledgeGraph, Triple};
use kcpm::rule_mining::RuleBase;

fn trace(case: &str, acts: &[&str]) -> kcpm::Result<Trace> {
    let events = acts
        .iter()
        .enumerate()
        .map(|(i, a)| Event::new(case, *a, Utc.timestamp_opt(1_414_000_000 + 1200 * i as i64, 0).unwrap()))
        .collect();
    Trace::new(case, events)
}

fn main() -> kcpm::Result<()> {
    let log = EventLog::from_traces(vec![
        trace("p1", &["Registration", "Triage", "Antibiotics"])?,
        trace("p2", &["Registration", "Antibiotics", "Release"])?,
        trace("p3", &["Registration", "Ping", "Triage", "Antibiotics"])?,
    ])?;
    let kg = KnowledgeGraph::from_triples([
        Triple::new("Registration", "enables", "Triage")?,
        Triple::new("Triage", "enables", "Antibiotics")?,
        Triple::new("Ping", "instance_of", "SystemEvent")?,
        Triple::new("SystemEvent", "incompatible_with", "Triage")?,
    ]);
    let rules = RuleBase::from_rules(vec![
        "enables(x,y) => must_precede(x,y)".parse()?,
        "must_precede(x,z1) & must_precede(z1,y) => must_precede(x,y)".parse()?,
        "instance_of(x,z1) & incompatible_with(z1,y) => forbidden_before(x,y)".parse()?,
    ]);
    let alias = Alias::identity();

    let (filtered, removed) = filter_chaotic_events(&log, &rules, &kg, &alias, FilterOptions::default())?;
    let (augmented, inserted) = infer_missing_events(&filtered, &rules, &kg, None, &alias, InferOptions { theta_aug: 0.5 })?;
    println!("{}", serde_json::to_string_pretty(&removed.merge(inserted))?);
    for t in augmented.traces() {
        println!("{}: {}", t.case_id(), t.activities().collect::<Vec<_>>().join(" -> "));
    }
    let late = check_guideline_latency(&augmented, "Triage", "Antibiotics", chrono::Duration::minutes(30));
    println!("antibiotics later than 30 min after triage in {:.0}% of cases", 100.0 * late);
    Ok(())
}
