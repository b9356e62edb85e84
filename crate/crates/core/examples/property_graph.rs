//! Builds the labeled property graph of a small log joined with domain
//! knowledge and prints it in DOT.
//!
//!     cargo run --example property_graph | dot -Tsvg > lpg.svg

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use kcpm::event_log::{Event, EventLog};
use kcpm::knowledge_graph::{build_lpg, Alias, KnowledgeGraph, LpgOptions, Triple, DF};

fn main() -> kcpm::Result<()> {
    let t = |m: i64| Utc.timestamp_opt(1_414_000_000 + 60 * m, 0).unwrap();
    let log = EventLog::from_events([
        Event::new("p1", "ER Registration", t(0)).with_resource("A"),
        Event::new("p1", "ER Triage", t(10)).with_resource("C"),
        Event::new("p1", "IV Antibiotics", t(50)).with_resource("A"),
        Event::new("p2", "ER Registration", t(5)).with_resource("B"),
        Event::new("p2", "IV Antibiotics", t(30)).with_resource("B"),
    ])?;
    let kg = KnowledgeGraph::from_triples([
        Triple::new("Registration", "enables", "Triage")?,
        Triple::new("Antibiotics", "instance_of", "Treatment")?,
    ]);
    let alias = Alias::partial(BTreeMap::from([
        ("ER Registration".to_string(), "Registration".to_string()),
        ("ER Triage".to_string(), "Triage".to_string()),
        ("IV Antibiotics".to_string(), "Antibiotics".to_string()),
    ]));
    let g = build_lpg(&log, &kg, &LpgOptions::with_alias(alias));
    g.validate()?;
    eprintln!("{} nodes, {} edges, {} DF", g.nodes().len(), g.edges().len(), g.edges_with_label(DF).count());
    g.write_dot(std::io::stdout().lock())?;
    Ok(())
}
