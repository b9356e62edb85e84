//! Reads a CSV event log, joins a case context table, prints statistics and
//! writes the result as XES.
//!
//!     cargo run --example event_log_io

use std::io::Cursor;

use kcpm::event_log::{annotate_context, parse_csv, parse_xes, read_context_table, write_xes, CsvMapping, XesOptions};

const EVENTS: &str = "\
case_id,activity,timestamp,resource
p1,ER Registration,2014-10-22T11:15:41Z,A
p1,ER Triage,2014-10-22T11:27:00Z,C
p1,IV Antibiotics,2014-10-22T12:03:00Z,A
p2,ER Registration,2014-11-02T08:00:00Z,B
p2,ER Triage,2014-11-02T08:10:00Z,C
p2,IV Antibiotics,2014-11-02T09:40:00Z,B
";

const CONTEXT: &str = "\
case_id,age,insurance
p1,67,public
p2,45,private
";

fn main() -> kcpm::Result<()> {
    let headers: Vec<String> = EVENTS.lines().next().unwrap().split(',').map(String::from).collect();
    let mapping = CsvMapping::auto_from_headers(&headers);
    let log = parse_csv(EVENTS.as_bytes(), &mapping)?;
    let (log, report) = annotate_context(&log, &read_context_table(CONTEXT.as_bytes())?);
    println!("context joined for {} case(s), {} unmatched", report.matched_cases, report.unmatched_cases);
    println!("{}", serde_json::to_string_pretty(&log.stats())?);

    let mut xes = Vec::new();
    write_xes(&log, &mut xes)?;
    let back = parse_xes(Cursor::new(&xes), XesOptions::default())?;
    assert_eq!(back, log);
    println!("{}", String::from_utf8_lossy(&xes).lines().take(12).collect::<Vec<_>>().join("\n"));
    Ok(())
}
