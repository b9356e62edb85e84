//! Event logs: events grouped into time-ordered traces, one per case.
//!
//! Logs are immutable once built. [`EventLog::from_traces`] is the single
//! entry point that enforces the ordering and uniqueness invariants, so every
//! reader (XES, CSV, synthetic generators) goes through it.

mod csv_io;
mod xes;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{parse_csv, read_context_table, write_csv, AttrKind, CsvMapping};
pub use xes::{parse_xes, write_xes, MalformedEventPolicy, XesOptions};
pub(crate) use xes::parse_xes_date as parse_lenient_timestamp;

pub type Timestamp = DateTime<Utc>;

/// Counts keyed by an ordered activity pair. Pairs with a zero count are absent.
pub type PairCounts = BTreeMap<(String, String), u64>;

/// Scalar attribute value attached to an event or a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrValue {
    String(String),
    Int(i64),
    Real(f64),
    Bool(bool),
    Time(Timestamp),
}

impl AttrValue {
    pub fn kind(&self) -> AttrKind {
        match self {
            AttrValue::String(_) => AttrKind::String,
            AttrValue::Int(_) => AttrKind::Int,
            AttrValue::Real(_) => AttrKind::Real,
            AttrValue::Bool(_) => AttrKind::Bool,
            AttrValue::Time(_) => AttrKind::Time,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::String(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::String(s) => f.write_str(s),
            AttrValue::Int(i) => write!(f, "{i}"),
            // `{:?}` keeps a trailing `.0` and round-trips exactly.
            AttrValue::Real(x) => write!(f, "{x:?}"),
            AttrValue::Bool(b) => write!(f, "{b}"),
            AttrValue::Time(t) => f.write_str(&format_timestamp(t)),
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::String(s.to_string())
    }
}

impl From<String> for AttrValue {
    fn from(s: String) -> Self {
        AttrValue::String(s)
    }
}

impl From<bool> for AttrValue {
    fn from(b: bool) -> Self {
        AttrValue::Bool(b)
    }
}

impl From<i64> for AttrValue {
    fn from(i: i64) -> Self {
        AttrValue::Int(i)
    }
}

impl From<f64> for AttrValue {
    fn from(x: f64) -> Self {
        AttrValue::Real(x)
    }
}

pub type Attributes = BTreeMap<String, AttrValue>;

/// RFC 3339 in UTC with only as many fractional digits as needed.
pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: Attributes,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, timestamp: Timestamp) -> Self {
        Event {
            case_id: case_id.into(),
            activity: activity.into(),
            timestamp,
            resource: None,
            attributes: Attributes::new(),
        }
    }

    pub fn with_resource(mut self, resource: impl Into<String>) -> Self {
        self.resource = Some(resource.into());
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<AttrValue>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    /// True when the boolean attribute `key` is present and set.
    pub fn flag(&self, key: &str) -> bool {
        matches!(self.attributes.get(key), Some(AttrValue::Bool(true)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    case_id: String,
    events: Vec<Event>,
}

impl Trace {
    /// Builds a trace, stably sorting events by timestamp.
    ///
    /// Fails on an empty event list, a blank activity label, or an event whose
    /// case id differs from `case_id`.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>) -> Result<Self> {
        let case_id = case_id.into();
        if events.is_empty() {
            return Err(Error::invalid(format!("trace {case_id:?} has no events")));
        }
        for (i, e) in events.iter().enumerate() {
            if e.case_id != case_id {
                return Err(Error::invalid(format!(
                    "event {i} of trace {case_id:?} belongs to case {:?}",
                    e.case_id
                )));
            }
            if e.activity.trim().is_empty() {
                return Err(Error::invalid(format!(
                    "event {i} of trace {case_id:?} has an empty activity label"
                )));
            }
        }
        // Vec::sort_by_key is stable: ties keep their file order.
        events.sort_by_key(|e| e.timestamp);
        Ok(Trace { case_id, events })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> + '_ {
        self.events.iter().map(|e| e.activity.as_str())
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
    alphabet: BTreeSet<String>,
    #[serde(default)]
    meta: Attributes,
}

impl EventLog {
    pub fn from_traces(traces: Vec<Trace>) -> Result<Self> {
        Self::with_meta(traces, Attributes::new())
    }

    pub fn with_meta(traces: Vec<Trace>, meta: Attributes) -> Result<Self> {
        let mut seen = HashSet::with_capacity(traces.len());
        for t in &traces {
            if !seen.insert(t.case_id.as_str()) {
                return Err(Error::invalid(format!("duplicate case id {:?}", t.case_id)));
            }
        }
        let alphabet = compute_alphabet(&traces);
        Ok(EventLog {
            traces,
            alphabet,
            meta,
        })
    }

    /// Groups loose events by case (first-appearance order) and builds traces.
    pub fn from_events(events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for e in events {
            let slot = groups.entry(e.case_id.clone()).or_insert_with(|| {
                order.push(e.case_id.clone());
                Vec::new()
            });
            slot.push(e);
        }
        let traces = order
            .into_iter()
            .map(|case| {
                let evs = groups.remove(&case).unwrap_or_default();
                Trace::new(case, evs)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_traces(traces)
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    pub fn meta(&self) -> &Attributes {
        &self.meta
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn num_traces(&self) -> usize {
        self.traces.len()
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn stats(&self) -> LogStats {
        LogStats::of(self)
    }
}

fn compute_alphabet(traces: &[Trace]) -> BTreeSet<String> {
    traces
        .iter()
        .flat_map(|t| t.events.iter().map(|e| e.activity.clone()))
        .collect()
}

/// `count(a, b)` = positions where `b` immediately follows `a`.
pub fn directly_follows_counts(log: &EventLog) -> PairCounts {
    let mut counts = PairCounts::new();
    for trace in log.traces() {
        for w in trace.events.windows(2) {
            *counts
                .entry((w[0].activity.clone(), w[1].activity.clone()))
                .or_default() += 1;
        }
    }
    counts
}

/// `count(a, b)` = ordered position pairs `i < j` within a trace with
/// activities `(a, b)`, summed over the log.
pub fn eventually_follows_counts(log: &EventLog) -> PairCounts {
    let mut counts = PairCounts::new();
    for trace in log.traces() {
        // Running tally of activities seen so far; each new event pairs with all of them.
        let mut seen: BTreeMap<&str, u64> = BTreeMap::new();
        for e in trace.events() {
            for (&a, &n) in &seen {
                *counts.entry((a.to_string(), e.activity.clone())).or_default() += n;
            }
            *seen.entry(e.activity.as_str()).or_default() += 1;
        }
    }
    counts
}

/// Per-case exogenous attributes, e.g. patient demographics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextTable {
    rows: BTreeMap<String, Attributes>,
}

impl ContextTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, case_id: impl Into<String>, attrs: Attributes) -> Result<()> {
        let case_id = case_id.into();
        if case_id.is_empty() {
            return Err(Error::invalid("context row with empty case id"));
        }
        self.rows.entry(case_id).or_default().extend(attrs);
        Ok(())
    }

    pub fn get(&self, case_id: &str) -> Option<&Attributes> {
        self.rows.get(case_id)
    }

    pub fn rows(&self) -> &BTreeMap<String, Attributes> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub matched_cases: usize,
    /// Log cases without a context row.
    pub unmatched_cases: usize,
    /// Context rows naming a case that is not in the log.
    pub unused_rows: usize,
}

/// Copies each case's context attributes onto all of its events. Existing
/// event attributes win on key collision.
pub fn annotate_context(log: &EventLog, ctx: &ContextTable) -> (EventLog, AnnotationReport) {
    let mut report = AnnotationReport::default();
    let traces = log
        .traces
        .iter()
        .map(|trace| match ctx.get(&trace.case_id) {
            None => {
                report.unmatched_cases += 1;
                trace.clone()
            }
            Some(row) => {
                report.matched_cases += 1;
                let events = trace
                    .events
                    .iter()
                    .map(|e| {
                        let mut e = e.clone();
                        for (k, v) in row {
                            e.attributes.entry(k.clone()).or_insert_with(|| v.clone());
                        }
                        e
                    })
                    .collect();
                Trace {
                    case_id: trace.case_id.clone(),
                    events,
                }
            }
        })
        .collect();
    report.unused_rows = ctx
        .rows
        .keys()
        .filter(|c| log.trace(c).is_none())
        .count();
    let annotated = EventLog {
        traces,
        alphabet: log.alphabet.clone(),
        meta: log.meta.clone(),
    };
    (annotated, report)
}

/// Summary statistics, exported as JSON by the `stats` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub cases: usize,
    pub events: usize,
    pub activities: usize,
    pub variants: usize,
    pub min_trace_len: usize,
    pub max_trace_len: usize,
    pub mean_trace_len: f64,
    pub activity_frequencies: BTreeMap<String, u64>,
    pub start_activities: BTreeMap<String, u64>,
    pub end_activities: BTreeMap<String, u64>,
}

impl LogStats {
    pub fn of(log: &EventLog) -> Self {
        let mut freq = BTreeMap::new();
        let mut starts = BTreeMap::new();
        let mut ends = BTreeMap::new();
        let mut variants = HashSet::new();
        for t in log.traces() {
            for a in t.activities() {
                *freq.entry(a.to_string()).or_insert(0u64) += 1;
            }
            if let (Some(first), Some(last)) = (t.events.first(), t.events.last()) {
                *starts.entry(first.activity.clone()).or_insert(0u64) += 1;
                *ends.entry(last.activity.clone()).or_insert(0u64) += 1;
            }
            variants.insert(t.activities().collect::<Vec<_>>());
        }
        let lens = log.traces().iter().map(Trace::len);
        let events = log.num_events();
        LogStats {
            cases: log.num_traces(),
            events,
            activities: log.alphabet().len(),
            variants: variants.len(),
            min_trace_len: lens.clone().min().unwrap_or(0),
            max_trace_len: lens.max().unwrap_or(0),
            mean_trace_len: if log.is_empty() {
                0.0
            } else {
                events as f64 / log.num_traces() as f64
            },
            activity_frequencies: freq,
            start_activities: starts,
            end_activities: ends,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    fn pair(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn trace_is_sorted_stably() {
        let events = vec![
            Event::new("c", "b", ts(5)),
            Event::new("c", "a", ts(1)),
            Event::new("c", "x", ts(5)),
        ];
        let t = Trace::new("c", events).unwrap();
        assert_eq!(t.activities().collect::<Vec<_>>(), ["a", "b", "x"]);
    }

    #[test]
    fn trace_rejects_blank_activity_and_foreign_case() {
        assert!(Trace::new("c", vec![Event::new("c", "  ", ts(0))]).is_err());
        assert!(Trace::new("c", vec![Event::new("d", "a", ts(0))]).is_err());
        assert!(Trace::new("c", vec![]).is_err());
    }

    #[test]
    fn duplicate_case_ids_rejected() {
        let t = Trace::new("c", vec![Event::new("c", "a", ts(0))]).unwrap();
        assert!(EventLog::from_traces(vec![t.clone(), t]).is_err());
    }

    #[test]
    fn df_counts_examples() {
        let log = log_of(&[&["a", "b", "c"]]);
        let df = directly_follows_counts(&log);
        assert_eq!(df, PairCounts::from([(pair("a", "b"), 1), (pair("b", "c"), 1)]));

        let log = log_of(&[&["a", "b"], &["a", "b"], &["b", "a"]]);
        let df = directly_follows_counts(&log);
        assert_eq!(df, PairCounts::from([(pair("a", "b"), 2), (pair("b", "a"), 1)]));
    }

    #[test]
    fn ef_counts_examples() {
        let log = log_of(&[&["a", "b", "c"]]);
        let ef = eventually_follows_counts(&log);
        assert_eq!(
            ef,
            PairCounts::from([(pair("a", "b"), 1), (pair("a", "c"), 1), (pair("b", "c"), 1)])
        );
        let ef = eventually_follows_counts(&log_of(&[&["a", "a"]]));
        assert_eq!(ef, PairCounts::from([(pair("a", "a"), 1)]));
    }

    #[test]
    fn annotate_context_examples() {
        let log = log_of(&[&["a", "b"]]);
        let mut ctx = ContextTable::new();
        ctx.insert("c0", Attributes::from([("age_group".into(), "65+".into())]))
            .unwrap();
        let (out, report) = annotate_context(&log, &ctx);
        assert_eq!(report.matched_cases, 1);
        for e in out.traces()[0].events() {
            assert_eq!(e.attributes["age_group"], AttrValue::from("65+"));
        }

        let (same, report) = annotate_context(&log, &ContextTable::new());
        assert_eq!(same, log);
        assert_eq!(report.unmatched_cases, 1);
    }

    #[test]
    fn annotate_context_keeps_event_value_on_collision() {
        let events = vec![Event::new("c0", "a", ts(0)).with_attr("age_group", "40-65")];
        let log = EventLog::from_traces(vec![Trace::new("c0", events).unwrap()]).unwrap();
        let mut ctx = ContextTable::new();
        ctx.insert("c0", Attributes::from([("age_group".into(), "65+".into())]))
            .unwrap();
        ctx.insert("ghost", Attributes::new()).unwrap();
        let (out, report) = annotate_context(&log, &ctx);
        assert_eq!(
            out.traces()[0].events()[0].attributes["age_group"],
            AttrValue::from("40-65")
        );
        assert_eq!(report.unused_rows, 1);
    }

    #[test]
    fn stats_counts() {
        let log = log_of(&[&["a", "b"], &["a", "b"], &["a", "c", "d"]]);
        let s = log.stats();
        assert_eq!((s.cases, s.events, s.activities, s.variants), (3, 7, 4, 2));
        assert_eq!(s.max_trace_len, 3);
        assert_eq!(s.start_activities["a"], 3);
    }
}
