//! Ground-truth process models, log simulation and controlled corruption.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{Read, Write};

use chrono::{Duration, TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dependency_mining::DependencyGraph;
use crate::error::{Error, Result};
use crate::event_log::{AttrValue, Event, EventLog, Trace};

/// Attribute set on noise events added by [`corrupt`].
pub const INJECTED: &str = "injected";
/// Attribute set on every event of a trace cut at [`MAX_TRACE_LEN`].
pub const TRUNCATED: &str = "truncated";
pub const MAX_TRACE_LEN: usize = 200;

const TOLERANCE: f64 = 1e-9;

/// A first-order Markov model over activities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthModel {
    /// Probability of starting with each activity.
    pub start: BTreeMap<String, f64>,
    /// `a -> b -> p(b | a)`.
    pub transitions: BTreeMap<String, BTreeMap<String, f64>>,
    /// Probability of the trace ending right after each activity.
    #[serde(default)]
    pub end: BTreeMap<String, f64>,
}

impl GroundTruthModel {
    /// `a1 -> a2 -> ... -> an`, always starting at `a1` and ending at `an`.
    pub fn linear<S: AsRef<str>>(acts: &[S]) -> Self {
        let mut m = GroundTruthModel {
            start: BTreeMap::new(),
            transitions: BTreeMap::new(),
            end: BTreeMap::new(),
        };
        if let Some(first) = acts.first() {
            m.start.insert(first.as_ref().to_string(), 1.0);
        }
        for w in acts.windows(2) {
            m.transitions
                .entry(w[0].as_ref().to_string())
                .or_default()
                .insert(w[1].as_ref().to_string(), 1.0);
        }
        if let Some(last) = acts.last() {
            m.end.insert(last.as_ref().to_string(), 1.0);
        }
        m
    }

    pub fn activities(&self) -> BTreeSet<String> {
        let mut acts: BTreeSet<String> = self.start.keys().cloned().collect();
        for (a, succ) in &self.transitions {
            acts.insert(a.clone());
            acts.extend(succ.keys().cloned());
        }
        acts.extend(self.end.keys().cloned());
        acts
    }

    fn out_mass(&self, a: &str) -> f64 {
        self.transitions.get(a).map_or(0.0, |s| s.values().sum::<f64>()) + self.end.get(a).copied().unwrap_or(0.0)
    }

    /// Probabilities are in `[0, 1]`, the start distribution and every
    /// activity's outgoing mass (transitions plus end) sum to one, and an end
    /// is reachable from every activity that can be reached.
    pub fn validate(&self) -> Result<()> {
        let probs = self
            .start
            .values()
            .chain(self.end.values())
            .chain(self.transitions.values().flat_map(|s| s.values()));
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::invalid(format!("probability {p} outside [0,1]")));
            }
        }
        let start: f64 = self.start.values().sum();
        if (start - 1.0).abs() > TOLERANCE {
            return Err(Error::invalid(format!("start probabilities sum to {start}")));
        }
        for a in self.activities() {
            let m = self.out_mass(&a);
            if (m - 1.0).abs() > TOLERANCE {
                return Err(Error::invalid(format!("outgoing probabilities of {a:?} sum to {m}")));
            }
        }
        let can_end = self.can_end();
        for a in self.reachable() {
            if !can_end.contains(&a) {
                return Err(Error::invalid(format!("no end is reachable from {a:?}")));
            }
        }
        Ok(())
    }

    fn successors<'a>(&'a self, a: &str) -> impl Iterator<Item = &'a String> + 'a {
        self.transitions
            .get(a)
            .into_iter()
            .flat_map(|s| s.iter().filter(|(_, p)| **p > 0.0).map(|(b, _)| b))
    }

    fn reachable(&self) -> BTreeSet<String> {
        let mut seen: BTreeSet<String> = self.start.iter().filter(|(_, p)| **p > 0.0).map(|(a, _)| a.clone()).collect();
        let mut queue: VecDeque<String> = seen.iter().cloned().collect();
        while let Some(a) = queue.pop_front() {
            for b in self.successors(&a) {
                if seen.insert(b.clone()) {
                    queue.push_back(b.clone());
                }
            }
        }
        seen
    }

    fn can_end(&self) -> BTreeSet<String> {
        let mut good: BTreeSet<String> = self.end.iter().filter(|(_, p)| **p > 0.0).map(|(a, _)| a.clone()).collect();
        loop {
            let before = good.len();
            for a in self.activities() {
                if !good.contains(&a) && self.successors(&a).any(|b| good.contains(b)) {
                    good.insert(a);
                }
            }
            if good.len() == before {
                return good;
            }
        }
    }

    /// The model's edges with unit counts; self loops become length-one loops.
    pub fn dependency_graph(&self) -> DependencyGraph {
        let mut edges = Vec::new();
        let mut loops = Vec::new();
        for (a, succ) in &self.transitions {
            for (b, p) in succ {
                if *p > 0.0 {
                    if a == b {
                        loops.push(a.clone());
                    } else {
                        edges.push((a.clone(), b.clone()));
                    }
                }
            }
        }
        let mut dg = DependencyGraph::from_edges(self.activities(), edges);
        for a in loops {
            dg.l1_loops.insert(a, 0.5);
        }
        dg.start_activities = self.start.iter().filter(|(_, p)| **p > 0.0).map(|(a, _)| (a.clone(), 1)).collect();
        dg.end_activities = self.end.iter().filter(|(_, p)| **p > 0.0).map(|(a, _)| (a.clone(), 1)).collect();
        dg
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(source: R) -> Result<Self> {
        let m: GroundTruthModel = serde_json::from_reader(source)?;
        m.validate()?;
        Ok(m)
    }
}

/// Samples from a categorical distribution given in order.
fn sample<T: Copy>(rng: &mut ChaCha8Rng, dist: impl Iterator<Item = (T, f64)>) -> Option<T> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (k, p) in dist {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(k);
        if u < acc {
            return Some(k);
        }
    }
    last
}

pub fn case_rng(seed: u64, case_index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ case_index as u64);
    rng.set_stream(stream);
    rng
}

/// Case ids are zero-padded so that lexical and generation order agree.
pub fn simulate(model: &GroundTruthModel, n_cases: usize, seed: u64) -> Result<EventLog> {
    if n_cases == 0 {
        return Err(Error::invalid("n_cases must be at least 1"));
    }
    model.validate()?;
    let width = n_cases.to_string().len().max(4);
    let base = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let traces: Result<Vec<Trace>> = (0..n_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, i, 0);
            let case = format!("case{i:0width$}");
            let mut t = base + Duration::minutes(rng.gen_range(0..60 * 24 * 365));
            let mut acts = Vec::new();
            let mut cur = sample(&mut rng, model.start.iter().map(|(k, p)| (k, *p)));
            let mut truncated = false;
            while let Some(a) = cur {
                if acts.len() == MAX_TRACE_LEN {
                    truncated = true;
                    break;
                }
                acts.push(a.clone());
                // `None` stands for ending the trace.
                let end = (None, model.end.get(a).copied().unwrap_or(0.0));
                let next = model.transitions.get(a).into_iter().flatten().map(|(k, p)| (Some(k), *p));
                cur = sample(&mut rng, std::iter::once(end).chain(next)).flatten();
            }
            let events = acts
                .into_iter()
                .map(|a| {
                    t += Duration::seconds(rng.gen_range(60..3600));
                    let mut e = Event::new(case.clone(), a, t);
                    if truncated {
                        e.attributes.insert(TRUNCATED.into(), AttrValue::Bool(true));
                    }
                    e
                })
                .collect();
            Trace::new(case, events)
        })
        .collect();
    EventLog::from_traces(traces?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub drop_rate: f64,
    pub noise_rate: f64,
    #[serde(default)]
    pub noise_alphabet: Vec<String>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("drop_rate", self.drop_rate), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} must be in [0,1], got {r}")));
            }
        }
        if self.noise_rate > 0.0 && self.noise_alphabet.is_empty() {
            return Err(Error::config("noise_rate > 0 needs a nonempty noise_alphabet"));
        }
        Ok(())
    }
}

/// Drops each event with `drop_rate`, then for each survivor inserts with
/// `noise_rate` a noise event at a uniform position. Traces left empty are removed.
pub fn corrupt(log: &EventLog, spec: &CorruptionSpec) -> Result<EventLog> {
    spec.validate()?;
    let traces: Result<Vec<Option<Trace>>> = log
        .traces()
        .par_iter()
        .enumerate()
        .map(|(i, trace)| {
            let mut rng = case_rng(spec.seed, i, 1);
            let mut events: Vec<Event> = trace
                .events()
                .iter()
                .filter(|_| !rng.gen_bool(spec.drop_rate))
                .cloned()
                .collect();
            if events.is_empty() {
                return Ok(None);
            }
            let n_noise = (0..events.len()).filter(|_| rng.gen_bool(spec.noise_rate)).count();
            for _ in 0..n_noise {
                let activity = &spec.noise_alphabet[rng.gen_range(0..spec.noise_alphabet.len())];
                let pos = rng.gen_range(0..=events.len());
                let ts = match (pos.checked_sub(1).map(|j| events[j].timestamp), events.get(pos).map(|e| e.timestamp)) {
                    (Some(a), Some(b)) => a + (b - a) / 2,
                    (None, Some(b)) => b - Duration::seconds(1),
                    (Some(a), None) => a + Duration::seconds(1),
                    (None, None) => unreachable!("trace is nonempty"),
                };
                let mut e = Event::new(trace.case_id(), activity.clone(), ts);
                e.attributes.insert(INJECTED.into(), AttrValue::Bool(true));
                events.insert(pos, e);
            }
            Trace::new(trace.case_id(), events).map(Some)
        })
        .collect();
    EventLog::with_meta(traces?.into_iter().flatten().collect(), log.meta().clone())
}

fn same_event(a: &Event, b: &Event) -> bool {
    a.activity == b.activity && a.timestamp == b.timestamp
}

/// Greedy subsequence match of `sub` into `full`; returns the unmatched
/// indices of `full`.
fn unmatched<'a>(full: &'a [Event], sub: impl Iterator<Item = &'a Event>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut j = 0;
    for s in sub {
        while j < full.len() && !same_event(&full[j], s) {
            out.push(j);
            j += 1;
        }
        j += 1;
    }
    out.extend(j.min(full.len())..full.len());
    out
}

/// `(case, index in source trace, activity)` for every source event that no
/// longer appears in `corrupted`.
pub fn dropped_events(source: &EventLog, corrupted: &EventLog) -> Vec<(String, usize, String)> {
    let mut out = Vec::new();
    for trace in source.traces() {
        let kept: Vec<&Event> = corrupted
            .trace(trace.case_id())
            .map(|t| t.events().iter().filter(|e| !e.flag(INJECTED)).collect())
            .unwrap_or_default();
        for i in unmatched(trace.events(), kept.into_iter()) {
            out.push((trace.case_id().to_string(), i, trace.events()[i].activity.clone()));
        }
    }
    out
}

/// Bookkeeping of a repair against the known corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RepairAudit {
    pub injected: usize,
    pub dropped: usize,
    pub removed: usize,
    pub removed_injected: usize,
    pub inserted: usize,
    /// Inserted events matching a dropped event of the same case and activity.
    pub inserted_matched: usize,
}

impl RepairAudit {
    pub fn removal_precision(&self) -> f64 {
        ratio(self.removed_injected, self.removed)
    }

    pub fn insertion_precision(&self) -> f64 {
        ratio(self.inserted_matched, self.inserted)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

/// Compares a repaired log to the corrupted log it came from and to the clean source.
///
/// Repaired events flagged `synthetic_attr` count as insertions; the other
/// repaired events must be a subsequence of the corrupted trace.
pub fn audit_repair(source: &EventLog, corrupted: &EventLog, repaired: &EventLog, synthetic_attr: &str) -> RepairAudit {
    let mut audit = RepairAudit {
        injected: corrupted
            .traces()
            .iter()
            .flat_map(|t| t.events())
            .filter(|e| e.flag(INJECTED))
            .count(),
        ..Default::default()
    };
    let mut dropped: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (case, _, act) in dropped_events(source, corrupted) {
        audit.dropped += 1;
        *dropped.entry((case, act)).or_default() += 1;
    }
    for trace in corrupted.traces() {
        let rep = repaired.trace(trace.case_id());
        let kept: Vec<&Event> = rep
            .map(|t| t.events().iter().filter(|e| !e.flag(synthetic_attr)).collect())
            .unwrap_or_default();
        for i in unmatched(trace.events(), kept.into_iter()) {
            audit.removed += 1;
            if trace.events()[i].flag(INJECTED) {
                audit.removed_injected += 1;
            }
        }
        for e in rep.into_iter().flat_map(|t| t.events()).filter(|e| e.flag(synthetic_attr)) {
            audit.inserted += 1;
            if let Some(n) = dropped.get_mut(&(trace.case_id().to_string(), e.activity.clone())) {
                if *n > 0 {
                    *n -= 1;
                    audit.inserted_matched += 1;
                }
            }
        }
    }
    audit
}
