//! Event-log repair: chaotic-event removal and rule-driven insertion of
//! missing events.

mod scorer;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{AttrValue, Event, EventLog, Trace};
use crate::knowledge_graph::{vocab, Alias, KnowledgeGraph, Triple};
use crate::rule_mining::{Closure, Entailment, RuleBase};

pub use scorer::{
    directly_follows_degree, train_temporal_scorer, ScorerParams, TemporalScorer, TimeBucket, CHECKPOINT_VERSION,
};

/// Attribute set on inserted events.
pub const SYNTHETIC: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Rule { rule: Option<String> },
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInsertion {
    pub case_id: String,
    pub activity: String,
    /// Index of the inserted event in the augmented trace.
    pub position: usize,
    pub score: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedEvent {
    pub case_id: String,
    /// Index in the input trace.
    pub index: usize,
    pub activity: String,
    pub violated: String,
    pub rule: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentThresholds {
    pub theta_aug: Option<f64>,
    pub strict_ordering: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub removed_events: Vec<RemovedEvent>,
    pub inserted: Vec<CandidateInsertion>,
    pub thresholds: AugmentThresholds,
}

impl AugmentationReport {
    /// Concatenates two reports, keeping the union of their settings.
    pub fn merge(mut self, other: AugmentationReport) -> Self {
        self.removed_events.extend(other.removed_events);
        self.inserted.extend(other.inserted);
        self.thresholds.theta_aug = self.thresholds.theta_aug.or(other.thresholds.theta_aug);
        self.thresholds.strict_ordering |= other.thresholds.strict_ordering;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Also remove events whose required predecessor never occurred earlier.
    pub strict_ordering: bool,
}

fn fact(s: &str, p: &str, o: &str) -> Triple {
    Triple {
        subject: s.to_string(),
        predicate: p.to_string(),
        object: o.to_string(),
    }
}

/// `must_precede(p, e)` facts grouped by `e`: `e -> [(p, confidence, rule)]`.
fn obligations(closure: &Closure) -> BTreeMap<String, Vec<(String, f64, Option<String>)>> {
    let mut out: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for (t, d) in closure.with_predicate(vocab::MUST_PRECEDE) {
        let rule = match closure.entails(t) {
            Entailment::Entailed { rule, .. } => rule,
            Entailment::NotEntailed => None,
        };
        out.entry(t.object.clone())
            .or_default()
            .push((t.subject.clone(), d.confidence, rule));
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.cmp(&b.0));
    }
    out
}

pub fn filter_chaotic_events(
    log: &EventLog,
    rb: &RuleBase,
    kg: &KnowledgeGraph,
    alias: &Alias,
    opts: FilterOptions,
) -> Result<(EventLog, AugmentationReport)> {
    filter_chaotic_events_with(log, &Closure::compute(rb, kg), alias, opts)
}

/// Like [`filter_chaotic_events`] with a precomputed closure.
///
/// Removal repeats until no event violates a constraint, so the result is a
/// fixpoint of the filter.
pub fn filter_chaotic_events_with(
    log: &EventLog,
    closure: &Closure,
    alias: &Alias,
    opts: FilterOptions,
) -> Result<(EventLog, AugmentationReport)> {
    let obligations = if opts.strict_ordering {
        obligations(closure)
    } else {
        BTreeMap::new()
    };
    let mut report = AugmentationReport {
        thresholds: AugmentThresholds {
            theta_aug: None,
            strict_ordering: opts.strict_ordering,
        },
        ..Default::default()
    };
    let mut traces = Vec::with_capacity(log.num_traces());
    for trace in log.traces() {
        // (original index, event)
        let mut events: Vec<(usize, &Event)> = trace.events().iter().enumerate().collect();
        loop {
            let mut hit = None;
            'scan: for i in 0..events.len() {
                let (orig, e) = events[i];
                let Some(ea) = alias.get(&e.activity) else {
                    continue;
                };
                if let Some((_, f)) = events.get(i + 1) {
                    if let Some(fa) = alias.get(&f.activity) {
                        let t = fact(ea, vocab::FORBIDDEN_BEFORE, fa);
                        if let Entailment::Entailed { rule, .. } = closure.entails(&t) {
                            hit = Some((i, orig, t, rule));
                            break 'scan;
                        }
                    }
                }
                for (p, _, rule) in obligations.get(ea).into_iter().flatten() {
                    let seen = events[..i]
                        .iter()
                        .any(|(_, prev)| alias.get(&prev.activity) == Some(p.as_str()));
                    if !seen {
                        hit = Some((i, orig, fact(p, vocab::MUST_PRECEDE, ea), rule.clone()));
                        break 'scan;
                    }
                }
            }
            let Some((i, orig, violated, rule)) = hit else {
                break;
            };
            report.removed_events.push(RemovedEvent {
                case_id: trace.case_id().to_string(),
                index: orig,
                activity: events[i].1.activity.clone(),
                violated: violated.to_string(),
                rule,
            });
            events.remove(i);
        }
        if !events.is_empty() {
            let kept = events.into_iter().map(|(_, e)| e.clone()).collect();
            traces.push(Trace::new(trace.case_id(), kept)?);
        }
    }
    report
        .removed_events
        .sort_by(|a, b| a.case_id.cmp(&b.case_id).then(a.index.cmp(&b.index)));
    Ok((EventLog::with_meta(traces, log.meta().clone())?, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub theta_aug: f64,
}

impl InferOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_aug >= 0.0 && self.theta_aug.is_finite()) {
            return Err(Error::config("theta_aug must be a nonnegative number"));
        }
        Ok(())
    }
}

pub fn infer_missing_events(
    log: &EventLog,
    rb: &RuleBase,
    kg: &KnowledgeGraph,
    scorer: Option<&TemporalScorer>,
    alias: &Alias,
    opts: InferOptions,
) -> Result<(EventLog, AugmentationReport)> {
    infer_missing_events_with(log, &Closure::compute(rb, kg), scorer, alias, opts)
}

struct Slot {
    id: usize,
    event: Event,
}

/// Like [`infer_missing_events`] with a precomputed closure.
///
/// For the first event with an unmet `must_precede(p, e)` obligation, the
/// missing `p` that no other missing predecessor must follow is placed right
/// before `e`; the trace is then rescanned.
pub fn infer_missing_events_with(
    log: &EventLog,
    closure: &Closure,
    scorer: Option<&TemporalScorer>,
    alias: &Alias,
    opts: InferOptions,
) -> Result<(EventLog, AugmentationReport)> {
    opts.validate()?;
    let obligations = obligations(closure);
    let mut report = AugmentationReport {
        thresholds: AugmentThresholds {
            theta_aug: Some(opts.theta_aug),
            strict_ordering: false,
        },
        ..Default::default()
    };
    let mut traces = Vec::with_capacity(log.num_traces());
    for trace in log.traces() {
        let mut slots: Vec<Slot> = trace
            .events()
            .iter()
            .enumerate()
            .map(|(id, e)| Slot { id, event: e.clone() })
            .collect();
        let mut next_id = slots.len();
        let mut rejected: HashSet<(usize, String)> = HashSet::new();
        let mut accepted: Vec<(usize, f64, Provenance)> = Vec::new();
        let cap = (slots.len() + 1) * (obligations.len() + 1);
        for _ in 0..cap {
            let Some((i, p, conf, rule)) = next_obligation(&slots, &obligations, alias, closure, &rejected) else {
                break;
            };
            let activity = alias.activity_for(&p);
            let target = slots[i].id;
            let Some(activity) = activity else {
                rejected.insert((target, p));
                continue;
            };
            let next_ts = slots[i].event.timestamp;
            let timestamp = match i.checked_sub(1).map(|j| slots[j].event.timestamp) {
                Some(prev) => prev + (next_ts - prev) / 2,
                None => next_ts - Duration::seconds(1),
            };
            let verdict = if conf >= opts.theta_aug {
                Some((conf, Provenance::Rule { rule }))
            } else {
                let degree = match (scorer, i.checked_sub(1)) {
                    (Some(s), Some(j)) if s.contains(&slots[j].event.activity) && s.contains(&activity) => {
                        Some(directly_follows_degree(s, &slots[j].event.activity, &activity, &timestamp)?)
                    }
                    _ => None,
                };
                degree
                    .filter(|d| *d >= opts.theta_aug)
                    .map(|d| (d, Provenance::Embedding))
            };
            match verdict {
                None => {
                    rejected.insert((target, p));
                }
                Some((score, provenance)) => {
                    let mut event = Event::new(trace.case_id(), activity, timestamp);
                    event.attributes.insert(SYNTHETIC.into(), AttrValue::Bool(true));
                    slots.insert(i, Slot { id: next_id, event });
                    accepted.push((next_id, score, provenance));
                    next_id += 1;
                }
            }
        }
        let position: BTreeMap<usize, usize> = slots.iter().enumerate().map(|(pos, s)| (s.id, pos)).collect();
        for (id, score, provenance) in accepted {
            let pos = position[&id];
            report.inserted.push(CandidateInsertion {
                case_id: trace.case_id().to_string(),
                activity: slots[pos].event.activity.clone(),
                position: pos,
                score,
                provenance,
            });
        }
        traces.push(Trace::new(trace.case_id(), slots.into_iter().map(|s| s.event).collect())?);
    }
    report
        .inserted
        .sort_by(|a, b| a.case_id.cmp(&b.case_id).then(a.position.cmp(&b.position)));
    Ok((EventLog::with_meta(traces, log.meta().clone())?, report))
}

/// First `(slot index, missing predecessor, confidence, rule)` in the trace.
fn next_obligation(
    slots: &[Slot],
    obligations: &BTreeMap<String, Vec<(String, f64, Option<String>)>>,
    alias: &Alias,
    closure: &Closure,
    rejected: &HashSet<(usize, String)>,
) -> Option<(usize, String, f64, Option<String>)> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for (i, slot) in slots.iter().enumerate() {
        let Some(e) = alias.get(&slot.event.activity) else {
            continue;
        };
        let missing: Vec<_> = obligations
            .get(e)
            .into_iter()
            .flatten()
            .filter(|(p, _, _)| !seen.contains(p.as_str()) && !rejected.contains(&(slot.id, p.clone())))
            .collect();
        if !missing.is_empty() {
            // The latest of the missing predecessors goes directly before `e`.
            let last = missing
                .iter()
                .find(|(p, _, _)| {
                    !missing.iter().any(|(q, _, _)| {
                        q != p && closure.entails(&fact(p, vocab::MUST_PRECEDE, q)).is_entailed()
                    })
                })
                .unwrap_or(&missing[0]);
            return Some((i, last.0.clone(), last.1, last.2.clone()));
        }
        seen.insert(e);
    }
    None
}

/// Fraction of cases containing both activities where the first `to` comes
/// more than `limit` after the first `from`.
pub fn check_guideline_latency(log: &EventLog, from: &str, to: &str, limit: Duration) -> f64 {
    let mut both = 0usize;
    let mut violating = 0usize;
    for trace in log.traces() {
        let first = |a: &str| trace.events().iter().find(|e| e.activity == a).map(|e| e.timestamp);
        if let (Some(f), Some(t)) = (first(from), first(to)) {
            both += 1;
            if t - f > limit {
                violating += 1;
            }
        }
    }
    if both == 0 {
        0.0
    } else {
        violating as f64 / both as f64
    }
}
