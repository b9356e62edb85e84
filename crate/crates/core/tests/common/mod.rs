//! Brute-force reference implementations and generators shared by the
//! integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{TimeZone, Utc};
use kcpm::event_log::{Event, EventLog, Timestamp, Trace};
use kcpm::knowledge_graph::{KnowledgeGraph, Triple};
use rand::Rng;

pub fn ts(secs: i64) -> Timestamp {
    Utc.timestamp_opt(1_500_000_000 + secs, 0).unwrap()
}

/// One trace per entry, events one minute apart.
pub fn log_of<S: AsRef<str>>(traces: &[Vec<S>]) -> EventLog {
    let traces = traces
        .iter()
        .enumerate()
        .filter(|(_, acts)| !acts.is_empty())
        .map(|(i, acts)| {
            let case = format!("case{i:03}");
            let events = acts
                .iter()
                .enumerate()
                .map(|(j, a)| Event::new(case.clone(), a.as_ref(), ts(60 * j as i64)))
                .collect();
            Trace::new(case, events).unwrap()
        })
        .collect();
    EventLog::from_traces(traces).unwrap()
}

pub fn activity_sequences(log: &EventLog) -> Vec<Vec<String>> {
    log.traces()
        .iter()
        .map(|t| t.events().iter().map(|e| e.activity.clone()).collect())
        .collect()
}

pub fn random_traces<R: Rng>(rng: &mut R, max_acts: usize, max_traces: usize, max_len: usize) -> Vec<Vec<String>> {
    let n_acts = rng.gen_range(1..=max_acts);
    let n_traces = rng.gen_range(1..=max_traces);
    (0..n_traces)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| format!("t{}", rng.gen_range(0..n_acts))).collect()
        })
        .collect()
}

pub fn random_triples<R: Rng>(rng: &mut R, max_triples: usize, max_preds: usize, max_entities: usize) -> Vec<(String, String, String)> {
    let n_preds = rng.gen_range(1..=max_preds);
    let n_ents = rng.gen_range(2..=max_entities);
    let n = rng.gen_range(1..=max_triples);
    (0..n)
        .map(|_| {
            (
                format!("e{}", rng.gen_range(0..n_ents)),
                format!("p{}", rng.gen_range(0..n_preds)),
                format!("e{}", rng.gen_range(0..n_ents)),
            )
        })
        .collect()
}

pub fn kg_from(triples: &[(String, String, String)]) -> KnowledgeGraph {
    KnowledgeGraph::from_triples(triples.iter().map(|(s, p, o)| Triple::new(s, p, o).unwrap()))
}

/// Directly-follows counts by scanning every adjacent index pair.
pub fn oracle_df(traces: &[Vec<String>]) -> BTreeMap<(String, String), u64> {
    let mut out = BTreeMap::new();
    for t in traces {
        for i in 0..t.len() {
            for j in 0..t.len() {
                if j == i + 1 {
                    *out.entry((t[i].clone(), t[j].clone())).or_insert(0) += 1;
                }
            }
        }
    }
    out
}

/// `a, b, a` windows with `a != b`, keyed `(a, b)`.
pub fn oracle_aba(traces: &[Vec<String>]) -> BTreeMap<(String, String), u64> {
    let mut out = BTreeMap::new();
    for t in traces {
        let mut i = 0;
        while i + 2 < t.len() {
            if t[i] == t[i + 2] && t[i] != t[i + 1] {
                *out.entry((t[i].clone(), t[i + 1].clone())).or_insert(0) += 1;
            }
            i += 1;
        }
    }
    out
}

pub fn oracle_dependency(ab: u64, ba: u64) -> f64 {
    (ab as f64 - ba as f64) / (ab as f64 + ba as f64 + 1.0)
}

pub fn oracle_loop(n: u64) -> f64 {
    n as f64 / (n as f64 + 1.0)
}

/// Body-satisfying `(x, y)` pairs found by trying every entity for every variable.
fn body_pairs(facts: &HashSet<(&str, &str, &str)>, entities: &[&str], body: &[&str]) -> BTreeSet<(String, String)> {
    fn walk<'a>(
        facts: &HashSet<(&'a str, &'a str, &'a str)>,
        entities: &[&'a str],
        body: &[&str],
        start: &'a str,
        at: &'a str,
        out: &mut BTreeSet<(String, String)>,
    ) {
        let Some((first, rest)) = body.split_first() else {
            out.insert((start.to_string(), at.to_string()));
            return;
        };
        for &next in entities {
            if facts.contains(&(at, *first, next)) {
                walk(facts, entities, rest, start, next, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    for &x in entities {
        walk(facts, entities, body, x, x, &mut out);
    }
    out
}

/// `(body predicates, head) -> (support, std confidence, pca confidence)` for
/// every closed-path rule with body length up to `max_len` meeting both thresholds.
pub fn oracle_rules(
    triples: &[(String, String, String)],
    max_len: usize,
    min_support: u64,
    min_pca: f64,
) -> BTreeMap<(Vec<String>, String), (u64, f64, f64)> {
    let facts: HashSet<(&str, &str, &str)> = triples.iter().map(|(s, p, o)| (s.as_str(), p.as_str(), o.as_str())).collect();
    let entities: Vec<&str> = triples
        .iter()
        .flat_map(|(s, _, o)| [s.as_str(), o.as_str()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let preds: Vec<&str> = triples.iter().map(|(_, p, _)| p.as_str()).collect::<BTreeSet<_>>().into_iter().collect();

    let mut bodies: Vec<Vec<&str>> = preds.iter().map(|p| vec![*p]).collect();
    let mut all = bodies.clone();
    for _ in 1..max_len {
        bodies = bodies
            .iter()
            .flat_map(|b| {
                preds.iter().map(move |p| {
                    let mut nb = b.clone();
                    nb.push(p);
                    nb
                })
            })
            .collect();
        all.extend(bodies.iter().cloned());
    }

    let mut out = BTreeMap::new();
    for body in &all {
        let pairs = body_pairs(&facts, &entities, body);
        for head in &preds {
            if body.len() == 1 && body[0] == *head {
                continue;
            }
            let mut support = 0u64;
            let mut pca = 0u64;
            for (x, y) in &pairs {
                if facts.contains(&(x.as_str(), *head, y.as_str())) {
                    support += 1;
                }
                if entities.iter().any(|e| facts.contains(&(x.as_str(), *head, *e))) {
                    pca += 1;
                }
            }
            let std_conf = if pairs.is_empty() { 0.0 } else { support as f64 / pairs.len() as f64 };
            let pca_conf = if pca == 0 { 0.0 } else { support as f64 / pca as f64 };
            if support >= min_support && pca_conf >= min_pca {
                out.insert(
                    (body.iter().map(|s| s.to_string()).collect(), head.to_string()),
                    (support, std_conf, pca_conf),
                );
            }
        }
    }
    out
}

/// `sub` can be obtained from `sup` by deleting elements.
pub fn is_subsequence<T: PartialEq>(sub: &[T], sup: &[T]) -> bool {
    let mut it = sup.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

/// Moving averages over `window` consecutive values never increase.
pub fn smoothed_nonincreasing(history: &[f64], window: usize) -> bool {
    let means: Vec<f64> = history.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect();
    means.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
}
