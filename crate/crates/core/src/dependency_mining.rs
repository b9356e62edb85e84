//! Heuristics-miner style dependency graphs and rule-based edge filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{directly_follows_counts, eventually_follows_counts, EventLog, PairCounts};
use crate::knowledge_graph::{vocab, Alias, Triple};
use crate::rule_mining::Closure;

/// `(|a>b| - |b>a|) / (|a>b| + |b>a| + 1)`, always in `(-1, 1)`.
pub fn dependency_measure(ab: u64, ba: u64) -> f64 {
    (ab as f64 - ba as f64) / (ab as f64 + ba as f64 + 1.0)
}

/// Length-one loop measure `|a>a| / (|a>a| + 1)`.
pub fn l1_loop_measure(aa: u64) -> f64 {
    aa as f64 / (aa as f64 + 1.0)
}

/// Length-two loop measure; `aba` and `bab` count the `a,b,a` and `b,a,b` patterns.
pub fn l2_loop_measure(aba: u64, bab: u64) -> f64 {
    let n = (aba + bab) as f64;
    n / (n + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningThresholds {
    pub dependency_threshold: f64,
    pub frequency_threshold: u64,
    pub all_tasks_connected: bool,
    /// When set, long-distance dependencies at or above this measure are kept.
    #[serde(default)]
    pub long_distance_threshold: Option<f64>,
}

impl Default for MiningThresholds {
    fn default() -> Self {
        MiningThresholds {
            dependency_threshold: 0.5,
            frequency_threshold: 1,
            all_tasks_connected: false,
            long_distance_threshold: None,
        }
    }
}

impl MiningThresholds {
    pub fn new(dependency_threshold: f64, frequency_threshold: u64) -> Self {
        MiningThresholds {
            dependency_threshold,
            frequency_threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dependency_threshold) {
            return Err(Error::config("dependency_threshold must be in [0,1)"));
        }
        if let Some(t) = self.long_distance_threshold {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::config("long_distance_threshold must be in [0,1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub df_count: u64,
    pub dependency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub activities: BTreeSet<String>,
    #[serde(with = "pair_map")]
    pub edges: BTreeMap<(String, String), DependencyEdge>,
    pub l1_loops: BTreeMap<String, f64>,
    #[serde(with = "pair_map")]
    pub l2_loops: BTreeMap<(String, String), f64>,
    #[serde(default, with = "pair_map")]
    pub long_distance: BTreeMap<(String, String), f64>,
    pub start_activities: BTreeMap<String, u64>,
    pub end_activities: BTreeMap<String, u64>,
    pub thresholds: MiningThresholds,
}

/// Serializes pair-keyed maps as `[{"from", "to", "value"}]` arrays for JSON.
mod pair_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry<V> {
        from: String,
        to: String,
        #[serde(flatten)]
        value: V,
    }

    #[derive(Serialize, Deserialize)]
    struct Wrapped<V> {
        value: V,
    }

    pub fn serialize<S: Serializer, V: Serialize + Clone>(
        map: &BTreeMap<(String, String), V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry<Wrapped<V>>> = map
            .iter()
            .map(|((a, b), v)| Entry {
                from: a.clone(),
                to: b.clone(),
                value: Wrapped { value: v.clone() },
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(
        d: D,
    ) -> Result<BTreeMap<(String, String), V>, D::Error> {
        let entries: Vec<Entry<Wrapped<V>>> = Vec::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| ((e.from, e.to), e.value.value))
            .collect())
    }
}

impl DependencyGraph {
    /// A graph over `activities` with the given edges, each counted once.
    pub fn from_edges(
        activities: impl IntoIterator<Item = String>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        let mut acts: BTreeSet<String> = activities.into_iter().collect();
        let edges: BTreeMap<_, _> = edges
            .into_iter()
            .map(|(a, b)| {
                acts.insert(a.clone());
                acts.insert(b.clone());
                (
                    (a, b),
                    DependencyEdge {
                        df_count: 1,
                        dependency: dependency_measure(1, 0),
                    },
                )
            })
            .collect();
        DependencyGraph {
            activities: acts,
            edges,
            l1_loops: BTreeMap::new(),
            l2_loops: BTreeMap::new(),
            long_distance: BTreeMap::new(),
            start_activities: BTreeMap::new(),
            end_activities: BTreeMap::new(),
            thresholds: MiningThresholds::new(0.0, 1),
        }
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.contains_key(&(a.to_string(), b.to_string()))
    }

    /// Directed edges including accepted self loops.
    pub fn relation_pairs(&self) -> BTreeSet<(String, String)> {
        let mut pairs: BTreeSet<_> = self.edges.keys().cloned().collect();
        for (a, m) in &self.l1_loops {
            if *m > 0.0 && *m >= self.thresholds.dependency_threshold {
                pairs.insert((a.clone(), a.clone()));
            }
        }
        pairs
    }

    /// Edge label is `count/measure`.
    pub fn write_dot<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "digraph dependency_graph {{")?;
        writeln!(out, "  rankdir=LR;")?;
        for a in &self.activities {
            let start = self.start_activities.contains_key(a);
            let end = self.end_activities.contains_key(a);
            let shape = match (start, end) {
                (true, _) => "box, peripheries=2",
                (_, true) => "box, style=bold",
                _ => "box",
            };
            writeln!(out, "  {a:?} [shape={shape}];")?;
        }
        for ((a, b), e) in &self.edges {
            writeln!(out, "  {a:?} -> {b:?} [label=\"{}/{:.3}\"];", e.df_count, e.dependency)?;
        }
        for (a, m) in &self.l1_loops {
            if *m >= self.thresholds.dependency_threshold && *m > 0.0 {
                writeln!(out, "  {a:?} -> {a:?} [label=\"loop/{m:.3}\", style=dashed];")?;
            }
        }
        writeln!(out, "}}")?;
        Ok(())
    }
}

/// `|a>>b|`: positions with the pattern `a, b, a`, for `a != b`.
pub fn length_two_loop_counts(log: &EventLog) -> PairCounts {
    let mut counts = PairCounts::new();
    for t in log.traces() {
        for w in t.events().windows(3) {
            if w[0].activity == w[2].activity && w[0].activity != w[1].activity {
                *counts
                    .entry((w[0].activity.clone(), w[1].activity.clone()))
                    .or_default() += 1;
            }
        }
    }
    counts
}

pub fn mine_dependency_graph(log: &EventLog, th: &MiningThresholds) -> Result<DependencyGraph> {
    th.validate()?;
    if log.is_empty() {
        return Err(Error::invalid("cannot mine a dependency graph from an empty log"));
    }
    let df = directly_follows_counts(log);
    let count = |a: &str, b: &str| df.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0);

    let mut edges = BTreeMap::new();
    let min_count = th.frequency_threshold.max(1);
    for ((a, b), &ab) in &df {
        if a == b {
            continue;
        }
        let m = dependency_measure(ab, count(b, a));
        if ab >= min_count && m > 0.0 && m >= th.dependency_threshold {
            edges.insert(
                (a.clone(), b.clone()),
                DependencyEdge {
                    df_count: ab,
                    dependency: m,
                },
            );
        }
    }

    let stats = log.stats();
    if th.all_tasks_connected {
        connect_all_tasks(log, &df, &stats.start_activities, &stats.end_activities, &mut edges);
    }

    let l1_loops = df
        .iter()
        .filter(|((a, b), _)| a == b)
        .map(|((a, _), &n)| (a.clone(), l1_loop_measure(n)))
        .collect();

    let l2 = length_two_loop_counts(log);
    let mut l2_loops = BTreeMap::new();
    for (a, b) in l2.keys() {
        let aba = l2.get(&(a.clone(), b.clone())).copied().unwrap_or(0);
        let bab = l2.get(&(b.clone(), a.clone())).copied().unwrap_or(0);
        let m = l2_loop_measure(aba, bab);
        l2_loops.insert((a.clone(), b.clone()), m);
        l2_loops.insert((b.clone(), a.clone()), m);
    }

    let mut long_distance = BTreeMap::new();
    if let Some(ld) = th.long_distance_threshold {
        let ef = eventually_follows_counts(log);
        for ((a, b), &ab) in &ef {
            if a == b {
                continue;
            }
            let ba = ef.get(&(b.clone(), a.clone())).copied().unwrap_or(0);
            let m = dependency_measure(ab, ba);
            if m > 0.0 && m >= ld {
                long_distance.insert((a.clone(), b.clone()), m);
            }
        }
    }

    Ok(DependencyGraph {
        activities: log.alphabet().clone(),
        edges,
        l1_loops,
        l2_loops,
        long_distance,
        start_activities: stats.start_activities,
        end_activities: stats.end_activities,
        thresholds: *th,
    })
}

/// Every non-start activity keeps its best incoming edge and every non-end
/// activity its best outgoing edge. Best = highest measure, then count, then name.
fn connect_all_tasks(
    log: &EventLog,
    df: &PairCounts,
    starts: &BTreeMap<String, u64>,
    ends: &BTreeMap<String, u64>,
    edges: &mut BTreeMap<(String, String), DependencyEdge>,
) {
    let count = |a: &str, b: &str| df.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0);
    let candidate = |a: &str, b: &str| DependencyEdge {
        df_count: count(a, b),
        dependency: dependency_measure(count(a, b), count(b, a)),
    };
    let better = |x: &(String, DependencyEdge), y: &(String, DependencyEdge)| {
        x.1.dependency
            .total_cmp(&y.1.dependency)
            .then(x.1.df_count.cmp(&y.1.df_count))
            .then(y.0.cmp(&x.0))
    };
    for act in log.alphabet() {
        if !starts.contains_key(act) {
            let best = log
                .alphabet()
                .iter()
                .filter(|p| *p != act && count(p, act) > 0)
                .map(|p| (p.clone(), candidate(p, act)))
                .max_by(better);
            if let Some((p, e)) = best {
                edges.entry((p, act.clone())).or_insert(e);
            }
        }
        if !ends.contains_key(act) {
            let best = log
                .alphabet()
                .iter()
                .filter(|s| *s != act && count(act, s) > 0)
                .map(|s| (s.clone(), candidate(act, s)))
                .max_by(better);
            if let Some((s, e)) = best {
                edges.entry((act.clone(), s)).or_insert(e);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Keep an edge only if its directly-follows fact is entailed.
    Strict,
    /// Drop an edge only if a contradicting fact is entailed.
    #[default]
    Permissive,
}

impl std::str::FromStr for FilterMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(FilterMode::Strict),
            "permissive" => Ok(FilterMode::Permissive),
            other => Err(Error::config(format!("unknown filter mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    NotEntailed,
    Contradicted,
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalReason::NotEntailed => "not_entailed",
            RemovalReason::Contradicted => "contradicted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedEdge {
    pub from: String,
    pub to: String,
    pub edge: DependencyEdge,
    pub reason: RemovalReason,
    /// Signature of the rule that derived the contradicting fact, if any.
    pub rule: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub mode: FilterMode,
    pub removed_edges: Vec<RemovedEdge>,
    pub kept_edges: usize,
}

impl FilterReport {
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mode: {:?}, kept {} edge(s), removed {}", self.mode, self.kept_edges, self.removed_edges.len())?;
        if self.removed_edges.is_empty() {
            return Ok(());
        }
        let w = self
            .removed_edges
            .iter()
            .map(|r| r.from.len() + r.to.len() + 4)
            .max()
            .unwrap_or(0)
            .max(4);
        writeln!(out, "{:<w$} | {:<12} | rule", "edge", "reason")?;
        for r in &self.removed_edges {
            let edge = format!("{} -> {}", r.from, r.to);
            writeln!(out, "{edge:<w$} | {:<12} | {}", r.reason.to_string(), r.rule.as_deref().unwrap_or("-"))?;
        }
        Ok(())
    }
}

fn fact(s: &str, p: &str, o: &str) -> Triple {
    Triple {
        subject: s.to_string(),
        predicate: p.to_string(),
        object: o.to_string(),
    }
}

/// Filters `dg` against the entailment closure of a rule base.
///
/// Edges with an unmapped endpoint are always kept.
pub fn filter_dependency_graph(
    dg: &DependencyGraph,
    closure: &Closure,
    alias: &Alias,
    mode: FilterMode,
) -> (DependencyGraph, FilterReport) {
    let mut kept = BTreeMap::new();
    let mut removed = Vec::new();
    for ((a, b), edge) in &dg.edges {
        let (Some(ea), Some(eb)) = (alias.get(a), alias.get(b)) else {
            kept.insert((a.clone(), b.clone()), *edge);
            continue;
        };
        let verdict = match mode {
            FilterMode::Strict => {
                if closure.entails(&fact(ea, vocab::DIRECTLY_FOLLOWS, eb)).is_entailed() {
                    None
                } else {
                    Some((RemovalReason::NotEntailed, None))
                }
            }
            FilterMode::Permissive => [
                fact(eb, vocab::MUST_PRECEDE, ea),
                fact(ea, vocab::FORBIDDEN_BEFORE, eb),
            ]
            .iter()
            .find_map(|f| match closure.entails(f) {
                crate::rule_mining::Entailment::Entailed { rule, .. } => {
                    Some((RemovalReason::Contradicted, rule))
                }
                crate::rule_mining::Entailment::NotEntailed => None,
            }),
        };
        match verdict {
            None => {
                kept.insert((a.clone(), b.clone()), *edge);
            }
            Some((reason, rule)) => removed.push(RemovedEdge {
                from: a.clone(),
                to: b.clone(),
                edge: *edge,
                reason,
                rule,
            }),
        }
    }
    let report = FilterReport {
        mode,
        kept_edges: kept.len(),
        removed_edges: removed,
    };
    let filtered = DependencyGraph {
        edges: kept,
        ..dg.clone()
    };
    (filtered, report)
}
