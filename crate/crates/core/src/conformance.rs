//! Footprint matrices and footprint-based fitness, precision and F-score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dependency_mining::DependencyGraph;
use crate::error::{Error, Result};
use crate::event_log::{directly_follows_counts, EventLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "->")]
    Causal,
    #[serde(rename = "<-")]
    Reverse,
    #[serde(rename = "||")]
    Parallel,
    #[serde(rename = "#")]
    Unrelated,
}

impl Relation {
    fn from_flags(ab: bool, ba: bool) -> Self {
        match (ab, ba) {
            (true, false) => Relation::Causal,
            (false, true) => Relation::Reverse,
            (true, true) => Relation::Parallel,
            (false, false) => Relation::Unrelated,
        }
    }

    /// The relation seen from the other side of the pair.
    pub fn inverse(self) -> Self {
        match self {
            Relation::Causal => Relation::Reverse,
            Relation::Reverse => Relation::Causal,
            r => r,
        }
    }

    /// Causal or parallel: `a` is directly followed by `b` somewhere.
    pub fn has_forward(self) -> bool {
        matches!(self, Relation::Causal | Relation::Parallel)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Causal => "->",
            Relation::Reverse => "<-",
            Relation::Parallel => "||",
            Relation::Unrelated => "#",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Pairwise relations over an activity set. Pairs not stored are unrelated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FootprintMatrix {
    activities: BTreeSet<String>,
    forward: BTreeSet<(String, String)>,
}

impl FootprintMatrix {
    /// Footprint of a set of directed pairs. Endpoints join the activity set.
    pub fn from_pairs(
        activities: impl IntoIterator<Item = String>,
        pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        let mut activities: BTreeSet<String> = activities.into_iter().collect();
        let forward: BTreeSet<(String, String)> = pairs.into_iter().collect();
        for (a, b) in &forward {
            activities.insert(a.clone());
            activities.insert(b.clone());
        }
        FootprintMatrix { activities, forward }
    }

    pub fn activities(&self) -> &BTreeSet<String> {
        &self.activities
    }

    pub fn relation(&self, a: &str, b: &str) -> Relation {
        let ab = self.forward.contains(&(a.to_string(), b.to_string()));
        let ba = self.forward.contains(&(b.to_string(), a.to_string()));
        Relation::from_flags(ab, ba)
    }

    /// All ordered pairs with their relation, row-major.
    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, Relation)> + '_ {
        self.activities.iter().flat_map(move |a| {
            self.activities
                .iter()
                .map(move |b| (a.as_str(), b.as_str(), self.relation(a, b)))
        })
    }

    /// Pairs whose relation is causal or parallel.
    pub fn forward_pairs(&self) -> &BTreeSet<(String, String)> {
        &self.forward
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let w = self.activities.iter().map(|a| a.len()).max().unwrap_or(1).max(2);
        write!(out, "{:w$}", "")?;
        for b in &self.activities {
            write!(out, " | {b:w$}")?;
        }
        writeln!(out)?;
        for a in &self.activities {
            write!(out, "{a:w$}")?;
            for b in &self.activities {
                write!(out, " | {:w$}", self.relation(a, b).symbol())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.activities.iter().cloned());
        w.write_record(&header)?;
        for a in &self.activities {
            let mut row = vec![a.clone()];
            row.extend(self.activities.iter().map(|b| self.relation(a, b).symbol().to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn footprint_of_log(log: &EventLog) -> Result<FootprintMatrix> {
    if log.is_empty() {
        return Err(Error::invalid("cannot compute the footprint of an empty log"));
    }
    let df = directly_follows_counts(log);
    Ok(FootprintMatrix::from_pairs(
        log.alphabet().iter().cloned(),
        df.into_iter().filter(|(_, n)| *n > 0).map(|(k, _)| k),
    ))
}

/// Footprint of a model's edges, including its accepted self loops.
pub fn footprint_of_model(dg: &DependencyGraph) -> FootprintMatrix {
    FootprintMatrix::from_pairs(dg.activities.iter().cloned(), dg.relation_pairs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub from: String,
    pub to: String,
    pub log: Relation,
    pub model: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub fitness: f64,
    pub precision: f64,
    pub f_score: f64,
    pub deviations: Vec<Deviation>,
}

pub fn f_score(fitness: f64, precision: f64) -> f64 {
    if fitness > 0.0 && precision > 0.0 {
        2.0 * fitness * precision / (fitness + precision)
    } else {
        0.0
    }
}

impl ConformanceReport {
    /// A report carrying only the three metrics.
    pub fn from_metrics(fitness: f64, precision: f64) -> Self {
        ConformanceReport {
            fitness,
            precision,
            f_score: f_score(fitness, precision),
            deviations: Vec::new(),
        }
    }
}

/// Compares two footprints over the union of their alphabets.
pub fn conformance(log_fp: &FootprintMatrix, model_fp: &FootprintMatrix) -> ConformanceReport {
    let l = log_fp.forward_pairs();
    let m = model_fp.forward_pairs();
    let both = l.intersection(m).count();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let fitness = ratio(both, l.len());
    let precision = ratio(both, m.len());

    let alphabet: BTreeSet<&String> = log_fp.activities().union(model_fp.activities()).collect();
    let mut deviations = Vec::new();
    for a in &alphabet {
        for b in &alphabet {
            let (rl, rm) = (log_fp.relation(a, b), model_fp.relation(a, b));
            if rl != rm {
                deviations.push(Deviation {
                    from: (*a).clone(),
                    to: (*b).clone(),
                    log: rl,
                    model: rm,
                });
            }
        }
    }
    ConformanceReport {
        fitness,
        precision,
        f_score: f_score(fitness, precision),
        deviations,
    }
}

/// Rows of `Event Log Type | Fitness | Precision | F-Score`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<(String, ConformanceReport)>,
}

impl ComparisonTable {
    pub fn push(&mut self, label: impl Into<String>, report: ConformanceReport) {
        self.rows.push((label.into(), report));
    }

    pub fn to_text(&self) -> String {
        let head = "Event Log Type";
        let w = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(head.len());
        let mut s = format!("{head:<w$} | Fitness | Precision | F-Score\n");
        s.push_str(&format!("{}-|---------|-----------|--------\n", "-".repeat(w)));
        for (label, r) in &self.rows {
            s.push_str(&format!(
                "{label:<w$} | {:>7.3} | {:>9.3} | {:>7.3}\n",
                r.fitness, r.precision, r.f_score
            ));
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["event_log_type", "fitness", "precision", "f_score"])?;
        for (label, r) in &self.rows {
            w.write_record([
                label.clone(),
                format!("{:.6}", r.fitness),
                format!("{:.6}", r.precision),
                format!("{:.6}", r.f_score),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-pair relation counts, mostly for reporting.
pub fn relation_histogram(fp: &FootprintMatrix) -> BTreeMap<&'static str, usize> {
    let mut h = BTreeMap::new();
    for (_, _, r) in fp.cells() {
        *h.entry(r.symbol()).or_default() += 1;
    }
    h
}
