//! Triple store with subject/predicate/object indexes and optional timestamps.
//!
//! Every temporal fact also contributes its atemporal projection to the plain
//! triple set, so pattern queries, rule mining and entailment see one
//! consistent fact base. Timestamps are only consulted by temporal scoring.

mod lpg;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{format_timestamp, Timestamp};

pub use lpg::{
    build_lpg, Alias, LabeledPropertyGraph, LpgEdge, LpgNode, LpgOptions, NodeId, ACTIVITY, ATTRIBUTE_VALUE, BELONGS_TO,
    CASE, DF, ENTITY, EVENT, INSTANCE_OF, PERFORMED_BY, RESOURCE,
};

/// Relation names shared between rules and control flow.
pub mod vocab {
    pub const DIRECTLY_FOLLOWS: &str = "directly_follows";
    pub const MUST_PRECEDE: &str = "must_precede";
    pub const FORBIDDEN_BEFORE: &str = "forbidden_before";
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Result<Self> {
        let t = Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        };
        if t.subject.is_empty() || t.predicate.is_empty() || t.object.is_empty() {
            return Err(Error::invalid(format!("triple with empty component: {t}")));
        }
        Ok(t)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.predicate, self.subject, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TemporalTriple {
    pub triple: Triple,
    pub timestamp: Timestamp,
}

/// A triple pattern; `None` is the wildcard.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: Option<String>,
    pub predicate: Option<String>,
    pub object: Option<String>,
}

impl TriplePattern {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn subject(mut self, s: impl Into<String>) -> Self {
        self.subject = Some(s.into());
        self
    }

    pub fn predicate(mut self, p: impl Into<String>) -> Self {
        self.predicate = Some(p.into());
        self
    }

    pub fn object(mut self, o: impl Into<String>) -> Self {
        self.object = Some(o.into());
        self
    }

    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.as_ref().map_or(true, |s| *s == t.subject)
            && self.predicate.as_ref().map_or(true, |p| *p == t.predicate)
            && self.object.as_ref().map_or(true, |o| *o == t.object)
    }
}

type Index = BTreeMap<String, BTreeSet<Triple>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    triples: BTreeSet<Triple>,
    temporal: BTreeSet<TemporalTriple>,
    by_subject: Index,
    by_predicate: Index,
    by_object: Index,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    /// Three tab-separated columns, or four with an RFC 3339 timestamp.
    Tsv,
    /// N-Triples restricted to IRIs and plain literals.
    NTriples,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut kg = Self::new();
        for t in triples {
            kg.insert(t);
        }
        kg
    }

    /// Returns `false` when the triple was already present.
    pub fn insert(&mut self, t: Triple) -> bool {
        if self.triples.contains(&t) {
            return false;
        }
        self.by_subject
            .entry(t.subject.clone())
            .or_default()
            .insert(t.clone());
        self.by_predicate
            .entry(t.predicate.clone())
            .or_default()
            .insert(t.clone());
        self.by_object
            .entry(t.object.clone())
            .or_default()
            .insert(t.clone());
        self.triples.insert(t)
    }

    pub fn insert_temporal(&mut self, t: TemporalTriple) -> bool {
        self.insert(t.triple.clone());
        self.temporal.insert(t)
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn temporal(&self) -> &BTreeSet<TemporalTriple> {
        &self.temporal
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        self.by_subject
            .keys()
            .chain(self.by_object.keys())
            .map(String::as_str)
            .collect()
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> + '_ {
        self.by_predicate.keys().map(String::as_str)
    }

    pub fn with_predicate(&self, predicate: &str) -> impl Iterator<Item = &Triple> + '_ {
        self.by_predicate.get(predicate).into_iter().flatten()
    }

    /// All triples matching every constant of `pattern`, in sorted order.
    pub fn query(&self, pattern: &TriplePattern) -> Vec<&Triple> {
        // Walk the smallest applicable index.
        let candidates = [
            pattern.subject.as_ref().map(|s| self.by_subject.get(s)),
            pattern.predicate.as_ref().map(|p| self.by_predicate.get(p)),
            pattern.object.as_ref().map(|o| self.by_object.get(o)),
        ];
        let mut best: Option<&BTreeSet<Triple>> = None;
        for c in candidates.into_iter().flatten() {
            match c {
                None => return Vec::new(),
                Some(set) => {
                    if best.map_or(true, |b| set.len() < b.len()) {
                        best = Some(set);
                    }
                }
            }
        }
        best.unwrap_or(&self.triples)
            .iter()
            .filter(|t| pattern.matches(t))
            .collect()
    }

    /// Rebuilds the indexes from the triple set; used to check consistency.
    pub fn reindexed(&self) -> Self {
        let mut kg = Self::from_triples(self.triples.iter().cloned());
        kg.temporal = self.temporal.clone();
        kg
    }

    pub fn load<R: Read>(source: R, format: TripleFormat) -> Result<Self> {
        match format {
            TripleFormat::Tsv => load_tsv(source),
            TripleFormat::NTriples => load_ntriples(source),
        }
    }

    pub fn merge(&mut self, other: &KnowledgeGraph) {
        for t in &other.triples {
            self.insert(t.clone());
        }
        for t in &other.temporal {
            self.insert_temporal(t.clone());
        }
    }

    /// TSV with atemporal facts first, then temporal rows.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let timed: BTreeSet<&Triple> = self.temporal.iter().map(|t| &t.triple).collect();
        for t in self.triples.iter().filter(|t| !timed.contains(t)) {
            writeln!(out, "{}\t{}\t{}", t.subject, t.predicate, t.object)?;
        }
        for t in &self.temporal {
            let tr = &t.triple;
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                tr.subject,
                tr.predicate,
                tr.object,
                format_timestamp(&t.timestamp)
            )?;
        }
        Ok(())
    }
}

pub fn load_triples<R: Read>(source: R, format: TripleFormat) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load(source, format)
}

fn load_tsv<R: Read>(source: R) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let row = i + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        let bad = |message: String| Error::Row { row, message };
        match cols.as_slice() {
            [s, p, o] => {
                kg.insert(Triple::new(*s, *p, *o).map_err(|e| bad(e.to_string()))?);
            }
            [s, p, o, ts] => {
                let timestamp = crate::event_log::parse_lenient_timestamp(ts)
                    .ok_or_else(|| bad(format!("unparseable timestamp {ts:?}")))?;
                let triple = Triple::new(*s, *p, *o).map_err(|e| bad(e.to_string()))?;
                kg.insert_temporal(TemporalTriple { triple, timestamp });
            }
            other => {
                return Err(bad(format!(
                    "expected 3 or 4 tab-separated columns, found {}",
                    other.len()
                )))
            }
        }
    }
    Ok(kg)
}

fn load_ntriples<R: Read>(source: R) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let row = i + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let (terms, rest) = nt_terms(text).map_err(|message| Error::Row { row, message })?;
        if rest.trim() != "." {
            return Err(Error::Row {
                row,
                message: "expected terminating `.`".into(),
            });
        }
        let [s, p, o] = terms;
        kg.insert(Triple::new(s, p, o).map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?);
    }
    Ok(kg)
}

fn nt_terms(mut text: &str) -> std::result::Result<([String; 3], &str), String> {
    let mut out: Vec<String> = Vec::with_capacity(3);
    for _ in 0..3 {
        text = text.trim_start();
        if let Some(rest) = text.strip_prefix('<') {
            let end = rest.find('>').ok_or("unterminated IRI")?;
            out.push(rest[..end].to_string());
            text = &rest[end + 1..];
        } else if let Some(rest) = text.strip_prefix('"') {
            let mut value = String::new();
            let mut chars = rest.char_indices();
            let mut end = None;
            while let Some((i, c)) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some((_, 'n')) => value.push('\n'),
                        Some((_, 't')) => value.push('\t'),
                        Some((_, other)) => value.push(other),
                        None => return Err("dangling escape".into()),
                    },
                    '"' => {
                        end = Some(i);
                        break;
                    }
                    c => value.push(c),
                }
            }
            let end = end.ok_or("unterminated literal")?;
            text = &rest[end + 1..];
            // Language tags and datatypes are dropped.
            if let Some(r) = text.strip_prefix("^^<") {
                text = &r[r.find('>').ok_or("unterminated datatype IRI")? + 1..];
            } else if let Some(r) = text.strip_prefix('@') {
                let stop = r.find(char::is_whitespace).unwrap_or(r.len());
                text = &r[stop..];
            }
            out.push(value);
        } else if text.starts_with("_:") {
            return Err("blank nodes are not supported".into());
        } else {
            return Err(format!("unexpected term at {:?}", text.chars().take(20).collect::<String>()));
        }
    }
    let arr: [String; 3] = out.try_into().map_err(|_| "expected three terms".to_string())?;
    Ok((arr, text))
}
