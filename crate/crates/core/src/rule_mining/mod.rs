//! Closed-path Horn rules over a knowledge graph.
//!
//! A rule `P1(x,z1) & P2(z1,z2) & ... & Pn(z(n-1),y) => P(x,y)` is fully
//! determined by its body predicate sequence and head predicate, so mining
//! enumerates predicate sequences exhaustively (bodies of length 1 to 3) and
//! scores each candidate with exact counts:
//!
//! - support: distinct `(x, y)` satisfying the body with `P(x, y)` in the KG;
//! - standard confidence: support over all body-satisfying pairs;
//! - PCA confidence: support over body-satisfying pairs whose `x` has at
//!   least one known `P` fact.

mod entailment;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge_graph::KnowledgeGraph;

pub use entailment::{entails, Closure, Derivation, Entailment};

pub const MAX_BODY_LEN: usize = 3;

/// Rule variable: head subject `x`, head object `y`, or chain variable `z_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Var {
    X,
    Y,
    Z(u8),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X => f.write_str("x"),
            Var::Y => f.write_str("y"),
            Var::Z(i) => write!(f, "z{i}"),
        }
    }
}

impl From<Var> for String {
    fn from(v: Var) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for Var {
    type Error = Error;
    fn try_from(s: String) -> Result<Var> {
        s.parse()
    }
}

impl FromStr for Var {
    type Err = Error;
    fn from_str(s: &str) -> Result<Var> {
        match s.trim() {
            "x" => Ok(Var::X),
            "y" => Ok(Var::Y),
            z => z
                .strip_prefix('z')
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| *n >= 1)
                .map(Var::Z)
                .ok_or_else(|| Error::invalid(format!("bad rule variable {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub subject: Var,
    pub object: Var,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, subject: Var, object: Var) -> Self {
        Atom {
            predicate: predicate.into(),
            subject,
            object,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.predicate, self.subject, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedPathRule {
    pub body: Vec<Atom>,
    pub head: Atom,
    pub support: u64,
    pub std_confidence: f64,
    pub pca_confidence: f64,
}

/// Exact counts behind a rule's statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RuleCounts {
    pub support: u64,
    /// Distinct body-satisfying `(x, y)` pairs.
    pub body_pairs: u64,
    /// Body pairs whose `x` has some head-predicate fact.
    pub pca_pairs: u64,
}

impl RuleCounts {
    pub fn std_confidence(&self) -> f64 {
        ratio(self.support, self.body_pairs)
    }

    pub fn pca_confidence(&self) -> f64 {
        ratio(self.support, self.pca_pairs)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClosedPathRule {
    /// Chain rule over `body` predicates with head `head(x,y)`; statistics zeroed.
    pub fn chain<S: AsRef<str>>(body: &[S], head: &str) -> Result<Self> {
        let n = body.len();
        if n == 0 || n > u8::MAX as usize {
            return Err(Error::invalid("rule body must have 1..=255 atoms"));
        }
        let var_at = |i: usize| -> Var {
            if i == 0 {
                Var::X
            } else if i == n {
                Var::Y
            } else {
                Var::Z(i as u8)
            }
        };
        let body = body
            .iter()
            .enumerate()
            .map(|(i, p)| Atom::new(p.as_ref(), var_at(i), var_at(i + 1)))
            .collect();
        Self::from_atoms(body, Atom::new(head, Var::X, Var::Y))
    }

    /// Validates the closed-path shape.
    pub fn from_atoms(body: Vec<Atom>, head: Atom) -> Result<Self> {
        let rule = ClosedPathRule {
            body,
            head,
            support: 0,
            std_confidence: 0.0,
            pca_confidence: 0.0,
        };
        rule.check_shape()?;
        Ok(rule)
    }

    fn check_shape(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("{}: {m}", self.signature())));
        if self.body.is_empty() {
            return bad("empty body");
        }
        if self.head.subject != Var::X || self.head.object != Var::Y {
            return bad("head must be P(x,y)");
        }
        if self.head.predicate.is_empty() || self.body.iter().any(|a| a.predicate.is_empty()) {
            return bad("empty predicate");
        }
        if self.body[0].subject != Var::X || self.body.last().map(|a| a.object) != Some(Var::Y) {
            return bad("body must run from x to y");
        }
        for (i, w) in self.body.windows(2).enumerate() {
            if w[0].object != w[1].subject || w[0].object != Var::Z(i as u8 + 1) {
                return bad("body atoms must chain through z1..zn");
            }
        }
        Ok(())
    }

    pub fn with_counts(mut self, counts: RuleCounts) -> Self {
        self.support = counts.support;
        self.std_confidence = counts.std_confidence();
        self.pca_confidence = counts.pca_confidence();
        self
    }

    pub fn body_predicates(&self) -> Vec<&str> {
        self.body.iter().map(|a| a.predicate.as_str()).collect()
    }

    /// A length-1 body repeating the head.
    pub fn is_tautology(&self) -> bool {
        self.body.len() == 1 && self.body[0].predicate == self.head.predicate
    }

    /// Text form without statistics; doubles as the rule id.
    pub fn signature(&self) -> String {
        let body: Vec<String> = self.body.iter().map(Atom::to_string).collect();
        format!("{} => {}", body.join(" & "), self.head)
    }

    fn sort_key(&self) -> (&str, Vec<&str>) {
        (self.head.predicate.as_str(), self.body_predicates())
    }
}

impl fmt::Display for ClosedPathRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [supp={} conf={:.2} pca={:.2}]",
            self.signature(),
            self.support,
            self.std_confidence,
            self.pca_confidence
        )
    }
}

impl FromStr for ClosedPathRule {
    type Err = Error;

    /// Parses the text form. The statistics block is optional; without it the
    /// rule is taken as certain (`conf = pca = 1`).
    fn from_str(line: &str) -> Result<Self> {
        let (rule_part, stats) = match line.find('[') {
            Some(i) => (&line[..i], Some(line[i..].trim())),
            None => (line, None),
        };
        let (body, head) = rule_part
            .split_once("=>")
            .ok_or_else(|| Error::invalid(format!("missing `=>` in rule {line:?}")))?;
        let body = body
            .split('&')
            .map(parse_atom)
            .collect::<Result<Vec<_>>>()?;
        let mut rule = ClosedPathRule::from_atoms(body, parse_atom(head)?)?;
        rule.std_confidence = 1.0;
        rule.pca_confidence = 1.0;
        if let Some(stats) = stats {
            let inner = stats
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| Error::invalid(format!("bad statistics block in {line:?}")))?;
            for kv in inner.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("bad statistic {kv:?}")))?;
                let num = |v: &str| -> Result<f64> {
                    v.parse().map_err(|_| Error::invalid(format!("bad number {v:?}")))
                };
                match k {
                    "supp" => rule.support = num(v)? as u64,
                    "conf" => rule.std_confidence = num(v)?,
                    "pca" => rule.pca_confidence = num(v)?,
                    other => return Err(Error::invalid(format!("unknown statistic {other:?}"))),
                }
            }
        }
        for c in [rule.std_confidence, rule.pca_confidence] {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid(format!("confidence {c} out of [0,1] in {line:?}")));
            }
        }
        Ok(rule)
    }
}

fn parse_atom(s: &str) -> Result<Atom> {
    let s = s.trim();
    let open = s.find('(');
    let (pred, args) = match (open, s.strip_suffix(')')) {
        (Some(i), Some(_)) => (&s[..i], &s[i + 1..s.len() - 1]),
        _ => return Err(Error::invalid(format!("bad atom {s:?}"))),
    };
    let (a, b) = args
        .split_once(',')
        .ok_or_else(|| Error::invalid(format!("atom {s:?} needs two arguments")))?;
    Ok(Atom::new(pred.trim(), a.parse()?, b.parse()?))
}

/// Predicate -> subject -> objects, borrowed from a KG.
pub(crate) struct PredicateIndex<'a> {
    by_pred: BTreeMap<&'a str, HashMap<&'a str, Vec<&'a str>>>,
}

impl<'a> PredicateIndex<'a> {
    pub(crate) fn new(kg: &'a KnowledgeGraph) -> Self {
        let mut by_pred: BTreeMap<&str, HashMap<&str, Vec<&str>>> = BTreeMap::new();
        for t in kg.triples() {
            by_pred
                .entry(t.predicate.as_str())
                .or_default()
                .entry(t.subject.as_str())
                .or_default()
                .push(t.object.as_str());
        }
        PredicateIndex { by_pred }
    }

    fn predicates(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.by_pred.keys().copied()
    }

    fn pairs(&self, pred: &str) -> HashSet<(&'a str, &'a str)> {
        self.by_pred
            .get(pred)
            .into_iter()
            .flat_map(|m| m.iter().flat_map(|(s, os)| os.iter().map(move |o| (*s, *o))))
            .collect()
    }

    fn extend(&self, pairs: &HashSet<(&'a str, &'a str)>, pred: &str) -> HashSet<(&'a str, &'a str)> {
        let Some(adj) = self.by_pred.get(pred) else {
            return HashSet::new();
        };
        pairs
            .iter()
            .flat_map(|(x, z)| adj.get(z).into_iter().flatten().map(move |o| (*x, *o)))
            .collect()
    }

    fn body_pairs(&self, body: &[&str]) -> HashSet<(&'a str, &'a str)> {
        let mut pairs = self.pairs(body[0]);
        for p in &body[1..] {
            if pairs.is_empty() {
                break;
            }
            pairs = self.extend(&pairs, p);
        }
        pairs
    }
}

struct HeadFacts<'a> {
    pairs: HashSet<(&'a str, &'a str)>,
    subjects: HashSet<&'a str>,
}

fn count(body: &HashSet<(&str, &str)>, head: &HeadFacts<'_>) -> RuleCounts {
    let mut c = RuleCounts {
        body_pairs: body.len() as u64,
        ..RuleCounts::default()
    };
    for pair in body {
        if head.subjects.contains(pair.0) {
            c.pca_pairs += 1;
            if head.pairs.contains(pair) {
                c.support += 1;
            }
        }
    }
    c
}

fn head_facts<'a>(idx: &PredicateIndex<'a>, pred: &str) -> HeadFacts<'a> {
    let pairs = idx.pairs(pred);
    let subjects = pairs.iter().map(|(s, _)| *s).collect();
    HeadFacts { pairs, subjects }
}

/// Exact support, body and PCA counts of `rule` over `kg`.
pub fn rule_counts(rule: &ClosedPathRule, kg: &KnowledgeGraph) -> RuleCounts {
    let idx = PredicateIndex::new(kg);
    let body = idx.body_pairs(&rule.body_predicates());
    count(&body, &head_facts(&idx, &rule.head.predicate))
}

pub fn support(rule: &ClosedPathRule, kg: &KnowledgeGraph) -> u64 {
    rule_counts(rule, kg).support
}

pub fn pca_confidence(rule: &ClosedPathRule, kg: &KnowledgeGraph) -> f64 {
    rule_counts(rule, kg).pca_confidence()
}

pub fn std_confidence(rule: &ClosedPathRule, kg: &KnowledgeGraph) -> f64 {
    rule_counts(rule, kg).std_confidence()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub max_body_len: usize,
    pub min_support: u64,
    pub min_pca_conf: f64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            max_body_len: 2,
            min_support: 1,
            min_pca_conf: 0.8,
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_BODY_LEN).contains(&self.max_body_len) {
            return Err(Error::config(format!(
                "max_body_len must be in 1..={MAX_BODY_LEN}, got {}",
                self.max_body_len
            )));
        }
        if self.min_support < 1 {
            return Err(Error::config("min_support must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_pca_conf) {
            return Err(Error::config("min_pca_conf must be in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RuleBase {
    rules: Vec<ClosedPathRule>,
    thresholds: Option<MiningParams>,
}

impl RuleBase {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Rules not produced by mining (hand-written or loaded); no thresholds recorded.
    pub fn from_rules(mut rules: Vec<ClosedPathRule>) -> Self {
        sort_rules(&mut rules);
        rules.dedup_by(|a, b| a.signature() == b.signature());
        RuleBase {
            rules,
            thresholds: None,
        }
    }

    pub fn rules(&self) -> &[ClosedPathRule] {
        &self.rules
    }

    pub fn thresholds(&self) -> Option<&MiningParams> {
        self.thresholds.as_ref()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn merge(&self, other: &RuleBase) -> RuleBase {
        let mut rules = self.rules.clone();
        rules.extend(other.rules.iter().cloned());
        RuleBase::from_rules(rules)
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rules {
            serde_json::to_writer(&mut out, r)?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(source: R) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rule: ClosedPathRule = serde_json::from_str(&line).map_err(|e| Error::Row {
                row: i + 1,
                message: e.to_string(),
            })?;
            rule.check_shape()?;
            rules.push(rule);
        }
        Ok(Self::from_rules(rules))
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rules {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }

    /// Text form, one rule per line; `#` starts a comment line.
    pub fn read_text<R: BufRead>(source: R) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            rules.push(t.parse().map_err(|e: Error| Error::Row {
                row: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self::from_rules(rules))
    }
}

fn sort_rules(rules: &mut [ClosedPathRule]) {
    rules.sort_by(|a, b| {
        a.sort_key()
            .cmp(&b.sort_key())
            .then(b.pca_confidence.total_cmp(&a.pca_confidence))
    });
}

/// Exhaustively mines closed-path rules meeting both thresholds.
pub fn mine_rules(kg: &KnowledgeGraph, params: MiningParams) -> Result<RuleBase> {
    params.validate()?;
    let idx = PredicateIndex::new(kg);
    let preds: Vec<&str> = idx.predicates().collect();
    let heads: Vec<(&str, HeadFacts<'_>)> = preds.iter().map(|p| (*p, head_facts(&idx, p))).collect();

    let mut rules: Vec<ClosedPathRule> = preds
        .par_iter()
        .map(|first| {
            let mut found = Vec::new();
            let mut stack: Vec<(Vec<&str>, HashSet<(&str, &str)>)> =
                vec![(vec![*first], idx.pairs(first))];
            while let Some((body, pairs)) = stack.pop() {
                // An empty join stays empty under extension.
                if pairs.is_empty() {
                    continue;
                }
                for (head, facts) in &heads {
                    if body.len() == 1 && body[0] == *head {
                        continue;
                    }
                    let c = count(&pairs, facts);
                    if c.support >= params.min_support && c.pca_confidence() >= params.min_pca_conf {
                        let rule = ClosedPathRule::chain(&body, head)
                            .expect("generated chains are well-formed")
                            .with_counts(c);
                        found.push(rule);
                    }
                }
                if body.len() < params.max_body_len {
                    for next in &preds {
                        let ext = idx.extend(&pairs, next);
                        let mut b = body.clone();
                        b.push(next);
                        stack.push((b, ext));
                    }
                }
            }
            found
        })
        .flatten()
        .collect();
    sort_rules(&mut rules);
    Ok(RuleBase {
        rules,
        thresholds: Some(params),
    })
}

/// Distinct predicates used anywhere in the rule base.
pub fn predicates_of(rb: &RuleBase) -> BTreeSet<&str> {
    rb.rules
        .iter()
        .flat_map(|r| r.body.iter().chain(std::iter::once(&r.head)))
        .map(|a| a.predicate.as_str())
        .collect()
}


#[cfg(test)]
mod tests {
    use super::fixtures::work_kg;
    use super::*;
    use crate::knowledge_graph::Triple;

    fn lives_rule() -> ClosedPathRule {
        ClosedPathRule::chain(&["worksAt", "locatedIn"], "livesIn").unwrap()
    }

    #[test]
    fn support_and_confidences_of_example() {
        let kg = work_kg();
        let c = rule_counts(&lives_rule(), &kg);
        assert_eq!(c.support, 1);
        assert_eq!(c.std_confidence(), 0.5);
        assert_eq!(c.pca_confidence(), 1.0);
    }

    #[test]
    fn degenerate_supports() {
        assert_eq!(support(&lives_rule(), &KnowledgeGraph::new()), 0);
        let r = ClosedPathRule::chain(&["worksAt", "locatedIn"], "bornIn").unwrap();
        assert_eq!(support(&r, &work_kg()), 0);
        assert_eq!(pca_confidence(&r, &work_kg()), 0.0);
    }

    #[test]
    fn full_agreement_gives_unit_confidence() {
        let kg = KnowledgeGraph::from_triples(
            [("a", "p", "b"), ("a", "q", "b"), ("c", "p", "d"), ("c", "q", "d")]
                .map(|(s, p, o)| Triple::new(s, p, o).unwrap()),
        );
        let c = rule_counts(&ClosedPathRule::chain(&["p"], "q").unwrap(), &kg);
        assert_eq!((c.std_confidence(), c.pca_confidence()), (1.0, 1.0));
    }

    #[test]
    fn mining_example() {
        let params = MiningParams {
            max_body_len: 2,
            min_support: 1,
            min_pca_conf: 0.5,
        };
        let rb = mine_rules(&work_kg(), params).unwrap();
        let r = rb
            .rules()
            .iter()
            .find(|r| r.signature() == "worksAt(x,z1) & locatedIn(z1,y) => livesIn(x,y)")
            .expect("rule mined");
        assert_eq!((r.support, r.std_confidence, r.pca_confidence), (1, 0.5, 1.0));
        for r in rb.rules() {
            assert!(r.pca_confidence >= r.std_confidence);
        }
    }

    #[test]
    fn mining_edge_cases() {
        let kg = work_kg();
        let params = MiningParams {
            max_body_len: 3,
            min_support: kg.len() as u64 + 1,
            min_pca_conf: 0.0,
        };
        assert!(mine_rules(&kg, params).unwrap().is_empty());

        let single = KnowledgeGraph::from_triples([Triple::new("a", "p", "b").unwrap()]);
        let params = MiningParams {
            max_body_len: 1,
            min_support: 1,
            min_pca_conf: 0.0,
        };
        assert!(mine_rules(&single, params).unwrap().is_empty());
        assert!(mine_rules(&kg, MiningParams { max_body_len: 4, ..params }).is_err());
        assert!(mine_rules(&kg, MiningParams { min_support: 0, ..params }).is_err());
    }

    #[test]
    fn text_form_round_trip() {
        let r = lives_rule().with_counts(RuleCounts {
            support: 1,
            body_pairs: 2,
            pca_pairs: 1,
        });
        let text = r.to_string();
        assert_eq!(
            text,
            "worksAt(x,z1) & locatedIn(z1,y) => livesIn(x,y) [supp=1 conf=0.50 pca=1.00]"
        );
        let back: ClosedPathRule = text.parse().unwrap();
        assert_eq!(back, r);
        let bare: ClosedPathRule = "p(x,y) => q(x,y)".parse().unwrap();
        assert_eq!(bare.pca_confidence, 1.0);
        assert!("p(x,z1) & q(z2,y) => r(x,y)".parse::<ClosedPathRule>().is_err());
        assert!("p(y,x) => r(x,y)".parse::<ClosedPathRule>().is_err());
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let rb = mine_rules(&work_kg(), MiningParams { min_pca_conf: 0.0, ..MiningParams::default() }).unwrap();
        let mut a = Vec::new();
        rb.write_jsonl(&mut a).unwrap();
        let back = RuleBase::read_jsonl(a.as_slice()).unwrap();
        let mut b = Vec::new();
        back.write_jsonl(&mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.rules(), rb.rules());
    }
}
