//! Forward chaining of a rule base over a KG.
//!
//! KG facts have confidence 1. A derived fact's confidence is the maximum over
//! its derivations of the product of the PCA confidences of the rules used
//! (and of the premises' own confidences). Chaining runs until no fact is added
//! or improved.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::RuleBase;
use crate::knowledge_graph::{KnowledgeGraph, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivation {
    pub confidence: f64,
    /// Index into the rule base of the rule that produced the best
    /// derivation; `None` for KG facts.
    pub rule: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entailment {
    Entailed {
        confidence: f64,
        /// Signature of the rule behind the best derivation.
        rule: Option<String>,
    },
    NotEntailed,
}

impl Entailment {
    pub fn is_entailed(&self) -> bool {
        matches!(self, Entailment::Entailed { .. })
    }

    pub fn confidence(&self) -> f64 {
        match self {
            Entailment::Entailed { confidence, .. } => *confidence,
            Entailment::NotEntailed => 0.0,
        }
    }
}

/// Fixpoint of a rule base over a KG.
#[derive(Debug, Clone)]
pub struct Closure {
    facts: HashMap<Triple, Derivation>,
    signatures: Vec<String>,
    rounds: usize,
}

type Adjacency = HashMap<String, HashMap<String, Vec<(String, f64)>>>;

impl Closure {
    pub fn compute(rb: &RuleBase, kg: &KnowledgeGraph) -> Self {
        let mut facts: HashMap<Triple, Derivation> = kg
            .triples()
            .iter()
            .map(|t| {
                (
                    t.clone(),
                    Derivation {
                        confidence: 1.0,
                        rule: None,
                    },
                )
            })
            .collect();
        let signatures = rb.rules().iter().map(|r| r.signature()).collect();
        let entities = kg.entities().len().max(1);
        // Best derivations never need a cycle (confidences are <= 1), so
        // improvements settle; the cap only guards against float noise.
        let cap = entities * entities + 1;
        let mut rounds = 0;
        while rounds < cap {
            rounds += 1;
            let adj = adjacency(&facts);
            let mut updates: BTreeMap<Triple, Derivation> = BTreeMap::new();
            for (ri, rule) in rb.rules().iter().enumerate() {
                if rule.pca_confidence <= 0.0 {
                    continue;
                }
                for ((x, y), c) in chain(&adj, &rule.body_predicates()) {
                    let confidence = c * rule.pca_confidence;
                    let fact = Triple {
                        subject: x,
                        predicate: rule.head.predicate.clone(),
                        object: y,
                    };
                    let current = updates
                        .get(&fact)
                        .or_else(|| facts.get(&fact))
                        .map_or(0.0, |d| d.confidence);
                    if confidence > current {
                        updates.insert(
                            fact,
                            Derivation {
                                confidence,
                                rule: Some(ri),
                            },
                        );
                    }
                }
            }
            if updates.is_empty() {
                break;
            }
            facts.extend(updates);
        }
        Closure {
            facts,
            signatures,
            rounds,
        }
    }

    pub fn derivation(&self, fact: &Triple) -> Option<&Derivation> {
        self.facts.get(fact)
    }

    pub fn entails(&self, fact: &Triple) -> Entailment {
        match self.facts.get(fact) {
            Some(d) => Entailment::Entailed {
                confidence: d.confidence,
                rule: d.rule.map(|i| self.signatures[i].clone()),
            },
            None => Entailment::NotEntailed,
        }
    }

    /// All facts (KG and derived) with a given predicate.
    pub fn with_predicate<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = (&'a Triple, &'a Derivation)> + 'a {
        self.facts.iter().filter(move |(t, _)| t.predicate == predicate)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }
}

fn adjacency(facts: &HashMap<Triple, Derivation>) -> Adjacency {
    let mut adj: Adjacency = HashMap::new();
    for (t, d) in facts {
        adj.entry(t.predicate.clone())
            .or_default()
            .entry(t.subject.clone())
            .or_default()
            .push((t.object.clone(), d.confidence));
    }
    adj
}

/// Best path confidence for each `(x, y)` satisfying the body chain.
fn chain(adj: &Adjacency, body: &[&str]) -> HashMap<(String, String), f64> {
    let mut cur: HashMap<(String, String), f64> = HashMap::new();
    let Some(first) = adj.get(body[0]) else {
        return cur;
    };
    for (s, objs) in first {
        for (o, c) in objs {
            let slot = cur.entry((s.clone(), o.clone())).or_insert(0.0);
            *slot = slot.max(*c);
        }
    }
    for p in &body[1..] {
        let Some(next) = adj.get(*p) else {
            return HashMap::new();
        };
        let mut out: HashMap<(String, String), f64> = HashMap::new();
        for ((x, z), c) in &cur {
            for (o, c2) in next.get(z).into_iter().flatten() {
                let slot = out.entry((x.clone(), o.clone())).or_insert(0.0);
                *slot = slot.max(c * c2);
            }
        }
        cur = out;
    }
    cur
}

/// One-shot entailment check. Prefer [`Closure::compute`] for many queries.
pub fn entails(rb: &RuleBase, kg: &KnowledgeGraph, fact: &Triple) -> Entailment {
    Closure::compute(rb, kg).entails(fact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_mining::fixtures::work_kg;
    use crate::rule_mining::ClosedPathRule;

    fn t(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(s, p, o).unwrap()
    }

    #[test]
    fn kg_fact_is_entailed_with_unit_confidence() {
        let e = entails(&RuleBase::empty(), &work_kg(), &t("al", "worksAt", "uow"));
        assert_eq!(
            e,
            Entailment::Entailed {
                confidence: 1.0,
                rule: None
            }
        );
    }

    #[test]
    fn removed_fact_is_rederived() {
        let kg = KnowledgeGraph::from_triples(
            work_kg()
                .triples()
                .iter()
                .filter(|x| x.predicate != "livesIn")
                .cloned(),
        );
        let mut rule = ClosedPathRule::chain(&["worksAt", "locatedIn"], "livesIn").unwrap();
        rule.pca_confidence = 1.0;
        let rb = RuleBase::from_rules(vec![rule]);
        match entails(&rb, &kg, &t("al", "livesIn", "wgg")) {
            Entailment::Entailed { confidence, rule } => {
                assert_eq!(confidence, 1.0);
                assert_eq!(rule.as_deref(), Some("worksAt(x,z1) & locatedIn(z1,y) => livesIn(x,y)"));
            }
            other => panic!("{other:?}"),
        }
        assert!(!entails(&rb, &kg, &t("q", "p", "r")).is_entailed());
    }

    #[test]
    fn confidence_is_max_of_products() {
        let kg = KnowledgeGraph::from_triples([t("a", "p", "b"), t("b", "p", "c"), t("a", "s", "c")]);
        let mut trans: ClosedPathRule = "q(x,z1) & q(z1,y) => q(x,y)".parse().unwrap();
        trans.pca_confidence = 0.9;
        let mut lift: ClosedPathRule = "p(x,y) => q(x,y)".parse().unwrap();
        lift.pca_confidence = 0.8;
        let mut direct: ClosedPathRule = "s(x,y) => q(x,y)".parse().unwrap();
        direct.pca_confidence = 0.5;
        let rb = RuleBase::from_rules(vec![trans, lift, direct]);
        let closure = Closure::compute(&rb, &kg);
        // via lift twice then trans: 0.8 * 0.8 * 0.9 = 0.576 > 0.5
        let c = closure.entails(&t("a", "q", "c")).confidence();
        assert!((c - 0.576).abs() < 1e-12, "{c}");
        assert!((closure.entails(&t("a", "q", "b")).confidence() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn recursive_rules_terminate() {
        let kg = KnowledgeGraph::from_triples((0..20).map(|i| t(&format!("n{i}"), "e", &format!("n{}", (i + 1) % 20))));
        let rb = RuleBase::from_rules(vec![
            "e(x,y) => r(x,y)".parse().unwrap(),
            "r(x,z1) & r(z1,y) => r(x,y)".parse().unwrap(),
        ]);
        let closure = Closure::compute(&rb, &kg);
        assert_eq!(closure.with_predicate("r").count(), 400);
    }
}
