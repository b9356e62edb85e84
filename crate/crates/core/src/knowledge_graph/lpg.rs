//! Labeled property graph fusing event data with domain knowledge.
//!
//! Node identifiers are namespaced strings (`event:`, `case:`, `activity:`,
//! `resource:`, `entity:`, `value:`). An activity whose alias names a KG entity
//! is represented by that entity's node, which then carries both labels.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};

use super::KnowledgeGraph;
use crate::error::{Error, Result};
use crate::event_log::{format_timestamp, AttrValue, Attributes, EventLog};

pub type NodeId = String;

pub const EVENT: &str = "Event";
pub const CASE: &str = "Case";
pub const ACTIVITY: &str = "Activity";
pub const RESOURCE: &str = "Resource";
pub const ENTITY: &str = "Entity";
pub const ATTRIBUTE_VALUE: &str = "AttributeValue";
pub const DF: &str = "DF";
pub const BELONGS_TO: &str = "BELONGS_TO";
pub const INSTANCE_OF: &str = "INSTANCE_OF";
pub const PERFORMED_BY: &str = "PERFORMED_BY";

/// Maps activity labels to KG entity ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alias {
    #[serde(default)]
    map: BTreeMap<String, String>,
    /// Unmapped activities map to themselves.
    #[serde(default)]
    identity_fallback: bool,
}

impl Alias {
    pub fn identity() -> Self {
        Alias {
            map: BTreeMap::new(),
            identity_fallback: true,
        }
    }

    /// Only the listed activities are mapped.
    pub fn partial(map: BTreeMap<String, String>) -> Self {
        Alias {
            map,
            identity_fallback: false,
        }
    }

    pub fn with_fallback(map: BTreeMap<String, String>) -> Self {
        Alias {
            map,
            identity_fallback: true,
        }
    }

    pub fn get<'a>(&'a self, activity: &'a str) -> Option<&'a str> {
        match self.map.get(activity) {
            Some(e) => Some(e.as_str()),
            None if self.identity_fallback => Some(activity),
            None => None,
        }
    }

    /// An activity label for `entity`: the smallest mapped label, else the
    /// entity itself under identity fallback.
    pub fn activity_for(&self, entity: &str) -> Option<String> {
        self.map
            .iter()
            .find(|(_, e)| e.as_str() == entity)
            .map(|(a, _)| a.clone())
            .or_else(|| self.identity_fallback.then(|| entity.to_string()))
    }

    /// Reads `activity,entity` rows (header optional).
    pub fn read_csv<R: std::io::Read>(source: R, identity_fallback: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(source);
        let mut map = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let (a, e) = match (rec.get(0), rec.get(1)) {
                (Some(a), Some(e)) => (a.trim(), e.trim()),
                _ => {
                    return Err(Error::Row {
                        row: i + 1,
                        message: "expected activity,entity".into(),
                    })
                }
            };
            if i == 0 && a == "activity" && e == "entity" {
                continue;
            }
            map.insert(a.to_string(), e.to_string());
        }
        Ok(Alias {
            map,
            identity_fallback,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct LpgOptions {
    pub alias: Alias,
    /// Event attributes materialized as value nodes linked from each event.
    pub attribute_nodes: Vec<String>,
}

impl LpgOptions {
    pub fn with_alias(alias: Alias) -> Self {
        LpgOptions {
            alias,
            attribute_nodes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpgNode {
    pub id: NodeId,
    pub labels: BTreeSet<String>,
    pub props: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpgEdge {
    pub id: usize,
    pub source: NodeId,
    pub target: NodeId,
    pub labels: BTreeSet<String>,
    pub props: Attributes,
}

impl LpgEdge {
    /// Labels joined with `|`; used as the relation key by embeddings.
    pub fn relation(&self) -> String {
        self.labels.iter().cloned().collect::<Vec<_>>().join("|")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledPropertyGraph {
    nodes: BTreeMap<NodeId, LpgNode>,
    edges: Vec<LpgEdge>,
    /// Event node ids per case, in trace order.
    case_events: BTreeMap<String, Vec<NodeId>>,
}

impl LabeledPropertyGraph {
    pub fn nodes(&self) -> &BTreeMap<NodeId, LpgNode> {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&LpgNode> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &[LpgEdge] {
        &self.edges
    }

    pub fn case_events(&self, case_id: &str) -> Option<&[NodeId]> {
        self.case_events.get(case_id).map(Vec::as_slice)
    }

    pub fn cases(&self) -> impl Iterator<Item = &str> + '_ {
        self.case_events.keys().map(String::as_str)
    }

    pub fn nodes_with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a LpgNode> + 'a {
        self.nodes.values().filter(move |n| n.labels.contains(label))
    }

    pub fn edges_with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a LpgEdge> + 'a {
        self.edges.iter().filter(move |e| e.labels.contains(label))
    }

    fn add_node(&mut self, id: &str, label: &str, props: Attributes) {
        let node = self.nodes.entry(id.to_string()).or_insert_with(|| LpgNode {
            id: id.to_string(),
            labels: BTreeSet::new(),
            props: Attributes::new(),
        });
        node.labels.insert(label.to_string());
        for (k, v) in props {
            node.props.entry(k).or_insert(v);
        }
    }

    fn add_edge(&mut self, source: &str, target: &str, label: &str, props: Attributes) {
        let id = self.edges.len();
        self.edges.push(LpgEdge {
            id,
            source: source.to_string(),
            target: target.to_string(),
            labels: BTreeSet::from([label.to_string()]),
            props,
        });
    }

    /// Checks the non-empty label and endpoint invariants.
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.nodes.values().find(|n| n.labels.is_empty()) {
            return Err(Error::invalid(format!("node {} has no label", n.id)));
        }
        for e in &self.edges {
            if e.labels.is_empty() {
                return Err(Error::invalid(format!("edge {} has no label", e.id)));
            }
            if !self.nodes.contains_key(&e.source) || !self.nodes.contains_key(&e.target) {
                return Err(Error::invalid(format!("edge {} has a dangling endpoint", e.id)));
            }
        }
        Ok(())
    }

    pub fn write_graphml<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
        writeln!(out, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#)?;
        writeln!(out, r#"  <key id="labels" for="all" attr.name="labels" attr.type="string"/>"#)?;
        writeln!(out, r#"  <key id="props" for="all" attr.name="props" attr.type="string"/>"#)?;
        writeln!(out, r#"  <graph id="lpg" edgedefault="directed">"#)?;
        for n in self.nodes.values() {
            writeln!(out, r#"    <node id="{}">"#, escape(n.id.as_str()))?;
            writeln!(out, r#"      <data key="labels">{}</data>"#, escape(join_labels(&n.labels).as_str()))?;
            writeln!(out, r#"      <data key="props">{}</data>"#, escape(props_json(&n.props).as_str()))?;
            writeln!(out, "    </node>")?;
        }
        for e in &self.edges {
            writeln!(
                out,
                r#"    <edge id="e{}" source="{}" target="{}">"#,
                e.id,
                escape(e.source.as_str()),
                escape(e.target.as_str())
            )?;
            writeln!(out, r#"      <data key="labels">{}</data>"#, escape(join_labels(&e.labels).as_str()))?;
            writeln!(out, "    </edge>")?;
        }
        writeln!(out, "  </graph>")?;
        writeln!(out, "</graphml>")?;
        Ok(())
    }

    /// Node table (`id,labels,props`) and edge table (`id,source,target,labels`).
    pub fn write_csv<W1: Write, W2: Write>(&self, nodes: W1, edges: W2) -> Result<()> {
        let mut w = csv::Writer::from_writer(nodes);
        w.write_record(["id", "labels", "props"])?;
        for n in self.nodes.values() {
            w.write_record([n.id.as_str(), &join_labels(&n.labels), &props_json(&n.props)])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(edges);
        w.write_record(["id", "source", "target", "labels"])?;
        for e in &self.edges {
            w.write_record([
                e.id.to_string().as_str(),
                &e.source,
                &e.target,
                &join_labels(&e.labels),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_dot<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "digraph lpg {{")?;
        for n in self.nodes.values() {
            writeln!(
                out,
                "  {:?} [label={:?}];",
                n.id,
                format!("{}\n{}", join_labels(&n.labels), display_name(&n.id))
            )?;
        }
        for e in &self.edges {
            writeln!(out, "  {:?} -> {:?} [label={:?}];", e.source, e.target, join_labels(&e.labels))?;
        }
        writeln!(out, "}}")?;
        Ok(())
    }
}

fn join_labels(labels: &BTreeSet<String>) -> String {
    labels.iter().cloned().collect::<Vec<_>>().join(";")
}

fn props_json(props: &Attributes) -> String {
    serde_json::to_string(props).unwrap_or_default()
}

fn display_name(id: &str) -> &str {
    id.split_once(':').map_or(id, |(_, rest)| rest)
}

fn event_id(case: &str, i: usize) -> String {
    format!("event:{case}#{i}")
}

/// Builds the property graph for `log` and `kg`.
pub fn build_lpg(log: &EventLog, kg: &KnowledgeGraph, opts: &LpgOptions) -> LabeledPropertyGraph {
    let mut g = LabeledPropertyGraph::default();
    let entities = kg.entities();

    for e in &entities {
        g.add_node(&format!("entity:{e}"), ENTITY, Attributes::from([("entity".into(), AttrValue::from(*e))]));
    }
    let activity_node = |a: &str| -> String {
        match opts.alias.get(a) {
            Some(ent) if entities.contains(ent) => format!("entity:{ent}"),
            _ => format!("activity:{a}"),
        }
    };
    for a in log.alphabet() {
        g.add_node(
            &activity_node(a),
            ACTIVITY,
            Attributes::from([("activity".into(), AttrValue::from(a.as_str()))]),
        );
    }

    for trace in log.traces() {
        let case = trace.case_id();
        let case_node = format!("case:{case}");
        g.add_node(&case_node, CASE, Attributes::from([("case_id".into(), AttrValue::from(case))]));
        let mut ids: Vec<NodeId> = Vec::with_capacity(trace.len());
        for (i, ev) in trace.events().iter().enumerate() {
            let id = event_id(case, i);
            let mut props = ev.attributes.clone();
            props.insert("case_id".into(), AttrValue::from(case));
            props.insert("activity".into(), AttrValue::from(ev.activity.as_str()));
            props.insert("timestamp".into(), AttrValue::Time(ev.timestamp));
            props.insert("position".into(), AttrValue::Int(i as i64));
            if let Some(r) = &ev.resource {
                props.insert("resource".into(), AttrValue::from(r.as_str()));
            }
            g.add_node(&id, EVENT, props);
            if let Some(prev) = ids.last().cloned() {
                g.add_edge(&prev, &id, DF, Attributes::new());
            }
            g.add_edge(&id, &case_node, BELONGS_TO, Attributes::new());
            g.add_edge(&id, &activity_node(&ev.activity), INSTANCE_OF, Attributes::new());
            if let Some(r) = &ev.resource {
                let rid = format!("resource:{r}");
                g.add_node(&rid, RESOURCE, Attributes::from([("resource".into(), AttrValue::from(r.as_str()))]));
                g.add_edge(&id, &rid, PERFORMED_BY, Attributes::new());
            }
            for key in &opts.attribute_nodes {
                if let Some(v) = ev.attributes.get(key) {
                    let vid = format!("value:{key}={v}");
                    g.add_node(
                        &vid,
                        ATTRIBUTE_VALUE,
                        Attributes::from([("key".into(), AttrValue::from(key.as_str())), ("value".into(), v.clone())]),
                    );
                    g.add_edge(&id, &vid, &format!("HAS:{key}"), Attributes::new());
                }
            }
            ids.push(id);
        }
        g.case_events.insert(case.to_string(), ids);
    }

    for t in kg.triples() {
        g.add_edge(
            &format!("entity:{}", t.subject),
            &format!("entity:{}", t.object),
            &t.predicate,
            Attributes::new(),
        );
    }
    let timed: BTreeMap<&super::Triple, Vec<String>> =
        kg.temporal().iter().fold(BTreeMap::new(), |mut m, t| {
            m.entry(&t.triple).or_default().push(format_timestamp(&t.timestamp));
            m
        });
    if !timed.is_empty() {
        for e in g.edges.iter_mut() {
            let (Some(s), Some(o)) = (e.source.strip_prefix("entity:"), e.target.strip_prefix("entity:")) else {
                continue;
            };
            let Some(p) = e.labels.iter().next() else { continue };
            let key = super::Triple {
                subject: s.to_string(),
                predicate: p.clone(),
                object: o.to_string(),
            };
            if let Some(ts) = timed.get(&key) {
                e.props.insert("timestamps".into(), AttrValue::String(ts.join(" ")));
            }
        }
    }
    g
}
