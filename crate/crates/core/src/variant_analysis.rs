//! Supervised partitioning of traces into process-variant cohorts.
//!
//! Node embeddings are trained with TransD margin ranking over the edges of a
//! labeled property graph, jointly with a cross-entropy objective over class
//! scores. An event is represented by the mean embedding of its one-hop
//! context neighbours (activity, resource, attribute values); a trace is the
//! attention-weighted sum of its events with respect to each class.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::knowledge_graph::{LabeledPropertyGraph, ATTRIBUTE_VALUE, BELONGS_TO, DF};
use crate::optim::{minimize, Objective, Schedule};

pub const CHECKPOINT_VERSION: &str = "kcpm-variant-model/1";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CohortClass {
    pub id: String,
    #[serde(default)]
    pub description: String,
}

impl CohortClass {
    pub fn new(id: impl Into<String>) -> Self {
        CohortClass {
            id: id.into(),
            description: String::new(),
        }
    }
}

/// Reads `case_id,class[,description]` rows with a header.
pub fn read_labels_csv<R: Read>(source: R) -> Result<BTreeMap<String, CohortClass>> {
    let mut reader = csv::Reader::from_reader(source);
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let (Some(case), Some(class)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Row {
                row,
                message: "expected case_id,class".into(),
            });
        };
        if case.is_empty() || class.is_empty() {
            return Err(Error::Row {
                row,
                message: "empty case_id or class".into(),
            });
        }
        let class = CohortClass {
            id: class.to_string(),
            description: rec.get(2).unwrap_or("").to_string(),
        };
        if out.insert(case.to_string(), class).is_some() {
            return Err(Error::Row {
                row,
                message: format!("duplicate case {case:?}"),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantParams {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Weight of the cross-entropy term relative to the structure term.
    pub ce_weight: f64,
    pub l2: f64,
}

impl Default for VariantParams {
    fn default() -> Self {
        VariantParams {
            dim: 16,
            margin: 1.0,
            learning_rate: 0.05,
            epochs: 150,
            seed: 7,
            ce_weight: 1.0,
            l2: 1e-4,
        }
    }
}

impl VariantParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config("variant dim must be at least 2"));
        }
        if self.epochs == 0 {
            return Err(Error::config("variant epochs must be at least 1"));
        }
        for (name, v) in [("margin", self.margin), ("learning_rate", self.learning_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("variant {name} must be positive")));
            }
        }
        for (name, v) in [("ce_weight", self.ce_weight), ("l2", self.l2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("variant {name} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// A TransD vector pair: the embedding and its projection vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projected {
    pub vec: Vec<f64>,
    pub proj: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantModel {
    pub version: String,
    pub params: VariantParams,
    pub nodes: BTreeMap<String, Projected>,
    pub relations: BTreeMap<String, Projected>,
    pub classes: Vec<CohortClass>,
    pub class_embeddings: Vec<Vec<f64>>,
    /// Bilinear attention matrix, row-major `dim x dim`.
    pub attention: Vec<Vec<f64>>,
    /// Class frequencies among the training labels.
    pub prior: Vec<f64>,
    /// Event attributes that were materialized as graph nodes in training.
    #[serde(default)]
    pub attribute_keys: Vec<String>,
    pub loss_history: Vec<f64>,
}

/// True for edges that carry context for an event (not sequence or membership).
fn is_context_edge(relation: &str) -> bool {
    relation != DF && relation != BELONGS_TO
}

/// Event node ids of a case paired with their context neighbours.
fn case_context(lpg: &LabeledPropertyGraph, case: &str) -> Option<Vec<Vec<String>>> {
    let events = lpg.case_events(case)?;
    let mut out = Vec::with_capacity(events.len());
    let index: BTreeMap<&str, usize> = events.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
    out.resize(events.len(), Vec::new());
    for e in lpg.edges() {
        if let Some(&i) = index.get(e.source.as_str()) {
            if is_context_edge(&e.relation()) {
                out[i].push(e.target.clone());
            }
        }
    }
    Some(out)
}

struct Layout {
    n: usize,
    m: usize,
    k: usize,
    d: usize,
}

impl Layout {
    fn node(&self, i: usize) -> usize {
        i * self.d
    }
    fn node_proj(&self, i: usize) -> usize {
        (self.n + i) * self.d
    }
    fn rel(&self, r: usize) -> usize {
        (2 * self.n + r) * self.d
    }
    fn rel_proj(&self, r: usize) -> usize {
        (2 * self.n + self.m + r) * self.d
    }
    fn class(&self, c: usize) -> usize {
        (2 * self.n + 2 * self.m + c) * self.d
    }
    fn attention(&self) -> usize {
        (2 * self.n + 2 * self.m + self.k) * self.d
    }
    fn len(&self) -> usize {
        self.attention() + self.d * self.d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||h_perp + r - t_perp||^2` and, optionally, its gradient accumulated with `scale`.
fn transd(p: &[f64], lay: &Layout, h: usize, r: usize, t: usize, grad: Option<(&mut [f64], f64)>) -> f64 {
    let d = lay.d;
    let (hv, hp) = (&p[lay.node(h)..][..d], &p[lay.node_proj(h)..][..d]);
    let (tv, tp) = (&p[lay.node(t)..][..d], &p[lay.node_proj(t)..][..d]);
    let (rv, rp) = (&p[lay.rel(r)..][..d], &p[lay.rel_proj(r)..][..d]);
    let (sh, st) = (dot(hp, hv), dot(tp, tv));
    let u: Vec<f64> = (0..d).map(|i| hv[i] + rp[i] * sh + rv[i] - tv[i] - rp[i] * st).collect();
    let f = dot(&u, &u);
    if let Some((g, scale)) = grad {
        let w: Vec<f64> = u.iter().map(|x| 2.0 * scale * x).collect();
        let rw = dot(rp, &w);
        for i in 0..d {
            g[lay.node(h) + i] += w[i] + hp[i] * rw;
            g[lay.node_proj(h) + i] += hv[i] * rw;
            g[lay.rel(r) + i] += w[i];
            g[lay.rel_proj(r) + i] += (sh - st) * w[i];
            g[lay.node(t) + i] -= w[i] + tp[i] * rw;
            g[lay.node_proj(t) + i] -= tv[i] * rw;
        }
    }
    f
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in xs.iter().enumerate() {
        if best.map_or(true, |b| *x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Forward pass of the attention classifier for one trace.
struct Forward {
    alpha: Vec<Vec<f64>>,
    reprs: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

/// `events[i]` is the event representation `v_i`; `classes[k]` is `c_k`; `a` is row-major.
fn classify_forward(events: &[Vec<f64>], classes: &[Vec<f64>], a: &[f64], d: usize) -> Forward {
    let mut alpha = Vec::with_capacity(classes.len());
    let mut reprs = Vec::with_capacity(classes.len());
    let mut logits = Vec::with_capacity(classes.len());
    for c in classes {
        let ac: Vec<f64> = (0..d).map(|i| dot(&a[i * d..(i + 1) * d], c)).collect();
        let s: Vec<f64> = events.iter().map(|v| dot(v, &ac)).collect();
        let al = softmax(&s);
        let mut r = vec![0.0; d];
        for (w, v) in al.iter().zip(events) {
            for i in 0..d {
                r[i] += w * v[i];
            }
        }
        let diff: f64 = r.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
        logits.push(-diff);
        alpha.push(al);
        reprs.push(r);
    }
    Forward {
        alpha,
        reprs,
        probs: softmax(&logits),
    }
}

/// A case prepared for training: context node indices per event, label index.
struct Example {
    events: Vec<Vec<usize>>,
    label: usize,
}

fn event_repr(p: &[f64], lay: &Layout, ctx: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; lay.d];
    for &n in ctx {
        for i in 0..lay.d {
            v[i] += p[lay.node(n) + i];
        }
    }
    let inv = 1.0 / ctx.len() as f64;
    v.iter_mut().for_each(|x| *x *= inv);
    v
}

/// Cross-entropy of one example, accumulating `scale * dL/dparams` into `grad`.
fn ce_loss(p: &[f64], lay: &Layout, ex: &Example, grad: Option<(&mut [f64], f64)>) -> f64 {
    let d = lay.d;
    let vs: Vec<Vec<f64>> = ex.events.iter().map(|ctx| event_repr(p, lay, ctx)).collect();
    let cs: Vec<Vec<f64>> = (0..lay.k).map(|k| p[lay.class(k)..][..d].to_vec()).collect();
    let a = &p[lay.attention()..][..d * d];
    let fw = classify_forward(&vs, &cs, a, d);
    let loss = -fw.probs[ex.label].max(1e-300).ln();
    let Some((g, scale)) = grad else {
        return loss;
    };
    let mut dv = vec![vec![0.0; d]; vs.len()];
    for k in 0..lay.k {
        let gk = (if k == ex.label { 1.0 } else { 0.0 }) - fw.probs[k];
        let e: Vec<f64> = (0..d).map(|i| 2.0 * (fw.reprs[k][i] - cs[k][i])).collect();
        // dL/dR_k = g_k e_k; direct dL/dc_k = -g_k e_k.
        for i in 0..d {
            g[lay.class(k) + i] -= scale * gk * e[i];
        }
        let dalpha: Vec<f64> = vs.iter().map(|v| gk * dot(&e, v)).collect();
        let mean: f64 = fw.alpha[k].iter().zip(&dalpha).map(|(a, b)| a * b).sum();
        let ac: Vec<f64> = (0..d).map(|i| dot(&a[i * d..(i + 1) * d], &cs[k])).collect();
        let mut atv = vec![0.0; d];
        for (idx, v) in vs.iter().enumerate() {
            let al = fw.alpha[k][idx];
            let ds = al * (dalpha[idx] - mean);
            for i in 0..d {
                dv[idx][i] += al * gk * e[i] + ds * ac[i];
            }
            // dA += ds * v c^T; dc += ds * A^T v
            for i in 0..d {
                for j in 0..d {
                    g[lay.attention() + i * d + j] += scale * ds * v[i] * cs[k][j];
                    atv[j] += ds * a[i * d + j] * v[i];
                }
            }
        }
        for j in 0..d {
            g[lay.class(k) + j] += scale * atv[j];
        }
    }
    for (ctx, dvi) in ex.events.iter().zip(&dv) {
        let inv = scale / ctx.len() as f64;
        for &n in ctx {
            for i in 0..d {
                g[lay.node(n) + i] += inv * dvi[i];
            }
        }
    }
    loss
}

pub fn train_variant_model(
    lpg: &LabeledPropertyGraph,
    labeled: &BTreeMap<String, CohortClass>,
    hp: &VariantParams,
) -> Result<VariantModel> {
    hp.validate()?;
    if lpg.nodes().is_empty() {
        return Err(Error::invalid("cannot train on an empty graph"));
    }
    let mut classes: Vec<CohortClass> = Vec::new();
    for c in labeled.values() {
        match classes.iter_mut().find(|x| x.id == c.id) {
            Some(x) if x.description.is_empty() => x.description = c.description.clone(),
            Some(_) => {}
            None => classes.push(c.clone()),
        }
    }
    classes.sort_by(|a, b| a.id.cmp(&b.id));
    if classes.len() < 2 {
        return Err(Error::invalid("labels must contain at least two classes"));
    }

    let node_ids: Vec<&String> = lpg.nodes().keys().collect();
    let node_index: BTreeMap<&str, usize> = node_ids.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let rel_ids: BTreeSet<String> = lpg.edges().iter().map(|e| e.relation()).collect();
    let rel_index: BTreeMap<&str, usize> = rel_ids.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let class_index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();

    let mut examples = Vec::new();
    let mut counts = vec![0.0; classes.len()];
    for (case, class) in labeled {
        let ctx = case_context(lpg, case).ok_or_else(|| Error::UnknownCase(case.clone()))?;
        let events: Vec<Vec<usize>> = ctx
            .into_iter()
            .map(|ns| ns.iter().map(|n| node_index[n.as_str()]).collect::<Vec<_>>())
            .filter(|ns: &Vec<usize>| !ns.is_empty())
            .collect();
        let label = class_index[class.id.as_str()];
        counts[label] += 1.0;
        if !events.is_empty() {
            examples.push(Example { events, label });
        }
    }
    let total: f64 = counts.iter().sum();
    let prior: Vec<f64> = counts.iter().map(|c| c / total).collect();

    let lay = Layout {
        n: node_ids.len(),
        m: rel_ids.len(),
        k: classes.len(),
        d: hp.dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let triples: Vec<(usize, usize, usize, usize)> = lpg
        .edges()
        .iter()
        .map(|e| {
            let (h, t) = (node_index[e.source.as_str()], node_index[e.target.as_str()]);
            let mut c = rng.gen_range(0..lay.n.max(2) - 1);
            if c >= t {
                c += 1;
            }
            (h, rel_index[e.relation().as_str()], t, c.min(lay.n - 1))
        })
        .collect();

    let scale = 1.0 / (hp.dim as f64).sqrt();
    let mut params: Vec<f64> = (0..lay.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    for i in 0..lay.n {
        for x in &mut params[lay.node_proj(i)..lay.node_proj(i) + lay.d] {
            *x *= 0.1;
        }
    }
    for r in 0..lay.m {
        for x in &mut params[lay.rel_proj(r)..lay.rel_proj(r) + lay.d] {
            *x *= 0.1;
        }
    }
    let a0 = lay.attention();
    for i in 0..lay.d {
        for j in 0..lay.d {
            params[a0 + i * lay.d + j] = if i == j { 1.0 } else { 0.0 };
        }
    }

    let (n_tr, n_ex) = (triples.len().max(1) as f64, examples.len().max(1) as f64);
    let eval = |p: &[f64], want: bool| {
        let mut grad = if want { vec![0.0; p.len()] } else { Vec::new() };
        let mut loss = 0.0;
        for &(h, r, t, c) in &triples {
            let fp = transd(p, &lay, h, r, t, None);
            let fneg = transd(p, &lay, h, r, c, None);
            let l = hp.margin + fp - fneg;
            if l > 0.0 {
                loss += l / n_tr;
                if want {
                    transd(p, &lay, h, r, t, Some((&mut grad, 1.0 / n_tr)));
                    transd(p, &lay, h, r, c, Some((&mut grad, -1.0 / n_tr)));
                }
            }
        }
        if hp.ce_weight > 0.0 {
            let w = hp.ce_weight / n_ex;
            for ex in &examples {
                let g = if want { Some((grad.as_mut_slice(), w)) } else { None };
                loss += w * ce_loss(p, &lay, ex, g);
            }
        }
        loss += hp.l2 * dot(p, p);
        if want {
            for (g, x) in grad.iter_mut().zip(p) {
                *g += 2.0 * hp.l2 * x;
            }
        }
        (loss, grad)
    };
    let history = minimize(
        &mut params,
        &Objective { eval: &eval },
        Schedule {
            learning_rate: hp.learning_rate,
            epochs: hp.epochs,
        },
    );

    let d = lay.d;
    let nodes = node_ids
        .iter()
        .enumerate()
        .map(|(i, n)| {
            (
                (*n).clone(),
                Projected {
                    vec: params[lay.node(i)..][..d].to_vec(),
                    proj: params[lay.node_proj(i)..][..d].to_vec(),
                },
            )
        })
        .collect();
    let relations = rel_ids
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                r.clone(),
                Projected {
                    vec: params[lay.rel(i)..][..d].to_vec(),
                    proj: params[lay.rel_proj(i)..][..d].to_vec(),
                },
            )
        })
        .collect();
    Ok(VariantModel {
        version: CHECKPOINT_VERSION.to_string(),
        params: *hp,
        nodes,
        relations,
        class_embeddings: (0..lay.k).map(|k| params[lay.class(k)..][..d].to_vec()).collect(),
        classes,
        attention: (0..d).map(|i| params[a0 + i * d..][..d].to_vec()).collect(),
        prior,
        attribute_keys: lpg
            .nodes_with_label(ATTRIBUTE_VALUE)
            .filter_map(|n| n.props.get("key").and_then(|v| v.as_str()).map(str::to_string))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        loss_history: history,
    })
}

impl VariantModel {
    fn flat_attention(&self) -> Vec<f64> {
        self.attention.iter().flatten().copied().collect()
    }

    /// TransD score `-||h_perp + r - t_perp||^2` of an edge, if all parts are known.
    pub fn edge_score(&self, head: &str, relation: &str, tail: &str) -> Option<f64> {
        let (h, t, r) = (self.nodes.get(head)?, self.nodes.get(tail)?, self.relations.get(relation)?);
        let (sh, st) = (dot(&h.proj, &h.vec), dot(&t.proj, &t.vec));
        let f: f64 = (0..self.params.dim)
            .map(|i| {
                let u = h.vec[i] + r.proj[i] * sh + r.vec[i] - t.vec[i] - r.proj[i] * st;
                u * u
            })
            .sum();
        Some(-f)
    }

    /// Scores per class and whether they fell back to the class prior.
    fn scores_inner(&self, lpg: &LabeledPropertyGraph, case: &str) -> Result<(Vec<f64>, bool)> {
        let ctx = case_context(lpg, case).ok_or_else(|| Error::UnknownCase(case.to_string()))?;
        let d = self.params.dim;
        let events: Vec<Vec<f64>> = ctx
            .iter()
            .filter_map(|ns| {
                let known: Vec<&Projected> = ns.iter().filter_map(|n| self.nodes.get(n)).collect();
                if known.is_empty() {
                    return None;
                }
                let mut v = vec![0.0; d];
                for p in &known {
                    for i in 0..d {
                        v[i] += p.vec[i];
                    }
                }
                let inv = 1.0 / known.len() as f64;
                Some(v.into_iter().map(|x| x * inv).collect())
            })
            .collect();
        if events.is_empty() {
            return Ok((self.prior.clone(), true));
        }
        let fw = classify_forward(&events, &self.class_embeddings, &self.flat_attention(), d);
        Ok((fw.probs, false))
    }

    /// Attention weights of each known event of a case, per class.
    pub fn attention_weights(&self, lpg: &LabeledPropertyGraph, case: &str) -> Result<Vec<Vec<f64>>> {
        let ctx = case_context(lpg, case).ok_or_else(|| Error::UnknownCase(case.to_string()))?;
        let d = self.params.dim;
        let events: Vec<Vec<f64>> = ctx
            .iter()
            .filter_map(|ns| {
                let known: Vec<&Projected> = ns.iter().filter_map(|n| self.nodes.get(n)).collect();
                (!known.is_empty()).then(|| {
                    (0..d)
                        .map(|i| known.iter().map(|p| p.vec[i]).sum::<f64>() / known.len() as f64)
                        .collect()
                })
            })
            .collect();
        Ok(classify_forward(&events, &self.class_embeddings, &self.flat_attention(), d).alpha)
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let m: VariantModel = serde_json::from_reader(source).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if m.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {:?} (expected {CHECKPOINT_VERSION:?})",
                m.version
            )));
        }
        let d = m.params.dim;
        let vectors = m
            .nodes
            .values()
            .chain(m.relations.values())
            .flat_map(|p| [&p.vec, &p.proj])
            .chain(&m.class_embeddings)
            .chain(&m.attention);
        for v in vectors {
            if v.len() != d || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Checkpoint("vector with wrong dimension or non-finite entry".into()));
            }
        }
        if m.attention.len() != d || m.class_embeddings.len() != m.classes.len() || m.prior.len() != m.classes.len() {
            return Err(Error::Checkpoint("inconsistent class or attention shapes".into()));
        }
        Ok(m)
    }
}

/// Class probabilities for one case; they sum to one.
pub fn score_trace(model: &VariantModel, lpg: &LabeledPropertyGraph, case_id: &str) -> Result<BTreeMap<String, f64>> {
    let (probs, _) = model.scores_inner(lpg, case_id)?;
    Ok(model.classes.iter().map(|c| c.id.clone()).zip(probs).collect())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VariantPartition {
    pub assignment: BTreeMap<String, String>,
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
    /// Cases with no known event, assigned by the class prior.
    pub prior_only: BTreeSet<String>,
}

impl VariantPartition {
    /// Cases per class.
    pub fn cells(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (case, class) in &self.assignment {
            out.entry(class.as_str()).or_default().push(case.as_str());
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let classes: BTreeSet<&String> = self.scores.values().flat_map(|s| s.keys()).collect();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["case_id".to_string(), "class".to_string()];
        header.extend(classes.iter().map(|c| format!("score:{c}")));
        header.push("prior_only".into());
        w.write_record(&header)?;
        for (case, class) in &self.assignment {
            let mut row = vec![case.clone(), class.clone()];
            for c in &classes {
                let s = self.scores.get(case).and_then(|m| m.get(*c)).copied().unwrap_or(0.0);
                row.push(format!("{s:.6}"));
            }
            row.push(self.prior_only.contains(case).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Assigns every case of `log` to its highest-scoring class.
pub fn classify_log(model: &VariantModel, lpg: &LabeledPropertyGraph, log: &EventLog) -> VariantPartition {
    let rows: Vec<(String, Vec<f64>, bool)> = log
        .traces()
        .par_iter()
        .map(|t| {
            let case = t.case_id().to_string();
            let (probs, prior) = model
                .scores_inner(lpg, &case)
                .unwrap_or_else(|_| (model.prior.clone(), true));
            (case, probs, prior)
        })
        .collect();
    let mut part = VariantPartition::default();
    for (case, probs, prior) in rows {
        // Classes are sorted by id, so index order breaks ties lexicographically.
        let best = argmax(&probs).expect("at least two classes");
        part.assignment.insert(case.clone(), model.classes[best].id.clone());
        part.scores.insert(
            case.clone(),
            model.classes.iter().map(|c| c.id.clone()).zip(probs).collect(),
        );
        if prior {
            part.prior_only.insert(case);
        }
    }
    part
}

/// Fraction of labeled cases whose assigned class matches the label.
pub fn accuracy(part: &VariantPartition, labels: &BTreeMap<String, CohortClass>) -> f64 {
    let judged: Vec<bool> = labels
        .iter()
        .filter_map(|(case, c)| part.assignment.get(case).map(|a| *a == c.id))
        .collect();
    if judged.is_empty() {
        return 0.0;
    }
    judged.iter().filter(|x| **x).count() as f64 / judged.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::test_util::ts;
    use crate::event_log::{Event, Trace};
    use crate::knowledge_graph::{build_lpg, KnowledgeGraph, LpgOptions};

    /// Class is a function of the `ward` attribute; control flow is shared.
    fn cohort_log(n: usize) -> (EventLog, BTreeMap<String, CohortClass>) {
        let wards = ["east", "north", "west"];
        let mut traces = Vec::new();
        let mut labels = BTreeMap::new();
        for i in 0..n {
            let case = format!("c{i:03}");
            let ward = wards[i % 3];
            let acts: &[&str] = if i % 2 == 0 { &["reg", "triage", "treat"] } else { &["reg", "treat"] };
            let events = acts
                .iter()
                .enumerate()
                .map(|(j, a)| Event::new(case.clone(), *a, ts(j as i64)).with_attr("ward", ward))
                .collect();
            traces.push(Trace::new(case.clone(), events).unwrap());
            labels.insert(case, CohortClass::new(format!("cohort-{ward}")));
        }
        (EventLog::from_traces(traces).unwrap(), labels)
    }

    fn lpg_of(log: &EventLog) -> LabeledPropertyGraph {
        let opts = LpgOptions {
            attribute_nodes: vec!["ward".into()],
            ..LpgOptions::default()
        };
        build_lpg(log, &KnowledgeGraph::new(), &opts)
    }

    fn small() -> VariantParams {
        VariantParams {
            dim: 8,
            epochs: 60,
            ..VariantParams::default()
        }
    }

    #[test]
    fn learns_attribute_rule_and_is_deterministic() {
        let (log, labels) = cohort_log(30);
        let lpg = lpg_of(&log);
        let m = train_variant_model(&lpg, &labels, &small()).unwrap();
        let part = classify_log(&m, &lpg, &log);
        assert!(accuracy(&part, &labels) >= 0.95, "{}", accuracy(&part, &labels));
        assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(m.attribute_keys, ["ward"]);
        let again = train_variant_model(&lpg, &labels, &small()).unwrap();
        assert_eq!(m, again);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(VariantModel::load(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn scores_are_normalized_and_cells_partition() {
        let (log, labels) = cohort_log(12);
        let lpg = lpg_of(&log);
        let m = train_variant_model(&lpg, &labels, &small()).unwrap();
        for t in log.traces() {
            let s = score_trace(&m, &lpg, t.case_id()).unwrap();
            assert!((s.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let part = classify_log(&m, &lpg, &log);
        let total: usize = part.cells().values().map(Vec::len).sum();
        assert_eq!(total, log.num_traces());
        assert!(matches!(score_trace(&m, &lpg, "nope"), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn single_event_attention_is_one() {
        let (log, labels) = cohort_log(6);
        let lpg = lpg_of(&log);
        let m = train_variant_model(&lpg, &labels, &small()).unwrap();
        let one = Trace::new("solo", vec![Event::new("solo", "reg", ts(0)).with_attr("ward", "east")]).unwrap();
        let solo_log = EventLog::from_traces(vec![one]).unwrap();
        let solo = lpg_of(&solo_log);
        for w in m.attention_weights(&solo, "solo").unwrap() {
            assert_eq!(w, vec![1.0]);
        }
        assert_eq!(classify_log(&m, &solo, &solo_log).assignment.len(), 1);
    }

    #[test]
    fn unseen_trace_falls_back_to_prior() {
        let (log, labels) = cohort_log(6);
        let lpg = lpg_of(&log);
        let m = train_variant_model(&lpg, &labels, &small()).unwrap();
        let odd = Trace::new("x", vec![Event::new("x", "never", ts(0))]).unwrap();
        let odd_log = EventLog::from_traces(vec![odd]).unwrap();
        let part = classify_log(&m, &lpg_of(&odd_log), &odd_log);
        assert!(part.prior_only.contains("x"));
        assert_eq!(part.scores["x"].values().copied().collect::<Vec<_>>(), m.prior);
    }

    #[test]
    fn training_errors() {
        let (log, mut labels) = cohort_log(6);
        let lpg = lpg_of(&log);
        let one: BTreeMap<_, _> = labels.iter().take(1).map(|(k, v)| (k.clone(), v.clone())).collect();
        assert!(train_variant_model(&lpg, &one, &small()).is_err());
        labels.insert("ghost".into(), CohortClass::new("cohort-east"));
        match train_variant_model(&lpg, &labels, &small()) {
            Err(Error::UnknownCase(c)) => assert_eq!(c, "ghost"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (log, labels) = cohort_log(6);
        let lpg = lpg_of(&log);
        let node_index: BTreeMap<&str, usize> =
            lpg.nodes().keys().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lay = Layout { n: node_index.len(), m: 2, k: 3, d: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f64> = (0..lay.len()).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let ctx = case_context(&lpg, "c000").unwrap();
        let ex = Example {
            events: ctx.iter().map(|ns| ns.iter().map(|n| node_index[n.as_str()]).collect()).collect(),
            label: 1,
        };
        let _ = labels;
        let check = |f: &dyn Fn(&[f64], Option<(&mut [f64], f64)>) -> f64| {
            let mut g = vec![0.0; p.len()];
            f(&p, Some((&mut g, 1.0)));
            for i in 0..p.len() {
                let h = 1e-6;
                let (mut up, mut dn) = (p.clone(), p.clone());
                up[i] += h;
                dn[i] -= h;
                let num = (f(&up, None) - f(&dn, None)) / (2.0 * h);
                assert!((num - g[i]).abs() < 1e-5 * (1.0 + num.abs()), "param {i}: {num} vs {}", g[i]);
            }
        };
        check(&|q, g| ce_loss(q, &lay, &ex, g));
        check(&|q, g| transd(q, &lay, 0, 1, 2, g));
    }

    #[test]
    fn labels_csv() {
        let text = "case_id,class,description\nc1,a,first\nc2,b,\n";
        let l = read_labels_csv(text.as_bytes()).unwrap();
        assert_eq!(l["c1"].description, "first");
        assert_eq!(l["c2"].id, "b");
        assert!(read_labels_csv("case_id,class\nc1,a\nc1,b\n".as_bytes()).is_err());
    }

    #[test]
    fn argmax_ties_take_first() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
