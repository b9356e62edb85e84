//! Translational temporal scorer for directly-follows facts.
//!
//! `d(a, b | t) = ||e_a + r + tau(bucket(t)) - e_b||`, trained with a margin
//! ranking loss on squared distances against corrupted tails.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, Timelike};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{EventLog, Timestamp};
use crate::knowledge_graph::{vocab, KnowledgeGraph};
use crate::optim::{minimize, Objective, Schedule};

pub const CHECKPOINT_VERSION: &str = "kcpm-temporal-scorer/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeBucket {
    #[default]
    HourOfDay,
    DayOfWeek,
    /// A single bucket; time is ignored.
    Constant,
}

impl TimeBucket {
    pub fn count(self) -> usize {
        match self {
            TimeBucket::HourOfDay => 24,
            TimeBucket::DayOfWeek => 7,
            TimeBucket::Constant => 1,
        }
    }

    pub fn of(self, t: &Timestamp) -> usize {
        match self {
            TimeBucket::HourOfDay => t.hour() as usize,
            TimeBucket::DayOfWeek => t.weekday().num_days_from_monday() as usize,
            TimeBucket::Constant => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerParams {
    pub dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub seed: u64,
    #[serde(default)]
    pub bucket: TimeBucket,
}

impl Default for ScorerParams {
    fn default() -> Self {
        ScorerParams {
            dim: 16,
            margin: 1.0,
            learning_rate: 0.05,
            epochs: 150,
            negatives: 4,
            seed: 7,
            bucket: TimeBucket::HourOfDay,
        }
    }
}

impl ScorerParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config("scorer dim must be at least 2"));
        }
        if self.epochs == 0 {
            return Err(Error::config("scorer epochs must be at least 1"));
        }
        if self.negatives == 0 {
            return Err(Error::config("scorer negatives must be at least 1"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config("scorer margin must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("scorer learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalScorer {
    pub version: String,
    pub params: ScorerParams,
    pub entities: BTreeMap<String, Vec<f64>>,
    pub relation: Vec<f64>,
    pub time: Vec<Vec<f64>>,
    /// Mean hinge loss after each epoch.
    pub loss_history: Vec<f64>,
}

/// `(head, tail, bucket)` with a multiplicity.
type Positives = BTreeMap<(usize, usize, usize), u64>;

struct Layout {
    n: usize,
    dim: usize,
}

impl Layout {
    fn entity(&self, i: usize) -> usize {
        i * self.dim
    }
    fn relation(&self) -> usize {
        self.n * self.dim
    }
    fn time(&self, b: usize) -> usize {
        (self.n + 1 + b) * self.dim
    }
    fn len(&self, buckets: usize) -> usize {
        (self.n + 1 + buckets) * self.dim
    }
}

fn residual(p: &[f64], lay: &Layout, h: usize, t: usize, b: usize, out: &mut [f64]) -> f64 {
    let (eh, r, tb, et) = (lay.entity(h), lay.relation(), lay.time(b), lay.entity(t));
    let mut sq = 0.0;
    for k in 0..lay.dim {
        let u = p[eh + k] + p[r + k] + p[tb + k] - p[et + k];
        out[k] = u;
        sq += u * u;
    }
    sq
}

pub fn train_temporal_scorer(log: &EventLog, kg: &KnowledgeGraph, hp: &ScorerParams) -> Result<TemporalScorer> {
    hp.validate()?;
    if log.is_empty() {
        return Err(Error::invalid("cannot train a scorer on an empty log"));
    }
    let mut names: Vec<String> = log.alphabet().iter().cloned().collect();
    let temporal: Vec<_> = kg
        .temporal()
        .iter()
        .filter(|t| t.triple.predicate == vocab::DIRECTLY_FOLLOWS)
        .collect();
    for t in &temporal {
        names.push(t.triple.subject.clone());
        names.push(t.triple.object.clone());
    }
    names.sort();
    names.dedup();
    if names.len() < 2 {
        return Err(Error::invalid("need at least two activities to form negatives"));
    }
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut pos = Positives::new();
    for trace in log.traces() {
        for w in trace.events().windows(2) {
            let key = (index[w[0].activity.as_str()], index[w[1].activity.as_str()], hp.bucket.of(&w[1].timestamp));
            *pos.entry(key).or_default() += 1;
        }
    }
    for t in &temporal {
        let key = (
            index[t.triple.subject.as_str()],
            index[t.triple.object.as_str()],
            hp.bucket.of(&t.timestamp),
        );
        *pos.entry(key).or_default() += 1;
    }
    if pos.is_empty() {
        return Err(Error::invalid("log has no directly-follows pairs"));
    }

    let n = names.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    // (head, tail, corrupted tail, bucket) -> weight
    let mut terms: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    let mut total = 0.0;
    for (&(h, t, b), &count) in &pos {
        for _ in 0..count * hp.negatives as u64 {
            let mut c = rng.gen_range(0..n - 1);
            if c >= t {
                c += 1;
            }
            *terms.entry((h, t, c, b)).or_default() += 1.0;
            total += 1.0;
        }
    }
    let terms: Vec<_> = terms.into_iter().map(|(k, w)| (k, w / total)).collect();

    let lay = Layout { n, dim: hp.dim };
    let buckets = hp.bucket.count();
    let scale = 1.0 / (hp.dim as f64).sqrt();
    let mut params: Vec<f64> = (0..lay.len(buckets)).map(|_| rng.gen_range(-scale..scale)).collect();
    // Time offsets start at zero so untrained buckets are neutral.
    for b in 0..buckets {
        params[lay.time(b)..lay.time(b) + hp.dim].fill(0.0);
    }

    let margin = hp.margin;
    let eval = |p: &[f64], want_grad: bool| {
        let mut grad = if want_grad { vec![0.0; p.len()] } else { Vec::new() };
        let mut u = vec![0.0; lay.dim];
        let mut v = vec![0.0; lay.dim];
        let mut loss = 0.0;
        for &((h, t, c, b), w) in &terms {
            let dp = residual(p, &lay, h, t, b, &mut u);
            let dn = residual(p, &lay, h, c, b, &mut v);
            let l = margin + dp - dn;
            if l <= 0.0 {
                continue;
            }
            loss += w * l;
            if want_grad {
                let (eh, r, tb, et, ec) = (lay.entity(h), lay.relation(), lay.time(b), lay.entity(t), lay.entity(c));
                for k in 0..lay.dim {
                    let gu = 2.0 * w * u[k];
                    let gv = 2.0 * w * v[k];
                    let shared = gu - gv;
                    grad[eh + k] += shared;
                    grad[r + k] += shared;
                    grad[tb + k] += shared;
                    grad[et + k] -= gu;
                    grad[ec + k] += gv;
                }
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

    let entities = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| (name, params[lay.entity(i)..lay.entity(i) + hp.dim].to_vec()))
        .collect();
    Ok(TemporalScorer {
        version: CHECKPOINT_VERSION.to_string(),
        params: *hp,
        entities,
        relation: params[lay.relation()..lay.relation() + hp.dim].to_vec(),
        time: (0..buckets)
            .map(|b| params[lay.time(b)..lay.time(b) + hp.dim].to_vec())
            .collect(),
        loss_history: history,
    })
}

impl TemporalScorer {
    pub fn contains(&self, activity: &str) -> bool {
        self.entities.contains_key(activity)
    }

    fn embedding(&self, activity: &str) -> Result<&[f64]> {
        self.entities
            .get(activity)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownActivity(activity.to_string()))
    }

    /// Translational distance `||e_a + r + tau - e_b||`.
    pub fn distance(&self, a: &str, b: &str, t: &Timestamp) -> Result<f64> {
        let (ea, eb) = (self.embedding(a)?, self.embedding(b)?);
        let tau = &self.time[self.params.bucket.of(t)];
        let sq: f64 = (0..self.params.dim)
            .map(|k| {
                let u = ea[k] + self.relation[k] + tau[k] - eb[k];
                u * u
            })
            .sum();
        Ok(sq.sqrt())
    }

    /// Tails ordered from most to least likely after `a` at `t`.
    pub fn rank_tails(&self, a: &str, t: &Timestamp) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::with_capacity(self.entities.len());
        for b in self.entities.keys() {
            out.push((b.clone(), directly_follows_degree(self, a, b, t)?));
        }
        out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        Ok(out)
    }

    /// Fraction of `(a, b, t)` where `b` ranks in the top `k` tails. Ties count against.
    pub fn hits_at_k(&self, pairs: &[(String, String, Timestamp)], k: usize) -> Result<f64> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0usize;
        for (a, b, t) in pairs {
            let target = self.distance(a, b, t)?;
            let mut better = 0;
            for c in self.entities.keys() {
                if c != b && self.distance(a, c, t)? <= target {
                    better += 1;
                }
            }
            if better < k {
                hits += 1;
            }
        }
        Ok(hits as f64 / pairs.len() as f64)
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let s: TemporalScorer =
            serde_json::from_reader(source).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if s.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {:?} (expected {CHECKPOINT_VERSION:?})",
                s.version
            )));
        }
        let d = s.params.dim;
        let vectors = s.entities.values().chain(std::iter::once(&s.relation)).chain(&s.time);
        for v in vectors {
            if v.len() != d || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Checkpoint("vector with wrong dimension or non-finite entry".into()));
            }
        }
        if s.time.len() != s.params.bucket.count() {
            return Err(Error::Checkpoint("wrong number of time buckets".into()));
        }
        Ok(s)
    }
}

/// `sigmoid(-distance)`, in `(0, 0.5]`; 0.5 exactly when the translation is perfect.
pub fn directly_follows_degree(scorer: &TemporalScorer, a: &str, b: &str, t: &Timestamp) -> Result<f64> {
    let d = scorer.distance(a, b, t)?;
    Ok(1.0 / (1.0 + d.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::test_util::{log_of, ts};

    fn dominant_log() -> EventLog {
        let mut traces: Vec<&[&str]> = vec![&["a", "b"]; 50];
        traces.push(&["a", "c"]);
        log_of(&traces)
    }

    fn small_params() -> ScorerParams {
        ScorerParams {
            dim: 8,
            epochs: 60,
            ..ScorerParams::default()
        }
    }

    #[test]
    fn dominant_pattern_scores_higher() {
        let s = train_temporal_scorer(&dominant_log(), &KnowledgeGraph::new(), &small_params()).unwrap();
        let t = ts(1);
        let ab = directly_follows_degree(&s, "a", "b", &t).unwrap();
        let ac = directly_follows_degree(&s, "a", "c", &t).unwrap();
        assert!(ab > ac, "{ab} <= {ac}");
        assert!(s.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = train_temporal_scorer(&dominant_log(), &KnowledgeGraph::new(), &small_params()).unwrap();
        let b = train_temporal_scorer(&dominant_log(), &KnowledgeGraph::new(), &small_params()).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.save(&mut ja).unwrap();
        b.save(&mut jb).unwrap();
        assert_eq!(ja, jb);
        assert_eq!(TemporalScorer::load(ja.as_slice()).unwrap(), a);
    }

    #[test]
    fn degenerate_inputs() {
        let kg = KnowledgeGraph::new();
        assert!(train_temporal_scorer(&log_of(&[&["a", "a"]]), &kg, &small_params()).is_err());
        assert!(train_temporal_scorer(&EventLog::default(), &kg, &small_params()).is_err());
        let bad = ScorerParams { dim: 1, ..small_params() };
        assert!(train_temporal_scorer(&dominant_log(), &kg, &bad).is_err());
    }

    #[test]
    fn degree_of_perfect_translation_is_half() {
        let s = TemporalScorer {
            version: CHECKPOINT_VERSION.into(),
            params: ScorerParams {
                dim: 2,
                bucket: TimeBucket::Constant,
                ..ScorerParams::default()
            },
            entities: BTreeMap::from([("a".into(), vec![0.3, 0.1]), ("b".into(), vec![0.3, 0.1])]),
            relation: vec![0.0, 0.0],
            time: vec![vec![0.0, 0.0]],
            loss_history: vec![],
        };
        assert_eq!(directly_follows_degree(&s, "a", "b", &ts(0)).unwrap(), 0.5);
        match directly_follows_degree(&s, "a", "zzz", &ts(0)) {
            Err(Error::UnknownActivity(a)) => assert_eq!(a, "zzz"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn checkpoint_version_is_checked() {
        let s = train_temporal_scorer(&dominant_log(), &KnowledgeGraph::new(), &small_params()).unwrap();
        let mut json = serde_json::to_value(&s).unwrap();
        json["version"] = "other/9".into();
        let text = serde_json::to_vec(&json).unwrap();
        assert!(matches!(TemporalScorer::load(text.as_slice()), Err(Error::Checkpoint(_))));
    }
}
