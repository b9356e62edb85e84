//! Acceptance criteria, one PASS/FAIL/SKIP line each. Exits non-zero on any FAIL.
//!
//! Set `KCPM_SEPSIS_LOG` to the public sepsis XES file to enable criterion 2.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use kcpm::augmentation::{
    check_guideline_latency, directly_follows_degree, train_temporal_scorer, ScorerParams, SYNTHETIC,
};
use kcpm::conformance::{conformance, footprint_of_log, footprint_of_model, f_score, ComparisonTable, ConformanceReport};
use kcpm::dependency_mining::{
    filter_dependency_graph, length_two_loop_counts, mine_dependency_graph, FilterMode, MiningThresholds,
};
use kcpm::event_log::{
    annotate_context, directly_follows_counts, parse_xes, write_xes, AttrValue, ContextTable, XesOptions,
};
use kcpm::knowledge_graph::{build_lpg, Alias, KnowledgeGraph, LpgOptions};
use kcpm::pipeline::{load_kg, load_rules, run_pipeline, PipelineConfig, PipelineInputs, PipelineOutput};
use kcpm::rule_mining::{mine_rules, Closure, MiningParams};
use kcpm::synth::{audit_repair, corrupt, simulate, CorruptionSpec, GroundTruthModel, RepairAudit};
use kcpm::variant_analysis::{accuracy, classify_log, train_variant_model, CohortClass, VariantParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::*;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sepsis_desk")
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let rows = [((0.794, 0.573), 0.665), ((0.903, 0.671), 0.769)];
    let mut table = ComparisonTable::default();
    let mut ok = true;
    let mut got = Vec::new();
    for (((fit, prec), want), label) in rows.iter().zip(["Raw event log", "Augmented event log"]) {
        let f = f_score(*fit, *prec);
        ok &= (f - want).abs() <= 0.001;
        got.push(format!("{f:.4}"));
        table.push(label, ConformanceReport::from_metrics(*fit, *prec));
    }
    ok &= table.rows.iter().zip(rows).all(|((_, r), (_, want))| (r.f_score - want).abs() <= 0.001);
    let elapsed = started.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    check(ok, format!("f-scores {} in {:?}", got.join(", "), elapsed))
}

fn criterion_2() -> Outcome {
    let Some(path) = std::env::var_os("KCPM_SEPSIS_LOG") else {
        return Skip("KCPM_SEPSIS_LOG not set".into());
    };
    let path = PathBuf::from(path);
    if !path.exists() {
        return Skip(format!("{} not found", path.display()));
    }
    let log = match File::open(&path).map_err(kcpm::Error::from).and_then(|f| parse_xes(BufReader::new(f), XesOptions::default())) {
        Ok(l) => l,
        Err(e) => return Fail(format!("cannot read {}: {e}", path.display())),
    };
    let latency = check_guideline_latency(&log, "ER Sepsis Triage", "IV Antibiotics", chrono::Duration::hours(1));
    let s = log.stats();
    let ok = (latency - 0.585).abs() <= 0.01
        && s.cases.abs_diff(1000) <= 100
        && s.events.abs_diff(15000) <= 1500
        && s.activities == 16;
    check(
        ok,
        format!("latency violation {latency:.3}, {} cases, {} events, {} activities", s.cases, s.events, s.activities),
    )
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for run in 0..1000 {
        let traces = random_traces(&mut rng, 8, 20, 15);
        let log = log_of(&traces);
        let th = MiningThresholds::new(rng.gen_range(0.0..0.9), rng.gen_range(1..=3));
        let dg = match mine_dependency_graph(&log, &th) {
            Ok(dg) => dg,
            Err(e) => return Fail(format!("run {run}: {e}")),
        };
        let df = oracle_df(&traces);
        if directly_follows_counts(&log) != df {
            return Fail(format!("run {run}: directly-follows counts differ"));
        }
        let count = |a: &str, b: &str| df.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0);
        let mut edges = BTreeMap::new();
        let mut l1 = BTreeMap::new();
        for ((a, b), &ab) in &df {
            if a == b {
                l1.insert(a.clone(), oracle_loop(ab));
                continue;
            }
            let m = oracle_dependency(ab, count(b, a));
            if ab >= th.frequency_threshold.max(1) && m > 0.0 && m >= th.dependency_threshold {
                edges.insert((a.clone(), b.clone()), (ab, m));
            }
        }
        let mined: BTreeMap<_, _> = dg.edges.iter().map(|(k, e)| (k.clone(), (e.df_count, e.dependency))).collect();
        if mined != edges {
            return Fail(format!("run {run}: dependency edges differ"));
        }
        if dg.l1_loops != l1 {
            return Fail(format!("run {run}: length-one loops differ"));
        }
        let aba = oracle_aba(&traces);
        if length_two_loop_counts(&log) != aba {
            return Fail(format!("run {run}: a,b,a counts differ"));
        }
        let mut l2 = BTreeMap::new();
        for (a, b) in aba.keys() {
            let n = aba.get(&(a.clone(), b.clone())).copied().unwrap_or(0) + aba.get(&(b.clone(), a.clone())).copied().unwrap_or(0);
            l2.insert((a.clone(), b.clone()), oracle_loop(n));
            l2.insert((b.clone(), a.clone()), oracle_loop(n));
        }
        if dg.l2_loops != l2 {
            return Fail(format!("run {run}: length-two loops differ"));
        }
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(30), format!("1000 random logs match the oracle in {elapsed:.2?}"))
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut total = 0usize;
    for run in 0..100 {
        let triples = random_triples(&mut rng, 50, 6, 8);
        let params = MiningParams {
            max_body_len: rng.gen_range(1..=3),
            min_support: rng.gen_range(1..=2),
            min_pca_conf: [0.0, 0.25, 0.5, 0.8, 1.0][rng.gen_range(0..5)],
        };
        let rb = match mine_rules(&kg_from(&triples), params) {
            Ok(rb) => rb,
            Err(e) => return Fail(format!("run {run}: {e}")),
        };
        let mined: BTreeMap<_, _> = rb
            .rules()
            .iter()
            .map(|r| {
                (
                    (r.body_predicates().iter().map(|s| s.to_string()).collect::<Vec<_>>(), r.head.predicate.clone()),
                    (r.support, r.std_confidence, r.pca_confidence),
                )
            })
            .collect();
        if mined.len() != rb.len() {
            return Fail(format!("run {run}: duplicate rules"));
        }
        let want = oracle_rules(&triples, params.max_body_len, params.min_support, params.min_pca_conf);
        if mined != want {
            let extra: Vec<_> = mined.keys().filter(|k| !want.contains_key(*k)).take(3).collect();
            let missing: Vec<_> = want.keys().filter(|k| !mined.contains_key(*k)).take(3).collect();
            return Fail(format!("run {run}: rule sets differ (extra {extra:?}, missing {missing:?})"));
        }
        total += want.len();
    }
    let elapsed = started.elapsed();
    check(
        elapsed < Duration::from_secs(60),
        format!("100 random KGs, {total} rules, match exhaustive enumeration in {elapsed:.2?}"),
    )
}

const NOISE: [&str; 3] = ["DuplicateEntry", "TestMessage", "SystemPing"];

struct DeskRun {
    raw: f64,
    augmented: f64,
    audit: RepairAudit,
    fingerprint: Vec<u8>,
}

fn desk_run(seed: u64) -> kcpm::Result<DeskRun> {
    let dir = fixtures();
    let model = GroundTruthModel::read_json(File::open(dir.join("model.json"))?)?;
    let clean = simulate(&model, 3000, seed)?;
    let spec = CorruptionSpec {
        drop_rate: 0.1,
        noise_rate: 0.2,
        noise_alphabet: NOISE.iter().map(|s| s.to_string()).collect(),
        seed,
    };
    let noisy = corrupt(&clean, &spec)?;
    let cfg = PipelineConfig::load(&dir.join("config.toml"))?;
    let inputs = PipelineInputs {
        log: noisy.clone(),
        kg: load_kg(&dir.join("kg.tsv"))?,
        rules: load_rules(&dir.join("rules.txt"))?,
        alias: Alias::identity(),
        reference: Some(model.dependency_graph()),
    };
    let PipelineOutput { augmented, report, dfg, .. } = run_pipeline(&inputs, &cfg)?;
    let mut fingerprint = Vec::new();
    write_xes(&augmented, &mut fingerprint)?;
    fingerprint.extend(serde_json::to_vec(&report)?);
    fingerprint.extend(serde_json::to_vec(&dfg)?);
    Ok(DeskRun {
        raw: report.table.rows[0].1.f_score,
        augmented: report.table.rows[1].1.f_score,
        audit: audit_repair(&clean, &noisy, &augmented, SYNTHETIC),
        fingerprint,
    })
}

const DESK_SEEDS: [u64; 2] = [2024, 7];

fn criterion_5(runs: &mut Vec<DeskRun>) -> Outcome {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for seed in DESK_SEEDS {
        match desk_run(seed) {
            Ok(r) => {
                ok &= r.augmented - r.raw >= 0.05;
                details.push(format!("seed {seed}: {:.3} -> {:.3}", r.raw, r.augmented));
                runs.push(r);
            }
            Err(e) => return Fail(format!("seed {seed}: {e}")),
        }
    }
    match desk_run(DESK_SEEDS[0]) {
        Ok(again) => {
            let same = again.fingerprint == runs[0].fingerprint;
            ok &= same;
            details.push(format!("rerun identical: {same}"));
        }
        Err(e) => return Fail(format!("rerun: {e}")),
    }
    let elapsed = started.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    check(ok, format!("f-score {} in {elapsed:.2?}", details.join("; ")))
}

fn criterion_6(runs: &[DeskRun]) -> Outcome {
    if runs.is_empty() {
        return Fail("criterion 5 produced no runs".into());
    }
    let sum = runs.iter().fold(RepairAudit::default(), |a, r| RepairAudit {
        injected: a.injected + r.audit.injected,
        dropped: a.dropped + r.audit.dropped,
        removed: a.removed + r.audit.removed,
        removed_injected: a.removed_injected + r.audit.removed_injected,
        inserted: a.inserted + r.audit.inserted,
        inserted_matched: a.inserted_matched + r.audit.inserted_matched,
    });
    let (rp, ip) = (sum.removal_precision(), sum.insertion_precision());
    check(
        rp >= 0.9 && ip >= 0.9 && sum.removed > 0 && sum.inserted > 0,
        format!(
            "removed {}/{} injected ({rp:.3}), inserted {}/{} matched ({ip:.3})",
            sum.removed_injected, sum.removed, sum.inserted_matched, sum.inserted
        ),
    )
}

/// Ten activities, each moving one or two steps ahead.
fn ten_activity_model() -> GroundTruthModel {
    let acts: Vec<String> = (0..10).map(|i| format!("a{i}")).collect();
    let mut m = GroundTruthModel::linear(&acts);
    for i in 0..8 {
        let succ = m.transitions.get_mut(&acts[i]).unwrap();
        succ.insert(acts[i + 1].clone(), 0.7);
        succ.insert(acts[i + 2].clone(), 0.3);
    }
    m
}

fn df_triples(log: &kcpm::event_log::EventLog) -> Vec<(String, String, kcpm::event_log::Timestamp)> {
    log.traces()
        .iter()
        .flat_map(|t| t.events().windows(2).map(|w| (w[0].activity.clone(), w[1].activity.clone(), w[1].timestamp)))
        .collect()
}

fn criterion_7() -> Outcome {
    let started = Instant::now();
    let model = ten_activity_model();
    let (train, held_out) = match (simulate(&model, 300, 11), simulate(&model, 100, 12)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Fail(e.to_string()),
    };
    let hp = ScorerParams::default();
    let train_once = || train_temporal_scorer(&train, &KnowledgeGraph::new(), &hp);
    let (s, again) = match (train_once(), train_once()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Fail(e.to_string()),
    };
    let pairs = df_triples(&held_out);
    let hits = match s.hits_at_k(&pairs, 3) {
        Ok(h) => h,
        Err(e) => return Fail(e.to_string()),
    };
    let baseline = 3.0 / s.entities.len() as f64;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let identical = s.save(&mut a).is_ok() && again.save(&mut b).is_ok() && a == b;
    let smooth = smoothed_nonincreasing(&s.loss_history, 5);
    let degree = directly_follows_degree(&s, "a0", "a1", &pairs[0].2).unwrap_or(f64::NAN);
    let elapsed = started.elapsed();
    check(
        hits >= 2.0 * baseline && identical && smooth && degree > 0.0 && degree <= 0.5 && elapsed < Duration::from_secs(60),
        format!(
            "hits@3 {hits:.3} vs random {baseline:.3}, smoothed loss nonincreasing {smooth}, identical checkpoints {identical}, {elapsed:.2?}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let started = Instant::now();
    let cohorts = [("public", "effective_care"), ("private", "preference_sensitive"), ("uninsured", "supply_sensitive")];
    let model = ten_activity_model();
    let log = match simulate(&model, 300, 21) {
        Ok(l) => l,
        Err(e) => return Fail(e.to_string()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ctx = ContextTable::new();
    let mut labels = BTreeMap::new();
    for t in log.traces() {
        let (payer, class) = cohorts[rng.gen_range(0..3)];
        ctx.insert(t.case_id(), [("payer".to_string(), AttrValue::from(payer))].into()).unwrap();
        labels.insert(t.case_id().to_string(), CohortClass::new(class));
    }
    let (log, _) = annotate_context(&log, &ctx);
    let mut cases: Vec<String> = labels.keys().cloned().collect();
    for i in (1..cases.len()).rev() {
        cases.swap(i, rng.gen_range(0..=i));
    }
    let split = cases.len() * 7 / 10;
    let pick = |ids: &[String]| -> BTreeMap<String, CohortClass> { ids.iter().map(|c| (c.clone(), labels[c].clone())).collect() };
    let (train, test) = (pick(&cases[..split]), pick(&cases[split..]));

    let opts = LpgOptions {
        attribute_nodes: vec!["payer".into()],
        ..LpgOptions::default()
    };
    let lpg = build_lpg(&log, &KnowledgeGraph::new(), &opts);
    let vm = match train_variant_model(&lpg, &train, &VariantParams::default()) {
        Ok(m) => m,
        Err(e) => return Fail(e.to_string()),
    };
    let part = classify_log(&vm, &lpg, &log);
    let acc = accuracy(&part, &test);
    let covered: BTreeSet<&str> = part.cells().values().flatten().copied().collect();
    let cell_total: usize = part.cells().values().map(Vec::len).sum();
    let partition_ok = covered.len() == log.num_traces() && cell_total == log.num_traces();
    let elapsed = started.elapsed();
    check(
        acc >= 0.9 && partition_ok && elapsed < Duration::from_secs(60),
        format!("held-out accuracy {acc:.3} on {} cases, cells disjoint and covering {partition_ok}, {elapsed:.2?}", test.len()),
    )
}

/// The property suites live in the other test targets; here one quick
/// instance of each headline invariant is rechecked on the desk scenario.
fn criterion_9() -> Outcome {
    let dir = fixtures();
    let run = || -> kcpm::Result<(bool, bool, bool)> {
        let model = GroundTruthModel::read_json(File::open(dir.join("model.json"))?)?;
        let clean = simulate(&model, 200, 9)?;
        let kg = load_kg(&dir.join("kg.tsv"))?;
        let rules = load_rules(&dir.join("rules.txt"))?;
        let closure = Closure::compute(&rules, &kg);
        let dg = mine_dependency_graph(&clean, &MiningThresholds::default())?;
        let (filtered, _) = filter_dependency_graph(&dg, &closure, &Alias::identity(), FilterMode::Permissive);
        let shrinks = filtered.edges.keys().all(|k| dg.edges.contains_key(k));
        let fp = footprint_of_log(&clean)?;
        let symmetric = fp.cells().all(|(a, b, r)| fp.relation(b, a) == r.inverse());
        let self_conf = conformance(&fp, &footprint_of_model(&dg));
        Ok((shrinks, symmetric, self_conf.f_score.is_finite()))
    };
    match run() {
        Ok((a, b, c)) => check(
            a && b && c,
            format!("filter shrinks {a}, footprint antisymmetric {b}; full suites: cargo test --test properties"),
        ),
        Err(e) => Fail(e.to_string()),
    }
}

fn main() {
    let mut desk = Vec::new();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "f-score consistency", criterion_1()),
        (2, "sepsis log check", criterion_2()),
        (3, "dependency mining oracle", criterion_3()),
        (4, "rule mining oracle", criterion_4()),
        (5, "desk-scale reproduction", criterion_5(&mut desk)),
        (6, "filtering soundness", criterion_6(&desk)),
        (7, "embedding sanity", criterion_7()),
        (8, "variant classification", criterion_8()),
        (9, "invariant suites", criterion_9()),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &results {
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {n} ({name}): {detail}");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
