//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::augmentation::{
    filter_chaotic_events_with, infer_missing_events_with, train_temporal_scorer, FilterOptions, InferOptions,
};
use crate::conformance::{conformance, footprint_of_log, footprint_of_model, ComparisonTable};
use crate::dependency_mining::{filter_dependency_graph, mine_dependency_graph, DependencyGraph, FilterMode};
use crate::error::{Error, Result};
use crate::event_log::write_xes;
use crate::knowledge_graph::{build_lpg, KnowledgeGraph, LpgOptions};
use crate::pipeline::{
    load_alias, load_kg, load_log_with_context, load_model, load_rules, run_pipeline, sha256_hex, Manifest,
    PipelineConfig, PipelineInputs,
};
use crate::rule_mining::{mine_rules, Closure, RuleBase};
use crate::synth::{corrupt, dropped_events, simulate, CorruptionSpec, GroundTruthModel, INJECTED};
use crate::variant_analysis::{accuracy, classify_log, read_labels_csv, train_variant_model, VariantModel};

/// Writes to stdout, ignoring a closed pipe (`kcpm ... | head`).
fn say_raw(bytes: &[u8]) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(bytes);
}

macro_rules! say {
    ($($arg:tt)*) => {
        say_raw(format!("{}\n", format_args!($($arg)*)).as_bytes())
    };
}

#[derive(Debug, Parser)]
#[command(name = "kcpm", version, about = "Knowledge-centric process mining")]
struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to KCPM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct LogArgs {
    /// Event log (.xes or .csv).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Case context table (CSV with a case_id column).
    #[arg(long)]
    context: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct OutArg {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct RuleArgs {
    /// Knowledge graph (.tsv or .nt).
    #[arg(long)]
    kg: Option<PathBuf>,
    /// Hand-written rule base (.txt or .jsonl).
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Activity to entity mapping CSV.
    #[arg(long)]
    alias: Option<PathBuf>,
    /// Do not mine additional rules from the KG.
    #[arg(long)]
    no_mine_rules: bool,
}

#[derive(Debug, Args, Default)]
struct RuleThresholdArgs {
    #[arg(long)]
    max_body_len: Option<usize>,
    #[arg(long)]
    min_support: Option<u64>,
    #[arg(long)]
    min_pca_conf: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct DfgArgs {
    #[arg(long)]
    dependency: Option<f64>,
    #[arg(long)]
    frequency: Option<u64>,
    #[arg(long)]
    long_distance: Option<f64>,
    #[arg(long)]
    all_tasks_connected: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a log, join context, write it back as XES.
    Ingest {
        #[command(flatten)]
        log: LogArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Print log statistics as JSON.
    Stats {
        #[command(flatten)]
        log: LogArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Mine closed-path rules from a knowledge graph.
    MineRules {
        #[arg(long)]
        kg: Option<PathBuf>,
        #[command(flatten)]
        th: RuleThresholdArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Mine a dependency graph from a log.
    MineDfg {
        #[command(flatten)]
        log: LogArgs,
        #[command(flatten)]
        th: DfgArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Filter a dependency graph against a rule base.
    Filter {
        /// Dependency graph JSON written by mine-dfg.
        #[arg(long)]
        dfg: PathBuf,
        #[command(flatten)]
        rules: RuleArgs,
        #[command(flatten)]
        th: RuleThresholdArgs,
        #[arg(long)]
        mode: Option<FilterMode>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Remove chaotic events and insert inferred missing ones.
    Augment {
        #[command(flatten)]
        log: LogArgs,
        #[command(flatten)]
        rules: RuleArgs,
        #[command(flatten)]
        th: RuleThresholdArgs,
        #[arg(long)]
        theta_aug: Option<f64>,
        #[arg(long)]
        strict_ordering: bool,
        /// Skip the temporal scorer; only rule confidence admits insertions.
        #[arg(long)]
        no_scorer: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train a variant classifier on labeled cases.
    VariantsTrain {
        #[command(flatten)]
        log: LogArgs,
        /// CSV with case_id,class.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Comma-separated event attributes to materialize as graph nodes.
        #[arg(long, value_delimiter = ',')]
        attributes: Option<Vec<String>>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Partition a log with a trained variant classifier.
    VariantsClassify {
        #[command(flatten)]
        log: LogArgs,
        /// Model written by variants-train.
        #[arg(long)]
        model: PathBuf,
        /// Optional labels to report accuracy against.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Footprint conformance of a log against a model.
    Conform {
        #[command(flatten)]
        log: LogArgs,
        /// Dependency graph JSON or ground-truth model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate a ground-truth model and optionally corrupt the result.
    Synth {
        /// Ground-truth model JSON.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.0)]
        drop_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_rate: f64,
        #[arg(long, value_delimiter = ',')]
        noise_alphabet: Vec<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// ingest, mine-rules, filter chaotic events, infer missing events,
    /// mine-dfg, filter-dfg, conform.
    Pipeline {
        #[command(flatten)]
        log: LogArgs,
        #[command(flatten)]
        rules: RuleArgs,
        /// Reference model for conformance.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Stats { .. } => "stats",
            Command::MineRules { .. } => "mine-rules",
            Command::MineDfg { .. } => "mine-dfg",
            Command::Filter { .. } => "filter",
            Command::Augment { .. } => "augment",
            Command::VariantsTrain { .. } => "variants-train",
            Command::VariantsClassify { .. } => "variants-classify",
            Command::Conform { .. } => "conform",
            Command::Synth { .. } => "synth",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kcpm: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("KCPM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(format!("KCPM_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let threads = thread_count(cli.threads)?;
    if threads == Some(0) {
        return Err(Error::config("--threads must be at least 1"));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::config(e.to_string()))?;
    let name = cli.command.name();
    pool.install(|| dispatch(cli.command, name, &mut cfg))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn apply_log(cfg: &mut PipelineConfig, a: LogArgs) {
    set_path(&mut cfg.paths.log, a.log);
    set_path(&mut cfg.paths.context, a.context);
}

fn apply_rules(cfg: &mut PipelineConfig, a: RuleArgs) {
    set_path(&mut cfg.paths.kg, a.kg);
    set_path(&mut cfg.paths.rules, a.rules);
    set_path(&mut cfg.paths.alias, a.alias);
    if a.no_mine_rules {
        cfg.modes.mine_rules = false;
    }
}

fn apply_rule_thresholds(cfg: &mut PipelineConfig, a: RuleThresholdArgs) {
    set(&mut cfg.thresholds.max_body_len, a.max_body_len);
    set(&mut cfg.thresholds.min_support, a.min_support);
    set(&mut cfg.thresholds.min_pca_conf, a.min_pca_conf);
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(format!("missing --{what} (or paths.{what} in the config)")))
}

/// Collects output files and writes the manifest last.
struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    fn new(dir: &Path, manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.manifest.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn report(&mut self, command: &str, body: serde_json::Value) -> Result<()> {
        let mut v = json!({ "command": command });
        if let (Some(obj), serde_json::Value::Object(extra)) = (v.as_object_mut(), body) {
            obj.extend(extra);
        }
        self.json("report.json", &v)
    }

    fn finish(self) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}

fn manifest(command: &str, cfg: &PipelineConfig, seed: Option<u64>, inputs: &[(&str, &Option<PathBuf>)]) -> Result<Manifest> {
    let mut m = Manifest::new(command, cfg.digest(), seed);
    for (role, p) in inputs {
        if let Some(p) = p {
            m.add_input(role, p)?;
        }
    }
    Ok(m)
}

fn dfg_files(out: &mut Outputs, dg: &DependencyGraph) -> Result<()> {
    out.json("dfg.json", dg)?;
    let mut dot = Vec::new();
    dg.write_dot(&mut dot)?;
    out.write("dfg.dot", &dot)
}

fn xes_bytes(log: &crate::event_log::EventLog) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_xes(log, &mut buf)?;
    Ok(buf)
}

fn rule_base(cfg: &PipelineConfig, kg: &KnowledgeGraph) -> Result<RuleBase> {
    let hand = match &cfg.paths.rules {
        Some(p) => load_rules(p)?,
        None => RuleBase::empty(),
    };
    if cfg.modes.mine_rules && !kg.is_empty() {
        Ok(hand.merge(&mine_rules(kg, cfg.rule_params())?))
    } else {
        Ok(hand)
    }
}

fn jsonl_bytes(rb: &RuleBase) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    rb.write_jsonl(&mut buf)?;
    Ok(buf)
}

fn dispatch(command: Command, name: &str, cfg: &mut PipelineConfig) -> Result<()> {
    match command {
        Command::Ingest { log, out } => {
            apply_log(cfg, log);
            set_path(&mut cfg.paths.out, out.out);
            cfg.validate()?;
            let lp = require(&cfg.paths.log, "log")?;
            let dir = require(&cfg.paths.out, "out")?;
            let log = load_log_with_context(lp, cfg.paths.context.as_deref())?;
            let m = manifest(name, cfg, None, &[("log", &cfg.paths.log), ("context", &cfg.paths.context)])?;
            let mut o = Outputs::new(dir, m)?;
            o.write("log.xes", &xes_bytes(&log)?)?;
            o.report(name, json!({ "stats": log.stats() }))?;
            say!("ingested {} cases, {} events", log.num_traces(), log.num_events());
            o.finish()
        }
        Command::Stats { log, out } => {
            apply_log(cfg, log);
            set_path(&mut cfg.paths.out, out.out);
            cfg.validate()?;
            let log = load_log_with_context(require(&cfg.paths.log, "log")?, cfg.paths.context.as_deref())?;
            let stats = log.stats();
            say!("{}", serde_json::to_string_pretty(&stats)?);
            if let Some(dir) = &cfg.paths.out {
                let m = manifest(name, cfg, None, &[("log", &cfg.paths.log), ("context", &cfg.paths.context)])?;
                let mut o = Outputs::new(dir, m)?;
                o.report(name, json!({ "stats": stats }))?;
                o.finish()?;
            }
            Ok(())
        }
        Command::MineRules { kg, th, out } => {
            set_path(&mut cfg.paths.kg, kg);
            set_path(&mut cfg.paths.out, out.out);
            apply_rule_thresholds(cfg, th);
            cfg.validate()?;
            let kg = load_kg(require(&cfg.paths.kg, "kg")?)?;
            let dir = require(&cfg.paths.out, "out")?;
            let rb = mine_rules(&kg, cfg.rule_params())?;
            let m = manifest(name, cfg, None, &[("kg", &cfg.paths.kg)])?;
            let mut o = Outputs::new(dir, m)?;
            o.write("rules.jsonl", &jsonl_bytes(&rb)?)?;
            o.report(name, json!({ "rules": rb.len(), "thresholds": cfg.rule_params() }))?;
            let mut text = Vec::new();
            rb.write_text(&mut text)?;
            say_raw(&text);
            o.finish()
        }
        Command::MineDfg { log, th, out } => {
            apply_log(cfg, log);
            set_path(&mut cfg.paths.out, out.out);
            set(&mut cfg.thresholds.dependency, th.dependency);
            set(&mut cfg.thresholds.frequency, th.frequency);
            if th.long_distance.is_some() {
                cfg.thresholds.long_distance = th.long_distance;
            }
            cfg.modes.all_tasks_connected |= th.all_tasks_connected;
            cfg.validate()?;
            let log = load_log_with_context(require(&cfg.paths.log, "log")?, cfg.paths.context.as_deref())?;
            let dir = require(&cfg.paths.out, "out")?;
            let dg = mine_dependency_graph(&log, &cfg.mining_thresholds())?;
            let m = manifest(name, cfg, None, &[("log", &cfg.paths.log), ("context", &cfg.paths.context)])?;
            let mut o = Outputs::new(dir, m)?;
            dfg_files(&mut o, &dg)?;
            o.report(name, json!({ "activities": dg.activities.len(), "edges": dg.edges.len() }))?;
            say!("{} activities, {} edges", dg.activities.len(), dg.edges.len());
            o.finish()
        }
        Command::Filter { dfg, rules, th, mode, out } => {
            apply_rules(cfg, rules);
            apply_rule_thresholds(cfg, th);
            set_path(&mut cfg.paths.out, out.out);
            set(&mut cfg.modes.filter, mode);
            cfg.validate()?;
            let dir = require(&cfg.paths.out, "out")?;
            let dg = load_model(&dfg)?;
            let kg = cfg.paths.kg.as_deref().map(load_kg).transpose()?.unwrap_or_default();
            let rb = rule_base(cfg, &kg)?;
            let alias = load_alias(cfg.paths.alias.as_deref())?;
            let closure = Closure::compute(&rb, &kg);
            let (filtered, report) = filter_dependency_graph(&dg, &closure, &alias, cfg.modes.filter);
            let dfg_in = Some(dfg);
            let m = manifest(
                name,
                cfg,
                None,
                &[("dfg", &dfg_in), ("kg", &cfg.paths.kg), ("rules", &cfg.paths.rules), ("alias", &cfg.paths.alias)],
            )?;
            let mut o = Outputs::new(dir, m)?;
            dfg_files(&mut o, &filtered)?;
            o.write("rules.jsonl", &jsonl_bytes(&rb)?)?;
            let mut table = Vec::new();
            report.write_table(&mut table)?;
            o.write("table.txt", &table)?;
            o.report(name, serde_json::to_value(&report)?)?;
            say_raw(&table);
            o.finish()
        }
        Command::Augment {
            log,
            rules,
            th,
            theta_aug,
            strict_ordering,
            no_scorer,
            seed,
            out,
        } => {
            apply_log(cfg, log);
            apply_rules(cfg, rules);
            apply_rule_thresholds(cfg, th);
            set_path(&mut cfg.paths.out, out.out);
            set(&mut cfg.thresholds.theta_aug, theta_aug);
            set(&mut cfg.hyper.seed, seed);
            cfg.modes.strict_ordering |= strict_ordering;
            if no_scorer {
                cfg.modes.scorer = false;
            }
            cfg.validate()?;
            let dir = require(&cfg.paths.out, "out")?;
            let log = load_log_with_context(require(&cfg.paths.log, "log")?, cfg.paths.context.as_deref())?;
            let kg = cfg.paths.kg.as_deref().map(load_kg).transpose()?.unwrap_or_default();
            let rb = rule_base(cfg, &kg)?;
            let alias = load_alias(cfg.paths.alias.as_deref())?;
            let closure = Closure::compute(&rb, &kg);
            let (filtered, removed) = filter_chaotic_events_with(
                &log,
                &closure,
                &alias,
                FilterOptions {
                    strict_ordering: cfg.modes.strict_ordering,
                },
            )?;
            let scorer = if cfg.modes.scorer && filtered.alphabet().len() >= 2 {
                Some(train_temporal_scorer(&filtered, &kg, &cfg.scorer_params())?)
            } else {
                None
            };
            let (augmented, inserted) = infer_missing_events_with(
                &filtered,
                &closure,
                scorer.as_ref(),
                &alias,
                InferOptions {
                    theta_aug: cfg.thresholds.theta_aug,
                },
            )?;
            let report = removed.merge(inserted);
            let m = manifest(
                name,
                cfg,
                Some(cfg.hyper.seed),
                &[
                    ("log", &cfg.paths.log),
                    ("context", &cfg.paths.context),
                    ("kg", &cfg.paths.kg),
                    ("rules", &cfg.paths.rules),
                    ("alias", &cfg.paths.alias),
                ],
            )?;
            let mut o = Outputs::new(dir, m)?;
            o.write("augmented.xes", &xes_bytes(&augmented)?)?;
            o.write("rules.jsonl", &jsonl_bytes(&rb)?)?;
            if let Some(s) = &scorer {
                o.json("scorer.json", s)?;
            }
            o.report(
                name,
                json!({
                    "augmentation": report,
                    "raw_stats": log.stats(),
                    "augmented_stats": augmented.stats(),
                }),
            )?;
            say!(
                "removed {} event(s), inserted {} event(s)",
                report.removed_events.len(),
                report.inserted.len()
            );
            o.finish()
        }
        Command::VariantsTrain {
            log,
            labels,
            attributes,
            epochs,
            dim,
            seed,
            out,
        } => {
            apply_log(cfg, log);
            set_path(&mut cfg.paths.labels, labels);
            set_path(&mut cfg.paths.out, out.out);
            set(&mut cfg.modes.attributes, attributes);
            set(&mut cfg.hyper.epochs, epochs);
            set(&mut cfg.hyper.dim, dim);
            set(&mut cfg.hyper.seed, seed);
            cfg.validate()?;
            let dir = require(&cfg.paths.out, "out")?;
            let log = load_log_with_context(require(&cfg.paths.log, "log")?, cfg.paths.context.as_deref())?;
            let labels = read_labels_csv(fs::File::open(require(&cfg.paths.labels, "labels")?)?)?;
            let opts = LpgOptions {
                attribute_nodes: cfg.modes.attributes.clone(),
                ..LpgOptions::default()
            };
            let lpg = build_lpg(&log, &KnowledgeGraph::new(), &opts);
            let model = train_variant_model(&lpg, &labels, &cfg.variant_params())?;
            let part = classify_log(&model, &lpg, &log);
            let acc = accuracy(&part, &labels);
            let m = manifest(
                name,
                cfg,
                Some(cfg.hyper.seed),
                &[("log", &cfg.paths.log), ("context", &cfg.paths.context), ("labels", &cfg.paths.labels)],
            )?;
            let mut o = Outputs::new(dir, m)?;
            o.json("model.json", &model)?;
            o.report(
                name,
                json!({
                    "classes": model.classes.iter().map(|c| &c.id).collect::<Vec<_>>(),
                    "training_accuracy": acc,
                    "final_loss": model.loss_history.last(),
                }),
            )?;
            say!("trained on {} labeled cases, training accuracy {acc:.3}", labels.len());
            o.finish()
        }
        Command::VariantsClassify {
            log,
            model,
            labels,
            out,
        } => {
            apply_log(cfg, log);
            set_path(&mut cfg.paths.labels, labels);
            set_path(&mut cfg.paths.out, out.out);
            cfg.validate()?;
            let dir = require(&cfg.paths.out, "out")?;
            let log = load_log_with_context(require(&cfg.paths.log, "log")?, cfg.paths.context.as_deref())?;
            let vm = VariantModel::load(fs::File::open(&model)?)?;
            let opts = LpgOptions {
                attribute_nodes: vm.attribute_keys.clone(),
                ..LpgOptions::default()
            };
            let lpg = build_lpg(&log, &KnowledgeGraph::new(), &opts);
            let part = classify_log(&vm, &lpg, &log);
            let acc = match &cfg.paths.labels {
                Some(p) => Some(accuracy(&part, &read_labels_csv(fs::File::open(p)?)?)),
                None => None,
            };
            let model_in = Some(model);
            let m = manifest(
                name,
                cfg,
                None,
                &[
                    ("log", &cfg.paths.log),
                    ("context", &cfg.paths.context),
                    ("model", &model_in),
                    ("labels", &cfg.paths.labels),
                ],
            )?;
            let mut o = Outputs::new(dir, m)?;
            let mut csv = Vec::new();
            part.write_csv(&mut csv)?;
            o.write("partition.csv", &csv)?;
            let sizes: BTreeMap<&str, usize> = part.cells().into_iter().map(|(k, v)| (k, v.len())).collect();
            o.report(name, json!({ "partition": part, "cell_sizes": sizes, "accuracy": acc }))?;
            for (class, n) in &sizes {
                say!("{class}\t{n}");
            }
            o.finish()
        }
        Command::Conform { log, model, out } => {
            apply_log(cfg, log);
            set_path(&mut cfg.paths.model, model);
            set_path(&mut cfg.paths.out, out.out);
            cfg.validate()?;
            let log = load_log_with_context(require(&cfg.paths.log, "log")?, cfg.paths.context.as_deref())?;
            let dg = load_model(require(&cfg.paths.model, "model")?)?;
            let report = conformance(&footprint_of_log(&log)?, &footprint_of_model(&dg));
            let mut table = ComparisonTable::default();
            table.push("Event log", report.clone());
            let text = table.to_text();
            say_raw(text.as_bytes());
            if let Some(dir) = &cfg.paths.out {
                let m = manifest(name, cfg, None, &[("log", &cfg.paths.log), ("model", &cfg.paths.model)])?;
                let mut o = Outputs::new(dir, m)?;
                o.write("table.txt", text.as_bytes())?;
                o.report(name, serde_json::to_value(&report)?)?;
                o.finish()?;
            }
            Ok(())
        }
        Command::Synth {
            model,
            cases,
            seed,
            drop_rate,
            noise_rate,
            noise_alphabet,
            out,
        } => {
            set_path(&mut cfg.paths.model, Some(model));
            set_path(&mut cfg.paths.out, out.out);
            set(&mut cfg.hyper.seed, seed);
            cfg.validate()?;
            let dir = require(&cfg.paths.out, "out")?;
            let gt = GroundTruthModel::read_json(fs::File::open(require(&cfg.paths.model, "model")?)?)?;
            let spec = CorruptionSpec {
                drop_rate,
                noise_rate,
                noise_alphabet,
                seed: cfg.hyper.seed,
            };
            spec.validate()?;
            let clean = simulate(&gt, cases, cfg.hyper.seed)?;
            let m = manifest(name, cfg, Some(cfg.hyper.seed), &[("model", &cfg.paths.model)])?;
            let mut o = Outputs::new(dir, m)?;
            o.write("log.xes", &xes_bytes(&clean)?)?;
            let mut body = json!({
                "cases": clean.num_traces(),
                "events": clean.num_events(),
                "corruption": spec,
            });
            if drop_rate > 0.0 || noise_rate > 0.0 {
                let bad = corrupt(&clean, &spec)?;
                o.write("corrupted.xes", &xes_bytes(&bad)?)?;
                let injected = bad.traces().iter().flat_map(|t| t.events()).filter(|e| e.flag(INJECTED)).count();
                body["corrupted_cases"] = json!(bad.num_traces());
                body["corrupted_events"] = json!(bad.num_events());
                body["dropped"] = json!(dropped_events(&clean, &bad).len());
                body["injected"] = json!(injected);
            }
            o.report(name, body)?;
            say!("simulated {} cases, {} events", clean.num_traces(), clean.num_events());
            o.finish()
        }
        Command::Pipeline {
            log,
            rules,
            model,
            seed,
            out,
        } => {
            apply_log(cfg, log);
            apply_rules(cfg, rules);
            set_path(&mut cfg.paths.model, model);
            set_path(&mut cfg.paths.out, out.out);
            set(&mut cfg.hyper.seed, seed);
            cfg.validate()?;
            let dir = require(&cfg.paths.out, "out")?.to_path_buf();
            require(&cfg.paths.log, "log")?;
            let inputs = PipelineInputs::from_config(cfg)?;
            let result = run_pipeline(&inputs, cfg)?;
            let m = manifest(
                name,
                cfg,
                Some(cfg.hyper.seed),
                &[
                    ("log", &cfg.paths.log),
                    ("context", &cfg.paths.context),
                    ("kg", &cfg.paths.kg),
                    ("rules", &cfg.paths.rules),
                    ("alias", &cfg.paths.alias),
                    ("model", &cfg.paths.model),
                ],
            )?;
            let mut o = Outputs::new(&dir, m)?;
            dfg_files(&mut o, &result.dfg)?;
            o.write("rules.jsonl", &jsonl_bytes(&result.rules)?)?;
            o.write("augmented.xes", &xes_bytes(&result.augmented)?)?;
            let text = result.report.table.to_text();
            o.write("table.txt", text.as_bytes())?;
            o.report(name, serde_json::to_value(&result.report)?)?;
            say_raw(text.as_bytes());
            o.finish()
        }
    }
}
