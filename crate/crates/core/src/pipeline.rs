//! End-to-end repair and comparison pipeline, its configuration and the
//! run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::{
    filter_chaotic_events_with, infer_missing_events_with, train_temporal_scorer, AugmentationReport, FilterOptions,
    InferOptions, ScorerParams, TemporalScorer, TimeBucket,
};
use crate::conformance::{conformance, footprint_of_log, footprint_of_model, ComparisonTable};
use crate::dependency_mining::{
    filter_dependency_graph, mine_dependency_graph, DependencyGraph, FilterMode, FilterReport, MiningThresholds,
};
use crate::error::{Error, Result};
use crate::event_log::{
    annotate_context, parse_csv, parse_xes, read_context_table, CsvMapping, EventLog, LogStats, XesOptions,
};
use crate::knowledge_graph::{Alias, KnowledgeGraph, TripleFormat};
use crate::rule_mining::{mine_rules, Closure, MiningParams, RuleBase};
use crate::synth::GroundTruthModel;
use crate::variant_analysis::VariantParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub log: Option<PathBuf>,
    pub kg: Option<PathBuf>,
    /// Hand-written rule base (text or JSON lines).
    pub rules: Option<PathBuf>,
    /// `activity,entity` CSV. Without it activities map to themselves.
    pub alias: Option<PathBuf>,
    pub context: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Reference process model: dependency-graph JSON or ground-truth model JSON.
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub dependency: f64,
    pub frequency: u64,
    pub long_distance: Option<f64>,
    pub min_support: u64,
    pub min_pca_conf: f64,
    pub max_body_len: usize,
    pub theta_aug: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let m = MiningParams::default();
        Thresholds {
            dependency: 0.5,
            frequency: 1,
            long_distance: None,
            min_support: m.min_support,
            min_pca_conf: m.min_pca_conf,
            max_body_len: m.max_body_len,
            theta_aug: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Modes {
    pub filter: FilterMode,
    pub strict_ordering: bool,
    /// Mine rules from the KG and merge them with the hand-written ones.
    pub mine_rules: bool,
    /// Train a temporal scorer for embedding-based acceptance.
    pub scorer: bool,
    pub all_tasks_connected: bool,
    /// Event attributes materialized as graph nodes for variant analysis.
    pub attributes: Vec<String>,
}

impl Default for Modes {
    fn default() -> Self {
        Modes {
            filter: FilterMode::Permissive,
            strict_ordering: false,
            mine_rules: true,
            scorer: true,
            all_tasks_connected: false,
            attributes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyper {
    pub dim: usize,
    pub epochs: usize,
    pub margin: f64,
    pub lr: f64,
    pub seed: u64,
    pub negatives: usize,
    pub ce_weight: f64,
    pub bucket: TimeBucket,
}

impl Default for Hyper {
    fn default() -> Self {
        let s = ScorerParams::default();
        Hyper {
            dim: s.dim,
            epochs: s.epochs,
            margin: s.margin,
            lr: s.learning_rate,
            seed: s.seed,
            negatives: s.negatives,
            ce_weight: VariantParams::default().ce_weight,
            bucket: s.bucket,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub thresholds: Thresholds,
    pub modes: Modes,
    pub hyper: Hyper,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths in it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.log,
            &mut p.kg,
            &mut p.rules,
            &mut p.alias,
            &mut p.context,
            &mut p.labels,
            &mut p.model,
            &mut p.out,
        ] {
            if let Some(rel) = slot.as_ref().filter(|x| x.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mining_thresholds().validate()?;
        self.rule_params().validate()?;
        InferOptions {
            theta_aug: self.thresholds.theta_aug,
        }
        .validate()?;
        self.scorer_params().validate()?;
        self.variant_params().validate()?;
        Ok(())
    }

    pub fn mining_thresholds(&self) -> MiningThresholds {
        MiningThresholds {
            dependency_threshold: self.thresholds.dependency,
            frequency_threshold: self.thresholds.frequency,
            all_tasks_connected: self.modes.all_tasks_connected,
            long_distance_threshold: self.thresholds.long_distance,
        }
    }

    pub fn rule_params(&self) -> MiningParams {
        MiningParams {
            max_body_len: self.thresholds.max_body_len,
            min_support: self.thresholds.min_support,
            min_pca_conf: self.thresholds.min_pca_conf,
        }
    }

    pub fn scorer_params(&self) -> ScorerParams {
        ScorerParams {
            dim: self.hyper.dim,
            margin: self.hyper.margin,
            learning_rate: self.hyper.lr,
            epochs: self.hyper.epochs,
            negatives: self.hyper.negatives,
            seed: self.hyper.seed,
            bucket: self.hyper.bucket,
        }
    }

    pub fn variant_params(&self) -> VariantParams {
        VariantParams {
            dim: self.hyper.dim,
            margin: self.hyper.margin,
            learning_rate: self.hyper.lr,
            epochs: self.hyper.epochs,
            seed: self.hyper.seed,
            ce_weight: self.hyper.ce_weight,
            ..VariantParams::default()
        }
    }

    /// SHA-256 of the canonical JSON form of the effective settings. Paths
    /// are left out; inputs are identified by their content digests instead.
    pub fn digest(&self) -> String {
        let settings = PipelineConfig {
            paths: Paths::default(),
            ..self.clone()
        };
        sha256_hex(&serde_json::to_vec(&settings).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads XES (`.xes`) or CSV (`.csv`, columns mapped from the header).
pub fn load_log(path: &Path) -> Result<EventLog> {
    match extension(path).as_str() {
        "xes" | "xml" => parse_xes(open(path)?, XesOptions::default()),
        "csv" => {
            let mut reader = csv::Reader::from_reader(open(path)?);
            let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
            parse_csv(open(path)?, &CsvMapping::auto_from_headers(&headers))
        }
        other => Err(Error::config(format!("unsupported log format {other:?} (use .xes or .csv)"))),
    }
}

/// Loads a log and, when given, joins a context table onto it.
pub fn load_log_with_context(log: &Path, context: Option<&Path>) -> Result<EventLog> {
    let log = load_log(log)?;
    match context {
        Some(ctx) => Ok(annotate_context(&log, &read_context_table(open(ctx)?)?).0),
        None => Ok(log),
    }
}

/// Reads TSV (default) or N-Triples (`.nt`).
pub fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    let format = if extension(path) == "nt" {
        TripleFormat::NTriples
    } else {
        TripleFormat::Tsv
    };
    KnowledgeGraph::load(open(path)?, format)
}

pub fn load_rules(path: &Path) -> Result<RuleBase> {
    if extension(path) == "jsonl" {
        RuleBase::read_jsonl(open(path)?)
    } else {
        RuleBase::read_text(open(path)?)
    }
}

pub fn load_alias(path: Option<&Path>) -> Result<Alias> {
    match path {
        Some(p) => Alias::read_csv(open(p)?, true),
        None => Ok(Alias::identity()),
    }
}

/// A dependency-graph JSON, or a ground-truth model JSON converted to its graph.
pub fn load_model(path: &Path) -> Result<DependencyGraph> {
    let value: serde_json::Value = serde_json::from_reader(open(path)?)?;
    if value.get("edges").is_some() {
        return Ok(serde_json::from_value(value)?);
    }
    let gt: GroundTruthModel = serde_json::from_value(value)?;
    gt.validate()?;
    Ok(gt.dependency_graph())
}

/// Everything the pipeline consumes, already loaded.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub log: EventLog,
    pub kg: KnowledgeGraph,
    pub rules: RuleBase,
    pub alias: Alias,
    /// Model the logs are compared against; defaults to the filtered graph
    /// mined from the augmented log.
    pub reference: Option<DependencyGraph>,
}

impl PipelineInputs {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let p = &cfg.paths;
        let log_path = p.log.as_deref().ok_or_else(|| Error::config("no log path given"))?;
        Ok(PipelineInputs {
            log: load_log_with_context(log_path, p.context.as_deref())?,
            kg: p.kg.as_deref().map(load_kg).transpose()?.unwrap_or_default(),
            rules: p.rules.as_deref().map(load_rules).transpose()?.unwrap_or_else(RuleBase::empty),
            alias: load_alias(p.alias.as_deref())?,
            reference: p.model.as_deref().map(load_model).transpose()?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub raw_stats: LogStats,
    pub augmented_stats: LogStats,
    pub rules: usize,
    pub mined_rules: usize,
    pub augmentation: AugmentationReport,
    pub dfg_filter: FilterReport,
    pub table: ComparisonTable,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub rules: RuleBase,
    pub filtered: EventLog,
    pub augmented: EventLog,
    pub scorer: Option<TemporalScorer>,
    pub dfg: DependencyGraph,
    pub report: PipelineReport,
}

/// ingest, mine rules, remove chaotic events, infer missing events, mine and
/// filter the dependency graph, then compare raw and augmented logs.
pub fn run_pipeline(inputs: &PipelineInputs, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mined = if cfg.modes.mine_rules && !inputs.kg.is_empty() {
        mine_rules(&inputs.kg, cfg.rule_params())?
    } else {
        RuleBase::empty()
    };
    let rules = inputs.rules.merge(&mined);
    let closure = Closure::compute(&rules, &inputs.kg);

    let (filtered, removed) = filter_chaotic_events_with(
        &inputs.log,
        &closure,
        &inputs.alias,
        FilterOptions {
            strict_ordering: cfg.modes.strict_ordering,
        },
    )?;
    let scorer = if cfg.modes.scorer && filtered.alphabet().len() >= 2 {
        Some(train_temporal_scorer(&filtered, &inputs.kg, &cfg.scorer_params())?)
    } else {
        None
    };
    let (augmented, inserted) = infer_missing_events_with(
        &filtered,
        &closure,
        scorer.as_ref(),
        &inputs.alias,
        InferOptions {
            theta_aug: cfg.thresholds.theta_aug,
        },
    )?;

    let th = cfg.mining_thresholds();
    let mined_dg = mine_dependency_graph(&augmented, &th)?;
    let (dfg, dfg_filter) = filter_dependency_graph(&mined_dg, &closure, &inputs.alias, cfg.modes.filter);

    let reference = footprint_of_model(inputs.reference.as_ref().unwrap_or(&dfg));
    let mut table = ComparisonTable::default();
    table.push("Raw event log", conformance(&footprint_of_log(&inputs.log)?, &reference));
    table.push("Augmented event log", conformance(&footprint_of_log(&augmented)?, &reference));

    let report = PipelineReport {
        raw_stats: inputs.log.stats(),
        augmented_stats: augmented.stats(),
        rules: rules.len(),
        mined_rules: mined.len(),
        augmentation: removed.merge(inserted),
        dfg_filter,
        table,
    };
    Ok(PipelineOutput {
        rules,
        filtered,
        augmented,
        scorer,
        dfg,
        report,
    })
}

/// Provenance of a run: enough to check that two runs are comparable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    /// Input role -> SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file name -> SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config_sha256: String, seed: Option<u64>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256,
            seed,
            ..Default::default()
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.to_string(), file_digest(path)?);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        let cfg = PipelineConfig::from_toml_str("[thresholds]\ndependency = 0.9\n[modes]\nfilter = \"strict\"\n").unwrap();
        assert_eq!(cfg.thresholds.dependency, 0.9);
        assert_eq!(cfg.modes.filter, FilterMode::Strict);
        for bad in [
            "[thresholds]\nbogus = 1\n",
            "[nope]\n",
            "[thresholds]\ndependency = 1.5\n",
            "[thresholds]\nmin_pca_conf = -0.1\n",
            "[hyper]\ndim = 1\n",
            "[thresholds]\ntheta_aug = -1.0\n",
        ] {
            assert!(matches!(PipelineConfig::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn digest_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.hyper.seed += 1;
        assert_ne!(a.digest(), b.digest());
    }
}
