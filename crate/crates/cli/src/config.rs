//! Experiment configuration: one JSON document, overridable per field with
//! dotted paths.

use std::path::{Path, PathBuf};

use bcwi_core::data::{FeaturizerConfig, ScenarioKind, SplitSizes};
use bcwi_core::fisher::{Normalization, DEFAULT_EPSILON_FLOOR};
use bcwi_core::train::TrainConfig;
use bcwi_core::Activation;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "BCWI_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config")]
    Parse(#[from] serde_json::Error),
}

fn field(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        msg: msg.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    Synthetic {
        num_classes: usize,
        per_class: usize,
        vocab_per_class: usize,
        noise_rate: f64,
        seed: u64,
    },
    Jsonl {
        path: PathBuf,
        #[serde(default = "default_text_field")]
        text_field: String,
        #[serde(default = "default_label_field")]
        label_field: String,
    },
}

fn default_text_field() -> String {
    "text".into()
}

fn default_label_field() -> String {
    "label".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub source: CorpusSource,
    pub sizes: SplitSizes,
    /// Labels added by an Add_Classes update. Empty means the last
    /// `num_new_classes` labels in first-appearance order.
    pub new_classes: Vec<String>,
    pub num_new_classes: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::AddData,
            source: CorpusSource::Synthetic {
                num_classes: 6,
                per_class: 200,
                vocab_per_class: 150,
                noise_rate: 0.3,
                seed: 0,
            },
            sizes: SplitSizes {
                old_train: 300,
                new_train: 200,
                old_dev: 100,
                new_dev: 50,
                test: 400,
            },
            new_classes: Vec::new(),
            num_new_classes: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 64,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleConfigs {
    pub old: TrainConfig,
    pub target: TrainConfig,
    pub new: TrainConfig,
}

impl Default for RoleConfigs {
    fn default() -> Self {
        RoleConfigs {
            old: TrainConfig::full(),
            target: TrainConfig::full(),
            new: TrainConfig::update(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    PriorWd,
    Ewc,
    Mixout,
    Distill,
    BiasOnly,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::PriorWd => "prior_wd",
            BaselineKind::Ewc => "ewc",
            BaselineKind::Mixout => "mixout",
            BaselineKind::Distill => "distill",
            BaselineKind::BiasOnly => "bias_only",
        }
    }
}

/// A training-time baseline and its strength grid, weakest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: BaselineKind,
    #[serde(default)]
    pub strengths: Vec<f64>,
    #[serde(default = "default_focal_boost")]
    pub focal_boost: f64,
}

fn default_focal_boost() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FisherData {
    /// Old training and dev examples.
    Old,
    /// Updated training and dev examples the old model has classes for.
    Updated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherConfig {
    pub data: FisherData,
    pub normalization: Normalization,
    pub epsilon_floor: f64,
}

impl Default for FisherConfig {
    fn default() -> Self {
        FisherConfig {
            data: FisherData::Old,
            normalization: Normalization::MeanOne,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub featurizer: FeaturizerConfig,
    pub model: ModelConfig,
    pub train: RoleConfigs,
    pub baselines: Vec<BaselineConfig>,
    pub fisher: FisherConfig,
    pub alpha_step: f64,
    /// Dev accuracy retention for α selection; `None` picks 0.9 for
    /// Add_Data and 0.95 for Add_Classes.
    pub retention: Option<f64>,
    pub soup_sizes: Vec<usize>,
    pub num_seeds: usize,
    /// First seed; seeds run `seed_offset..seed_offset + num_seeds`.
    pub seed_offset: u64,
    /// Seed of the shared initialization all old and target models start from.
    pub pretrain_seed: u64,
    /// Worker threads for the seed pool; 0 uses every core.
    pub workers: usize,
    /// Write checkpoints for every model (old, target, new, Fisher).
    pub save_checkpoints: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            featurizer: FeaturizerConfig::default(),
            model: ModelConfig::default(),
            train: RoleConfigs::default(),
            baselines: vec![
                BaselineConfig {
                    method: BaselineKind::PriorWd,
                    strengths: vec![0.01, 0.1, 1.0, 10.0],
                    focal_boost: 1.0,
                },
                BaselineConfig {
                    method: BaselineKind::Ewc,
                    strengths: vec![0.1, 1.0, 10.0, 100.0],
                    focal_boost: 1.0,
                },
                BaselineConfig {
                    method: BaselineKind::Mixout,
                    strengths: vec![0.1, 0.3, 0.5, 0.7],
                    focal_boost: 1.0,
                },
                BaselineConfig {
                    method: BaselineKind::Distill,
                    strengths: vec![0.5, 1.0, 2.0, 4.0],
                    focal_boost: 1.0,
                },
                BaselineConfig {
                    method: BaselineKind::BiasOnly,
                    strengths: Vec::new(),
                    focal_boost: 1.0,
                },
            ],
            fisher: FisherConfig::default(),
            alpha_step: 0.05,
            retention: None,
            soup_sizes: vec![4],
            num_seeds: 10,
            seed_offset: 0,
            pretrain_seed: 0,
            workers: 0,
            save_checkpoints: true,
            output_dir: PathBuf::from("runs/experiment"),
        }
    }
}

impl ExperimentConfig {
    pub fn retention(&self) -> f64 {
        self.retention.unwrap_or(match self.scenario.kind {
            ScenarioKind::AddData => 0.9,
            ScenarioKind::AddClasses => 0.95,
        })
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.seed_offset..self.seed_offset + self.num_seeds as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_seeds < 1 {
            return Err(field("num_seeds", "must be at least 1"));
        }
        let r = self.retention();
        if !(r > 0.0 && r <= 1.0) {
            return Err(field("retention", format!("{r} is outside (0, 1]")));
        }
        if self.soup_sizes.iter().any(|&m| m < 1) {
            return Err(field("soup_sizes", "every soup size must be at least 1"));
        }
        bcwi_core::eval::alpha_grid(self.alpha_step).map_err(|e| field("alpha_step", e.to_string()))?;
        self.featurizer.validate().map_err(|e| field("featurizer", e.to_string()))?;
        for (role, cfg) in [("old", &self.train.old), ("target", &self.train.target), ("new", &self.train.new)] {
            cfg.validate().map_err(|e| field(&format!("train.{role}"), e.to_string()))?;
        }
        if !(self.fisher.epsilon_floor > 0.0) {
            return Err(field("fisher.epsilon_floor", "must be positive"));
        }
        for (i, b) in self.baselines.iter().enumerate() {
            let name = format!("baselines[{i}].strengths");
            match b.method {
                BaselineKind::BiasOnly => {}
                _ if b.strengths.is_empty() => return Err(field(&name, "needs at least one strength")),
                BaselineKind::Mixout if b.strengths.iter().any(|p| !(0.0..1.0).contains(p)) => {
                    return Err(field(&name, "mixout p must be in [0, 1)"))
                }
                _ if b.strengths.iter().any(|s| !(*s >= 0.0)) => return Err(field(&name, "strengths must be non-negative")),
                _ if b.strengths.windows(2).any(|w| w[0] >= w[1]) => {
                    return Err(field(&name, "must be strictly increasing (weakest first)"))
                }
                _ => {}
            }
        }
        let s = &self.scenario;
        if s.kind == ScenarioKind::AddClasses && s.new_classes.is_empty() && s.num_new_classes < 1 {
            return Err(field("scenario.num_new_classes", "must be at least 1"));
        }
        if let CorpusSource::Synthetic { num_classes, noise_rate, .. } = s.source {
            if num_classes < 2 {
                return Err(field("scenario.source.synthetic.num_classes", "must be at least 2"));
            }
            if !(0.0..1.0).contains(&noise_rate) {
                return Err(field("scenario.source.synthetic.noise_rate", "must be in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Sets `path` (dot separated) in a JSON tree, creating objects on the way.
/// The value is parsed as JSON and falls back to a plain string.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<(), ConfigError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if key.is_empty() {
            return Err(field(path, "empty path segment"));
        }
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let last = keys.peek().is_none();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| field(path, format!("`{key}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| field(path, format!("index {idx} out of range ({len} items)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(field(path, format!("`{key}` is not inside an object"))),
        };
    }
    Ok(())
}

/// Deep-merges `overlay` into `base`. Objects merge key by key, except when
/// no key is shared: that is a different enum variant and replaces `base`.
pub fn merge_json(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) if o.keys().any(|k| b.contains_key(k)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses `key=value` override strings.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(field(s, "expected dotted.path=value")),
    }
}

/// Reads a config file (or the defaults when `path` is `None`), applies the
/// overrides and the output-directory environment variable, and validates.
pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigError> {
    let mut tree = serde_json::to_value(ExperimentConfig::default())?;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
            path: p.to_path_buf(),
            source,
        })?;
        merge_json(&mut tree, serde_json::from_str(&text)?);
    }
    for (k, v) in overrides {
        apply_override(&mut tree, k, v)?;
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(tree)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let mut tree = serde_json::to_value(ExperimentConfig::default()).unwrap();
        apply_override(&mut tree, "train.new.epochs", "3").unwrap();
        apply_override(&mut tree, "scenario.kind", "add_classes").unwrap();
        apply_override(&mut tree, "baselines.0.strengths", "[1, 2]").unwrap();
        let cfg: ExperimentConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(cfg.train.new.epochs, 3);
        assert_eq!(cfg.scenario.kind, ScenarioKind::AddClasses);
        assert_eq!(cfg.baselines[0].strengths, vec![1.0, 2.0]);
        assert_eq!(cfg.retention(), 0.95);
    }

    #[test]
    fn overrides_create_missing_objects() {
        let mut tree = Value::Object(Default::default());
        apply_override(&mut tree, "train.old.base_lr", "0.1").unwrap();
        let cfg: ExperimentConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(cfg.train.old.base_lr, 0.1);
        assert_eq!(cfg.train.old.epochs, 30);
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = ExperimentConfig {
            retention: Some(0.0),
            ..ExperimentConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("retention"), "{err}");
        let cfg = ExperimentConfig {
            alpha_step: 0.3,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("alpha_step"));
        let mut cfg = ExperimentConfig::default();
        cfg.baselines[0].strengths = vec![1.0, 0.1];
        assert!(cfg.validate().unwrap_err().to_string().contains("baselines[0].strengths"));
    }

    #[test]
    fn file_values_merge_over_defaults() {
        let mut tree = serde_json::to_value(ExperimentConfig::default()).unwrap();
        let file: Value = serde_json::from_str(r#"{"scenario": {"source": {"jsonl": {"path": "c.jsonl"}}, "sizes": {"test": 10}}}"#).unwrap();
        merge_json(&mut tree, file);
        apply_override(&mut tree, "scenario.source.jsonl.text_field", "utt").unwrap();
        let cfg: ExperimentConfig = serde_json::from_value(tree).unwrap();
        assert_eq!(cfg.scenario.sizes.test, 10);
        assert_eq!(cfg.scenario.sizes.old_train, 300);
        match cfg.scenario.source {
            CorpusSource::Jsonl { path, text_field, label_field } => {
                assert_eq!(path, PathBuf::from("c.jsonl"));
                assert_eq!(text_field, "utt");
                assert_eq!(label_field, "label");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let tree: Value = serde_json::from_str(r#"{"num_seed": 3}"#).unwrap();
        assert!(serde_json::from_value::<ExperimentConfig>(tree).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            num_seeds: 2,
            ..a.clone()
        };
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
