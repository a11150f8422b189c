//! Run configuration resolved from defaults, environment, a config file and
//! command-line flags, in increasing order of precedence.
//!
//! Keys are dotted paths into [`RunConfig`] (`joint.lambda_sparsity`). The
//! environment sets them as `MODLENS_` plus the path upper-cased with `__`
//! between levels (`MODLENS_JOINT__LAMBDA_SPARSITY=0.01`). Config files are TOML,
//! or JSON when the name ends in `.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use modlens_core::models::{ClassifierConfig, ClassifierTrainConfig};
use modlens_core::rationale::JointConfig;
use modlens_core::text::SynthConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const ENV_PREFIX: &str = "MODLENS_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes { validation: 200, test: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    pub classifier: Option<PathBuf>,
    pub rationale: Option<PathBuf>,
    /// Decisions between snapshots of the moderation store.
    pub snapshot_every: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("modlens-data"),
            classifier: None,
            rationale: None,
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds corpus generation, splitting and both training stages.
    pub seed: u64,
    pub synth: SynthConfig,
    pub split: SplitSizes,
    pub classifier: ClassifierConfig,
    pub classifier_training: ClassifierTrainConfig,
    pub joint: JointConfig,
    pub serve: ServeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            synth: SynthConfig::default(),
            split: SplitSizes::default(),
            classifier: ClassifierConfig::desk(),
            classifier_training: ClassifierTrainConfig::default(),
            joint: JointConfig::desk(),
            serve: ServeConfig::default(),
        }
    }
}

impl RunConfig {
    /// Copies the top-level seed into every component.
    fn propagate_seed(&mut self) {
        self.synth.seed = self.seed;
        self.classifier_training.seed = self.seed;
        self.joint.seed = self.seed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    Env,
    File,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub config: RunConfig,
    /// Where each leaf value came from.
    pub provenance: BTreeMap<String, Source>,
}

/// Layers to resolve.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    pub env: Vec<(String, String)>,
    pub file: Option<PathBuf>,
    /// `(dotted key, raw value)` pairs, later ones winning.
    pub flags: Vec<(String, String)>,
}

impl Layers {
    /// Environment taken from the current process.
    pub fn from_process_env() -> Self {
        Layers { env: std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect(), ..Layers::default() }
    }
}

/// Parses a raw value as a TOML scalar or array, falling back to a string.
pub fn parse_value(raw: &str) -> Value {
    let parsed = format!("v = {raw}").parse::<toml::Table>().ok().and_then(|mut t| t.remove("v"));
    match parsed {
        Some(v) => serde_json::to_value(v).expect("toml value converts"),
        None => Value::String(raw.to_string()),
    }
}

fn leaves(prefix: &str, v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(&path, child, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn same_kind(default: &Value, new: &Value) -> bool {
    match (default, new) {
        (Value::Null, _) | (_, Value::Null) => true,
        (Value::Number(_), Value::Number(_)) | (Value::Bool(_), Value::Bool(_)) | (Value::String(_), Value::String(_)) => true,
        (Value::Array(_), Value::Array(_)) => true,
        (Value::Object(_), Value::Object(_)) => true,
        _ => false,
    }
}

/// Sets `path` in `tree`; the path must name an existing value of a compatible type.
fn set(tree: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| Error::Config(format!("`{path}` is not a configuration key")))?;
        let child = map.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown configuration key `{path}`")))?;
        if i + 1 == parts.len() {
            if child.is_object() && !value.is_object() {
                return Err(Error::Config(format!("`{path}` is a section, not a value")));
            }
            if !same_kind(child, &value) {
                return Err(Error::Config(format!("`{path}`: expected a value like {child}, got {value}")));
            }
            *child = value;
            return Ok(());
        }
        node = child;
    }
    unreachable!("paths have at least one part")
}

fn apply(tree: &mut Value, provenance: &mut BTreeMap<String, Source>, path: &str, value: Value, source: Source) -> Result<()> {
    let mut touched = Vec::new();
    leaves(path, &value, &mut touched);
    if let Value::Object(map) = value {
        for (k, v) in map {
            apply(tree, provenance, &format!("{path}.{k}"), v, source)?;
        }
        return Ok(());
    }
    set(tree, path, value)?;
    for t in touched {
        provenance.insert(t, source);
    }
    Ok(())
}

fn env_key(var: &str) -> Option<String> {
    var.strip_prefix(ENV_PREFIX).map(|rest| rest.to_lowercase().replace("__", "."))
}

pub fn load_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(serde_json::to_value(table).expect("toml converts"))
    }
}

/// Resolves the layers: defaults < environment < file < flags.
pub fn resolve(layers: &Layers) -> Result<Resolved> {
    let mut tree = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let mut provenance = BTreeMap::new();
    let mut all = Vec::new();
    leaves("", &tree, &mut all);
    for k in all {
        provenance.insert(k, Source::Default);
    }

    let mut env: Vec<&(String, String)> = layers.env.iter().collect();
    env.sort();
    for (var, raw) in env {
        if let Some(key) = env_key(var) {
            apply(&mut tree, &mut provenance, &key, parse_value(raw), Source::Env)
                .map_err(|e| Error::Config(format!("environment variable {var}: {e}")))?;
        }
    }
    if let Some(path) = &layers.file {
        let Value::Object(map) = load_file(path)? else {
            return Err(Error::Config(format!("{}: expected a table of settings", path.display())));
        };
        for (k, v) in map {
            apply(&mut tree, &mut provenance, &k, v, Source::File)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
    }
    for (key, raw) in &layers.flags {
        apply(&mut tree, &mut provenance, key, parse_value(raw), Source::Flag)?;
    }

    let mut config: RunConfig = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
    config.propagate_seed();
    validate(&config)?;
    Ok(Resolved { config, provenance })
}

pub fn validate(config: &RunConfig) -> Result<()> {
    config.classifier.validate().map_err(|e| Error::Config(format!("classifier: {e}")))?;
    config.joint.validate().map_err(|e| Error::Config(format!("joint: {e}")))?;
    if config.classifier_training.batch_size < 2 || config.classifier_training.batch_size % 2 != 0 {
        return Err(Error::Config("classifier_training.batch_size must be even and at least 2".into()));
    }
    Ok(())
}

/// The run configuration as a JSON object, for embedding in artifacts.
pub fn to_json(config: &RunConfig) -> Value {
    serde_json::to_value(config).expect("config serializes")
}

/// Reads the run configuration embedded in an artifact header.
pub fn from_json(value: &Value) -> Result<RunConfig> {
    serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("embedded run config: {e}")))
}
