//! Run configuration: TOML file, command-line overrides and output paths.
//!
//! Values resolve as command-line flag, then config file, then default. When
//! a flag replaces a value that the file set differently, the pair is
//! recorded as a [`Conflict`] and reported.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use inbetween::data::Split;
use inbetween::model::{ModelConfig, Variant};
use inbetween::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, CliResult};

/// Environment variable naming the directory that relative `--out` paths and
/// default output directories are placed under.
pub const OUT_ROOT_ENV: &str = "INBETWEEN_OUT_ROOT";
/// Output root used when the variable is unset.
pub const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for every random stream the command uses.
    pub seed: u64,
    /// Dataset root (the directory holding `dataset.json`).
    pub dataset: Option<PathBuf>,
    /// Checkpoint file to load; for `train`, a checkpoint to resume from.
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub synthetic: SyntheticSection,
    pub eval: EvalSection,
    pub generate: GenerateSection,
    pub probe: ProbeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: None,
            checkpoint: None,
            out: None,
            model: ModelSection::default(),
            train: TrainSection::default(),
            synthetic: SyntheticSection::default(),
            eval: EvalSection::default(),
            generate: GenerateSection::default(),
            probe: ProbeSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `full`, `no_fusion` or `naive`.
    pub variant: Variant,
    /// Every hidden width, including the latent channel count, is divided by this.
    pub width_divisor: usize,
    pub noise_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            variant: Variant::Full,
            width_divisor: 1,
            noise_dim: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub checkpoint_every: u64,
    pub penalty_coeff: f64,
    /// Validation pairs scored at each checkpoint.
    pub val_pairs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
            batch_size: d.batch_size,
            total_steps: d.total_steps,
            checkpoint_every: d.checkpoint_every,
            penalty_coeff: d.penalty_coeff,
            val_pairs: d.val_pairs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub count: usize,
    /// Frames per video.
    pub length: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection { count: 256, length: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Any of `frechet`, `ssim_best_of_n`, `diversity`.
    pub metrics: Vec<String>,
    /// Stochastic generations per key-frame pair.
    pub n_samples: usize,
    /// Pairs taken from the split, in order; 0 means all.
    pub pairs: usize,
    /// `train`, `val` or `test`.
    pub split: String,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            metrics: vec!["frechet".into(), "ssim_best_of_n".into(), "diversity".into()],
            n_samples: 100,
            pairs: 0,
            split: "test".into(),
            bootstrap_resamples: 1000,
            ci_level: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    /// Pairs exported, from the start of the evaluation split.
    pub pairs: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection { pairs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    /// Inclusive range `a..b`, a single layer, or a comma list.
    pub layers: String,
    /// Index of the pair within the evaluation split.
    pub pair: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            layers: "17..24".into(),
            pair: 0,
        }
    }
}

/// A flag value that replaced a different value from the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub key: String,
    pub file_value: String,
    pub cli_value: String,
}

/// Leaf values of a TOML table keyed by dotted path.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .expect("section is a table");
    }
    cur.insert(last.to_string(), value);
}

fn from_table(table: toml::Table, origin: &str) -> CliResult<RunConfig> {
    RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::validation(format!("{origin}: {e}")))
}

impl RunConfig {
    /// Parses a TOML document, returning the config and the keys it set.
    pub fn parse(text: &str, origin: &str) -> CliResult<(Self, BTreeMap<String, toml::Value>)> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::validation(format!("{origin}: {e}")))?;
        let mut keys = BTreeMap::new();
        flatten("", &table, &mut keys);
        Ok((from_table(table, origin)?, keys))
    }

    pub fn load(path: &Path) -> CliResult<(Self, BTreeMap<String, toml::Value>)> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies flag overrides on top of `self`, reporting each one that
    /// contradicts a value from the file.
    pub fn apply(
        &self,
        file_keys: &BTreeMap<String, toml::Value>,
        overrides: &[(String, toml::Value)],
    ) -> CliResult<(Self, Vec<Conflict>)> {
        let mut table = match toml::Value::try_from(self) {
            Ok(toml::Value::Table(t)) => t,
            _ => return Err(CliError::runtime("configuration does not serialize to a table")),
        };
        let mut conflicts = Vec::new();
        for (key, value) in overrides {
            if let Some(prev) = file_keys.get(key) {
                if prev != value {
                    conflicts.push(Conflict {
                        key: key.clone(),
                        file_value: prev.to_string(),
                        cli_value: value.to_string(),
                    });
                }
            }
            set_path(&mut table, key, value.clone());
        }
        Ok((from_table(table, "command-line flags")?, conflicts))
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        hex(&h.finalize())
    }

    pub fn require_dataset(&self) -> CliResult<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::validation("missing required key `dataset` (set --dataset or `dataset` in the config file)"))
    }

    pub fn require_checkpoint(&self) -> CliResult<&Path> {
        self.checkpoint.as_deref().ok_or_else(|| {
            CliError::validation("missing required key `checkpoint` (set --checkpoint or `checkpoint` in the config file)")
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            variant: self.model.variant,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            checkpoint_every: t.checkpoint_every,
            penalty_coeff: t.penalty_coeff,
            seed: self.seed,
            val_pairs: t.val_pairs,
        }
    }

    pub fn model_config(&self, channels: usize, frame_size: usize) -> CliResult<ModelConfig> {
        if self.model.width_divisor == 0 {
            return Err(CliError::validation("model.width_divisor must be positive"));
        }
        if self.model.noise_dim == 0 {
            return Err(CliError::validation("model.noise_dim must be positive"));
        }
        let mut m = ModelConfig::scaled(self.model.variant, channels, self.model.width_divisor);
        m.noise_dim = self.model.noise_dim;
        m.height = frame_size;
        m.width = frame_size;
        m.validate()?;
        Ok(m)
    }

    pub fn split(&self) -> CliResult<Split> {
        parse_split(&self.eval.split)
    }
}

pub fn parse_split(s: &str) -> CliResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(CliError::validation(format!(
            "eval.split: unknown split '{other}' (expected train, val or test)"
        ))),
    }
}

/// Parses `17..24` (inclusive), `17..=24`, `20` or `17,19,24`.
pub fn parse_layers(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::validation(format!("probe.layers: cannot parse '{s}'"));
    let num = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
    let s = s.trim();
    let layers: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<CliResult<_>>()?
    };
    if layers.is_empty() {
        return Err(bad());
    }
    Ok(layers)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Output directory: absolute `--out` as given; relative `--out` under the
/// output root when the variable is set, else under the working directory;
/// no `--out` gives `<root>/<command>`.
pub fn resolve_out(out: Option<&Path>, command: &str) -> PathBuf {
    let env_root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from);
    match (out, env_root) {
        (Some(p), _) if p.is_absolute() => p.to_path_buf(),
        (Some(p), Some(root)) => root.join(p),
        (Some(p), None) => p.to_path_buf(),
        (None, root) => root.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT)).join(command),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_overrides() {
        let (cfg, keys) = RunConfig::parse("seed = 3\n[train]\nbatch_size = 4\n", "t").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(cfg.train.total_steps, 20_000);
        let (merged, conflicts) = cfg
            .apply(
                &keys,
                &[
                    ("seed".into(), toml::Value::Integer(5)),
                    ("model.variant".into(), toml::Value::String("naive".into())),
                ],
            )
            .unwrap();
        assert_eq!(merged.seed, 5);
        assert_eq!(merged.model.variant, Variant::Naive);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].key, "seed");
        let (_, none) = cfg.apply(&keys, &[("seed".into(), toml::Value::Integer(3))]).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::parse("[train]\nbatch = 4\n", "t").unwrap_err();
        assert!(matches!(e, CliError::Validation(m) if m.contains("batch")));
        assert!(RunConfig::parse("colour = 1\n", "t").is_err());
    }

    #[test]
    fn layer_ranges() {
        assert_eq!(parse_layers("17..24").unwrap(), (17..=24).collect::<Vec<_>>());
        assert_eq!(parse_layers("17..=18").unwrap(), vec![17, 18]);
        assert_eq!(parse_layers("20").unwrap(), vec![20]);
        assert_eq!(parse_layers("17, 24").unwrap(), vec![17, 24]);
        assert!(parse_layers("24..17").is_err());
        assert!(parse_layers("x").is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let (back, _) = RunConfig::parse(&text, "t").unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.train_config().validate().is_ok());
    }
}
