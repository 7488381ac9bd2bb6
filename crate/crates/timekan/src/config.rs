//! Run configuration: flat dotted JSON keys layered over defaults, then
//! `--set key=value` overrides, then `--seed`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use timekan_core::data::Family;
use timekan_core::training::TrainConfig;
use timekan_core::ModelConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyChoice {
    /// `ett` when the file name starts with "ETT", `other` otherwise.
    #[default]
    Auto,
    Ett,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampChoice {
    /// Skip a leading column named `date`.
    #[default]
    Auto,
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    #[default]
    None,
    /// `sin(2 pi t / 24) + 0.5 sin(2 pi t / 96) + N(0, 0.01)`.
    TwoTone,
    /// Seven correlated hourly load/temperature-like variates.
    EttLike,
}

impl FromStr for SyntheticKind {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        serde_json::from_value(Value::String(s.into()))
            .map_err(|_| CliError::Config(format!("unknown synthetic kind {s:?} (none, two_tone, ett_like)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// CSV file; empty when a synthetic series is used.
    pub path: String,
    pub family: FamilyChoice,
    pub timestamp: TimestampChoice,
    pub synthetic: SyntheticKind,
    /// Length of the generated synthetic series.
    pub rows: usize,
    /// Seed of the synthetic noise.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: String::new(),
            family: FamilyChoice::Auto,
            timestamp: TimestampChoice::Auto,
            synthetic: SyntheticKind::None,
            rows: 4000,
            seed: 7,
        }
    }
}

impl DataConfig {
    pub fn timestamp_flag(&self) -> Option<bool> {
        match self.timestamp {
            TimestampChoice::Auto => None,
            TimestampChoice::Yes => Some(true),
            TimestampChoice::No => Some(false),
        }
    }

    pub fn family(&self) -> Family {
        match (self.family, self.synthetic) {
            (FamilyChoice::Ett, _) => Family::Ett,
            (FamilyChoice::Other, _) => Family::Other,
            (FamilyChoice::Auto, SyntheticKind::EttLike) => Family::Ett,
            (FamilyChoice::Auto, SyntheticKind::TwoTone) => Family::Other,
            (FamilyChoice::Auto, SyntheticKind::None) => {
                let name = Path::new(&self.path).file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with("ETT") {
                    Family::Ett
                } else {
                    Family::Other
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Output directory.
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            out: "timekan-out".into(),
        }
    }
}

/// Command-line layers applied on top of the defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Short symbols accepted for model keys.
const ALIASES: [(&str, &str); 7] = [
    ("model.T", "model.lookback"),
    ("model.F", "model.horizon"),
    ("model.D", "model.embed_dim"),
    ("model.k", "model.levels"),
    ("model.d", "model.window"),
    ("model.b", "model.min_order"),
    ("model.M", "model.kernel_size"),
];

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("keys are never both leaf and prefix");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

impl RunConfig {
    /// Every effective setting as flat dotted keys, in key order.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut flat = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut flat);
        flat
    }

    pub fn from_flat(flat: &BTreeMap<String, Value>) -> CliResult<Self> {
        let cfg: RunConfig =
            serde_json::from_value(unflatten(flat)).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        let has_path = !self.data.path.is_empty();
        let has_synth = self.data.synthetic != SyntheticKind::None;
        if has_path && has_synth {
            return Err(CliError::Config("set either data.path or data.synthetic, not both".into()));
        }
        Ok(())
    }

    pub fn resolve(o: &Overrides) -> CliResult<Self> {
        let mut flat = RunConfig::default().to_flat();
        let canonical = |key: &str, flat: &BTreeMap<String, Value>| -> CliResult<String> {
            let key = ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, k)| k);
            if flat.contains_key(key) {
                Ok(key.to_string())
            } else {
                Err(CliError::Config(format!("unknown config key {key:?}")))
            }
        };
        if let Some(path) = &o.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let Value::Object(map) = value else {
                return Err(CliError::Config(format!("{}: expected a JSON object of dotted keys", path.display())));
            };
            for (k, v) in map {
                let key = canonical(&k, &flat).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                flat.insert(key, v);
            }
        }
        for s in &o.sets {
            let (k, raw) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {s:?}")))?;
            let key = canonical(k.trim(), &flat)?;
            let raw = raw.trim();
            let value = if flat[&key].is_string() {
                Value::String(raw.to_string())
            } else {
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
            };
            flat.insert(key, value);
        }
        if let Some(seed) = o.seed {
            flat.insert("model.seed".into(), seed.into());
            flat.insert("train.seed".into(), seed.into());
        }
        if let Some(out) = &o.out {
            flat.insert("out".into(), Value::String(out.display().to_string()));
        }
        Self::from_flat(&flat)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    /// Writes the flat effective configuration; it can be fed back with
    /// `--config`.
    pub fn write_resolved(&self, path: &Path) -> CliResult<()> {
        crate::checkpoint::write_json(path, &self.to_flat())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use timekan_core::OrderPolicy;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::resolve(&Overrides::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn file_then_set_then_seed() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"model.k": 3, "train.lr": 0.01, "data.synthetic": "two_tone"}}"#).unwrap();
        let cfg = RunConfig::resolve(&Overrides {
            config: Some(f.path().into()),
            sets: vec!["model.k=2".into(), "model.order_policy=fixed:3".into(), "train.max_epochs=12".into()],
            seed: Some(99),
            out: None,
        })
        .unwrap();
        assert_eq!(cfg.model.levels, 2);
        assert_eq!(cfg.model.order_policy, OrderPolicy::Fixed(3));
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.max_epochs, 12);
        assert_eq!((cfg.model.seed, cfg.train.seed), (99, 99));
        assert_eq!(cfg.data.synthetic, SyntheticKind::TwoTone);
    }

    #[test]
    fn unknown_keys_rejected() {
        let o = Overrides { sets: vec!["model.depth=3".into()], ..Default::default() };
        let msg = RunConfig::resolve(&o).unwrap_err().to_string();
        assert!(msg.contains("model.depth"), "{msg}");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"train.momentum": 0.9}}"#).unwrap();
        assert!(RunConfig::resolve(&Overrides { config: Some(f.path().into()), ..Default::default() }).is_err());
    }

    #[test]
    fn resolved_file_round_trips() {
        let cfg = RunConfig::resolve(&Overrides { sets: vec!["model.D=8".into(), "data.path=ETTh1.csv".into()], ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("resolved_config.json");
        cfg.write_resolved(&p).unwrap();
        let back = RunConfig::resolve(&Overrides { config: Some(p), ..Default::default() }).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.data.family(), Family::Ett);
    }

    #[test]
    fn path_and_synthetic_are_exclusive() {
        let o = Overrides { sets: vec!["data.path=x.csv".into(), "data.synthetic=two_tone".into()], ..Default::default() };
        assert!(RunConfig::resolve(&o).is_err());
    }
}
