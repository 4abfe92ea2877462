//! Run configuration: a JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use regnn::explain::{ImportanceStat, DEFAULT_BINS, DEFAULT_SAMPLES};
use regnn::linear::PercentileGroup;
use regnn::model::TrainConfig;
use regnn::synth::SynthSpec;
use regnn::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub samples: usize,
    pub bins: usize,
    pub statistic: ImportanceStat,
    /// Defaults to every moderator in schema order.
    pub features: Option<Vec<String>>,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            bins: DEFAULT_BINS,
            statistic: ImportanceStat::Range,
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginsSettings {
    /// Focal grid size, spread between its 5th and 95th percentiles.
    pub points: usize,
    pub groups: Vec<PercentileGroup>,
}

impl Default for MarginsSettings {
    fn default() -> Self {
        Self {
            points: 11,
            groups: PercentileGroup::defaults(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every component seed when set.
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub explain: ExplainSettings,
    pub margins: MarginsSettings,
}

/// Flag values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub dropout: Option<f64>,
    pub split: Option<f64>,
    pub bins: Option<usize>,
    pub samples: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn resolve(file: Option<&Path>, flags: Overrides) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        macro_rules! take {
            ($($dst:expr => $src:expr),* $(,)?) => {
                $(if let Some(v) = $src { $dst = v; })*
            };
        }
        take! {
            cfg.train.epochs => flags.epochs,
            cfg.train.lr => flags.lr,
            cfg.train.dropout => flags.dropout,
            cfg.train.split_ratio => flags.split,
            cfg.explain.bins => flags.bins,
            cfg.explain.samples => flags.samples,
        }
        cfg.seed = flags.seed.or(cfg.seed);
        cfg.data = flags.data.or(cfg.data);
        cfg.schema = flags.schema.or(cfg.schema);
        cfg.out = flags.out.or(cfg.out);
        cfg.checkpoint = flags.checkpoint.or(cfg.checkpoint);
        if let Some(seed) = cfg.seed {
            cfg.train.seed = seed;
            cfg.synth.seed = seed;
        }
        Ok(cfg)
    }

    /// The seed explain and report files record.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required --{flag}")))
    }

    /// Output directory, created if absent.
    pub fn out_dir(&self) -> Result<&Path> {
        let out = self.require(&self.out, "out")?;
        std::fs::create_dir_all(out)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 3, "train": {"epochs": 20, "lr": 0.01}, "explain": {"bins": 5}}"#).unwrap();
        let flags = Overrides {
            epochs: Some(7),
            seed: Some(9),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(Some(&path), flags).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.explain.bins, 5);
        assert_eq!((cfg.train.seed, cfg.synth.seed, cfg.seed()), (9, 9, 9));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"epochz": 3}"#).unwrap();
        assert!(matches!(RunConfig::resolve(Some(&path), Overrides::default()), Err(Error::Config(_))));
    }
}
