//! Versioned key-value configuration.
//!
//! ```text
//! #claimlens-config-v1
//! data_dir = "data"
//!
//! [paths]
//! bundle = "bundle.model"
//!
//! [service]
//! port = 7878
//! ```
//!
//! Relative paths resolve against the data root, which `CLAIMLENS_DATA_DIR`
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bundle::BundleSpec;
use crate::corpus::{read_file, write_file};
use crate::error::{Error, Result};
use crate::filtering::QidMode;
use crate::neural::TrainConfig;
use crate::tracker::TrackerConfig;

pub const CONFIG_HEADER: &str = "#claimlens-config-v1";
pub const DATA_DIR_ENV: &str = "CLAIMLENS_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub schema: PathBuf,
    pub kb: PathBuf,
    pub questions: PathBuf,
    pub corpus: PathBuf,
    pub bundle: PathBuf,
    pub sessions: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            schema: "schema.jsonl".into(),
            kb: "kb.jsonl".into(),
            questions: "questions.txt".into(),
            corpus: "corpus".into(),
            bundle: "bundle.model".into(),
            sessions: "sessions".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    /// Question-classifier modes to train; the last one is used at run time.
    pub modes: Vec<QidMode>,
    pub trainable_tagger: bool,
    pub segmentation_scorer: bool,
    /// Fraction of the corpus held out from training.
    pub test_fraction: f64,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        let spec = BundleSpec::default();
        ModelsConfig {
            modes: spec.modes,
            trainable_tagger: spec.trainable_tagger,
            segmentation_scorer: spec.segmentation_scorer,
            test_fraction: 0.3,
        }
    }
}

impl ModelsConfig {
    pub fn spec(&self) -> BundleSpec {
        BundleSpec {
            modes: self.modes.clone(),
            trainable_tagger: self.trainable_tagger,
            segmentation_scorer: self.segmentation_scorer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 7878,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub data_dir: PathBuf,
    pub paths: Paths,
    pub models: ModelsConfig,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub service: ServiceConfig,
}

impl Config {
    /// Parses a config whose first line is the version header. Missing keys
    /// take their defaults; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        match text.lines().next() {
            Some(first) if first.trim_end() == CONFIG_HEADER => {}
            Some(first) => {
                return Err(Error::VersionMismatch(format!(
                    "expected config header `{CONFIG_HEADER}`, found `{first}`"
                )))
            }
            None => return Err(Error::EmptyInput("config file is empty".into())),
        }
        let value: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Invalid(format!("config: {e}")))?;
        check_keys(
            &value,
            &toml::Table::try_from(Config::default()).expect("defaults serialize"),
            "",
        )?;
        let config: Config = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Invalid(format!("config: {e}")))?;
        config.train.validate()?;
        config.tracker.segmenter.validate()?;
        if config.models.modes.is_empty() {
            return Err(Error::Invalid(
                "config: models.modes must name at least one mode".into(),
            ));
        }
        Ok(config)
    }

    pub fn render(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        format!("{CONFIG_HEADER}\n{body}")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }

    /// The data root: `CLAIMLENS_DATA_DIR` when set, else `data_dir`.
    pub fn data_root(&self) -> PathBuf {
        self.data_root_with(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    pub fn data_root_with(&self, env_override: Option<PathBuf>) -> PathBuf {
        env_override
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| self.data_dir.clone())
    }

    /// Resolves a configured path against the data root.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.data_root().join(path)
        }
    }
}

fn check_keys(given: &toml::Table, known: &toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in given {
        let Some(default) = known.get(k) else {
            return Err(Error::Invalid(format!("config: unknown key `{prefix}{k}`")));
        };
        if let (toml::Value::Table(g), toml::Value::Table(d)) = (v, default) {
            check_keys(g, d, &format!("{prefix}{k}."))?;
        }
    }
    Ok(())
}
