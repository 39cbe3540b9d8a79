use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{synth_two_domain, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::nn::Architecture;
use crate::training::TrainingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthDomain {
    A,
    B,
}

/// Where a dataset comes from.
///
/// In TOML: `source = { manifest = "data/china/manifest.csv" }` or
/// `target = { synth = "b" }`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetRef {
    /// A `path,label` CSV manifest. Relative paths are resolved against the
    /// directory of the config file.
    Manifest(PathBuf),
    /// One domain of the `[synth]` generator.
    Synth(SynthDomain),
}

impl fmt::Display for DatasetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetRef::Manifest(p) => write!(f, "manifest {}", p.display()),
            DatasetRef::Synth(SynthDomain::A) => f.write_str("synth a"),
            DatasetRef::Synth(SynthDomain::B) => f.write_str("synth b"),
        }
    }
}

impl DatasetRef {
    pub fn load(&self, synth: &SynthConfig) -> Result<Dataset> {
        match self {
            DatasetRef::Manifest(path) => Dataset::load_manifest(path),
            DatasetRef::Synth(domain) => {
                let (a, b) = synth_two_domain(synth)?;
                Ok(match domain {
                    SynthDomain::A => a,
                    SynthDomain::B => b,
                })
            }
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let DatasetRef::Manifest(p) = self {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Everything one source → target experiment needs.
///
/// The seed fields inside the training sections are ignored: trial `t`
/// always runs with seed `base_seed + t`, applied to splits, initialization
/// and shuffling alike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub base_seed: u64,
    pub out: PathBuf,
    /// Run trials concurrently. Results are merged in trial order either way.
    pub parallel: bool,
    pub source: DatasetRef,
    pub target: DatasetRef,
    /// Datasets for `matrix`; empty means `[source, target]`.
    pub datasets: Vec<DatasetRef>,
    pub synth: SynthConfig,
    pub architecture: Architecture,
    /// Shared by the lower and upper baselines.
    pub baseline: TrainingConfig,
    pub difl: TrainingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trials: 10,
            base_seed: 0,
            out: PathBuf::from("out"),
            parallel: false,
            source: DatasetRef::Synth(SynthDomain::A),
            target: DatasetRef::Synth(SynthDomain::B),
            datasets: Vec::new(),
            synth: SynthConfig::default(),
            architecture: Architecture::default(),
            baseline: TrainingConfig::default(),
            difl: TrainingConfig::default(),
        }
    }
}

/// Built-in configurations selectable by name instead of a path.
pub const PRESETS: [&str; 2] = ["shift", "null_shift"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "shift" => Some(ExperimentConfig::default()),
            "null_shift" => Some(ExperimentConfig {
                synth: SynthConfig::default().null_shift(),
                ..ExperimentConfig::default()
            }),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Reads a config file, or falls back to a preset when `spec` names one
    /// and no such file exists.
    pub fn load(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if !path.exists() {
            if let Some(cfg) = Self::preset(spec) {
                return Ok(cfg);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.source.resolve(base);
        cfg.target.resolve(base);
        for d in &mut cfg.datasets {
            d.resolve(base);
        }
        cfg.validate().map_err(|e| e.context(path.display().to_string()))?;
        Ok(cfg)
    }

    /// Square input extent the generator expects.
    pub fn extent(&self) -> Result<usize> {
        match self.architecture.generator.input_shape[..] {
            [1, h, w] if h == w => Ok(h),
            ref other => Err(Error::Config(format!(
                "generator input must be one square grayscale channel, got {other:?}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.source == self.target {
            return Err(Error::Config(format!("source and target are both {}", self.source)));
        }
        self.synth.validate()?;
        self.architecture.validate()?;
        self.extent()?;
        self.baseline.validate()?;
        self.difl.validate()?;
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}
