//! The versioned run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dcf_core::imaging::PaddingScheme;
use dcf_core::nn::{ModelSpec, TrainConfig};
use dcf_core::pathways::{Architecture, Objective, PsaConfig, Setting, TpsConfig};
use dcf_core::synthdata::GenConfig;
use dcf_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// Input side used by `--paper-scale`.
pub const PAPER_SIDE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub base_seed: u64,
    /// Run directories are created below this path.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub psa: PsaSection,
    #[serde(default)]
    pub tps: TpsSection,
    #[serde(default)]
    pub explain: ExplainSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Holds `A/` and `B/` dataset directories.
    pub root: PathBuf,
    pub generator: GenConfig,
    pub split: SplitSection,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            generator: GenConfig::default(),
            split: SplitSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Defaults to the generator's test fraction for the dataset.
    pub test_fraction_a: Option<f64>,
    pub test_fraction_b: Option<f64>,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub spec: ModelSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsaSection {
    pub enabled: bool,
    pub schemes: Vec<PaddingScheme>,
    pub train_per_scheme: bool,
}

impl Default for PsaSection {
    fn default() -> Self {
        let d = PsaConfig::default();
        Self {
            enabled: true,
            schemes: d.schemes,
            train_per_scheme: d.train_per_scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TpsSection {
    pub settings: Vec<Setting>,
    /// Empty means a single architecture built from `model.spec`.
    pub architectures: Vec<Architecture>,
    pub freeze_tail: usize,
    /// Padding for every setting; when absent the PSA choice is used.
    pub scheme: Option<PaddingScheme>,
    pub padding_override: BTreeMap<Setting, PaddingScheme>,
}

impl Default for TpsSection {
    fn default() -> Self {
        let d = TpsConfig::default();
        Self {
            settings: d.settings,
            architectures: Vec::new(),
            freeze_tail: d.freeze_tail,
            scheme: None,
            padding_override: d.padding_override,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    /// GradCAM exports per label and test set.
    pub samples_per_label: usize,
    pub histogram_bins: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            samples_per_label: 4,
            histogram_bins: 256,
        }
    }
}

impl RunConfig {
    /// Reads, validates and resolves relative paths against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
            .unwrap_or(Path::new("."));
        let base = base
            .canonicalize()
            .map_err(|e| Error::Config(format!("cannot resolve {}: {e}", base.display())))?;
        cfg.data.root = base.join(&cfg.data.root);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.data.generator.validate()?;
        for f in [self.data.split.test_fraction_a, self.data.split.test_fraction_b].into_iter().flatten() {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("test fraction must lie in (0, 1), got {f}")));
            }
        }
        self.model.spec.validate().map_err(as_config)?;
        self.model.train.validate().map_err(as_config)?;
        if self.psa.schemes.is_empty() {
            return Err(Error::Config("psa.schemes must not be empty".into()));
        }
        if self.tps.settings.is_empty() {
            return Err(Error::Config("tps.settings must not be empty".into()));
        }
        for a in &self.tps.architectures {
            a.spec.validate().map_err(as_config)?;
        }
        let depth = self
            .architectures()
            .iter()
            .map(|a| a.spec.depth())
            .min()
            .unwrap_or(0);
        if self.tps.freeze_tail == 0 || self.tps.freeze_tail > depth + 1 {
            return Err(Error::Config(format!(
                "tps.freeze_tail must lie in 1..={}, got {}",
                depth + 1,
                self.tps.freeze_tail
            )));
        }
        if self.explain.histogram_bins == 0 || 256 % self.explain.histogram_bins != 0 {
            return Err(Error::Config("explain.histogram_bins must divide 256".into()));
        }
        Ok(())
    }

    pub fn architectures(&self) -> Vec<Architecture> {
        if self.tps.architectures.is_empty() {
            vec![Architecture {
                name: Architecture::default().name,
                spec: self.model.spec.clone(),
            }]
        } else {
            self.tps.architectures.clone()
        }
    }

    pub fn set_paper_scale(&mut self) {
        self.model.spec.input_side = PAPER_SIDE;
        for a in &mut self.tps.architectures {
            a.spec.input_side = PAPER_SIDE;
        }
    }

    pub fn psa_config(&self) -> PsaConfig {
        PsaConfig {
            schemes: self.psa.schemes.clone(),
            train_per_scheme: self.psa.train_per_scheme,
        }
    }

    pub fn tps_config(&self, settings: Option<Vec<Setting>>) -> TpsConfig {
        TpsConfig {
            settings: settings.unwrap_or_else(|| self.tps.settings.clone()),
            architectures: self.architectures(),
            freeze_tail: self.tps.freeze_tail,
            padding_override: self.tps.padding_override.clone(),
        }
    }

    pub fn test_fractions(&self) -> (f64, f64) {
        let s = &self.data.split;
        (
            s.test_fraction_a.unwrap_or(self.data.generator.a.test_fraction),
            s.test_fraction_b.unwrap_or(self.data.generator.b.test_fraction),
        )
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}
