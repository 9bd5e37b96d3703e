use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentMode;
use crate::controllability::ControllabilityConfig;
use crate::error::{Error, Result};
use crate::gnn::{ConvType, ModelConfig, TrainConfig};
use crate::inject::{InjectionConfig, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    /// Edge list, feature matrix and label files.
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: PathBuf,
        #[serde(default = "default_true")]
        directed: bool,
        #[serde(default)]
        remap_ids: bool,
    },
    /// A graph container written by `ctrlgad generate` or `ctrlgad inject`.
    Container { path: PathBuf },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionSection {
    pub structural: Option<InjectionConfig>,
    pub contextual: Option<InjectionConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    None,
    #[default]
    Weight,
    Attr,
    Both,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub mode: ModeName,
    /// Histogram bins for `attr` and `both`.
    pub bins: Option<usize>,
    /// Run one augmented variant per bin count and pick the best.
    pub bins_sweep: Option<Vec<usize>>,
}

pub const DEFAULT_BINS_SWEEP: [usize; 5] = [5, 10, 20, 30, 50];

impl AugmentationConfig {
    /// Augmentation modes to run, one per variant.
    pub fn variants(&self) -> Result<Vec<AugmentMode>> {
        let with_bins = |k: usize| match self.mode {
            ModeName::Attr => AugmentMode::Attr { bins: k },
            _ => AugmentMode::Both { bins: k },
        };
        match (self.mode, self.bins, &self.bins_sweep) {
            (ModeName::None | ModeName::Weight, None, None) => Ok(vec![match self.mode {
                ModeName::None => AugmentMode::None,
                _ => AugmentMode::Weight,
            }]),
            (ModeName::None | ModeName::Weight, _, _) => Err(Error::Config(
                "bins and bins_sweep only apply to the attr and both modes".into(),
            )),
            (_, Some(_), Some(_)) => Err(Error::Config("set either bins or bins_sweep, not both".into())),
            (_, Some(k), None) => Ok(vec![with_bins(k)]),
            (_, None, Some(ks)) if ks.is_empty() => Err(Error::Config("bins_sweep is empty".into())),
            (_, None, Some(ks)) => Ok(ks.iter().map(|&k| with_bins(k)).collect()),
            (_, None, None) => Ok(DEFAULT_BINS_SWEEP.iter().map(|&k| with_bins(k)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub injection: InjectionSection,
    #[serde(default)]
    pub controllability: ControllabilityConfig,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainConfig,
    pub output_dir: Option<PathBuf>,
    /// Parallel training jobs; defaults to the available cores.
    pub workers: Option<usize>,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
    }

    /// Parses a config file; relative dataset paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.dataset {
            DatasetConfig::Files {
                edges, features, labels, ..
            } => {
                fix(edges);
                fix(features);
                fix(labels);
            }
            DatasetConfig::Container { path } => fix(path),
            DatasetConfig::Synthetic(_) => {}
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Hash of the sections that determine the graph and its scores.
    pub(crate) fn data_hash(&self) -> String {
        let json = serde_json::to_vec(&(&self.dataset, &self.injection, &self.controllability)).expect("serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Model config for one augmented variant.
    pub(crate) fn model_for(&self, mode: AugmentMode) -> ModelConfig {
        let mut m = self.model.clone();
        if let Some(k) = mode.bins() {
            m.attr_dim = Some(k);
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.controllability.validate()?;
        self.training.validate()?;
        let variants = self.augmentation.variants()?;
        let conv = self.model.conv_type;
        let attrs = matches!(self.augmentation.mode, ModeName::Attr | ModeName::Both);
        if attrs && !conv.uses_attrs() {
            return Err(Error::Config(format!(
                "{:?} augmentation produces edge attributes, which {} ignores; use edge_attr_conv",
                self.augmentation.mode,
                conv.name()
            )));
        }
        if conv.uses_attrs() && !attrs {
            return Err(Error::Config(
                "edge_attr_conv needs the attr or both augmentation mode".into(),
            ));
        }
        if conv == ConvType::EdgeAttrConv {
            if let (Some(dim), [one]) = (self.model.attr_dim, variants.as_slice()) {
                if one.bins() != Some(dim) {
                    return Err(Error::Config(format!(
                        "model.attr_dim = {dim} but augmentation uses {:?} bins",
                        one.bins()
                    )));
                }
            }
        }
        for v in &variants {
            if v.bins() == Some(0) {
                return Err(Error::Config("bin count must be at least 1".into()));
            }
            self.model_for(*v).validate()?;
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}
