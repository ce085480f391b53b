//! TOML run configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ActivationKind, NetConfig, SkipKind};
use crate::simulate::SamplingMask;
use crate::train::{Precision, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Relu,
    Polu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkipName {
    Rdb,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub depth: usize,
    pub base_channels: usize,
    pub activation: ActivationName,
    /// PoLU exponent; ignored for ReLU.
    pub polu_n: f64,
    pub skip: SkipName,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection::from(&NetConfig::default())
    }
}

impl From<&NetConfig> for NetSection {
    fn from(c: &NetConfig) -> Self {
        let (activation, polu_n) = match c.activation {
            ActivationKind::Relu => (ActivationName::Relu, 1.0),
            ActivationKind::Polu { n } => (ActivationName::Polu, n),
        };
        let skip = match c.skip {
            SkipKind::Rdb => SkipName::Rdb,
            SkipKind::Plain => SkipName::Plain,
        };
        NetSection { depth: c.depth, base_channels: c.base_channels, activation, polu_n, skip }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub lr_halve_every: usize,
    pub alpha: f64,
    pub seed: u64,
    /// 32 or 64.
    pub precision: u32,
    pub augment: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            momentum: t.momentum,
            lr_halve_every: t.lr_halve_every,
            alpha: t.alpha,
            seed: t.seed,
            precision: t.precision.bits(),
            augment: t.augment,
            max_steps: t.max_steps,
            checkpoint_every: t.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub accel: usize,
    pub acs: usize,
    /// Receive coils for synthetic acquisitions.
    pub coils: usize,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection { accel: 4, acs: 16, coils: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory (or single file) of training cases.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Default output directory; created on demand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub net: NetSection,
    pub train: TrainSection,
    pub mask: MaskSection,
    pub data: DataSection,
}

impl RunConfig {
    pub fn net_config(&self) -> NetConfig {
        let n = &self.net;
        NetConfig {
            depth: n.depth,
            base_channels: n.base_channels,
            activation: match n.activation {
                ActivationName::Relu => ActivationKind::Relu,
                ActivationName::Polu => ActivationKind::Polu { n: n.polu_n },
            },
            skip: match n.skip {
                SkipName::Rdb => SkipKind::Rdb,
                SkipName::Plain => SkipKind::Plain,
            },
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            momentum: t.momentum,
            lr_halve_every: t.lr_halve_every,
            alpha: t.alpha,
            seed: t.seed,
            precision: Precision::from_bits(t.precision)?,
            augment: t.augment,
            max_steps: t.max_steps,
            checkpoint_every: t.checkpoint_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks numeric fields and that every input path exists.
    pub fn validate(&self) -> Result<()> {
        self.net_config().validate()?;
        self.train_config()?;
        if self.mask.coils == 0 {
            return Err(Error::Config("mask.coils must be at least 1".into()));
        }
        // n_pe only matters for the ACS bound, which is checked per image
        SamplingMask::build(self.mask.acs.max(self.mask.accel).max(1), self.mask.accel, self.mask.acs)?;
        for (key, p) in [("data.train", &self.data.train), ("data.test", &self.data.test)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!("{key} = {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}
