//! JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use denobench_core::data::DEFAULT_SIGMAS;
use denobench_core::train::TrainConfig;
use denobench_core::{Architecture, WidthScale};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{io_err, BenchError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Directory of PNG/PGM images.
    Directory(PathBuf),
    /// Synthetic phantoms.
    Phantoms { count: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Full-size protocol: 224×224, full widths, 100 epochs.
    Full,
    /// 64×64 phantoms, quarter widths, 10 epochs.
    Desk,
}

impl FromStr for Preset {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(BenchError::Config(format!("unknown preset {:?} (expected full or desk)", other))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub image_size: usize,
    pub sigmas: Vec<u16>,
    #[serde(serialize_with = "ser_archs", deserialize_with = "de_archs")]
    pub architectures: Vec<Architecture>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub patience: usize,
    pub seed: u64,
    #[serde(serialize_with = "ser_display", deserialize_with = "de_width")]
    pub width_scale: WidthScale,
    pub output_dir: Option<PathBuf>,
    pub strict: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Full)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let train = TrainConfig::default();
        let base = Self {
            data: DataSource::Phantoms { count: 200, seed: train.seed },
            image_size: 224,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            architectures: Architecture::ALL.to_vec(),
            max_epochs: train.max_epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            patience: train.patience,
            seed: train.seed,
            width_scale: WidthScale::FULL,
            output_dir: None,
            strict: true,
        };
        match preset {
            Preset::Full => base,
            Preset::Desk => Self {
                image_size: 64,
                width_scale: WidthScale::new(1, 4).expect("valid scale"),
                max_epochs: 10,
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text).map_err(|e| match e {
            BenchError::Config(msg) => BenchError::Config(format!("{}: {}", path.display(), msg)),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
            seed: self.seed,
            width_scale: self.width_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if self.sigmas.is_empty() {
            return bad("sigma list is empty".into());
        }
        if self.sigmas.contains(&0) {
            return bad("sigma values must be positive".into());
        }
        if self.architectures.is_empty() {
            return bad("architecture list is empty".into());
        }
        if self.image_size == 0 || self.image_size % 4 != 0 {
            return bad(format!("image size {} is not a positive multiple of 4", self.image_size));
        }
        if self.image_size < 16 {
            return bad(format!("image size {} is below the 16-pixel minimum", self.image_size));
        }
        if let DataSource::Phantoms { count, .. } = self.data {
            if count < 10 {
                return bad(format!("at least 10 phantoms are needed for a split, got {}", count));
            }
        }
        self.train_config().validate().map_err(|e| BenchError::Config(e.to_string()))?;
        for &arch in &self.architectures {
            denobench_core::ModelGraph::build(arch, self.width_scale, 0)
                .map_err(|e| BenchError::Config(format!("{}: {}", arch, e)))?;
        }
        Ok(())
    }
}

fn ser_display<T: fmt::Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

fn ser_archs<S: Serializer>(archs: &[Architecture], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(archs.iter().map(|a| a.id()))
}

fn de_archs<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Architecture>, D::Error> {
    let names = Vec::<String>::deserialize(d)?;
    names.iter().map(|n| n.parse().map_err(serde::de::Error::custom)).collect()
}

/// Accepts `"1/4"`, `"0.25"` or `0.25`.
fn de_width<'de, D: Deserializer<'de>>(d: D) -> Result<WidthScale, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Number(f64),
    }
    match Raw::deserialize(d)? {
        Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        Raw::Number(v) => WidthScale::from_f64(v).map_err(serde::de::Error::custom),
    }
}
