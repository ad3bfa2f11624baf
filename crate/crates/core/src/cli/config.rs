//! JSON run configuration. Every field is optional; command-line flags take
//! precedence over file values, which take precedence over built-in defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_io::MixtureConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    AllClass,
    MiniBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum LossName {
    #[serde(rename = "pa")]
    #[value(name = "pa")]
    ProxyAnchor,
    #[serde(rename = "pnca")]
    #[value(name = "pnca")]
    ProxyNca,
    #[serde(rename = "pair")]
    #[value(name = "pair")]
    Pair,
    #[serde(rename = "antico")]
    #[value(name = "antico")]
    AntiCollapse,
    #[serde(rename = "pair+proxy")]
    #[value(name = "pair+proxy")]
    PairPlusProxy,
}

impl LossName {
    pub fn as_str(self) -> &'static str {
        match self {
            LossName::ProxyAnchor => "pa",
            LossName::ProxyNca => "pnca",
            LossName::Pair => "pair",
            LossName::AntiCollapse => "antico",
            LossName::PairPlusProxy => "pair+proxy",
        }
    }
}

/// Base proxy loss used inside `antico` and `pair+proxy`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum BaseName {
    #[serde(rename = "pa")]
    #[value(name = "pa")]
    ProxyAnchor,
    #[serde(rename = "pnca")]
    #[value(name = "pnca")]
    ProxyNca,
}

/// Partial synthetic-mixture description.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: Option<usize>,
    pub per_class: Option<usize>,
    pub dim: Option<usize>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
    pub orthonormal: Option<bool>,
}

pub const DEFAULT_SYNTHETIC_CLASSES: usize = 16;
pub const DEFAULT_SYNTHETIC_PER_CLASS: usize = 20;
pub const DEFAULT_SYNTHETIC_DIM: usize = 32;
pub const DEFAULT_SYNTHETIC_NOISE: f64 = 0.5;

impl SyntheticSpec {
    /// Parses `key=value` pairs, e.g. `classes=16 per-class=20 dim=32 noise=0.5`.
    pub fn parse_pairs(pairs: &[String]) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got `{pair}`")))?;
            match key {
                "classes" => spec.classes = Some(parse_value(key, value)?),
                "per-class" | "per_class" => spec.per_class = Some(parse_value(key, value)?),
                "dim" => spec.dim = Some(parse_value(key, value)?),
                "noise" | "sigma" => spec.noise = Some(parse_value(key, value)?),
                "seed" => spec.seed = Some(parse_value(key, value)?),
                "orthonormal" => spec.orthonormal = Some(parse_value(key, value)?),
                _ => return Err(Error::InvalidConfig(format!("unknown synthetic key `{key}`"))),
            }
        }
        Ok(spec)
    }

    /// Fields set in `self` win over `fallback`.
    pub fn or(self, fallback: &SyntheticSpec) -> SyntheticSpec {
        SyntheticSpec {
            classes: self.classes.or(fallback.classes),
            per_class: self.per_class.or(fallback.per_class),
            dim: self.dim.or(fallback.dim),
            noise: self.noise.or(fallback.noise),
            seed: self.seed.or(fallback.seed),
            orthonormal: self.orthonormal.or(fallback.orthonormal),
        }
    }

    pub fn resolve(&self, default_seed: u64) -> MixtureConfig {
        MixtureConfig {
            num_classes: self.classes.unwrap_or(DEFAULT_SYNTHETIC_CLASSES),
            samples_per_class: self.per_class.unwrap_or(DEFAULT_SYNTHETIC_PER_CLASS),
            dim: self.dim.unwrap_or(DEFAULT_SYNTHETIC_DIM),
            noise_sigma: self.noise.unwrap_or(DEFAULT_SYNTHETIC_NOISE),
            seed: self.seed.unwrap_or(default_seed),
            orthonormal_means: self.orthonormal.unwrap_or(true),
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::InvalidConfig(format!("invalid value `{value}` for `{key}`: {e}")))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub variant: Option<Variant>,

    pub input: Option<PathBuf>,
    pub proxies: Option<PathBuf>,
    pub renormalize: Option<bool>,

    pub synthetic: Option<SyntheticSpec>,
    pub loss: Option<LossName>,
    pub base: Option<BaseName>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub proxy_lr_multiplier: Option<f64>,
    pub classes_per_batch: Option<usize>,
    pub samples_per_class: Option<usize>,
    pub eval_every: Option<usize>,
    pub with_replacement: Option<bool>,
    pub compare_with: Option<LossName>,

    pub cases: Option<usize>,
    pub bins: Option<usize>,
    pub k: Option<Vec<usize>>,
    pub map_cutoff: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::file(path))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("config file {}: {e}", path.display())))
    }
}
