//! Flat run configuration loaded from TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::alignment::{AlignmentParams, BaseDistance};
use crate::encoder::{Backbone, EncoderConfig, TransformerConfig};
use crate::fewshot::{EpisodeShape, LossParams, SynthParams};
use crate::geometry::{ViewGrid, ViewMode};
use crate::skeleton::{BlockingParams, SkeletonError};

/// The configuration shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {message}")]
    InvalidValue { key: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Flattened block coordinates.
    Raw,
    /// Seeded MLP, graph and optional transformer encoder.
    Network,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Raw => "raw",
            FeatureKind::Network => "network",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    Euclidean,
    Rbf,
}

impl BaseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaseKind::Euclidean => "euclidean",
            BaseKind::Rbf => "rbf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub step_deg: f64,
    pub eta_az: usize,
    pub eta_alt: usize,
    pub mode: ViewMode,

    pub block_size: usize,
    pub stride_ratio: f64,

    pub gamma: f64,
    pub iota: usize,
    pub base: BaseKind,
    pub sigma: f64,

    pub features: FeatureKind,
    pub backbone: Backbone,
    pub layers: usize,
    pub alpha: f64,
    pub feature_dim: usize,
    pub out_dim: usize,
    pub dropout: f64,
    pub transformer_enabled: bool,
    pub transformer_depth: usize,
    pub transformer_hidden: usize,
    pub transformer_heads: usize,

    pub n_way: usize,
    pub z_shot: usize,
    pub batch: usize,
    pub beta: usize,
    pub episodes: usize,
    pub expand_support: bool,

    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub synth_joints: usize,
    pub synth_frames: usize,
    pub synth_view_noise_deg: f64,
    pub synth_coord_noise: f64,

    pub corpus: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    /// Built-in values; identical to [`DEFAULT_CONFIG`].
    fn default() -> Self {
        Self {
            seed: 0,
            step_deg: 15.0,
            eta_az: 3,
            eta_alt: 3,
            mode: ViewMode::Euler,
            block_size: 8,
            stride_ratio: 0.6,
            gamma: 1e-4,
            iota: 2,
            base: BaseKind::Rbf,
            sigma: 2.0,
            features: FeatureKind::Raw,
            backbone: Backbone::S2gc,
            layers: 6,
            alpha: 0.5,
            feature_dim: 32,
            out_dim: 50,
            dropout: 0.5,
            transformer_enabled: false,
            transformer_depth: 2,
            transformer_hidden: 64,
            transformer_heads: 4,
            n_way: 5,
            z_shot: 1,
            batch: 1,
            beta: 1,
            episodes: 500,
            expand_support: false,
            synth_classes: 10,
            synth_per_class: 20,
            synth_joints: 15,
            synth_frames: 40,
            synth_view_noise_deg: 45.0,
            synth_coord_noise: 0.01,
            corpus: None,
            camera: None,
            output: None,
        }
    }
}

fn flatten(prefix: &str, table: &Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(invalid(
            key,
            format!("expected a nonnegative integer, got {v}"),
        )),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(key, format!("expected a number, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| invalid(key, format!("expected a boolean, got {v}")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| invalid(key, format!("expected a string, got {v}")))
}

impl RunConfig {
    /// The shipped default configuration, parsed.
    pub fn shipped() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped config is valid")
    }

    /// Starts from the built-in defaults and overrides every key present in
    /// `text`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        let mut cfg = Self::default();
        for (key, value) in &flat {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        match key {
            "seed" => {
                self.seed = match v {
                    Value::Integer(i) if *i >= 0 => *i as u64,
                    _ => return Err(invalid(key, "expected a nonnegative integer")),
                }
            }
            "step_deg" => self.step_deg = as_f64(key, v)?,
            "eta_az" => self.eta_az = as_usize(key, v)?,
            "eta_alt" => self.eta_alt = as_usize(key, v)?,
            "mode" => {
                self.mode =
                    ViewMode::from_str(as_str(key, v)?).map_err(|e| invalid(key, e.to_string()))?
            }
            "block_size" => self.block_size = as_usize(key, v)?,
            "stride_ratio" => self.stride_ratio = as_f64(key, v)?,
            "gamma" => self.gamma = as_f64(key, v)?,
            "iota" => self.iota = as_usize(key, v)?,
            "base" => {
                self.base = match as_str(key, v)? {
                    "euclidean" => BaseKind::Euclidean,
                    "rbf" => BaseKind::Rbf,
                    other => return Err(invalid(key, format!("unknown base distance {other:?}"))),
                }
            }
            "sigma" => self.sigma = as_f64(key, v)?,
            "features" => {
                self.features = match as_str(key, v)? {
                    "raw" => FeatureKind::Raw,
                    "network" => FeatureKind::Network,
                    other => return Err(invalid(key, format!("unknown feature kind {other:?}"))),
                }
            }
            "backbone" => {
                let name = as_str(key, v)?;
                self.backbone = Backbone::from_name(name)
                    .ok_or_else(|| invalid(key, format!("unknown backbone {name:?}")))?;
            }
            "layers" => self.layers = as_usize(key, v)?,
            "alpha" => self.alpha = as_f64(key, v)?,
            "feature_dim" => self.feature_dim = as_usize(key, v)?,
            "out_dim" => self.out_dim = as_usize(key, v)?,
            "dropout" => self.dropout = as_f64(key, v)?,
            "transformer.enabled" => self.transformer_enabled = as_bool(key, v)?,
            "transformer.depth" => self.transformer_depth = as_usize(key, v)?,
            "transformer.hidden" => self.transformer_hidden = as_usize(key, v)?,
            "transformer.heads" => self.transformer_heads = as_usize(key, v)?,
            "n_way" => self.n_way = as_usize(key, v)?,
            "z_shot" => self.z_shot = as_usize(key, v)?,
            "batch" => self.batch = as_usize(key, v)?,
            "beta" => self.beta = as_usize(key, v)?,
            "episodes" => self.episodes = as_usize(key, v)?,
            "expand_support" => self.expand_support = as_bool(key, v)?,
            "synth.classes" => self.synth_classes = as_usize(key, v)?,
            "synth.per_class" => self.synth_per_class = as_usize(key, v)?,
            "synth.joints" => self.synth_joints = as_usize(key, v)?,
            "synth.frames" => self.synth_frames = as_usize(key, v)?,
            "synth.view_noise_deg" => self.synth_view_noise_deg = as_f64(key, v)?,
            "synth.coord_noise" => self.synth_coord_noise = as_f64(key, v)?,
            "corpus" => self.corpus = Some(PathBuf::from(as_str(key, v)?)),
            "camera" => self.camera = Some(PathBuf::from(as_str(key, v)?)),
            "output" => self.output = Some(PathBuf::from(as_str(key, v)?)),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("{x} must be positive and finite")))
            }
        };
        let at_least_one = |key: &str, n: usize| {
            if n >= 1 {
                Ok(())
            } else {
                Err(invalid(key, "must be >= 1"))
            }
        };
        positive("step_deg", self.step_deg)?;
        if self.step_deg * self.eta_az.max(self.eta_alt) as f64 > 180.0 {
            return Err(invalid("step_deg", "grid extends beyond 180 degrees"));
        }
        at_least_one("block_size", self.block_size)?;
        if !(self.stride_ratio > 0.0 && self.stride_ratio <= 1.0) {
            return Err(invalid(
                "stride_ratio",
                format!("{} outside (0, 1]", self.stride_ratio),
            ));
        }
        positive("gamma", self.gamma)?;
        positive("sigma", self.sigma)?;
        at_least_one("layers", self.layers)?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", format!("{} outside (0, 1]", self.alpha)));
        }
        at_least_one("feature_dim", self.feature_dim)?;
        at_least_one("out_dim", self.out_dim)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(
                "dropout",
                format!("{} outside [0, 1)", self.dropout),
            ));
        }
        if self.transformer_enabled {
            at_least_one("transformer.hidden", self.transformer_hidden)?;
            if self.transformer_heads == 0
                || !self.feature_dim.is_multiple_of(self.transformer_heads)
            {
                return Err(invalid(
                    "transformer.heads",
                    format!(
                        "{} heads do not divide feature_dim {}",
                        self.transformer_heads, self.feature_dim
                    ),
                ));
            }
        }
        if self.n_way < 2 {
            return Err(invalid("n_way", "must be >= 2"));
        }
        at_least_one("z_shot", self.z_shot)?;
        at_least_one("batch", self.batch)?;
        at_least_one("beta", self.beta)?;
        if self.beta > self.batch * self.z_shot {
            return Err(invalid(
                "beta",
                format!("{} exceeds batch * z_shot", self.beta),
            ));
        }
        at_least_one("synth.classes", self.synth_classes)?;
        at_least_one("synth.per_class", self.synth_per_class)?;
        at_least_one("synth.joints", self.synth_joints)?;
        at_least_one("synth.frames", self.synth_frames)?;
        for (key, x) in [
            ("synth.view_noise_deg", self.synth_view_noise_deg),
            ("synth.coord_noise", self.synth_coord_noise),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(invalid(key, format!("{x} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// Every resolved setting as `(key, value)`, sorted by key.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        fn path(p: &Option<PathBuf>) -> String {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        }
        let mut entries = vec![
            ("seed", self.seed.to_string()),
            ("step_deg", format!("{:?}", self.step_deg)),
            ("eta_az", self.eta_az.to_string()),
            ("eta_alt", self.eta_alt.to_string()),
            ("mode", self.mode.as_str().to_string()),
            ("block_size", self.block_size.to_string()),
            ("stride_ratio", format!("{:?}", self.stride_ratio)),
            ("gamma", format!("{:?}", self.gamma)),
            ("iota", self.iota.to_string()),
            ("base", self.base.as_str().to_string()),
            ("sigma", format!("{:?}", self.sigma)),
            ("features", self.features.as_str().to_string()),
            ("backbone", self.backbone.name().to_string()),
            ("layers", self.layers.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("feature_dim", self.feature_dim.to_string()),
            ("out_dim", self.out_dim.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("transformer.enabled", self.transformer_enabled.to_string()),
            ("transformer.depth", self.transformer_depth.to_string()),
            ("transformer.hidden", self.transformer_hidden.to_string()),
            ("transformer.heads", self.transformer_heads.to_string()),
            ("n_way", self.n_way.to_string()),
            ("z_shot", self.z_shot.to_string()),
            ("batch", self.batch.to_string()),
            ("beta", self.beta.to_string()),
            ("episodes", self.episodes.to_string()),
            ("expand_support", self.expand_support.to_string()),
            ("synth.classes", self.synth_classes.to_string()),
            ("synth.per_class", self.synth_per_class.to_string()),
            ("synth.joints", self.synth_joints.to_string()),
            ("synth.frames", self.synth_frames.to_string()),
            (
                "synth.view_noise_deg",
                format!("{:?}", self.synth_view_noise_deg),
            ),
            ("synth.coord_noise", format!("{:?}", self.synth_coord_noise)),
            ("corpus", path(&self.corpus)),
            ("camera", path(&self.camera)),
            ("output", path(&self.output)),
        ];
        entries.sort();
        entries
    }

    /// Hex SHA-256 of the sorted `key=value` lines of [`Self::entries`];
    /// independent of key order and formatting in the source file.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.entries() {
            hasher.update(format!("{k}={v}\n").as_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn grid(&self) -> ViewGrid {
        ViewGrid {
            azimuth_steps: self.eta_az,
            altitude_steps: self.eta_alt,
            step_deg: self.step_deg,
            mode: self.mode,
        }
    }

    pub fn blocking(&self) -> std::result::Result<BlockingParams, SkeletonError> {
        BlockingParams::from_ratio(self.block_size, self.stride_ratio)
    }

    pub fn alignment(&self) -> AlignmentParams {
        AlignmentParams {
            gamma: self.gamma,
            iota: self.iota,
            base: match self.base {
                BaseKind::Euclidean => BaseDistance::Euclidean,
                BaseKind::Rbf => BaseDistance::Rbf { sigma: self.sigma },
            },
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            block_size: self.block_size,
            feature_dim: self.feature_dim,
            out_dim: self.out_dim,
            backbone: self.backbone,
            layers: self.layers,
            alpha: self.alpha,
            transformer: self.transformer_enabled.then_some(TransformerConfig {
                depth: self.transformer_depth,
                hidden: self.transformer_hidden,
                heads: self.transformer_heads,
            }),
            dropout: self.dropout,
            seed: self.seed,
        }
    }

    pub fn episode_shape(&self) -> EpisodeShape {
        EpisodeShape {
            n_way: self.n_way,
            z_shot: self.z_shot,
            batch: self.batch,
        }
    }

    pub fn loss(&self) -> LossParams {
        LossParams { beta: self.beta }
    }

    pub fn synth(&self) -> SynthParams {
        SynthParams {
            n_classes: self.synth_classes,
            per_class: self.synth_per_class,
            joints: self.synth_joints,
            frames: self.synth_frames,
            seed: self.seed,
            view_noise_deg: self.synth_view_noise_deg,
            coord_noise: self.synth_coord_noise,
        }
    }
}

impl fmt::Display for RunConfig {
    /// Flat dotted-key TOML that loads back to the same configuration.
    /// Unset paths are left out.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const TEXT_KEYS: [&str; 7] = [
            "mode", "base", "features", "backbone", "corpus", "camera", "output",
        ];
        for (k, v) in self.entries() {
            if !TEXT_KEYS.contains(&k) {
                writeln!(f, "{k} = {v}")?;
            } else if !v.is_empty() {
                writeln!(f, "{k} = {}", toml::Value::String(v))?;
            }
        }
        Ok(())
    }
}
