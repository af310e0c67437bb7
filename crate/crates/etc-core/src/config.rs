//! Flat `key = value` configuration with dotted section keys, `#`
//! comments, typed accessors, and unknown-key detection, plus the fully
//! defaulted experiment configuration built on top of it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::cell::{AdversarialConfig, EtcArch, PseudoLabelOrigin};
use crate::data::SplitFractions;
use crate::error::{Error, Result};
use crate::nn::{OptimizerKind, TrainConfig};
use crate::probe::CritiqueMode;

/// Parsed key-value pairs; `take_*` accessors consume keys so leftovers
/// can be reported as unknown.
#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl ConfigMap {
    /// Parses `key = value` lines. Everything from `#` to end of line is
    /// a comment; blank lines are skipped; duplicate keys are an error.
    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            let value = value.trim().to_string();
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(ConfigMap {
            entries,
            consumed: BTreeSet::new(),
        })
    }

    pub fn load(path: &Path) -> Result<ConfigMap> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.consumed.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    fn parse_as<T: std::str::FromStr>(key: &str, raw: &str, what: &str) -> Result<T> {
        raw.parse().map_err(|_| {
            Error::Config(format!("key `{key}`: expected {what}, got `{raw}`"))
        })
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.take(key)
    }

    pub fn take_path(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(PathBuf::from)
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some(raw) => Self::parse_as(key, &raw, "a number"),
            None => Ok(default),
        }
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            Some(raw) => Self::parse_as(key, &raw, "a non-negative integer"),
            None => Ok(default),
        }
    }

    pub fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            Some(raw) => Self::parse_as(key, &raw, "true or false"),
            None => Ok(default),
        }
    }

    /// Comma-separated list; an empty value yields an empty list.
    pub fn take_list<T: std::str::FromStr>(
        &mut self,
        key: &str,
        what: &str,
        default: &[T],
    ) -> Result<Vec<T>>
    where
        T: Clone,
    {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(raw) if raw.is_empty() => Ok(Vec::new()),
            Some(raw) => raw
                .split(',')
                .map(|part| Self::parse_as(key, part.trim(), what))
                .collect(),
        }
    }

    /// Keys never consumed by any accessor — typos in the config file.
    pub fn unknown_keys(&self) -> Vec<String> {
        self.entries
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .cloned()
            .collect()
    }

    fn reject_unknown(&self) -> Result<()> {
        let unknown = self.unknown_keys();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Blobs,
    Digits,
    Csv,
    Idx,
}

/// Dataset construction parameters (`data.*` keys).
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub kind: DataKind,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub rotation_deg: f64,
    pub translation: Vec<f64>,
    pub noise_sigma: f64,
    pub has_header: bool,
    pub source_path: Option<PathBuf>,
    pub target_path: Option<PathBuf>,
    pub source_images: Option<PathBuf>,
    pub source_labels: Option<PathBuf>,
    pub target_images: Option<PathBuf>,
    pub target_labels: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::Blobs,
            classes: 3,
            per_class: 400,
            dim: 6,
            separation: 4.0,
            rotation_deg: 0.0,
            translation: vec![5.0, 0.0],
            noise_sigma: 1.0,
            has_header: false,
            source_path: None,
            target_path: None,
            source_images: None,
            source_labels: None,
            target_images: None,
            target_labels: None,
        }
    }
}

/// One component's optimizer settings (`<section>.*` keys); the seed is
/// filled in per run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            optimizer: self.optimizer,
            ..TrainConfig::default()
        }
    }
}

fn parse_optimizer(map: &mut ConfigMap, key: &str, default: OptimizerKind) -> Result<OptimizerKind> {
    match map.take_string(key).as_deref() {
        None => Ok(default),
        Some("adam") => Ok(OptimizerKind::Adam),
        Some("sgd") => Ok(OptimizerKind::Sgd),
        Some(other) => Err(Error::Config(format!(
            "key `{key}`: expected adam or sgd, got `{other}`"
        ))),
    }
}

fn take_train_section(map: &mut ConfigMap, section: &str, defaults: TrainSection) -> Result<TrainSection> {
    Ok(TrainSection {
        epochs: map.take_usize(&format!("{section}.epochs"), defaults.epochs)?,
        learning_rate: map.take_f64(&format!("{section}.learning_rate"), defaults.learning_rate)?,
        batch_size: map.take_usize(&format!("{section}.batch_size"), defaults.batch_size)?,
        optimizer: parse_optimizer(map, &format!("{section}.optimizer"), defaults.optimizer)?,
    })
}

/// Everything one end-to-end run needs, all defaulted so an empty config
/// file is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitFractions,
    pub backbone_hidden: Vec<usize>,
    pub backbone_train: TrainSection,
    pub arch: EtcArch,
    pub source_train: TrainSection,
    pub adversarial: AdversarialConfig,
    pub target_train: TrainSection,
    pub lambda_grid: Vec<f64>,
    pub ridge: f64,
    pub critique_mode: CritiqueMode,
    pub pseudo_labels: PseudoLabelOrigin,
    pub pseudo_path: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub rho: f64,
    pub val_n: usize,
    pub test_n: usize,
    /// Fixed injection layer for single-layer commands; sweeps ignore it.
    pub layer: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let section = |epochs| TrainSection {
            epochs,
            learning_rate: 1e-2,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
        };
        ExperimentConfig {
            data: DataConfig::default(),
            split: SplitFractions::default(),
            backbone_hidden: vec![32, 32],
            backbone_train: section(40),
            arch: EtcArch::default(),
            source_train: section(40),
            adversarial: AdversarialConfig::default(),
            target_train: section(40),
            lambda_grid: vec![2.0],
            ridge: crate::linalg::DEFAULT_RIDGE,
            critique_mode: CritiqueMode::HiddenPlusScore,
            pseudo_labels: PseudoLabelOrigin::SelfGenerated,
            pseudo_path: None,
            seeds: vec![0],
            rho: 0.5,
            val_n: 200,
            test_n: 400,
            layer: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_map(mut map: ConfigMap) -> Result<ExperimentConfig> {
        let d = ExperimentConfig::default();

        let kind = match map.take_string("data.kind").as_deref() {
            None | Some("blobs") => DataKind::Blobs,
            Some("digits") => DataKind::Digits,
            Some("csv") => DataKind::Csv,
            Some("idx") => DataKind::Idx,
            Some(other) => {
                return Err(Error::Config(format!(
                    "key `data.kind`: expected blobs, digits, csv, or idx, got `{other}`"
                )))
            }
        };
        let data = DataConfig {
            kind,
            classes: map.take_usize("data.classes", d.data.classes)?,
            per_class: map.take_usize("data.per_class", d.data.per_class)?,
            dim: map.take_usize("data.dim", d.data.dim)?,
            separation: map.take_f64("data.separation", d.data.separation)?,
            rotation_deg: map.take_f64("data.rotation_deg", d.data.rotation_deg)?,
            translation: map.take_list("data.translation", "a number", &d.data.translation)?,
            noise_sigma: map.take_f64("data.noise_sigma", d.data.noise_sigma)?,
            has_header: map.take_bool("data.has_header", d.data.has_header)?,
            source_path: map.take_path("data.source_path"),
            target_path: map.take_path("data.target_path"),
            source_images: map.take_path("data.source_images"),
            source_labels: map.take_path("data.source_labels"),
            target_images: map.take_path("data.target_images"),
            target_labels: map.take_path("data.target_labels"),
        };

        let split = SplitFractions {
            train: map.take_f64("split.train", d.split.train)?,
            val: map.take_f64("split.val", d.split.val)?,
            test: map.take_f64("split.test", d.split.test)?,
        };

        let backbone_hidden =
            map.take_list("backbone.hidden", "a positive integer", &d.backbone_hidden)?;
        let backbone_train = take_train_section(&mut map, "backbone", d.backbone_train)?;

        let arch = EtcArch {
            encoder_hidden: map.take_list(
                "etc.encoder_hidden",
                "a positive integer",
                &d.arch.encoder_hidden,
            )?,
            embed_dim: map.take_usize("etc.embed_dim", d.arch.embed_dim)?,
            disc_hidden: map.take_list(
                "etc.disc_hidden",
                "a positive integer",
                &d.arch.disc_hidden,
            )?,
            head_hidden: map.take_list(
                "etc.head_hidden",
                "a positive integer",
                &d.arch.head_hidden,
            )?,
        };

        let source_train = take_train_section(&mut map, "source", d.source_train)?;
        let adversarial = AdversarialConfig {
            warmup_epochs: map
                .take_usize("adversarial.warmup_epochs", d.adversarial.warmup_epochs)?,
            epochs: map.take_usize("adversarial.epochs", d.adversarial.epochs)?,
            batch_size: map.take_usize("adversarial.batch_size", d.adversarial.batch_size)?,
            disc_lr: map.take_f64("adversarial.disc_learning_rate", d.adversarial.disc_lr)?,
            gen_lr: map.take_f64("adversarial.gen_learning_rate", d.adversarial.gen_lr)?,
            beta1: map.take_f64("adversarial.beta1", d.adversarial.beta1)?,
            optimizer: parse_optimizer(&mut map, "adversarial.optimizer", d.adversarial.optimizer)?,
            seed: 0,
        };
        let target_train = take_train_section(&mut map, "target", d.target_train)?;

        let lambda_grid = map.take_list("probe.lambda_grid", "a number", &d.lambda_grid)?;
        let ridge = map.take_f64("probe.ridge", d.ridge)?;
        let critique_mode = match map.take_string("probe.mode").as_deref() {
            None | Some("hidden_plus_score") => CritiqueMode::HiddenPlusScore,
            Some("score_only") => CritiqueMode::ScoreOnly,
            Some(other) => {
                return Err(Error::Config(format!(
                    "key `probe.mode`: expected hidden_plus_score or score_only, got `{other}`"
                )))
            }
        };

        let pseudo_path = map.take_path("pseudo.path");
        let pseudo_labels = match map.take_string("pseudo.labels").as_deref() {
            None | Some("self") => PseudoLabelOrigin::SelfGenerated,
            Some("file") => PseudoLabelOrigin::File,
            Some(other) => {
                return Err(Error::Config(format!(
                    "key `pseudo.labels`: expected self or file, got `{other}`"
                )))
            }
        };

        let seeds = map.take_list("experiment.seeds", "a non-negative integer", &d.seeds)?;
        let rho = map.take_f64("experiment.rho", d.rho)?;
        let val_n = map.take_usize("experiment.val_n", d.val_n)?;
        let test_n = map.take_usize("experiment.test_n", d.test_n)?;
        let layer = map
            .take_string("experiment.layer")
            .map(|raw| ConfigMap::parse_as("experiment.layer", &raw, "a positive integer"))
            .transpose()?;

        map.reject_unknown()?;

        let config = ExperimentConfig {
            data,
            split,
            backbone_hidden,
            backbone_train,
            arch,
            source_train,
            adversarial,
            target_train,
            lambda_grid,
            ridge,
            critique_mode,
            pseudo_labels,
            pseudo_path,
            seeds,
            rho,
            val_n,
            test_n,
            layer,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        Self::from_map(ConfigMap::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must list at least one seed".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("probe.lambda_grid must be non-empty".into()));
        }
        for &l in &self.lambda_grid {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("probe.lambda_grid entry {l} must be > 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "experiment.rho {} must be in [0, 1]",
                self.rho
            )));
        }
        if self.backbone_hidden.is_empty() {
            return Err(Error::Config("backbone.hidden must list at least one layer".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config(format!("probe.ridge {} must be >= 0", self.ridge)));
        }
        if self.val_n == 0 || self.test_n == 0 {
            return Err(Error::Config("experiment.val_n and test_n must be >= 1".into()));
        }
        if self.pseudo_labels == PseudoLabelOrigin::File && self.pseudo_path.is_none() {
            return Err(Error::Config(
                "pseudo.labels = file requires pseudo.path".into(),
            ));
        }
        self.split.validate()?;
        self.arch.validate()?;
        self.adversarial.validate()?;
        match self.data.kind {
            DataKind::Blobs => {
                for (name, v) in [
                    ("data.classes", self.data.classes),
                    ("data.per_class", self.data.per_class),
                    ("data.dim", self.data.dim),
                ] {
                    if v == 0 {
                        return Err(Error::Config(format!("{name} must be >= 1")));
                    }
                }
            }
            DataKind::Digits => {
                if self.data.per_class == 0 {
                    return Err(Error::Config("data.per_class must be >= 1".into()));
                }
            }
            DataKind::Csv => {
                if self.data.source_path.is_none() || self.data.target_path.is_none() {
                    return Err(Error::Config(
                        "data.kind = csv requires data.source_path and data.target_path".into(),
                    ));
                }
            }
            DataKind::Idx => {
                let missing = [
                    ("data.source_images", &self.data.source_images),
                    ("data.source_labels", &self.data.source_labels),
                    ("data.target_images", &self.data.target_images),
                    ("data.target_labels", &self.data.target_labels),
                ]
                .iter()
                .filter(|(_, p)| p.is_none())
                .map(|(n, _)| *n)
                .collect::<Vec<_>>();
                if !missing.is_empty() {
                    return Err(Error::Config(format!(
                        "data.kind = idx requires {}",
                        missing.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }
}
