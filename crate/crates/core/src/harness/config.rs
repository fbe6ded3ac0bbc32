//! Run configuration and its `key = value` text format.
//!
//! One assignment per line; `#` starts a comment. Values are bare or
//! double-quoted strings, integers, floats, or lists of numbers written as
//! `[a, b, c]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{BackboneProfile, DecoderConfig, TINY_DEFAULT_WIDTHS};
use crate::error::{Error, Result};
use crate::harness::augment::AugmentConfig;
use crate::loss::LossConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Float(f64),
    List(Vec<f64>),
}

impl Value {
    fn parse(raw: &str) -> std::result::Result<Value, String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Err("missing value".into());
        }
        if let Some(inner) = raw.strip_prefix('"') {
            return inner
                .strip_suffix('"')
                .map(|s| Value::Str(s.to_string()))
                .ok_or_else(|| "unterminated string".to_string());
        }
        if let Some(inner) = raw.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or("unterminated list")?;
            let items = inner
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| format!("list item '{s}' is not a number")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            return Ok(Value::List(items));
        }
        if let Ok(i) = raw.parse::<i64>() {
            return Ok(Value::Int(i));
        }
        if let Ok(f) = raw.parse::<f64>() {
            return Ok(Value::Float(f));
        }
        Ok(Value::Str(raw.to_string()))
    }
}

/// `(line number, key, value)` triples in file order.
pub fn parse_assignments(text: &str) -> Result<Vec<(usize, String, Value)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = strip_comment(line).trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {lineno}: expected 'key = value'")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::Config(format!("line {lineno}: invalid key '{key}'")));
        }
        let value = Value::parse(value).map_err(|e| Error::Config(format!("line {lineno}: {key}: {e}")))?;
        out.push((lineno, key.to_string(), value));
    }
    Ok(out)
}

/// Drops a `#` comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub backbone: String,
    pub widths: [usize; 5],
    pub ratio: usize,
    pub pcsp_count: usize,
    pub ppm: bool,
    pub ppm_bins: Vec<usize>,
    /// Side of the square training images the model is built for.
    pub input_size: usize,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    /// First epoch (1-based) trained at `lr / 10`; `None` means `round(0.8 * epochs)`.
    pub lr_drop_epoch: Option<usize>,
    pub batch_size: usize,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub train_images: Option<PathBuf>,
    pub train_masks: Option<PathBuf>,
    /// Synthetic training set used when no directories are given.
    pub synth_n: usize,
    pub synth_seed: u64,
    pub model_out: PathBuf,
    pub log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backbone: "tiny".into(),
            widths: TINY_DEFAULT_WIDTHS,
            ratio: 2,
            pcsp_count: 4,
            ppm: true,
            ppm_bins: vec![1, 2],
            input_size: 64,
            seed: 0,
            epochs: 30,
            lr: 1e-3,
            lr_drop_epoch: None,
            batch_size: 1,
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            train_images: None,
            train_masks: None,
            synth_n: 500,
            synth_seed: 1,
            model_out: PathBuf::from("model.json"),
            log: None,
        }
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Int(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!("{key}: expected a non-negative integer"))),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Int(i) => Ok(*i as f64),
        Value::Float(f) => Ok(*f),
        _ => Err(Error::Config(format!("{key}: expected a number"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    match v {
        Value::Int(0) => Ok(false),
        Value::Int(1) => Ok(true),
        Value::Str(s) => match s.to_ascii_lowercase().as_str() {
            "true" | "on" | "yes" => Ok(true),
            "false" | "off" | "no" => Ok(false),
            _ => Err(Error::Config(format!("{key}: expected true/false, got '{s}'"))),
        },
        _ => Err(Error::Config(format!("{key}: expected true/false"))),
    }
}

fn as_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::List(l) => Ok(l.clone()),
        Value::Int(i) => Ok(vec![*i as f64]),
        Value::Float(f) => Ok(vec![*f]),
        Value::Str(_) => Err(Error::Config(format!("{key}: expected a list of numbers"))),
    }
}

fn as_usize_list(key: &str, v: &Value) -> Result<Vec<usize>> {
    as_list(key, v)?
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Config(format!("{key}: {x} is not a non-negative integer")))
            }
        })
        .collect()
}

fn as_path(key: &str, v: &Value, base: &Path) -> Result<PathBuf> {
    match v {
        Value::Str(s) => Ok(base.join(s)),
        _ => Err(Error::Config(format!("{key}: expected a path"))),
    }
}

impl RunConfig {
    /// Parses a config file body; relative paths resolve against `base`.
    pub fn from_text(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, key, v) in parse_assignments(text)? {
            let k = key.as_str();
            let res: Result<()> = (|| {
                match k {
                    "backbone" => match &v {
                        Value::Str(s) => cfg.backbone = s.clone(),
                        _ => return Err(Error::Config("backbone: expected a name".into())),
                    },
                    "widths" => {
                        let w = as_usize_list(k, &v)?;
                        cfg.widths = w
                            .try_into()
                            .map_err(|_| Error::Config("widths: expected exactly 5 values".into()))?;
                    }
                    "r" | "ratio" => cfg.ratio = as_usize(k, &v)?,
                    "pcsp_count" | "pcsp" => cfg.pcsp_count = as_usize(k, &v)?,
                    "ppm" => cfg.ppm = as_bool(k, &v)?,
                    "ppm_bins" => cfg.ppm_bins = as_usize_list(k, &v)?,
                    "input_size" | "size" => cfg.input_size = as_usize(k, &v)?,
                    "seed" => cfg.seed = as_usize(k, &v)? as u64,
                    "epochs" => cfg.epochs = as_usize(k, &v)?,
                    "lr" => cfg.lr = as_f64(k, &v)?,
                    "lr_drop_epoch" => cfg.lr_drop_epoch = Some(as_usize(k, &v)?),
                    "batch_size" => cfg.batch_size = as_usize(k, &v)?,
                    "flip" => cfg.augment.flip = as_bool(k, &v)?,
                    "scales" => cfg.augment.scales = as_list(k, &v)?,
                    "gamma" => cfg.loss.gamma = as_f64(k, &v)?,
                    "delta" => cfg.loss.delta = as_usize(k, &v)?,
                    "eps" => cfg.loss.eps = as_f64(k, &v)?,
                    "loss_normalized" => cfg.loss.normalized = as_bool(k, &v)?,
                    "train_images" => cfg.train_images = Some(as_path(k, &v, base)?),
                    "train_masks" => cfg.train_masks = Some(as_path(k, &v, base)?),
                    "synth_n" => cfg.synth_n = as_usize(k, &v)?,
                    "synth_seed" => cfg.synth_seed = as_usize(k, &v)? as u64,
                    "model_out" | "model" => cfg.model_out = as_path(k, &v, base)?,
                    "log" => cfg.log = Some(as_path(k, &v, base)?),
                    _ => return Err(Error::Config(format!("unknown key '{k}'"))),
                }
                Ok(())
            })();
            res.map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {lineno}: {m}")),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.augment.scales.is_empty() || self.augment.scales.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::Config(
                "scales must be a non-empty list of positive numbers".into(),
            ));
        }
        if self.lr.is_nan() || self.lr < 0.0 {
            return Err(Error::Config("lr must be >= 0".into()));
        }
        if self.train_images.is_some() != self.train_masks.is_some() {
            return Err(Error::Config(
                "train_images and train_masks must be given together".into(),
            ));
        }
        self.loss.validate()?;
        let profile = self.profile()?;
        if !profile.trainable {
            return Err(Error::Config(format!(
                "backbone '{}' is structural only; use 'tiny'",
                self.backbone
            )));
        }
        self.decoder().validate(&profile)
    }

    pub fn profile(&self) -> Result<BackboneProfile> {
        let p = BackboneProfile::by_name(&self.backbone)?;
        Ok(if p.trainable {
            BackboneProfile::tiny(self.widths)
        } else {
            p
        })
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            ratio: self.ratio,
            global_depth: None,
            ppm_bins: self.ppm_bins.clone(),
            pcsp_count: self.pcsp_count,
            ppm_enabled: self.ppm,
        }
    }

    /// First 1-based epoch trained at the reduced learning rate.
    pub fn drop_epoch(&self) -> usize {
        self.lr_drop_epoch
            .unwrap_or_else(|| ((self.epochs as f64 * 0.8).round() as usize).max(1))
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.drop_epoch() {
            self.lr / 10.0
        } else {
            self.lr
        }
    }
}
