//! Flat `key = value` run configuration.
//!
//! Every key has a default. A file may start from a preset (`preset =
//! "default" | "tiny" | "gradcheck"`); later keys and `--set key=value`
//! overrides win. `f2` follows `depth * f1` unless given explicitly. The
//! seed comes from the command line, else the file, else `DCNET_SEED`,
//! else 0.

use std::path::Path;

use dcnet_core::model::ModelConfig;
use dcnet_core::train::{Selection, TrainConfig};
use toml::Value;

use crate::error::{CliError, Result};
use crate::io::read_text;

pub const SEED_ENV: &str = "DCNET_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Tail fraction of the training file used for validation when no
    /// validation file is given.
    pub holdout: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { preset: "default".into(), model: ModelConfig::default(), train: TrainConfig::default(), holdout: 0.2 }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_integer().and_then(|i| usize::try_from(i).ok()).ok_or_else(|| usage(format!("{key} must be a non-negative integer, got {v}")))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(usage(format!("{key} must be a number, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| usage(format!("{key} must be true or false, got {v}")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| usage(format!("{key} must be a string, got {v}")))
}

fn preset(name: &str, base: &ModelConfig) -> Result<ModelConfig> {
    let (c, t, n) = (base.channels, base.samples, base.n_classes);
    match name {
        "default" => Ok(ModelConfig { channels: c, samples: t, n_classes: n, ..ModelConfig::default() }),
        "tiny" => Ok(ModelConfig::tiny(c, t, n)),
        "gradcheck" => Ok(ModelConfig::gradcheck()),
        _ => Err(usage(format!("unknown preset {name:?}; expected default, tiny or gradcheck"))),
    }
}

/// Keys in canonical order.
pub const KEYS: &[&str] = &[
    "preset",
    "channels",
    "samples",
    "n_classes",
    "f1",
    "depth",
    "f2",
    "temporal_kernel",
    "pool1",
    "dilations",
    "atrous_kernel",
    "fuse_width",
    "n_windows",
    "se_reduction",
    "dropout",
    "elu_alpha",
    "bn_momentum",
    "bn_eps",
    "enable_sp",
    "enable_sw",
    "enable_at",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "beta1",
    "beta2",
    "adam_eps",
    "seed",
    "shuffle",
    "selection",
    "holdout",
];

impl RunConfig {
    /// Applies one key.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "preset" => {
                self.preset = as_str(key, v)?.to_string();
                *m = preset(&self.preset, m)?;
            }
            "channels" => m.channels = as_usize(key, v)?,
            "samples" => m.samples = as_usize(key, v)?,
            "n_classes" => m.n_classes = as_usize(key, v)?,
            "f1" => m.f1 = as_usize(key, v)?,
            "depth" => m.depth = as_usize(key, v)?,
            "f2" => m.f2 = as_usize(key, v)?,
            "temporal_kernel" => m.temporal_kernel = as_usize(key, v)?,
            "pool1" => m.pool1 = as_usize(key, v)?,
            "dilations" => {
                let items = v.as_array().ok_or_else(|| usage(format!("dilations must be a list, got {v}")))?;
                m.dilations = items.iter().map(|d| as_usize(key, d)).collect::<Result<_>>()?;
            }
            "atrous_kernel" => m.atrous_kernel = as_usize(key, v)?,
            "fuse_width" => m.fuse_width = as_usize(key, v)?,
            "n_windows" => m.n_windows = as_usize(key, v)?,
            "se_reduction" => m.se_reduction = as_usize(key, v)?,
            "dropout" => m.dropout = as_f64(key, v)?,
            "elu_alpha" => m.elu_alpha = as_f64(key, v)?,
            "bn_momentum" => m.bn_momentum = as_f64(key, v)?,
            "bn_eps" => m.bn_eps = as_f64(key, v)?,
            "enable_sp" => m.enable_sp = as_bool(key, v)?,
            "enable_sw" => m.enable_sw = as_bool(key, v)?,
            "enable_at" => m.enable_at = as_bool(key, v)?,
            "learning_rate" => t.learning_rate = as_f64(key, v)?,
            "batch_size" => t.batch_size = as_usize(key, v)?,
            "max_epochs" => t.max_epochs = as_usize(key, v)?,
            "patience" => t.patience = as_usize(key, v)?,
            "beta1" => t.beta1 = as_f64(key, v)?,
            "beta2" => t.beta2 = as_f64(key, v)?,
            "adam_eps" => t.adam_eps = as_f64(key, v)?,
            "seed" => {
                t.seed = v.as_integer().and_then(|i| u64::try_from(i).ok()).ok_or_else(|| usage(format!("seed must be a non-negative integer, got {v}")))?
            }
            "shuffle" => t.shuffle = as_bool(key, v)?,
            "selection" => {
                t.selection = match as_str(key, v)? {
                    "val_loss" => Selection::ValLoss,
                    "val_accuracy" => Selection::ValAccuracy,
                    other => return Err(usage(format!("selection must be val_loss or val_accuracy, got {other:?}"))),
                }
            }
            "holdout" => self.holdout = as_f64(key, v)?,
            _ => return Err(usage(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `table` with the preset first, then the remaining keys in
    /// canonical order. Returns the keys that were present.
    fn apply(&mut self, table: &toml::Table) -> Result<Vec<String>> {
        if let Some(unknown) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(usage(format!("unknown configuration key {unknown:?}")));
        }
        let mut seen = Vec::new();
        for key in KEYS {
            if let Some(v) = table.get(*key) {
                self.set(key, v)?;
                seen.push(key.to_string());
            }
        }
        Ok(seen)
    }

    /// Parses configuration text, starting from the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    fn merge_text(&mut self, text: &str) -> Result<Vec<String>> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| usage(format!("configuration: {}", e.message())))?;
        let f2_given = table.contains_key("f2");
        let seen = self.apply(&table)?;
        if !f2_given && seen.iter().any(|k| k == "f1" || k == "depth") {
            self.model.f2 = self.model.depth * self.model.f1;
        }
        Ok(seen)
    }

    /// Resolves a run: defaults, then `file`, then `overrides` (`key=value`
    /// with TOML values; bare words are taken as strings), then the seed
    /// fallback chain. Every override is logged.
    pub fn resolve(file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seed_given = false;
        if let Some(path) = file {
            let text = read_text(path)?;
            let seen = cfg.merge_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            seed_given |= seen.iter().any(|k| k == "seed");
        }
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| usage(format!("override {item:?} is not key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            let text = format!("{key} = {raw}");
            let text = if text.parse::<toml::Table>().is_ok() { text } else { format!("{key} = {:?}", raw) };
            log::info!("override {key} = {raw}");
            cfg.merge_text(&text)?;
            seed_given |= key == "seed";
        }
        if let Some(s) = seed {
            cfg.train.seed = s;
        } else if !seed_given {
            if let Ok(raw) = std::env::var(SEED_ENV) {
                cfg.train.seed = raw.trim().parse().map_err(|_| usage(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
                log::info!("seed {} from {SEED_ENV}", cfg.train.seed);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(usage(format!("holdout must be in (0, 1), got {}", self.holdout)));
        }
        Ok(())
    }

    /// Canonical text: every key, one per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = format!("preset = {:?}\n", self.preset);
        out.push_str(&model_text(&self.model));
        let t = &self.train;
        let selection = match t.selection {
            Selection::ValLoss => "val_loss",
            Selection::ValAccuracy => "val_accuracy",
        };
        let lines = [
            format!("learning_rate = {}", float(t.learning_rate)),
            format!("batch_size = {}", t.batch_size),
            format!("max_epochs = {}", t.max_epochs),
            format!("patience = {}", t.patience),
            format!("beta1 = {}", float(t.beta1)),
            format!("beta2 = {}", float(t.beta2)),
            format!("adam_eps = {}", float(t.adam_eps)),
            format!("seed = {}", t.seed),
            format!("shuffle = {}", t.shuffle),
            format!("selection = {selection:?}"),
            format!("holdout = {}", float(self.holdout)),
        ];
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

/// Float text that parses back as a TOML float.
pub fn float(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Canonical text of the architecture keys only.
pub fn model_text(m: &ModelConfig) -> String {
    let dilations: Vec<String> = m.dilations.iter().map(usize::to_string).collect();
    let lines = [
        format!("channels = {}", m.channels),
        format!("samples = {}", m.samples),
        format!("n_classes = {}", m.n_classes),
        format!("f1 = {}", m.f1),
        format!("depth = {}", m.depth),
        format!("f2 = {}", m.f2),
        format!("temporal_kernel = {}", m.temporal_kernel),
        format!("pool1 = {}", m.pool1),
        format!("dilations = [{}]", dilations.join(", ")),
        format!("atrous_kernel = {}", m.atrous_kernel),
        format!("fuse_width = {}", m.fuse_width),
        format!("n_windows = {}", m.n_windows),
        format!("se_reduction = {}", m.se_reduction),
        format!("dropout = {}", float(m.dropout)),
        format!("elu_alpha = {}", float(m.elu_alpha)),
        format!("bn_momentum = {}", float(m.bn_momentum)),
        format!("bn_eps = {}", float(m.bn_eps)),
        format!("enable_sp = {}", m.enable_sp),
        format!("enable_sw = {}", m.enable_sw),
        format!("enable_at = {}", m.enable_at),
    ];
    lines.iter().map(|l| format!("{l}\n")).collect()
}

/// Parses [`model_text`] output (other keys are rejected).
pub fn model_from_text(text: &str) -> Result<ModelConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| usage(format!("model configuration: {}", e.message())))?;
    let mut cfg = RunConfig::default();
    for (k, v) in &table {
        if !KEYS[1..21].contains(&k.as_str()) {
            return Err(usage(format!("{k:?} is not an architecture key")));
        }
        cfg.set(k, v)?;
    }
    cfg.model.validate()?;
    Ok(cfg.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.model.dilations = vec![1, 3];
        cfg.train.selection = Selection::ValAccuracy;
        cfg.train.learning_rate = 0.01;
        let again = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(model_from_text(&model_text(&cfg.model)).unwrap(), cfg.model);
    }

    #[test]
    fn preset_then_overrides() {
        let cfg = RunConfig::from_text("preset = \"tiny\"\nchannels = 4\nsamples = 128\nfuse_width = 16").unwrap();
        assert_eq!(cfg.model, ModelConfig { fuse_width: 16, ..ModelConfig::tiny(4, 128, 4) });
    }

    #[test]
    fn f2_follows_f1() {
        let cfg = RunConfig::from_text("f1 = 4").unwrap();
        assert_eq!(cfg.model.f2, 8);
        assert!(RunConfig::from_text("f1 = 4\nf2 = 16").unwrap().validate().is_err());
    }

    #[test]
    fn rejects_unknown_and_mistyped() {
        assert!(RunConfig::from_text("colour = 3").is_err());
        assert!(RunConfig::from_text("f1 = \"eight\"").is_err());
        assert!(RunConfig::from_text("preset = \"huge\"").is_err());
        assert!(RunConfig::from_text("selection = \"best\"").is_err());
    }

    #[test]
    fn override_values() {
        let cfg = RunConfig::resolve(None, &["n_windows=3".into(), "selection=val_accuracy".into(), "dilations=[1,2]".into()], Some(5)).unwrap();
        assert_eq!(cfg.model.n_windows, 3);
        assert_eq!(cfg.train.selection, Selection::ValAccuracy);
        assert_eq!(cfg.model.dilations, vec![1, 2]);
        assert_eq!(cfg.train.seed, 5);
        assert!(RunConfig::resolve(None, &["n_windows".into()], None).is_err());
    }

    #[test]
    fn float_text() {
        assert_eq!(float(1.0), "1.0");
        assert_eq!(float(1e-5), "1e-5");
        assert_eq!(float(0.25), "0.25");
    }
}
