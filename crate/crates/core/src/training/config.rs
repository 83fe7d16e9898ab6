use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;

use super::{Result, TrainError};

/// Optimizer, schedule and architecture settings for one training run.
/// The tag embedding width is always the tag vocabulary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optional cap on optimizer steps; training stops at whichever limit
    /// comes first.
    pub max_steps: Option<usize>,
    pub dropout: f64,
    pub word_dim: usize,
    pub keyword_dim: usize,
    pub template_hidden: usize,
    pub decoder_dim: usize,
    pub attention_dim: usize,
    pub init_scale: f64,
    /// Global gradient norm bound; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    /// Dev evaluation period in epochs; 0 disables it.
    pub eval_every: usize,
    pub beam_width: usize,
    pub no_template: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full()
    }
}

const KEYS: [&str; 16] = [
    "lr",
    "batch_size",
    "epochs",
    "max_steps",
    "dropout",
    "word_dim",
    "keyword_dim",
    "template_hidden",
    "decoder_dim",
    "attention_dim",
    "init_scale",
    "clip_norm",
    "seed",
    "eval_every",
    "beam_width",
    "no_template",
];

impl TrainConfig {
    pub fn full() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 256,
            epochs: 40,
            max_steps: None,
            dropout: 0.5,
            word_dim: 500,
            keyword_dim: 500,
            template_hidden: 100,
            decoder_dim: 500,
            attention_dim: 100,
            init_scale: 0.08,
            clip_norm: 5.0,
            seed: 1,
            eval_every: 1,
            beam_width: 5,
            no_template: false,
        }
    }

    /// Scaled-down settings for the toy grammar: 30 epochs, batch 32,
    /// narrower layers. The init range grows as the layers shrink so that
    /// `sqrt(fan_in) * init_scale` stays near its full-size value.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 30,
            word_dim: 192,
            keyword_dim: 192,
            template_hidden: 96,
            decoder_dim: 192,
            attention_dim: 96,
            init_scale: 0.13,
            eval_every: 5,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(TrainError::Config(format!("unknown preset {other:?} (expected full or desk)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        for (k, v) in [
            ("batch_size", self.batch_size),
            ("word_dim", self.word_dim),
            ("keyword_dim", self.keyword_dim),
            ("template_hidden", self.template_hidden),
            ("decoder_dim", self.decoder_dim),
            ("attention_dim", self.attention_dim),
            ("beam_width", self.beam_width),
        ] {
            if v == 0 {
                return bad(format!("{k} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive".into());
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be non-negative".into());
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize, tag_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            tag_vocab_size,
            word_dim: self.word_dim,
            keyword_dim: self.keyword_dim,
            template_hidden: self.template_hidden,
            decoder_dim: self.decoder_dim,
            attention_dim: self.attention_dim,
            dropout: self.dropout,
            init_scale: self.init_scale,
            no_template: self.no_template,
        }
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| TrainError::Config(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "lr" => self.lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "max_steps" => {
                self.max_steps = match value {
                    "" | "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "dropout" => self.dropout = num(key, value)?,
            "word_dim" => self.word_dim = num(key, value)?,
            "keyword_dim" => self.keyword_dim = num(key, value)?,
            "template_hidden" => self.template_hidden = num(key, value)?,
            "decoder_dim" => self.decoder_dim = num(key, value)?,
            "attention_dim" => self.attention_dim = num(key, value)?,
            "init_scale" => self.init_scale = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "beam_width" => self.beam_width = num(key, value)?,
            "no_template" => self.no_template = num(key, value)?,
            _ => {
                return Err(TrainError::Config(format!(
                    "unknown key {key:?}; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines over `base`. `#` starts a comment. A
    /// `preset` line, if present, must come first and replaces `base`.
    pub fn parse_kv(text: &str, base: TrainConfig) -> Result<Self> {
        let mut c = base;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "preset" {
                c = Self::preset(v)?;
                continue;
            }
            c.set(k, v)
                .map_err(|e| TrainError::Config(format!("line {}: {e}", n + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, base: TrainConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        Self::parse_kv(&text, base)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("max_steps", self.max_steps.map_or("none".into(), |m| m.to_string()));
        put("dropout", self.dropout.to_string());
        put("word_dim", self.word_dim.to_string());
        put("keyword_dim", self.keyword_dim.to_string());
        put("template_hidden", self.template_hidden.to_string());
        put("decoder_dim", self.decoder_dim.to_string());
        put("attention_dim", self.attention_dim.to_string());
        put("init_scale", self.init_scale.to_string());
        put("clip_norm", self.clip_norm.to_string());
        put("seed", self.seed.to_string());
        put("eval_every", self.eval_every.to_string());
        put("beam_width", self.beam_width.to_string());
        put("no_template", self.no_template.to_string());
        s
    }
}
