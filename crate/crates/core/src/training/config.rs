use serde::{Deserialize, Serialize};

use crate::losses::LossWeights;
use crate::model::{InputMode, ModelConfig, PredictHead};

/// Learning rate for the from-scratch encoder.
pub const LR_TOY: f64 = 1e-3;
/// Learning rate used for fine-tuning a pretrained encoder.
pub const LR_PAPER: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Disentangled model with the full objective.
    #[default]
    Full,
    /// Encoder plus one linear head, cross-entropy only.
    Erm,
    /// ERM plus `penalty_lambda` times the variance of per-domain batch risks.
    VariancePenalty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrPreset {
    Toy,
    Paper,
}

impl LrPreset {
    pub fn lr(self) -> f64 {
        match self {
            LrPreset::Toy => LR_TOY,
            LrPreset::Paper => LR_PAPER,
        }
    }
}

/// Layer widths; vocabulary and domain counts come from the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    #[serde(default = "d32")]
    pub embed_dim: usize,
    #[serde(default = "d64")]
    pub hidden_dim: usize,
    #[serde(default = "d32")]
    pub rep_dim: usize,
    #[serde(default = "d16")]
    pub domain_embed_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            rep_dim: 32,
            domain_embed_dim: 16,
        }
    }
}

fn d16() -> usize {
    16
}
fn d32() -> usize {
    32
}
fn d64() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Overrides `lr` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_preset: Option<LrPreset>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_frac")]
    pub train_frac: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_lambda")]
    pub penalty_lambda: f64,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub model: ModelDims,
    /// Defaults to the joint head, or the classification head when the
    /// specific terms are disabled (the joint head is then untrained).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict_head: Option<PredictHead>,
}

fn default_lr() -> f64 {
    LR_TOY
}
fn default_batch() -> usize {
    16
}
fn default_epochs() -> usize {
    20
}
fn default_patience() -> usize {
    5
}
fn default_frac() -> f64 {
    0.8
}
fn default_lambda() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: LR_TOY,
            lr_preset: None,
            batch_size: 16,
            epochs: 20,
            patience: 5,
            train_frac: 0.8,
            seed: 0,
            method: Method::Full,
            penalty_lambda: 1.0,
            loss: LossWeights::default(),
            model: ModelDims::default(),
            predict_head: None,
        }
    }
}

impl TrainConfig {
    /// Parses and validates; every message carries its line number.
    pub fn from_toml_str(text: &str) -> Result<Self, Vec<String>> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| {
            let (line, msg) = crate::toml_text::describe(text, &e);
            vec![format!("line {line}: {msg}")]
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn effective_lr(&self) -> f64 {
        self.lr_preset.map_or(self.lr, LrPreset::lr)
    }

    pub fn head(&self) -> PredictHead {
        self.predict_head.unwrap_or(if self.loss.enable_specific {
            PredictHead::Joint
        } else {
            PredictHead::Classification
        })
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut p = Vec::new();
        let lr = self.effective_lr();
        if !(lr.is_finite() && lr > 0.0) {
            p.push(format!("lr must be positive, got {lr}"));
        }
        if self.batch_size == 0 {
            p.push("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            p.push("epochs must be at least 1".into());
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            p.push(format!("train_frac must lie in (0, 1), got {}", self.train_frac));
        }
        if !(self.penalty_lambda.is_finite() && self.penalty_lambda >= 0.0) {
            p.push(format!("penalty_lambda must be >= 0, got {}", self.penalty_lambda));
        }
        if let Err(e) = self.loss.validate() {
            p.push(e.to_string());
        }
        let m = &self.model;
        for (name, v) in [
            ("model.embed_dim", m.embed_dim),
            ("model.hidden_dim", m.hidden_dim),
            ("model.rep_dim", m.rep_dim),
            ("model.domain_embed_dim", m.domain_embed_dim),
        ] {
            if v == 0 {
                p.push(format!("{name} must be at least 1"));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(p)
        }
    }

    pub fn model_config(&self, vocab_size: usize, num_domains: usize, input: InputMode, init_seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.model.embed_dim,
            hidden_dim: self.model.hidden_dim,
            rep_dim: self.model.rep_dim,
            domain_embed_dim: self.model.domain_embed_dim,
            num_domains,
            num_classes: 2,
            init_seed,
            input,
        }
    }

    /// Short label used in report rows.
    pub fn label(&self) -> String {
        match self.method {
            Method::Erm => "ERM".into(),
            Method::VariancePenalty => format!("VarPenalty(λ={})", self.penalty_lambda),
            Method::Full => match (self.loss.enable_invariant, self.loss.enable_specific) {
                (true, true) => "Ours".into(),
                (false, true) => "w/o Invariant".into(),
                (true, false) => "w/o Specific".into(),
                (false, false) => "w/o Both".into(),
            },
        }
    }
}
