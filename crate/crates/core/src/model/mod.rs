//! Shared encoder, invariant/specific MLP branches, four linear heads and
//! learnable domain embeddings, with an explicit backward pass.

mod erm;
mod parts;

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Example;
use crate::nn::{
    linear_backward, load_checkpoint, softmax_rows, write_checkpoint, Checkpoint, NnError, Parameters, Tensor,
};
use crate::seed::{derive_seed, rng, stream};

pub use erm::{ErmCache, ErmParams};
pub use parts::{Encoder, EncoderCache, Linear, Mlp3, MlpCache};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid model config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("empty batch")]
    EmptyBatch,
    #[error("example {index} has no tokens")]
    EmptySequence { index: usize },
    #[error("example {index} has no feature vector but the model reads features")]
    MissingFeatures { index: usize },
    #[error("example {index} has {got} features, the model expects {expected}")]
    FeatureWidth {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("domain {domain} out of range for {num_domains} domains")]
    DomainOutOfRange { domain: usize, num_domains: usize },
    #[error("checkpoint config: {0}")]
    CheckpointConfig(String),
}

/// What the shared encoder consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InputMode {
    /// Mean of token embeddings.
    #[default]
    Tokens,
    /// Dense per-example feature vectors of width `dim`; no embedding table.
    Features { dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    #[serde(default = "d32")]
    pub embed_dim: usize,
    #[serde(default = "d64")]
    pub hidden_dim: usize,
    #[serde(default = "d32")]
    pub rep_dim: usize,
    #[serde(default = "d16")]
    pub domain_embed_dim: usize,
    pub num_domains: usize,
    #[serde(default = "d2")]
    pub num_classes: usize,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub input: InputMode,
}

fn d2() -> usize {
    2
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

impl ModelConfig {
    pub fn new(vocab_size: usize, num_domains: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 32,
            hidden_dim: 64,
            rep_dim: 32,
            domain_embed_dim: 16,
            num_domains,
            num_classes: 2,
            init_seed: 0,
            input: InputMode::Tokens,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("rep_dim", self.rep_dim),
            ("domain_embed_dim", self.domain_embed_dim),
            ("num_domains", self.num_domains),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be at least 1"));
            }
        }
        match self.input {
            InputMode::Tokens if self.vocab_size == 0 => {
                problems.push("vocab_size must be at least 1".into())
            }
            InputMode::Features { dim: 0 } => problems.push("input.dim must be at least 1".into()),
            _ => {}
        }
        if self.num_classes != 2 {
            problems.push(format!("num_classes must be 2, got {}", self.num_classes));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(problems))
        }
    }

    /// Width of the encoder's pooled input.
    pub fn input_dim(&self) -> usize {
        match self.input {
            InputMode::Tokens => self.embed_dim,
            InputMode::Features { dim } => dim,
        }
    }
}

/// Reads the config line of a checkpoint and refuses configs with a tensor
/// larger than every value stored in the file together, so a corrupt header
/// cannot trigger a huge allocation before shapes are compared.
pub(crate) fn checkpoint_config(ck: &Checkpoint, full: bool) -> Result<ModelConfig, ModelError> {
    let line = ck
        .meta("config")
        .ok_or_else(|| ModelError::CheckpointConfig("missing `meta config` line".into()))?;
    let cfg: ModelConfig = serde_json::from_str(line).map_err(|e| ModelError::CheckpointConfig(e.to_string()))?;
    let stored: usize = ck.tensors.iter().map(|(_, t)| t.len()).sum();
    let (e, h, r) = (cfg.embed_dim, cfg.hidden_dim, cfg.rep_dim);
    let mut shapes = vec![(cfg.input_dim(), e), (e, cfg.num_classes)];
    if cfg.input == InputMode::Tokens {
        shapes.push((cfg.vocab_size, e));
    }
    if full {
        shapes.extend([
            (e, h),
            (h, h),
            (h, r),
            (r, cfg.num_domains),
            (cfg.num_domains, cfg.domain_embed_dim),
            (r.saturating_add(cfg.domain_embed_dim), cfg.num_classes),
        ]);
    }
    for (a, b) in shapes {
        if a.checked_mul(b).is_none_or(|n| n > stored) {
            return Err(ModelError::CheckpointConfig(format!(
                "config implies a {a}x{b} tensor but the file stores {stored} values"
            )));
        }
    }
    Ok(cfg)
}

/// Deterministic initializer: Glorot-uniform weights, zero biases.
pub(crate) struct Init {
    rng: rand_chacha::ChaCha8Rng,
}

impl Init {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            rng: rng(derive_seed(seed, stream::INIT)),
        }
    }

    pub(crate) fn glorot(&mut self, rows: usize, cols: usize) -> Tensor {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let u = Uniform::new_inclusive(-a, a).expect("finite bounds");
        let data = (0..rows * cols).map(|_| u.sample(&mut self.rng)).collect();
        Tensor::from_vec(&[rows, cols], data).expect("sized")
    }

    pub(crate) fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Tensor {
        let n = Normal::new(0.0, std).expect("positive std");
        let data = (0..rows * cols).map(|_| n.sample(&mut self.rng)).collect();
        Tensor::from_vec(&[rows, cols], data).expect("sized")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: Encoder,
    pub inv: Mlp3,
    pub spc: Mlp3,
    pub classification: Linear,
    pub joint: Linear,
    pub specific: Linear,
    pub backdoor: Linear,
    /// `[num_domains, domain_embed_dim]`.
    pub domain_embeddings: Tensor,
}

impl Parameters for ModelParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v = self.encoder.named();
        v.extend(self.inv.named("inv"));
        v.extend(self.spc.named("spc"));
        v.extend(self.classification.named("classification"));
        v.extend(self.joint.named("joint"));
        v.extend(self.specific.named("specific"));
        v.extend(self.backdoor.named("backdoor"));
        v.push(("domain_embeddings".into(), &self.domain_embeddings));
        v
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = self.encoder.named_mut();
        v.extend(self.inv.named_mut("inv"));
        v.extend(self.spc.named_mut("spc"));
        v.extend(self.classification.named_mut("classification"));
        v.extend(self.joint.named_mut("joint"));
        v.extend(self.specific.named_mut("specific"));
        v.extend(self.backdoor.named_mut("backdoor"));
        v.push(("domain_embeddings".into(), &mut self.domain_embeddings));
        v
    }
}

/// Which head turns representations into the final label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictHead {
    /// `f_joint(m_inv + m_spc)`.
    #[default]
    Joint,
    /// `f_classification(m_inv)`; used when the joint head is not trained.
    Classification,
}

pub struct ForwardOut {
    pub h: Tensor,
    pub m_inv: Tensor,
    pub m_spc: Tensor,
    pub probs_classification: Tensor,
    pub probs_joint: Tensor,
    pub probs_specific: Tensor,
    pub probs_backdoor_mixture: Tensor,
    /// Per-domain `softmax(f_backdoor(m_inv ⊕ e^d))`, each `[n, classes]`.
    pub backdoor_terms: Vec<Tensor>,
}

pub struct ForwardCache {
    encoder: EncoderCache,
    inv: MlpCache,
    spc: MlpCache,
    joint_in: Tensor,
    backdoor_in: Vec<Tensor>,
}

impl ForwardCache {
    /// Hidden-layer pre-activations of both branches.
    pub fn pre_activations(&self) -> Vec<&Tensor> {
        let mut v = Mlp3::pre_activations(&self.inv).to_vec();
        v.extend(Mlp3::pre_activations(&self.spc));
        v
    }
}

/// Loss gradients with respect to the model's outputs.
#[derive(Clone, Debug)]
pub struct OutputGrads {
    pub classification_logits: Tensor,
    pub joint_logits: Tensor,
    pub specific_logits: Tensor,
    pub backdoor_mixture: Tensor,
}

impl OutputGrads {
    pub fn zeros(n: usize, cfg: &ModelConfig) -> Self {
        Self {
            classification_logits: Tensor::zeros(&[n, cfg.num_classes]),
            joint_logits: Tensor::zeros(&[n, cfg.num_classes]),
            specific_logits: Tensor::zeros(&[n, cfg.num_domains]),
            backdoor_mixture: Tensor::zeros(&[n, cfg.num_classes]),
        }
    }
}

/// Rows of `x` with `row` appended to each.
fn append_row(x: &Tensor, row: &[f64]) -> Tensor {
    let tiled = Tensor::from_vec(&[x.rows(), row.len()], row.repeat(x.rows())).expect("sized");
    x.concat_cols(&tiled).expect("same rows")
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut init = Init::new(cfg.init_seed);
        let (e, h, r, c) = (cfg.embed_dim, cfg.hidden_dim, cfg.rep_dim, cfg.num_classes);
        let encoder = Encoder::init(cfg, &mut init);
        let inv = Mlp3::init(e, h, r, &mut init);
        let spc = Mlp3::init(e, h, r, &mut init);
        let classification = Linear::init(r, c, &mut init);
        let joint = Linear::init(r, c, &mut init);
        let specific = Linear::init(r, cfg.num_domains, &mut init);
        let backdoor = Linear::init(r + cfg.domain_embed_dim, c, &mut init);
        let domain_embeddings = init.normal(cfg.num_domains, cfg.domain_embed_dim, 0.1);
        Ok(Self {
            encoder,
            inv,
            spc,
            classification,
            joint,
            specific,
            backdoor,
            domain_embeddings,
        })
    }

    pub fn num_domains(&self) -> usize {
        self.domain_embeddings.rows()
    }

    /// `h` for a batch.
    pub fn encode(&self, batch: &[&Example]) -> Result<Tensor, ModelError> {
        Ok(self.encoder.forward(batch)?.1)
    }

    /// `(1/|D|) Σ_d softmax(f_backdoor(m_inv ⊕ e^d))` for every row of `m_inv`.
    pub fn backdoor_mixture(&self, m_inv: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.backdoor_parts(m_inv)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn backdoor_parts(&self, m_inv: &Tensor) -> Result<(Tensor, Vec<Tensor>, Vec<Tensor>), ModelError> {
        let nd = self.num_domains();
        let mut inputs = Vec::with_capacity(nd);
        let mut terms = Vec::with_capacity(nd);
        let mut mixture = Tensor::zeros(&[m_inv.rows(), self.backdoor.w.cols()]);
        for d in 0..nd {
            let z = append_row(m_inv, self.domain_embeddings.row(d));
            let p = softmax_rows(&self.backdoor.forward(&z)?);
            mixture.add_assign(&p);
            inputs.push(z);
            terms.push(p);
        }
        mixture.scale(1.0 / nd as f64);
        Ok((mixture, terms, inputs))
    }

    pub fn forward(&self, batch: &[&Example]) -> Result<(ForwardOut, ForwardCache), ModelError> {
        let (encoder, h) = self.encoder.forward(batch)?;
        let (m_inv, inv) = self.inv.forward(&h)?;
        let (m_spc, spc) = self.spc.forward(&h)?;
        let joint_in = m_inv.add(&m_spc)?;
        let probs_classification = softmax_rows(&self.classification.forward(&m_inv)?);
        let probs_joint = softmax_rows(&self.joint.forward(&joint_in)?);
        let probs_specific = softmax_rows(&self.specific.forward(&m_spc)?);
        let (probs_backdoor_mixture, backdoor_terms, backdoor_in) = self.backdoor_parts(&m_inv)?;
        Ok((
            ForwardOut {
                h,
                m_inv,
                m_spc,
                probs_classification,
                probs_joint,
                probs_specific,
                probs_backdoor_mixture,
                backdoor_terms,
            },
            ForwardCache {
                encoder,
                inv,
                spc,
                joint_in,
                backdoor_in,
            },
        ))
    }

    /// Parameter gradients given gradients at the outputs.
    pub fn backward(
        &self,
        batch: &[&Example],
        out: &ForwardOut,
        cache: &ForwardCache,
        og: &OutputGrads,
    ) -> ModelParams {
        let mut g = self.zeros_like();
        let n = out.m_inv.rows();

        let d_joint_in = linear_backward(
            &cache.joint_in,
            &self.joint.w,
            &og.joint_logits,
            &mut g.joint.w,
            &mut g.joint.b,
        );
        let mut dm_inv = linear_backward(
            &out.m_inv,
            &self.classification.w,
            &og.classification_logits,
            &mut g.classification.w,
            &mut g.classification.b,
        );
        dm_inv.add_assign(&d_joint_in);
        let mut dm_spc = linear_backward(
            &out.m_spc,
            &self.specific.w,
            &og.specific_logits,
            &mut g.specific.w,
            &mut g.specific.b,
        );
        dm_spc.add_assign(&d_joint_in);

        let nd = self.num_domains();
        let r = out.m_inv.cols();
        for d in 0..nd {
            let p = &out.backdoor_terms[d];
            // softmax Jacobian applied to dmix / |D|
            let mut dlogit = Tensor::zeros(&[n, p.cols()]);
            for i in 0..n {
                let pi = p.row(i);
                let gi = og.backdoor_mixture.row(i);
                let dot: f64 = pi.iter().zip(gi).map(|(a, b)| a * b).sum::<f64>() / nd as f64;
                for (k, o) in dlogit.row_mut(i).iter_mut().enumerate() {
                    *o = pi[k] * (gi[k] / nd as f64 - dot);
                }
            }
            let dz = linear_backward(
                &cache.backdoor_in[d],
                &self.backdoor.w,
                &dlogit,
                &mut g.backdoor.w,
                &mut g.backdoor.b,
            );
            for i in 0..n {
                let row = dz.row(i);
                for (o, &v) in dm_inv.row_mut(i).iter_mut().zip(&row[..r]) {
                    *o += v;
                }
                for (o, &v) in g.domain_embeddings.row_mut(d).iter_mut().zip(&row[r..]) {
                    *o += v;
                }
            }
        }

        let mut dh = self.inv.backward(&out.h, &cache.inv, &dm_inv, &mut g.inv);
        dh.add_assign(&self.spc.backward(&out.h, &cache.spc, &dm_spc, &mut g.spc));
        self.encoder
            .backward(batch, &cache.encoder, &out.h, &dh, &mut g.encoder);
        g
    }

    /// Labels and probability rows from the chosen head. Ties go to class 0.
    pub fn predict(&self, batch: &[&Example], head: PredictHead) -> Result<(Vec<u8>, Tensor), ModelError> {
        let (out, _) = self.forward(batch)?;
        let probs = match head {
            PredictHead::Joint => out.probs_joint,
            PredictHead::Classification => out.probs_classification,
        };
        Ok((argmax_rows(&probs), probs))
    }

    pub fn to_checkpoint(&self, cfg: &ModelConfig) -> String {
        let json = serde_json::to_string(cfg).expect("config serializes");
        write_checkpoint(self, &[("kind", "disentangled".into()), ("config", json)])
    }

    pub fn from_checkpoint(text: &str) -> Result<(ModelConfig, Self), ModelError> {
        let ck = crate::nn::parse_checkpoint(text)?;
        let cfg = checkpoint_config(&ck, true)?;
        let mut params = Self::init(&cfg)?;
        load_checkpoint(&mut params, text)?;
        Ok((cfg, params))
    }
}

/// Index of the largest entry per row; earlier classes win ties.
pub fn argmax_rows(probs: &Tensor) -> Vec<u8> {
    (0..probs.rows())
        .map(|i| {
            let row = probs.row(i);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

pub(crate) fn check_batch(batch: &[&Example]) -> Result<(), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    Ok(())
}
