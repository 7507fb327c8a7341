use crate::datagen::Example;
use crate::nn::{linear, linear_backward, relu, relu_backward, tanh, tanh_backward, NnError, Tensor};

use super::{check_batch, Init, InputMode, ModelConfig, ModelError};

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[in, out]`.
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub(crate) fn init(fan_in: usize, fan_out: usize, init: &mut Init) -> Self {
        Self {
            w: init.glorot(fan_in, fan_out),
            b: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        linear(x, &self.w, &self.b)
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor, g: &mut Linear) -> Tensor {
        linear_backward(x, &self.w, dy, &mut g.w, &mut g.b)
    }

    pub(crate) fn named(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![(format!("{prefix}.w"), &self.w), (format!("{prefix}.b"), &self.b)]
    }

    pub(crate) fn named_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![
            (format!("{prefix}.w"), &mut self.w),
            (format!("{prefix}.b"), &mut self.b),
        ]
    }
}

/// Three linear layers with ReLU after the first two.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp3 {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

pub struct MlpCache {
    z1: Tensor,
    a1: Tensor,
    z2: Tensor,
    a2: Tensor,
}

impl Mlp3 {
    pub(crate) fn init(input: usize, hidden: usize, output: usize, init: &mut Init) -> Self {
        Self {
            l1: Linear::init(input, hidden, init),
            l2: Linear::init(hidden, hidden, init),
            l3: Linear::init(hidden, output, init),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MlpCache), NnError> {
        let z1 = self.l1.forward(x)?;
        let a1 = relu(&z1);
        let z2 = self.l2.forward(&a1)?;
        let a2 = relu(&z2);
        let out = self.l3.forward(&a2)?;
        Ok((out, MlpCache { z1, a1, z2, a2 }))
    }

    pub fn backward(&self, x: &Tensor, c: &MlpCache, dy: &Tensor, g: &mut Mlp3) -> Tensor {
        let da2 = self.l3.backward(&c.a2, dy, &mut g.l3);
        let dz2 = relu_backward(&c.z2, &da2);
        let da1 = self.l2.backward(&c.a1, &dz2, &mut g.l2);
        let dz1 = relu_backward(&c.z1, &da1);
        self.l1.backward(x, &dz1, &mut g.l1)
    }

    /// Pre-activations of the two hidden layers.
    pub fn pre_activations(c: &MlpCache) -> [&Tensor; 2] {
        [&c.z1, &c.z2]
    }

    pub(crate) fn named(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut v = self.l1.named(&format!("{prefix}.l1"));
        v.extend(self.l2.named(&format!("{prefix}.l2")));
        v.extend(self.l3.named(&format!("{prefix}.l3")));
        v
    }

    pub(crate) fn named_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut v = self.l1.named_mut(&format!("{prefix}.l1"));
        v.extend(self.l2.named_mut(&format!("{prefix}.l2")));
        v.extend(self.l3.named_mut(&format!("{prefix}.l3")));
        v
    }
}

/// `h = tanh(W · pool(x) + b)` where `pool` is either the mean token
/// embedding or the example's dense feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub input: InputMode,
    /// `[vocab, embed]`; empty in feature mode.
    pub embedding: Tensor,
    pub proj: Linear,
}

pub struct EncoderCache {
    pooled: Tensor,
}

impl Encoder {
    pub(crate) fn init(cfg: &ModelConfig, init: &mut Init) -> Self {
        let embedding = match cfg.input {
            InputMode::Tokens => init.glorot(cfg.vocab_size, cfg.embed_dim),
            InputMode::Features { .. } => Tensor::zeros(&[0, cfg.embed_dim]),
        };
        Self {
            input: cfg.input,
            embedding,
            proj: Linear::init(cfg.input_dim(), cfg.embed_dim, init),
        }
    }

    fn pool(&self, batch: &[&Example]) -> Result<Tensor, ModelError> {
        check_batch(batch)?;
        let width = self.proj.w.rows();
        let mut pooled = Tensor::zeros(&[batch.len(), width]);
        for (i, ex) in batch.iter().enumerate() {
            let row = pooled.row_mut(i);
            match self.input {
                InputMode::Tokens => {
                    if ex.tokens.is_empty() {
                        return Err(ModelError::EmptySequence { index: i });
                    }
                    let vocab = self.embedding.rows();
                    for &t in &ex.tokens {
                        if t as usize >= vocab {
                            return Err(NnError::IdOutOfRange {
                                id: t as usize,
                                rows: vocab,
                            }
                            .into());
                        }
                        for (o, &v) in row.iter_mut().zip(self.embedding.row(t as usize)) {
                            *o += v;
                        }
                    }
                    let k = 1.0 / ex.tokens.len() as f64;
                    row.iter_mut().for_each(|v| *v *= k);
                }
                InputMode::Features { .. } => {
                    let f = ex
                        .features
                        .as_ref()
                        .ok_or(ModelError::MissingFeatures { index: i })?;
                    if f.len() != width {
                        return Err(ModelError::FeatureWidth {
                            index: i,
                            expected: width,
                            got: f.len(),
                        });
                    }
                    row.copy_from_slice(f);
                }
            }
        }
        Ok(pooled)
    }

    pub fn forward(&self, batch: &[&Example]) -> Result<(EncoderCache, Tensor), ModelError> {
        let pooled = self.pool(batch)?;
        let h = tanh(&self.proj.forward(&pooled)?);
        Ok((EncoderCache { pooled }, h))
    }

    pub fn backward(&self, batch: &[&Example], c: &EncoderCache, h: &Tensor, dh: &Tensor, g: &mut Encoder) {
        let dz = tanh_backward(h, dh);
        let dpooled = self.proj.backward(&c.pooled, &dz, &mut g.proj);
        if self.input == InputMode::Tokens {
            for (i, ex) in batch.iter().enumerate() {
                let k = 1.0 / ex.tokens.len() as f64;
                let d = dpooled.row(i);
                for &t in &ex.tokens {
                    for (o, &v) in g.embedding.row_mut(t as usize).iter_mut().zip(d) {
                        *o += v * k;
                    }
                }
            }
        }
    }

    pub(crate) fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![("embedding".to_string(), &self.embedding)];
        v.extend(self.proj.named("encoder"));
        v
    }

    pub(crate) fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![("embedding".to_string(), &mut self.embedding)];
        v.extend(self.proj.named_mut("encoder"));
        v
    }
}
