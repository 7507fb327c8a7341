use crate::datagen::Example;
use crate::nn::{load_checkpoint, softmax_rows, write_checkpoint, Parameters, Tensor};

use super::{argmax_rows, Encoder, EncoderCache, Init, Linear, ModelConfig, ModelError};

/// Shared encoder followed by a single linear sentiment head.
#[derive(Clone, Debug, PartialEq)]
pub struct ErmParams {
    pub encoder: Encoder,
    pub head: Linear,
}

pub struct ErmCache {
    encoder: EncoderCache,
    pub h: Tensor,
}

impl Parameters for ErmParams {
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v = self.encoder.named();
        v.extend(self.head.named("head"));
        v
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = self.encoder.named_mut();
        v.extend(self.head.named_mut("head"));
        v
    }
}

impl ErmParams {
    /// Uses the encoder fields of `cfg`; branch and head sizes are ignored.
    pub fn init(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut init = Init::new(cfg.init_seed);
        let encoder = Encoder::init(cfg, &mut init);
        let head = Linear::init(cfg.embed_dim, cfg.num_classes, &mut init);
        Ok(Self { encoder, head })
    }

    /// Class probabilities.
    pub fn forward(&self, batch: &[&Example]) -> Result<(Tensor, ErmCache), ModelError> {
        let (encoder, h) = self.encoder.forward(batch)?;
        let probs = softmax_rows(&self.head.forward(&h)?);
        Ok((probs, ErmCache { encoder, h }))
    }

    pub fn backward(&self, batch: &[&Example], cache: &ErmCache, dlogits: &Tensor) -> ErmParams {
        let mut g = self.zeros_like();
        let dh = self.head.backward(&cache.h, dlogits, &mut g.head);
        self.encoder
            .backward(batch, &cache.encoder, &cache.h, &dh, &mut g.encoder);
        g
    }

    pub fn predict(&self, batch: &[&Example]) -> Result<(Vec<u8>, Tensor), ModelError> {
        let (probs, _) = self.forward(batch)?;
        Ok((argmax_rows(&probs), probs))
    }

    pub fn to_checkpoint(&self, cfg: &ModelConfig) -> String {
        let json = serde_json::to_string(cfg).expect("config serializes");
        write_checkpoint(self, &[("kind", "erm".into()), ("config", json)])
    }

    pub fn from_checkpoint(text: &str) -> Result<(ModelConfig, Self), ModelError> {
        let ck = crate::nn::parse_checkpoint(text)?;
        let cfg = super::checkpoint_config(&ck, false)?;
        let mut params = Self::init(&cfg)?;
        load_checkpoint(&mut params, text)?;
        Ok((cfg, params))
    }
}
