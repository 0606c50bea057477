use serde::{Deserialize, Serialize};

use crate::config::EncoderConfig;
use crate::encoders::{encode_classes, FrozenProvider, Polarity, PromptBank, TextEncoding, VisualAdapter};
use crate::error::{Error, Result};
use crate::grad::{ParamTensor, Parameterized};
use crate::labels::{assign_pseudo_labels, Generator, PseudoLabelSet};
use crate::math::{self, Vector};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    Model1,
    Model2,
}

impl ModelId {
    pub const BOTH: [ModelId; 2] = [ModelId::Model1, ModelId::Model2];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Model1 => "model1",
            ModelId::Model2 => "model2",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ModelId::Model1 => 0,
            ModelId::Model2 => 1,
        }
    }

    pub fn other(self) -> ModelId {
        match self {
            ModelId::Model1 => ModelId::Model2,
            ModelId::Model2 => ModelId::Model1,
        }
    }

    pub fn generator(self) -> Generator {
        match self {
            ModelId::Model1 => Generator::Model1,
            ModelId::Model2 => Generator::Model2,
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sizes of the Phase-I trainable pieces, resolved against a provider.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub context_len: usize,
    pub context_dim: usize,
    pub context_sigma: f64,
    pub adapter_rank: usize,
    pub adapter_scale: f64,
}

impl ModelShape {
    pub fn from_config(cfg: &EncoderConfig, dim: usize) -> Self {
        Self {
            context_len: cfg.context_len,
            context_dim: cfg.resolved_context_dim(dim),
            context_sigma: cfg.context_init_sigma,
            adapter_rank: cfg.adapter_rank,
            adapter_scale: cfg.adapter_scale,
        }
    }
}

/// One collaborative model: dual prompts, a visual adapter and a temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedModel<T> {
    pub id: ModelId,
    pub prompts: PromptBank<T>,
    pub adapter: VisualAdapter<T>,
    pub tau: T,
    pub trained: bool,
}

/// Both polarities of class text embeddings for one model.
#[derive(Debug, Clone)]
pub struct TextTables<T> {
    pub pos: TextEncoding<T>,
    pub neg: TextEncoding<T>,
}

impl<T: Scalar> AdaptedModel<T> {
    pub fn init(id: ModelId, dim: usize, shape: &ModelShape, tau: T, rng: &SeededRng) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::Domain("temperature must be positive".into()));
        }
        if shape.adapter_rank == 0 || shape.context_len == 0 || shape.context_dim == 0 {
            return Err(Error::Config("context length, context dim and adapter rank must be positive".into()));
        }
        Ok(Self {
            id,
            prompts: PromptBank::init(shape.context_len, shape.context_dim, shape.context_sigma, &rng.split("prompts")),
            adapter: VisualAdapter::init(dim, shape.adapter_rank, T::lit(shape.adapter_scale), &rng.split("adapter")),
            tau,
            trained: false,
        })
    }

    pub fn text(&self, provider: &FrozenProvider<T>) -> Result<TextTables<T>> {
        Ok(TextTables {
            pos: encode_classes(&self.prompts, provider, Polarity::Positive)?,
            neg: encode_classes(&self.prompts, provider, Polarity::Negative)?,
        })
    }

    pub fn adapted(&self, provider: &FrozenProvider<T>, sample_id: usize) -> Result<Vector<T>> {
        self.adapter.adapt(provider.embedding(sample_id)?)
    }

    /// Softmax over positive-prompt similarities at the model temperature.
    pub fn class_probs(&self, provider: &FrozenProvider<T>, text: &TextEncoding<T>, sample_id: usize) -> Result<Vec<T>> {
        let v = self.adapted(provider, sample_id)?;
        let sims: Vec<T> = text.embeddings.iter().map(|t| math::dot(&v, t)).collect();
        math::softmax_temp(&sims, self.tau)
    }

    /// Pseudo-labels for `sample_ids` from this model's positive prompts.
    pub fn generate(&self, provider: &FrozenProvider<T>, sample_ids: &[usize]) -> Result<PseudoLabelSet> {
        let text = encode_classes(&self.prompts, provider, Polarity::Positive)?;
        let probs = sample_ids
            .iter()
            .map(|&id| Ok((id, self.class_probs(provider, &text, id)?)))
            .collect::<Result<Vec<_>>>()?;
        assign_pseudo_labels(probs.iter().map(|(id, p)| (*id, p.as_slice())), self.id.generator())
    }
}

impl<T: Scalar> Parameterized<T> for AdaptedModel<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        let mut out = self.prompts.params();
        out.extend(self.adapter.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out = self.prompts.params_mut();
        out.extend(self.adapter.params_mut());
        out
    }
}
