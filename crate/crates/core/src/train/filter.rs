//! Cross-model validation: one model labels, the other keeps a label only
//! when its positive prompt beats its negative prompt for that class.

use crate::encoders::FrozenProvider;
use crate::error::{Error, Result};
use crate::labels::{LabelStatus, PseudoLabel, PseudoLabelSet};
use crate::math;
use crate::scalar::Scalar;

use super::model::{AdaptedModel, ModelId};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub generator: ModelId,
    pub validator: ModelId,
    /// Every sample of `U`, with status clean or noise.
    pub labels: PseudoLabelSet,
}

impl FilterOutcome {
    pub fn direction(&self) -> String {
        format!("{}->{}", self.generator, self.validator)
    }

    pub fn clean(&self) -> Vec<PseudoLabel> {
        self.labels.with_status(LabelStatus::Clean)
    }

    pub fn noise(&self) -> Vec<PseudoLabel> {
        self.labels.with_status(LabelStatus::Noise)
    }
}

pub fn collaborative_filter<T: Scalar>(
    generator: &AdaptedModel<T>,
    validator: &AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    sample_ids: &[usize],
) -> Result<FilterOutcome> {
    if generator.id == validator.id {
        return Err(Error::Contract("a model cannot validate its own labels".into()));
    }
    for m in [generator, validator] {
        if !m.trained {
            log::warn!("{} has not been trained; filtering with its initial parameters", m.id);
        }
    }
    let generated = generator.generate(provider, sample_ids)?;
    let text = validator.text(provider)?;
    let mut records = generated.into_records();
    for r in &mut records {
        let v = validator.adapted(provider, r.sample_id)?;
        let s_pos = math::dot(&v, &text.pos.embeddings[r.label]);
        let s_neg = math::dot(&v, &text.neg.embeddings[r.label]);
        r.transition(if s_pos > s_neg { LabelStatus::Clean } else { LabelStatus::Noise })?;
    }
    Ok(FilterOutcome {
        generator: generator.id,
        validator: validator.id,
        labels: PseudoLabelSet::from_records(records),
    })
}

/// Both directions: `[model1 → model2, model2 → model1]`.
pub fn collaborate<T: Scalar>(
    models: &[AdaptedModel<T>; 2],
    provider: &FrozenProvider<T>,
    sample_ids: &[usize],
) -> Result<[FilterOutcome; 2]> {
    Ok([
        collaborative_filter(&models[0], &models[1], provider, sample_ids)?,
        collaborative_filter(&models[1], &models[0], provider, sample_ids)?,
    ])
}
