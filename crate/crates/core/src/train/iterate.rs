//! Iterated Phase I: each round relabels with the previous round's models,
//! re-initializes both models and trains each on its own top-K subset.

use crate::config::{Phase1Config, RunConfig};
use crate::encoders::FrozenProvider;
use crate::error::{Error, Result};
use crate::grad::Optimizer;
use crate::labels::{select_top_k, PseudoLabelSet, TopK};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::model::{AdaptedModel, ModelId, ModelShape};
use super::phase1::{train_phase1, EpochStats};

#[derive(Debug, Clone, PartialEq)]
pub struct PeftSettings {
    pub shape: ModelShape,
    pub tau: f64,
    pub top_k: usize,
    pub phase1: Phase1Config,
}

impl PeftSettings {
    pub fn from_config(cfg: &RunConfig, dim: usize) -> Self {
        Self {
            shape: ModelShape::from_config(&cfg.encoder, dim),
            tau: cfg.selection.tau,
            top_k: cfg.selection.top_k,
            phase1: cfg.phase1.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    /// Labels each model selected from (zero-shot in round 1).
    pub generated: [PseudoLabelSet; 2],
    pub selected: [TopK; 2],
    pub epochs: [Vec<EpochStats>; 2],
}

#[derive(Debug, Clone)]
pub struct PeftOutcome<T> {
    pub models: [AdaptedModel<T>; 2],
    pub optimizers: [Optimizer<T>; 2],
    pub rounds: Vec<RoundRecord>,
}

/// A pristine model for `round`, drawn from its own stream under `root`.
pub fn init_model<T: Scalar>(
    id: ModelId,
    round: usize,
    dim: usize,
    settings: &PeftSettings,
    root: &SeededRng,
) -> Result<AdaptedModel<T>> {
    AdaptedModel::init(
        id,
        dim,
        &settings.shape,
        T::lit(settings.tau),
        &root.split(format!("round{round}/{id}/init")),
    )
}

pub fn iterate_peft<T: Scalar>(
    provider: &FrozenProvider<T>,
    zero_shot: &PseudoLabelSet,
    sample_ids: &[usize],
    settings: &PeftSettings,
    rounds: usize,
    root: &SeededRng,
) -> Result<PeftOutcome<T>> {
    if rounds == 0 {
        return Err(Error::Config("at least one round of phase-one training is required".into()));
    }
    let classes = provider.num_classes();
    let dim = provider.dim();
    let mut previous: Option<[AdaptedModel<T>; 2]> = None;
    let mut records = Vec::with_capacity(rounds);
    let mut last = None;

    for round in 1..=rounds {
        let generated = match &previous {
            None => [zero_shot.clone(), zero_shot.clone()],
            Some([m1, m2]) => [m1.generate(provider, sample_ids)?, m2.generate(provider, sample_ids)?],
        };
        let selected = [
            select_top_k(&generated[0], settings.top_k, classes)?,
            select_top_k(&generated[1], settings.top_k, classes)?,
        ];
        let mut models = [
            init_model(ModelId::Model1, round, dim, settings, root)?,
            init_model(ModelId::Model2, round, dim, settings, root)?,
        ];
        let results: Vec<Result<_>> = std::thread::scope(|scope| {
            let handles: Vec<_> = models
                .iter_mut()
                .zip(&selected)
                .map(|(model, top)| {
                    let rng = root.split(format!("round{round}/{}/train", model.id));
                    scope.spawn(move || train_phase1(model, provider, &top.selected, &settings.phase1, &rng))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Pipeline("phase-one worker panicked".into()))))
                .collect()
        });
        let mut reports = results.into_iter();
        let r1 = reports.next().expect("two workers")?;
        let r2 = reports.next().expect("two workers")?;
        records.push(RoundRecord {
            round,
            generated,
            selected,
            epochs: [r1.epochs, r2.epochs],
        });
        last = Some([r1.optimizer, r2.optimizer]);
        previous = Some(models);
    }
    Ok(PeftOutcome {
        models: previous.expect("rounds >= 1"),
        optimizers: last.expect("rounds >= 1"),
        rounds: records,
    })
}
