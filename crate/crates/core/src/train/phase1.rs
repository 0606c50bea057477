use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::Phase1Config;
use crate::encoders::FrozenProvider;
use crate::error::{Error, Result};
use crate::grad::{Optimizer, Parameterized};
use crate::labels::PseudoLabel;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::dual::{draw_complements, phase1_loss};
use super::model::AdaptedModel;

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 3;

/// Sample-weighted mean losses over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub components: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub epochs: Vec<EpochStats>,
    pub optimizer: Optimizer<T>,
}

/// Fails once the epoch loss stays above `10×` the first epoch's for three epochs running.
#[derive(Debug, Default)]
pub(crate) struct DivergenceGuard {
    initial: Option<f64>,
    streak: usize,
}

impl DivergenceGuard {
    pub(crate) fn observe(&mut self, epoch: usize, loss: f64) -> Result<()> {
        let initial = *self.initial.get_or_insert(loss);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= DIVERGENCE_PATIENCE {
            return Err(Error::Divergence { epoch, loss, initial });
        }
        Ok(())
    }
}

/// Minimizes `L1 + λ·L2` over `selected` with minibatch steps.
///
/// Shuffling and complement labels come from the `shuffle` and `complement`
/// children of `rng`; complements are redrawn every epoch.
pub fn train_phase1<T: Scalar>(
    model: &mut AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    selected: &[PseudoLabel],
    cfg: &Phase1Config,
    rng: &SeededRng,
) -> Result<TrainReport<T>> {
    if selected.is_empty() {
        return Err(Error::Contract(format!("{} has no selected samples to train on", model.id)));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("phase1.batch_size must be positive".into()));
    }
    let lambda = T::lit(cfg.lambda);
    let mut shuffle = rng.split("shuffle");
    let mut complement_rng = rng.split("complement");
    let mut optimizer = Optimizer::new(cfg.optimizer, T::lit(cfg.learning_rate));
    let mut order: Vec<usize> = (0..selected.len()).collect();
    let labels: Vec<usize> = selected.iter().map(|r| r.label).collect();
    let mut guard = DivergenceGuard::default();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        let complements = if lambda != T::zero() {
            Some(draw_complements(&labels, provider.num_classes(), &mut complement_rng)?)
        } else {
            None
        };
        let (mut total, mut l1, mut l2) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PseudoLabel> = chunk.iter().map(|&i| selected[i].clone()).collect();
            let comps: Option<Vec<usize>> = complements.as_ref().map(|c| chunk.iter().map(|&i| c[i]).collect());
            let loss = phase1_loss(model, provider, &batch, comps.as_deref(), lambda)?;
            optimizer.step(&mut model.params_mut())?;
            let w = chunk.len() as f64;
            total += w * loss.total.to_f64_lossless();
            l1 += w * loss.l1.to_f64_lossless();
            l2 += w * loss.l2.to_f64_lossless();
        }
        let n = selected.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: total / n,
            components: BTreeMap::from([("l1", l1 / n), ("l2", l2 / n)]),
        };
        log::debug!("{} phase1 epoch {epoch}: loss {:.6}", model.id, stats.loss);
        guard.observe(epoch, stats.loss)?;
        epochs.push(stats);
    }
    model.trained = true;
    Ok(TrainReport { epochs, optimizer })
}
