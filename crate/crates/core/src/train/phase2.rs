//! Phase II: full fine-tuning of a student on the clean set, optionally with
//! the momentum-contrastive term over all unlabeled samples.

use std::collections::BTreeMap;

use crate::config::Phase2Config;
use crate::encoders::{FftStudent, FrozenProvider};
use crate::error::{Error, Result};
use crate::grad::{Optimizer, Parameterized};
use crate::labels::{LabelStatus, PseudoLabel};
use crate::math;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::momentum::{contrastive_loss_fixed, contrastive_views, momentum_update, Augmenter, ContrastiveViews, KeyQueue, MomentumState};
use super::phase1::{DivergenceGuard, EpochStats, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase2Loss<T> {
    pub total: T,
    pub fft: T,
    pub contrastive: T,
}

/// Mean cross-entropy of student logits against clean pseudo-labels.
pub fn fft_loss<T: Scalar>(
    student: &mut FftStudent<T>,
    provider: &FrozenProvider<T>,
    batch: &[PseudoLabel],
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::Contract("L_FFT on an empty batch".into()));
    }
    let classes = student.head.classes();
    let inv_b = T::one() / T::from_usize_lossy(batch.len());
    let mut loss = T::zero();
    for r in batch {
        if r.status != LabelStatus::Clean {
            return Err(Error::Contract(format!(
                "sample {} has status {:?}; L_FFT trains on clean samples only",
                r.sample_id, r.status
            )));
        }
        if r.label >= classes {
            return Err(Error::Index {
                what: "classes",
                index: r.label,
                len: classes,
            });
        }
        let x = provider.embedding(r.sample_id)?;
        let trace = student.encoder.forward_traced(x)?;
        let logits = student.head.logits(&trace.output)?;
        loss += math::log_sum_exp(&logits) - logits[r.label];
        let p = math::softmax_temp(&logits, T::one())?;
        let d_logits: Vec<T> = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| (pk - if k == r.label { T::one() } else { T::zero() }) * inv_b)
            .collect();
        let d_v = student.head.backward(&trace.output, &d_logits)?;
        student.encoder.backward(x, &trace, &d_v)?;
    }
    Ok(loss * inv_b)
}

/// `L_FFT + γ·L_Cont` for fixed contrastive views; the queue is not modified.
pub fn phase2_loss<T: Scalar>(
    student: &mut FftStudent<T>,
    provider: &FrozenProvider<T>,
    batch: &[PseudoLabel],
    contrastive: Option<(&ContrastiveViews<T>, &KeyQueue<T>, T)>,
    gamma: T,
) -> Result<Phase2Loss<T>> {
    let fft = fft_loss(student, provider, batch)?;
    let cont = match contrastive {
        Some((views, queue, tau_prime)) if gamma != T::zero() => {
            contrastive_loss_fixed(&mut student.encoder, views, queue, tau_prime, gamma)?
        }
        _ => T::zero(),
    };
    Ok(Phase2Loss {
        total: fft + gamma * cont,
        fft,
        contrastive: cont,
    })
}

/// Contrastive inputs for [`train_phase2_plus`].
pub struct ContrastiveSetup<'a, T, A> {
    pub state: &'a mut MomentumState<T>,
    pub augmenter: &'a A,
    pub unlabeled: &'a [usize],
    pub gamma: T,
}

/// Trains on L_FFT alone.
pub fn train_fft<T: Scalar>(
    student: &mut FftStudent<T>,
    provider: &FrozenProvider<T>,
    clean: &[PseudoLabel],
    cfg: &Phase2Config,
    direction: &str,
    rng: &SeededRng,
) -> Result<TrainReport<T>> {
    run_phase2::<T, NoAugment>(student, provider, clean, None, cfg, direction, rng)
}

/// Trains on `L_FFT + γ·L_Cont`, updating the momentum encoder after every step.
pub fn train_phase2_plus<T: Scalar, A: Augmenter<T>>(
    student: &mut FftStudent<T>,
    provider: &FrozenProvider<T>,
    clean: &[PseudoLabel],
    setup: ContrastiveSetup<'_, T, A>,
    cfg: &Phase2Config,
    direction: &str,
    rng: &SeededRng,
) -> Result<TrainReport<T>> {
    run_phase2(student, provider, clean, Some(setup), cfg, direction, rng)
}

struct NoAugment;

impl<T: Scalar> Augmenter<T> for NoAugment {
    fn view(&self, x: &[T], _: &mut SeededRng) -> Result<Vec<T>> {
        Ok(x.to_vec())
    }
}

/// Endless reshuffled pass over the unlabeled set.
struct Cycler<'a> {
    ids: &'a [usize],
    order: Vec<usize>,
    pos: usize,
    rng: SeededRng,
}

impl Cycler<'_> {
    fn take(&mut self, n: usize) -> Vec<usize> {
        (0..n)
            .map(|_| {
                if self.pos == 0 {
                    self.rng.shuffle(&mut self.order);
                }
                let id = self.ids[self.order[self.pos]];
                self.pos = (self.pos + 1) % self.order.len();
                id
            })
            .collect()
    }
}

fn run_phase2<T: Scalar, A: Augmenter<T>>(
    student: &mut FftStudent<T>,
    provider: &FrozenProvider<T>,
    clean: &[PseudoLabel],
    mut contrastive: Option<ContrastiveSetup<'_, T, A>>,
    cfg: &Phase2Config,
    direction: &str,
    rng: &SeededRng,
) -> Result<TrainReport<T>> {
    if clean.is_empty() {
        return Err(Error::EmptyCleanSet {
            direction: direction.to_owned(),
        });
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("phase2.batch_size must be positive".into()));
    }
    if let Some(setup) = &contrastive {
        if setup.gamma < T::zero() {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if setup.unlabeled.is_empty() && setup.gamma != T::zero() {
            return Err(Error::Contract("contrastive term needs unlabeled samples".into()));
        }
    }
    let mut shuffle = rng.split("shuffle");
    let mut augment_rng = rng.split("augment");
    let mut cycler = contrastive.as_ref().map(|s| Cycler {
        ids: s.unlabeled,
        order: (0..s.unlabeled.len()).collect(),
        pos: 0,
        rng: rng.split("unlabeled"),
    });
    let mut optimizer = Optimizer::new(cfg.optimizer, T::lit(cfg.learning_rate));
    let mut order: Vec<usize> = (0..clean.len()).collect();
    let mut guard = DivergenceGuard::default();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        let (mut total, mut fft, mut cont) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<PseudoLabel> = chunk.iter().map(|&i| clean[i].clone()).collect();
            let mut keys = None;
            let loss = match (&mut contrastive, &mut cycler) {
                (Some(setup), Some(cycler)) if setup.gamma != T::zero() => {
                    let ids = cycler.take(chunk.len().min(setup.unlabeled.len()));
                    let views = contrastive_views(setup.state, provider, &ids, setup.augmenter, &mut augment_rng)?;
                    let loss = phase2_loss(
                        student,
                        provider,
                        &batch,
                        Some((&views, &setup.state.queue, setup.state.tau_prime)),
                        setup.gamma,
                    )?;
                    keys = Some(views.keys);
                    loss
                }
                (Some(setup), _) => phase2_loss(student, provider, &batch, None, setup.gamma)?,
                (None, _) => phase2_loss(student, provider, &batch, None, T::zero())?,
            };
            optimizer.step(&mut student.params_mut())?;
            if let Some(setup) = &mut contrastive {
                if let Some(keys) = keys {
                    setup.state.queue.push_batch(keys);
                }
                momentum_update(setup.state, &student.encoder)?;
            }
            let w = chunk.len() as f64;
            total += w * loss.total.to_f64_lossless();
            fft += w * loss.fft.to_f64_lossless();
            cont += w * loss.contrastive.to_f64_lossless();
        }
        let n = clean.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: total / n,
            components: BTreeMap::from([("fft", fft / n), ("contrastive", cont / n)]),
        };
        log::debug!("{direction} phase2 epoch {epoch}: loss {:.6}", stats.loss);
        guard.observe(epoch, stats.loss)?;
        epochs.push(stats);
    }
    Ok(TrainReport { epochs, optimizer })
}
