//! Momentum encoder, key queue and the InfoNCE objective.

use std::collections::VecDeque;

use crate::encoders::{FftEncoder, FrozenProvider};
use crate::error::{Error, Result};
use crate::grad::Parameterized;
use crate::math;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Fixed-capacity FIFO of key embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyQueue<T> {
    capacity: usize,
    keys: VecDeque<Vec<T>>,
}

impl<T: Scalar> KeyQueue<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            keys: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Oldest first.
    pub fn keys(&self) -> impl Iterator<Item = &Vec<T>> {
        self.keys.iter()
    }

    pub fn push_batch(&mut self, batch: impl IntoIterator<Item = Vec<T>>) {
        for k in batch {
            if self.capacity == 0 {
                return;
            }
            if self.keys.len() == self.capacity {
                self.keys.pop_front();
            }
            self.keys.push_back(k);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState<T> {
    pub encoder: FftEncoder<T>,
    pub mu: T,
    pub queue: KeyQueue<T>,
    pub tau_prime: T,
}

impl<T: Scalar> MomentumState<T> {
    /// Starts the momentum encoder as an exact copy of `primary`.
    pub fn new(primary: &FftEncoder<T>, mu: T, capacity: usize, tau_prime: T) -> Result<Self> {
        if !(mu >= T::zero() && mu < T::one()) {
            return Err(Error::Domain(format!("momentum must lie in [0, 1), got {mu}")));
        }
        if !(tau_prime > T::zero()) {
            return Err(Error::Domain(format!("contrastive temperature must be positive, got {tau_prime}")));
        }
        Ok(Self {
            encoder: primary.clone(),
            mu,
            queue: KeyQueue::new(capacity),
            tau_prime,
        })
    }
}

/// `θ_m ← μ·θ_m + (1 − μ)·θ` over every parameter tensor.
pub fn momentum_update<T: Scalar>(state: &mut MomentumState<T>, primary: &FftEncoder<T>) -> Result<()> {
    let mu = state.mu;
    if !(mu >= T::zero() && mu < T::one()) {
        return Err(Error::Domain(format!("momentum must lie in [0, 1), got {mu}")));
    }
    let source = primary.params();
    let target = state.encoder.params_mut();
    if source.len() != target.len()
        || source
            .iter()
            .zip(&target)
            .any(|(s, t)| s.name() != t.name() || s.shape() != t.shape())
    {
        return Err(Error::Contract("momentum and primary encoders differ in shape".into()));
    }
    let rest = T::one() - mu;
    for (t, s) in target.into_iter().zip(source) {
        for (m, &p) in t.values.iter_mut().zip(&s.values) {
            *m = mu * *m + rest * p;
        }
    }
    Ok(())
}

/// Produces one stochastic view of an embedding.
pub trait Augmenter<T> {
    fn view(&self, x: &[T], rng: &mut SeededRng) -> Result<Vec<T>>;
}

/// Additive Gaussian noise, then coordinate dropout, then re-normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingAugmenter {
    pub noise_sigma: f64,
    pub dropout: f64,
}

impl<T: Scalar> Augmenter<T> for EmbeddingAugmenter {
    fn view(&self, x: &[T], rng: &mut SeededRng) -> Result<Vec<T>> {
        let out: Vec<T> = x
            .iter()
            .map(|&xi| {
                let noisy = xi + rng.normal::<T>(0.0, self.noise_sigma);
                if rng.bernoulli(self.dropout) {
                    T::zero()
                } else {
                    noisy
                }
            })
            .collect();
        math::l2_normalize(&out).or_else(|_| Ok(x.to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveValue<T> {
    pub loss: T,
    /// `dL/dq` per query.
    pub d_queries: Vec<Vec<T>>,
}

/// Mean InfoNCE over queries. Each query's positive is its own key; the
/// negatives are the queue entries. Inputs are unit vectors.
pub fn contrastive_objective<T: Scalar>(
    queries: &[Vec<T>],
    keys: &[Vec<T>],
    queue: &KeyQueue<T>,
    tau_prime: T,
) -> Result<ContrastiveValue<T>> {
    if !(tau_prime > T::zero()) {
        return Err(Error::Domain(format!("contrastive temperature must be positive, got {tau_prime}")));
    }
    if queries.len() != keys.len() || queries.is_empty() {
        return Err(Error::Shape(format!(
            "{} queries for {} keys",
            queries.len(),
            keys.len()
        )));
    }
    let inv_b = T::one() / T::from_usize_lossy(queries.len());
    let mut loss = T::zero();
    let mut d_queries = Vec::with_capacity(queries.len());
    for (q, k) in queries.iter().zip(keys) {
        let mut logits = Vec::with_capacity(queue.len() + 1);
        logits.push(math::dot(q, k) / tau_prime);
        logits.extend(queue.keys().map(|n| math::dot(q, n) / tau_prime));
        let lse = math::log_sum_exp(&logits);
        loss += lse - logits[0];
        let mut d_q = vec![T::zero(); q.len()];
        let candidates = std::iter::once(k).chain(queue.keys());
        for (i, (z, c)) in logits.iter().zip(candidates).enumerate() {
            let p = (*z - lse).exp();
            let g = if i == 0 { p - T::one() } else { p };
            math::axpy(g * inv_b / tau_prime, c, &mut d_q);
        }
        d_queries.push(d_q);
    }
    Ok(ContrastiveValue {
        loss: loss * inv_b,
        d_queries,
    })
}

/// Two views of each sample: the query side through `primary`, the key side
/// through the momentum encoder.
#[derive(Debug, Clone)]
pub struct ContrastiveViews<T> {
    pub query_inputs: Vec<Vec<T>>,
    pub keys: Vec<Vec<T>>,
}

pub fn contrastive_views<T: Scalar, A: Augmenter<T>>(
    state: &MomentumState<T>,
    provider: &FrozenProvider<T>,
    sample_ids: &[usize],
    augmenter: &A,
    rng: &mut SeededRng,
) -> Result<ContrastiveViews<T>> {
    let mut query_inputs = Vec::with_capacity(sample_ids.len());
    let mut keys = Vec::with_capacity(sample_ids.len());
    for &id in sample_ids {
        let x = provider.embedding(id)?;
        query_inputs.push(augmenter.view(x, rng)?);
        let key_input = augmenter.view(x, rng)?;
        keys.push(math::l2_normalize(&state.encoder.encode(&key_input)?)?);
    }
    Ok(ContrastiveViews { query_inputs, keys })
}

/// L_Cont for fixed views, accumulating `weight ×` its gradient into `primary`.
/// Leaves the queue untouched.
pub fn contrastive_loss_fixed<T: Scalar>(
    primary: &mut FftEncoder<T>,
    views: &ContrastiveViews<T>,
    queue: &KeyQueue<T>,
    tau_prime: T,
    weight: T,
) -> Result<T> {
    let mut traces = Vec::with_capacity(views.query_inputs.len());
    let mut queries = Vec::with_capacity(views.query_inputs.len());
    for x in &views.query_inputs {
        let trace = primary.forward_traced(x)?;
        queries.push(math::l2_normalize(&trace.output)?);
        traces.push(trace);
    }
    let value = contrastive_objective(&queries, &views.keys, queue, tau_prime)?;
    if weight != T::zero() {
        for (((x, trace), q), d_q) in views.query_inputs.iter().zip(&traces).zip(&queries).zip(&value.d_queries) {
            let d_q: Vec<T> = d_q.iter().map(|&g| g * weight).collect();
            let d_out = math::normalize_backward(q, math::norm(&trace.output), &d_q);
            primary.backward(x, trace, &d_out)?;
        }
    }
    Ok(value.loss)
}

/// L_Cont on a batch: draws views, accumulates gradients into `primary`,
/// then enqueues the batch keys.
pub fn loss_contrastive<T: Scalar, A: Augmenter<T>>(
    primary: &mut FftEncoder<T>,
    state: &mut MomentumState<T>,
    provider: &FrozenProvider<T>,
    sample_ids: &[usize],
    augmenter: &A,
    rng: &mut SeededRng,
) -> Result<T> {
    let views = contrastive_views(state, provider, sample_ids, augmenter, rng)?;
    let loss = contrastive_loss_fixed(primary, &views, &state.queue, state.tau_prime, T::one())?;
    state.queue.push_batch(views.keys);
    Ok(loss)
}
