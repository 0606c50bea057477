//! Phase-I objectives over dual prompts.
//!
//! With `s⁺_k = v·t⁺_k`, `s⁻_k = v·t⁻_k` and `z_k = (s⁺_k − s⁻_k)/τ`:
//!
//! * `L1 = −log softmax(s⁺/τ)_y`
//! * `p_clean(k) = σ(z_k)`
//! * `L2 = −log σ(z_y) − log(1 − σ(z_ŷ))` for a complement label `ŷ ≠ y`
//!
//! Losses are batch means; gradients accumulate into the model's prompt
//! contexts and adapter.

use crate::encoders::{encode_classes, FrozenProvider, Polarity};
use crate::error::{Error, Result};
use crate::labels::{LabelStatus, PseudoLabel};
use crate::math;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

use super::model::AdaptedModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase1Loss<T> {
    pub total: T,
    pub l1: T,
    pub l2: T,
}

/// Per-sample L2 value and its partials with respect to the four similarities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeTerms<T> {
    pub loss: T,
    pub d_pos_label: T,
    pub d_neg_label: T,
    pub d_pos_complement: T,
    pub d_neg_complement: T,
}

pub fn negative_terms<T: Scalar>(
    pos_label: T,
    neg_label: T,
    pos_complement: T,
    neg_complement: T,
    tau: T,
) -> NegativeTerms<T> {
    let z_y = (pos_label - neg_label) / tau;
    let z_h = (pos_complement - neg_complement) / tau;
    let loss = -math::log_sigmoid(z_y) - math::log_sigmoid(-z_h);
    let g_y = (math::sigmoid(z_y) - T::one()) / tau;
    let g_h = math::sigmoid(z_h) / tau;
    NegativeTerms {
        loss,
        d_pos_label: g_y,
        d_neg_label: -g_y,
        d_pos_complement: g_h,
        d_neg_complement: -g_h,
    }
}

fn check_batch(batch: &[PseudoLabel], num_classes: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Contract("phase-one loss on an empty batch".into()));
    }
    for r in batch {
        if r.status != LabelStatus::Candidate {
            return Err(Error::Contract(format!(
                "sample {} has status {:?}; phase-one losses take candidates only",
                r.sample_id, r.status
            )));
        }
        if r.label >= num_classes {
            return Err(Error::Index {
                what: "classes",
                index: r.label,
                len: num_classes,
            });
        }
    }
    Ok(())
}

/// `w1·L1 + w2·L2` with gradients; a zero weight skips its term entirely.
pub fn dual_objective<T: Scalar>(
    model: &mut AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    batch: &[PseudoLabel],
    complements: Option<&[usize]>,
    w1: T,
    w2: T,
) -> Result<Phase1Loss<T>> {
    let classes = provider.num_classes();
    check_batch(batch, classes)?;
    let use_l2 = w2 != T::zero();
    let complements = match (use_l2, complements) {
        (false, _) => None,
        (true, None) => return Err(Error::Contract("L2 needs complement labels".into())),
        (true, Some(c)) => {
            if classes < 2 {
                return Err(Error::Config("complement labels need at least two classes".into()));
            }
            if c.len() != batch.len() {
                return Err(Error::Shape(format!(
                    "{} complement labels for a batch of {}",
                    c.len(),
                    batch.len()
                )));
            }
            for (r, &h) in batch.iter().zip(c) {
                if h >= classes || h == r.label {
                    return Err(Error::Contract(format!(
                        "complement {h} is not a valid non-label class for sample {}",
                        r.sample_id
                    )));
                }
            }
            Some(c)
        }
    };

    let tau = model.tau;
    let pos = encode_classes(&model.prompts, provider, Polarity::Positive)?;
    let neg = if use_l2 {
        Some(encode_classes(&model.prompts, provider, Polarity::Negative)?)
    } else {
        None
    };
    let dim = provider.dim();
    let inv_b = T::one() / T::from_usize_lossy(batch.len());
    let mut d_pos = vec![vec![T::zero(); dim]; classes];
    let mut d_neg = vec![vec![T::zero(); dim]; classes];
    let (mut sum_l1, mut sum_l2) = (T::zero(), T::zero());

    for (i, rec) in batch.iter().enumerate() {
        let x = provider.embedding(rec.sample_id)?;
        let trace = model.adapter.forward_traced(x)?;
        let v = &trace.output;
        let y = rec.label;
        let s_pos: Vec<T> = pos.embeddings.iter().map(|t| math::dot(v, t)).collect();
        let mut g_pos = vec![T::zero(); classes];
        let mut g_neg: Vec<(usize, T)> = Vec::new();

        if w1 != T::zero() {
            let scaled: Vec<T> = s_pos.iter().map(|&s| s / tau).collect();
            sum_l1 += math::log_sum_exp(&scaled) - scaled[y];
            let p = math::softmax_temp(&s_pos, tau)?;
            for (k, g) in g_pos.iter_mut().enumerate() {
                let target = if k == y { T::one() } else { T::zero() };
                *g += w1 * (p[k] - target) / tau;
            }
        }
        if let (Some(neg), Some(c)) = (&neg, complements) {
            let h = c[i];
            let terms = negative_terms(
                s_pos[y],
                math::dot(v, &neg.embeddings[y]),
                s_pos[h],
                math::dot(v, &neg.embeddings[h]),
                tau,
            );
            sum_l2 += terms.loss;
            g_pos[y] += w2 * terms.d_pos_label;
            g_pos[h] += w2 * terms.d_pos_complement;
            g_neg.push((y, w2 * terms.d_neg_label));
            g_neg.push((h, w2 * terms.d_neg_complement));
        }

        let mut d_v = vec![T::zero(); dim];
        for (k, &g) in g_pos.iter().enumerate() {
            if g != T::zero() {
                let g = g * inv_b;
                math::axpy(g, &pos.embeddings[k], &mut d_v);
                math::axpy(g, v, &mut d_pos[k]);
            }
        }
        if let Some(neg) = &neg {
            for &(k, g) in &g_neg {
                let g = g * inv_b;
                math::axpy(g, &neg.embeddings[k], &mut d_v);
                math::axpy(g, v, &mut d_neg[k]);
            }
        }
        model.adapter.backward(x, &trace, &d_v)?;
    }

    model.prompts.backward(provider, Polarity::Positive, &pos, &d_pos)?;
    if let Some(neg) = &neg {
        model.prompts.backward(provider, Polarity::Negative, neg, &d_neg)?;
    }
    let l1 = sum_l1 * inv_b;
    let l2 = sum_l2 * inv_b;
    Ok(Phase1Loss {
        total: w1 * l1 + w2 * l2,
        l1,
        l2,
    })
}

/// Mean cross-entropy over positive-prompt similarities.
pub fn loss_positive<T: Scalar>(
    model: &mut AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    batch: &[PseudoLabel],
) -> Result<T> {
    Ok(dual_objective(model, provider, batch, None, T::one(), T::zero())?.l1)
}

/// Two-way softmax between positive and negative similarity for `label`.
pub fn clean_probability<T: Scalar>(
    model: &AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    sample_id: usize,
    label: usize,
) -> Result<T> {
    let v = model.adapted(provider, sample_id)?;
    let pos = crate::encoders::compose_text(&model.prompts, provider, Polarity::Positive, label)?;
    let neg = crate::encoders::compose_text(&model.prompts, provider, Polarity::Negative, label)?;
    Ok(math::sigmoid((math::dot(&v, &pos) - math::dot(&v, &neg)) / model.tau))
}

/// One uniform draw from the `C − 1` classes other than each label.
pub fn draw_complements(labels: &[usize], num_classes: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::Config("complement labels need at least two classes".into()));
    }
    labels
        .iter()
        .map(|&y| {
            if y >= num_classes {
                return Err(Error::Index {
                    what: "classes",
                    index: y,
                    len: num_classes,
                });
            }
            let r = rng.below(num_classes - 1);
            Ok(if r >= y { r + 1 } else { r })
        })
        .collect()
}

/// L2 with complement labels drawn from `rng`.
pub fn loss_negative<T: Scalar>(
    model: &mut AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    batch: &[PseudoLabel],
    rng: &mut SeededRng,
) -> Result<T> {
    let labels: Vec<usize> = batch.iter().map(|r| r.label).collect();
    let complements = draw_complements(&labels, provider.num_classes(), rng)?;
    loss_negative_with(model, provider, batch, &complements)
}

/// L2 with fixed complement labels.
pub fn loss_negative_with<T: Scalar>(
    model: &mut AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    batch: &[PseudoLabel],
    complements: &[usize],
) -> Result<T> {
    Ok(dual_objective(model, provider, batch, Some(complements), T::zero(), T::one())?.l2)
}

/// `L1 + λ·L2`; `complements` may be `None` only when `λ = 0`.
pub fn phase1_loss<T: Scalar>(
    model: &mut AdaptedModel<T>,
    provider: &FrozenProvider<T>,
    batch: &[PseudoLabel],
    complements: Option<&[usize]>,
    lambda: T,
) -> Result<Phase1Loss<T>> {
    dual_objective(model, provider, batch, complements, T::one(), lambda)
}
