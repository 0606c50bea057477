//! Dual (positive / negative) prompt contexts and text composition.
//!
//! A class text embedding is `normalize(mixer · mean(context rows) + anchor_k)`:
//! the learnable context tokens pass through a frozen linear map and are
//! combined with the frozen class anchor.

use serde::{Deserialize, Serialize};

use super::provider::FrozenProvider;
use crate::error::{Error, Result};
use crate::grad::{ParamTensor, Parameterized};
use crate::math::{self, Vector};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank<T> {
    pos: ParamTensor<T>,
    neg: ParamTensor<T>,
}

impl<T: Scalar> PromptBank<T> {
    pub const POS_NAME: &'static str = "prompt.pos";
    pub const NEG_NAME: &'static str = "prompt.neg";

    /// Both stacks must be `context_len x context_dim`.
    pub fn from_values(context_len: usize, context_dim: usize, pos: Vec<T>, neg: Vec<T>) -> Result<Self> {
        if context_len == 0 || context_dim == 0 {
            return Err(Error::Shape("prompt context must be non-empty".into()));
        }
        let shape = vec![context_len, context_dim];
        Ok(Self {
            pos: ParamTensor::new(Self::POS_NAME, shape.clone(), pos)?,
            neg: ParamTensor::new(Self::NEG_NAME, shape, neg)?,
        })
    }

    pub fn zeros(context_len: usize, context_dim: usize) -> Self {
        let n = context_len * context_dim;
        Self::from_values(context_len, context_dim, vec![T::zero(); n], vec![T::zero(); n])
            .expect("valid shape")
    }

    /// Gaussian initialization; each polarity draws from its own stream.
    pub fn init(context_len: usize, context_dim: usize, sigma: f64, rng: &SeededRng) -> Self {
        let n = context_len * context_dim;
        let pos = rng.split("pos").normal_vec(n, sigma);
        let neg = rng.split("neg").normal_vec(n, sigma);
        Self::from_values(context_len, context_dim, pos, neg).expect("valid shape")
    }

    pub fn context_len(&self) -> usize {
        self.pos.shape()[0]
    }

    pub fn context_dim(&self) -> usize {
        self.pos.shape()[1]
    }

    pub fn context(&self, polarity: Polarity) -> &ParamTensor<T> {
        match polarity {
            Polarity::Positive => &self.pos,
            Polarity::Negative => &self.neg,
        }
    }

    pub fn context_mut(&mut self, polarity: Polarity) -> &mut ParamTensor<T> {
        match polarity {
            Polarity::Positive => &mut self.pos,
            Polarity::Negative => &mut self.neg,
        }
    }

    fn context_mean(&self, polarity: Polarity) -> Vec<T> {
        let ctx = self.context(polarity);
        let m = T::from_usize_lossy(self.context_len());
        let mut mean = vec![T::zero(); self.context_dim()];
        for row in ctx.values.chunks_exact(self.context_dim()) {
            for (acc, &x) in mean.iter_mut().zip(row) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= m);
        mean
    }

    fn check_provider(&self, provider: &FrozenProvider<T>) -> Result<()> {
        if provider.context_dim() != self.context_dim() {
            return Err(Error::Shape(format!(
                "prompt context dimension {} does not match mixer input dimension {}",
                self.context_dim(),
                provider.context_dim()
            )));
        }
        Ok(())
    }

    /// Accumulates context gradients given `dL/dt_k` for every class of one polarity.
    pub fn backward(
        &mut self,
        provider: &FrozenProvider<T>,
        polarity: Polarity,
        encoding: &TextEncoding<T>,
        d_text: &[Vec<T>],
    ) -> Result<()> {
        let mut d_shift = vec![T::zero(); provider.dim()];
        for ((t, &n), g) in encoding.embeddings.iter().zip(&encoding.norms).zip(d_text) {
            let d_u = math::normalize_backward(t, n, g);
            math::axpy(T::one(), &d_u, &mut d_shift);
        }
        let mut d_mean = provider.mixer().matvec_t(&d_shift);
        let m = T::from_usize_lossy(self.context_len());
        d_mean.iter_mut().for_each(|x| *x /= m);
        let row_grad: Vec<T> = d_mean
            .iter()
            .copied()
            .cycle()
            .take(self.context_len() * self.context_dim())
            .collect();
        self.context_mut(polarity).accumulate_grad(&row_grad)
    }
}

impl<T: Scalar> Parameterized<T> for PromptBank<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        vec![&self.pos, &self.neg]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.pos, &mut self.neg]
    }
}

/// Normalized text embeddings of every class for one polarity, with the
/// pre-normalization norms kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoding<T> {
    pub embeddings: Vec<Vector<T>>,
    pub norms: Vec<T>,
}

pub fn encode_classes<T: Scalar>(
    bank: &PromptBank<T>,
    provider: &FrozenProvider<T>,
    polarity: Polarity,
) -> Result<TextEncoding<T>> {
    bank.check_provider(provider)?;
    let shift = provider.mixer().matvec(&bank.context_mean(polarity));
    let mut embeddings = Vec::with_capacity(provider.num_classes());
    let mut norms = Vec::with_capacity(provider.num_classes());
    for anchor in provider.anchors() {
        let u: Vec<T> = anchor.iter().zip(&shift).map(|(&a, &s)| a + s).collect();
        let n = math::norm(&u);
        embeddings.push(Vector::new(math::l2_normalize(&u)?)?);
        norms.push(n);
    }
    Ok(TextEncoding { embeddings, norms })
}

/// Text embedding of one class under one polarity.
pub fn compose_text<T: Scalar>(
    bank: &PromptBank<T>,
    provider: &FrozenProvider<T>,
    polarity: Polarity,
    class_id: usize,
) -> Result<Vector<T>> {
    let anchor = provider.anchor(class_id)?;
    bank.check_provider(provider)?;
    let shift = provider.mixer().matvec(&bank.context_mean(polarity));
    let u: Vec<T> = anchor.iter().zip(&shift).map(|(&a, &s)| a + s).collect();
    Vector::new(math::l2_normalize(&u)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::check_gradients;
    use crate::math::Matrix;
    use proptest::prelude::*;

    fn orthonormal_provider(dim: usize, classes: usize) -> FrozenProvider<f64> {
        FrozenProvider::new(
            vec![Vector::basis(dim, 0)],
            (0..classes).map(|k| Vector::basis(dim, k)).collect(),
            Matrix::identity(dim),
        )
        .unwrap()
    }

    #[test]
    fn zero_context_yields_the_anchor() {
        let provider = orthonormal_provider(4, 3);
        let bank = PromptBank::<f64>::zeros(2, 4);
        for k in 0..3 {
            let t = compose_text(&bank, &provider, Polarity::Positive, k).unwrap();
            assert_eq!(&t, provider.anchor(k).unwrap());
        }
    }

    #[test]
    fn identical_contexts_give_identical_embeddings() {
        let provider = FrozenProvider::with_random_mixer(
            vec![Vector::basis(4, 0)],
            (0..3).map(|k| Vector::basis(4, k)).collect(),
            4,
            5,
        )
        .unwrap();
        let vals: Vec<f64> = SeededRng::new(1).normal_vec(8, 0.3);
        let bank = PromptBank::from_values(2, 4, vals.clone(), vals).unwrap();
        for k in 0..3 {
            assert_eq!(
                compose_text(&bank, &provider, Polarity::Positive, k).unwrap(),
                compose_text(&bank, &provider, Polarity::Negative, k).unwrap()
            );
        }
    }

    #[test]
    fn single_token_hand_computation() {
        let provider = orthonormal_provider(4, 3);
        let mut pos = vec![0.0; 4];
        pos[0] = 1.0;
        let bank = PromptBank::from_values(1, 4, pos, vec![0.0; 4]).unwrap();
        let t = compose_text(&bank, &provider, Polarity::Positive, 1).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let expected = [r, r, 0.0, 0.0];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_class_is_an_index_error() {
        let provider = orthonormal_provider(4, 3);
        let bank = PromptBank::<f64>::zeros(2, 4);
        assert!(matches!(
            compose_text(&bank, &provider, Polarity::Positive, 3),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn distinct_streams_for_polarities() {
        let bank = PromptBank::<f64>::init(4, 8, 0.02, &SeededRng::new(3).split("model1"));
        assert_ne!(bank.pos.values, bank.neg.values);
    }

    #[test]
    fn context_gradient_matches_finite_differences() {
        let dim = 6;
        let provider = FrozenProvider::with_random_mixer(
            vec![Vector::basis(dim, 0)],
            (0..3)
                .map(|k| Vector::new(math::l2_normalize(&SeededRng::new(k).normal_vec(dim, 1.0)).unwrap()).unwrap())
                .collect(),
            5,
            9,
        )
        .unwrap();
        let mut bank = PromptBank::<f64>::init(3, 5, 0.5, &SeededRng::new(4));
        // loss = Σ_k w_k · t_k for a fixed random weight table
        let weights: Vec<Vec<f64>> = (0..3).map(|k| SeededRng::new(100 + k).normal_vec(dim, 1.0)).collect();
        let loss = |b: &PromptBank<f64>| -> Result<f64> {
            let mut total = 0.0;
            for pol in [Polarity::Positive, Polarity::Negative] {
                let enc = encode_classes(b, &provider, pol)?;
                for (t, w) in enc.embeddings.iter().zip(&weights) {
                    total += math::dot(t, w);
                }
            }
            Ok(total)
        };
        for pol in [Polarity::Positive, Polarity::Negative] {
            let enc = encode_classes(&bank, &provider, pol).unwrap();
            bank.backward(&provider, pol, &enc, &weights).unwrap();
        }
        let report = check_gradients(&mut bank, loss, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    proptest! {
        #[test]
        fn composed_text_has_unit_norm(seed in 0u64..1000, sigma in 0.01f64..2.0) {
            let dim = 8;
            let provider = FrozenProvider::with_random_mixer(
                vec![Vector::basis(dim, 0)],
                (0..4).map(|k| Vector::basis(dim, k)).collect(),
                dim,
                seed,
            ).unwrap();
            let bank = PromptBank::<f64>::init(4, dim, sigma, &SeededRng::new(seed));
            for k in 0..4 {
                let t = compose_text(&bank, &provider, Polarity::Negative, k).unwrap();
                prop_assert!((t.norm() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
