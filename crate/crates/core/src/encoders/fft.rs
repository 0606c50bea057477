//! Fully fine-tuned visual encoder and classification head.
//!
//! The encoder is a residual two-layer MLP `x + W2 tanh(W1 x + b1) + b2`
//! over frozen embeddings, initialized with `W2 = 0, b2 = 0` so it starts
//! as the identity.

use super::provider::FrozenProvider;
use crate::error::{shape_err, Error, Result};
use crate::grad::{ParamTensor, Parameterized};
use crate::math::{self, Vector};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FftEncoder<T> {
    /// `hidden x dim`
    w1: ParamTensor<T>,
    b1: ParamTensor<T>,
    /// `dim x hidden`
    w2: ParamTensor<T>,
    b2: ParamTensor<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    activation: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> FftEncoder<T> {
    pub fn init(dim: usize, hidden: usize, rng: &SeededRng) -> Self {
        let w1 = rng.split("w1").normal_vec(hidden * dim, 1.0 / (dim as f64).sqrt());
        Self {
            w1: ParamTensor::new("fft.w1", vec![hidden, dim], w1).expect("sized"),
            b1: ParamTensor::zeros("fft.b1", vec![hidden]),
            w2: ParamTensor::zeros("fft.w2", vec![dim, hidden]),
            b2: ParamTensor::zeros("fft.b2", vec![dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn forward_traced(&self, x: &[T]) -> Result<EncoderTrace<T>> {
        let (dim, hidden) = (self.dim(), self.hidden());
        if x.len() != dim {
            return Err(shape_err("encoder input", dim, x.len()));
        }
        let activation: Vec<T> = math::matvec(&self.w1.values, hidden, dim, x)
            .into_iter()
            .zip(&self.b1.values)
            .map(|(z, &b)| (z + b).tanh())
            .collect();
        let mixed = math::matvec(&self.w2.values, dim, hidden, &activation);
        let output = x
            .iter()
            .zip(&mixed)
            .zip(&self.b2.values)
            .map(|((&xi, &m), &b)| xi + m + b)
            .collect();
        Ok(EncoderTrace { activation, output })
    }

    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_traced(x)?.output)
    }

    pub fn backward(&mut self, x: &[T], trace: &EncoderTrace<T>, d_output: &[T]) -> Result<()> {
        let (dim, hidden) = (self.dim(), self.hidden());
        let mut g_w2 = vec![T::zero(); dim * hidden];
        math::add_outer(&mut g_w2, d_output, &trace.activation);
        let d_act = math::matvec_t(&self.w2.values, dim, hidden, d_output);
        let d_pre: Vec<T> = d_act
            .iter()
            .zip(&trace.activation)
            .map(|(&g, &a)| g * (T::one() - a * a))
            .collect();
        let mut g_w1 = vec![T::zero(); hidden * dim];
        math::add_outer(&mut g_w1, &d_pre, x);
        self.w2.accumulate_grad(&g_w2)?;
        self.b2.accumulate_grad(d_output)?;
        self.w1.accumulate_grad(&g_w1)?;
        self.b1.accumulate_grad(&d_pre)
    }
}

impl<T: Scalar> Parameterized<T> for FftEncoder<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// `f(v) = W v + b`
#[derive(Debug, Clone, PartialEq)]
pub struct FcHead<T> {
    weight: ParamTensor<T>,
    bias: ParamTensor<T>,
}

impl<T: Scalar> FcHead<T> {
    /// Zero weights and bias: uniform logits.
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weight: ParamTensor::zeros("head.weight", vec![classes, dim]),
            bias: ParamTensor::zeros("head.bias", vec![classes]),
        }
    }

    pub fn from_values(classes: usize, dim: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        Ok(Self {
            weight: ParamTensor::new("head.weight", vec![classes, dim], weight)?,
            bias: ParamTensor::new("head.bias", vec![classes], bias)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn logits(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.dim() {
            return Err(shape_err("head input", self.dim(), v.len()));
        }
        Ok(math::matvec(&self.weight.values, self.classes(), self.dim(), v)
            .into_iter()
            .zip(&self.bias.values)
            .map(|(z, &b)| z + b)
            .collect())
    }

    /// Accumulates head gradients and returns `dL/dv`.
    pub fn backward(&mut self, v: &[T], d_logits: &[T]) -> Result<Vec<T>> {
        let mut g_w = vec![T::zero(); self.classes() * self.dim()];
        math::add_outer(&mut g_w, d_logits, v);
        let d_v = math::matvec_t(&self.weight.values, self.classes(), self.dim(), d_logits);
        self.weight.accumulate_grad(&g_w)?;
        self.bias.accumulate_grad(d_logits)?;
        Ok(d_v)
    }
}

impl<T: Scalar> Parameterized<T> for FcHead<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Encoder plus head: the model trained in the second phase.
#[derive(Debug, Clone, PartialEq)]
pub struct FftStudent<T> {
    pub encoder: FftEncoder<T>,
    pub head: FcHead<T>,
}

impl<T: Scalar> FftStudent<T> {
    pub fn init(dim: usize, hidden: usize, classes: usize, rng: &SeededRng) -> Self {
        Self {
            encoder: FftEncoder::init(dim, hidden, &rng.split("encoder")),
            head: FcHead::zeros(classes, dim),
        }
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.head.logits(&self.encoder.encode(x)?)
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(math::argmax(&self.logits(x)?))
    }
}

impl<T: Scalar> Parameterized<T> for FftStudent<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        let mut all = self.encoder.params();
        all.extend(self.head.params());
        all
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut all = self.encoder.params_mut();
        all.extend(self.head.params_mut());
        all
    }
}

/// Class logits of a provider sample.
pub fn fft_logits<T: Scalar>(
    student: &FftStudent<T>,
    provider: &FrozenProvider<T>,
    sample_id: usize,
) -> Result<Vector<T>> {
    let x = provider.embedding(sample_id)?;
    if student.encoder.dim() != x.dim() {
        return Err(Error::Shape(format!(
            "student expects dimension {}, provider has {}",
            student.encoder.dim(),
            x.dim()
        )));
    }
    Vector::new(student.logits(x)?)
}
