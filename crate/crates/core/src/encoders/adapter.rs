//! Low-rank residual adapter over frozen visual embeddings:
//! `normalize(x + scale · tanh(x · down) · up)`.

use super::provider::FrozenProvider;
use crate::error::{shape_err, Error, Result};
use crate::grad::{ParamTensor, Parameterized};
use crate::math::{self, Vector};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct VisualAdapter<T> {
    /// `dim x rank`
    down: ParamTensor<T>,
    /// `rank x dim`
    up: ParamTensor<T>,
    scale: T,
}

/// Intermediate values of one forward pass, needed by [`VisualAdapter::backward`].
#[derive(Debug, Clone)]
pub struct AdapterTrace<T> {
    activation: Vec<T>,
    pre_norm: Vec<T>,
    norm: T,
    pub output: Vector<T>,
}

impl<T: Scalar> VisualAdapter<T> {
    pub const DOWN_NAME: &'static str = "adapter.down";
    pub const UP_NAME: &'static str = "adapter.up";

    pub fn from_values(dim: usize, rank: usize, down: Vec<T>, up: Vec<T>, scale: T) -> Result<Self> {
        if dim == 0 || rank == 0 {
            return Err(Error::Shape("adapter dimension and rank must be positive".into()));
        }
        Ok(Self {
            down: ParamTensor::new(Self::DOWN_NAME, vec![dim, rank], down)?,
            up: ParamTensor::new(Self::UP_NAME, vec![rank, dim], up)?,
            scale,
        })
    }

    /// `down ~ N(0, 1/dim)`, `up = 0`: the adapter starts as the identity map.
    pub fn init(dim: usize, rank: usize, scale: T, rng: &SeededRng) -> Self {
        let down = rng.split("down").normal_vec(dim * rank, 1.0 / (dim as f64).sqrt());
        Self::from_values(dim, rank, down, vec![T::zero(); rank * dim], scale).expect("valid shape")
    }

    pub fn dim(&self) -> usize {
        self.down.shape()[0]
    }

    pub fn rank(&self) -> usize {
        self.down.shape()[1]
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn down(&self) -> &ParamTensor<T> {
        &self.down
    }

    pub fn up(&self) -> &ParamTensor<T> {
        &self.up
    }

    pub fn forward_traced(&self, base: &[T]) -> Result<AdapterTrace<T>> {
        let (dim, rank) = (self.dim(), self.rank());
        if base.len() != dim {
            return Err(shape_err("adapter input", dim, base.len()));
        }
        let activation: Vec<T> = math::matvec_t(&self.down.values, dim, rank, base)
            .into_iter()
            .map(T::tanh)
            .collect();
        let residual = math::matvec_t(&self.up.values, rank, dim, &activation);
        let pre_norm: Vec<T> = base
            .iter()
            .zip(&residual)
            .map(|(&x, &r)| x + self.scale * r)
            .collect();
        let norm = math::norm(&pre_norm);
        // A vanishing residual returns the input untouched, bit for bit.
        let output = if residual.iter().all(|r| self.scale * *r == T::zero()) {
            Vector::new(base.to_vec())?
        } else {
            Vector::new(math::l2_normalize(&pre_norm)?)?
        };
        Ok(AdapterTrace {
            activation,
            pre_norm,
            norm,
            output,
        })
    }

    pub fn adapt(&self, base: &[T]) -> Result<Vector<T>> {
        Ok(self.forward_traced(base)?.output)
    }

    /// Accumulates `dL/d down` and `dL/d up` given `dL/d output`.
    pub fn backward(&mut self, base: &[T], trace: &AdapterTrace<T>, d_output: &[T]) -> Result<()> {
        let (dim, rank) = (self.dim(), self.rank());
        let y: Vec<T> = trace.pre_norm.iter().map(|&u| u / trace.norm).collect();
        let d_pre = math::normalize_backward(&y, trace.norm, d_output);
        let d_residual: Vec<T> = d_pre.iter().map(|&g| g * self.scale).collect();

        let mut g_up = vec![T::zero(); rank * dim];
        math::add_outer(&mut g_up, &trace.activation, &d_residual);
        let d_act = math::matvec(&self.up.values, rank, dim, &d_residual);
        let d_hidden: Vec<T> = d_act
            .iter()
            .zip(&trace.activation)
            .map(|(&g, &a)| g * (T::one() - a * a))
            .collect();
        let mut g_down = vec![T::zero(); dim * rank];
        math::add_outer(&mut g_down, base, &d_hidden);

        self.up.accumulate_grad(&g_up)?;
        self.down.accumulate_grad(&g_down)
    }
}

impl<T: Scalar> Parameterized<T> for VisualAdapter<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        vec![&self.down, &self.up]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.down, &mut self.up]
    }
}

/// Adapted embedding of a provider sample.
pub fn adapt_visual<T: Scalar>(
    adapter: &VisualAdapter<T>,
    provider: &FrozenProvider<T>,
    sample_id: usize,
) -> Result<Vector<T>> {
    adapter.adapt(provider.embedding(sample_id)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::check_gradients;
    use proptest::prelude::*;

    fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
        math::l2_normalize(&SeededRng::new(seed).normal_vec(dim, 1.0)).unwrap()
    }

    #[test]
    fn zero_up_is_identity() {
        let adapter = VisualAdapter::<f64>::init(6, 2, 0.1, &SeededRng::new(1));
        let x = random_unit(6, 2);
        assert_eq!(adapter.adapt(&x).unwrap().as_slice(), &x[..]);
    }

    #[test]
    fn zero_scale_is_identity() {
        let rng = SeededRng::new(3);
        let adapter = VisualAdapter::from_values(
            6,
            2,
            rng.split("d").normal_vec(12, 1.0),
            rng.split("u").normal_vec(12, 1.0),
            0.0,
        )
        .unwrap();
        let x = random_unit(6, 4);
        assert_eq!(adapter.adapt(&x).unwrap().as_slice(), &x[..]);
    }

    #[test]
    fn rank_one_hand_fixture() {
        // d = 3, r = 1, down = (1, 0, 0)ᵀ, up = (0, 1, 0), scale 0.5
        let adapter =
            VisualAdapter::from_values(3, 1, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], 0.5).unwrap();
        let x = [0.6, 0.0, 0.8];
        // Independent arithmetic: h = 0.6, a = tanh(0.6), u = (0.6, 0.5a, 0.8)
        let a = 0.6f64.tanh();
        let u = [0.6, 0.5 * a, 0.8];
        let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let out = adapter.adapt(&x).unwrap();
        for (o, ui) in out.iter().zip(u) {
            assert!((o - ui / n).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let adapter = VisualAdapter::<f64>::init(4, 2, 0.1, &SeededRng::new(1));
        assert!(matches!(adapter.adapt(&[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn adapter_gradient_matches_finite_differences() {
        let rng = SeededRng::new(8);
        let mut adapter = VisualAdapter::from_values(
            5,
            3,
            rng.split("d").normal_vec(15, 0.6),
            rng.split("u").normal_vec(15, 0.6),
            0.7,
        )
        .unwrap();
        let x = random_unit(5, 9);
        let w = SeededRng::new(10).normal_vec::<f64>(5, 1.0);
        let trace = adapter.forward_traced(&x).unwrap();
        adapter.backward(&x, &trace, &w).unwrap();
        let report = check_gradients(
            &mut adapter,
            |a: &VisualAdapter<f64>| Ok(math::dot(&a.adapt(&x)?, &w)),
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    proptest! {
        #[test]
        fn output_is_normalized(seed in 0u64..500, scale in 0.01f64..3.0) {
            let rng = SeededRng::new(seed);
            let adapter = VisualAdapter::from_values(
                8, 2, rng.split("d").normal_vec(16, 1.0), rng.split("u").normal_vec(16, 1.0), scale,
            ).unwrap();
            let out = adapter.adapt(&random_unit(8, seed + 1)).unwrap();
            prop_assert!((out.norm() - 1.0).abs() <= 1e-9);
        }
    }
}
