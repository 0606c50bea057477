use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// A named, learnable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    name: String,
    shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(shape_err("parameter values", numel, values.len()));
        }
        Ok(Self {
            name: name.into(),
            shape,
            grad: vec![T::zero(); values.len()],
            values,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self::new(name, shape, vec![T::zero(); numel]).expect("consistent by construction")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// `grad += contribution`, elementwise.
    pub fn accumulate_grad(&mut self, contribution: &[T]) -> Result<()> {
        if contribution.len() != self.grad.len() {
            return Err(Error::Shape(format!(
                "gradient contribution for `{}` has length {}, expected {}",
                self.name,
                contribution.len(),
                self.grad.len()
            )));
        }
        for (g, &c) in self.grad.iter_mut().zip(contribution) {
            *g += c;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn has_finite_grad(&self) -> bool {
        self.grad.iter().all(|g| g.is_finite())
    }

    /// Identical shape and bit-identical values.
    pub fn values_bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_f64_lossless().to_bits() == b.to_f64_lossless().to_bits())
    }
}

/// A module that owns trainable parameters.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<&ParamTensor<T>>;

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_examples() {
        let mut p = ParamTensor::<f64>::zeros("p", vec![2]);
        p.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(p.grad, vec![1.0, 2.0]);

        let mut q = ParamTensor::<f64>::zeros("q", vec![2]);
        q.accumulate_grad(&[1.0, 0.0]).unwrap();
        q.accumulate_grad(&[0.0, 1.0]).unwrap();
        assert_eq!(q.grad, vec![1.0, 1.0]);

        assert!(matches!(
            q.accumulate_grad(&[1.0, 2.0, 3.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn shape_must_match_values() {
        assert!(ParamTensor::<f64>::new("w", vec![2, 3], vec![0.0; 5]).is_err());
        let p = ParamTensor::<f64>::new("w", vec![2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(p.numel(), 6);
        assert_eq!(p.grad.len(), 6);
    }
}
