//! First-order optimizers over [`ParamTensor`]s.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::param::ParamTensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    SgdMomentum {
        #[serde(default = "defaults::momentum")]
        momentum: f64,
    },
    Adam {
        #[serde(default = "defaults::beta1")]
        beta1: f64,
        #[serde(default = "defaults::beta2")]
        beta2: f64,
        #[serde(default = "defaults::eps")]
        eps: f64,
    },
}

mod defaults {
    pub fn momentum() -> f64 {
        0.9
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn eps() -> f64 {
        1e-8
    }
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            eps: defaults::eps(),
        }
    }

    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::SgdMomentum { momentum }
    }
}

/// Per-parameter state. SGD uses only `first` (velocity); Adam uses both moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotState<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    learning_rate: T,
    step_count: u64,
    slots: BTreeMap<String, SlotState<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: T) -> Self {
        Self {
            kind,
            learning_rate,
            step_count: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> T {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: T) {
        self.learning_rate = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn slots(&self) -> &BTreeMap<String, SlotState<T>> {
        &self.slots
    }

    /// Rebuilds an optimizer from serialized state.
    pub fn from_parts(
        kind: OptimizerKind,
        learning_rate: T,
        step_count: u64,
        slots: BTreeMap<String, SlotState<T>>,
    ) -> Self {
        Self {
            kind,
            learning_rate,
            step_count,
            slots,
        }
    }

    /// Applies one update to every parameter and zeroes the gradients.
    ///
    /// All gradients are checked before any value changes, so a non-finite
    /// gradient leaves the parameter set untouched.
    pub fn step(&mut self, params: &mut [&mut ParamTensor<T>]) -> Result<()> {
        if let Some(bad) = params.iter().find(|p| !p.has_finite_grad()) {
            return Err(Error::NonFiniteGradient {
                param: bad.name().to_owned(),
            });
        }
        self.step_count += 1;
        let lr = self.learning_rate;
        for p in params.iter_mut() {
            let n = p.numel();
            let slot = self
                .slots
                .entry(p.name().to_owned())
                .or_insert_with(|| SlotState {
                    first: vec![T::zero(); n],
                    second: Vec::new(),
                });
            if slot.first.len() != n {
                return Err(Error::Shape(format!(
                    "optimizer state for `{}` has {} entries, parameter has {n}",
                    p.name(),
                    slot.first.len()
                )));
            }
            match self.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    let mu = T::lit(momentum);
                    for i in 0..n {
                        slot.first[i] = mu * slot.first[i] + p.grad[i];
                    }
                    if lr != T::zero() {
                        for i in 0..n {
                            p.values[i] -= lr * slot.first[i];
                        }
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    if slot.second.len() != n {
                        slot.second = vec![T::zero(); n];
                    }
                    let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                    let t = self.step_count as i32;
                    let bias1 = T::one() - b1.powi(t);
                    let bias2 = T::one() - b2.powi(t);
                    for i in 0..n {
                        let g = p.grad[i];
                        slot.first[i] = b1 * slot.first[i] + (T::one() - b1) * g;
                        slot.second[i] = b2 * slot.second[i] + (T::one() - b2) * g * g;
                        if lr != T::zero() {
                            let m_hat = slot.first[i] / bias1;
                            let v_hat = slot.second[i] / bias2;
                            p.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    }
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}
