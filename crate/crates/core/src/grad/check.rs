//! Central finite-difference verification of analytic gradients.

use super::param::Parameterized;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Denominator floor of the relative error. Components whose analytic and
/// numeric gradients are both below this magnitude are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub components: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub failures: Vec<ComponentMismatch>,
}

impl ParamCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub params: Vec<ParamCheck>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(ParamCheck::passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_relative_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares the gradients currently stored in `model` against central
/// differences of `loss`.
///
/// The caller must have run the analytic backward pass at the current
/// parameter values. `loss` is evaluated twice at the unperturbed point; any
/// difference between the two values is reported as a contract error.
pub fn check_gradients<T, M, F>(model: &mut M, mut loss: F, eps: f64, tol: f64) -> Result<GradReport>
where
    T: Scalar,
    M: Parameterized<T>,
    F: FnMut(&M) -> Result<T>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Domain(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let base = loss(model)?.to_f64_lossless();
    let again = loss(model)?.to_f64_lossless();
    if base.to_bits() != again.to_bits() {
        return Err(Error::Contract(format!(
            "loss is not deterministic: {base} vs {again}"
        )));
    }

    let h = T::lit(eps);
    let two_h = T::lit(2.0 * eps);
    let count = model.params().len();
    let mut params = Vec::with_capacity(count);
    for p in 0..count {
        let (name, analytic) = {
            let all = model.params();
            (all[p].name().to_owned(), all[p].grad.clone())
        };
        let mut check = ParamCheck {
            name,
            components: analytic.len(),
            max_relative_error: 0.0,
            worst_index: 0,
            failures: Vec::new(),
        };
        for (i, &a) in analytic.iter().enumerate() {
            let original = model.params()[p].values[i];
            model.params_mut()[p].values[i] = original + h;
            let plus = loss(model);
            model.params_mut()[p].values[i] = original - h;
            let minus = loss(model);
            model.params_mut()[p].values[i] = original;
            let numeric = ((plus? - minus?) / two_h).to_f64_lossless();
            let a = a.to_f64_lossless();
            let rel = relative_error(a, numeric);
            if rel > check.max_relative_error || rel.is_nan() {
                check.max_relative_error = rel;
                check.worst_index = i;
            }
            if !(rel <= tol) {
                check.failures.push(ComponentMismatch {
                    index: i,
                    analytic: a,
                    numeric,
                    relative_error: rel,
                });
            }
        }
        params.push(check);
    }
    Ok(GradReport { params })
}
