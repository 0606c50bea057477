pub mod config;
pub mod data;
pub mod diagnostics;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod grad;
pub mod labels;
pub mod math;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod train;
mod util;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases for the generic types.
pub type Vector = math::Vector<f64>;
pub type Matrix = math::Matrix<f64>;
pub type FrozenProvider = encoders::FrozenProvider<f64>;
pub type PromptBank = encoders::PromptBank<f64>;
pub type VisualAdapter = encoders::VisualAdapter<f64>;
pub type FftStudent = encoders::FftStudent<f64>;
pub type AdaptedModel = train::AdaptedModel<f64>;
pub type Optimizer = grad::Optimizer<f64>;
pub type PipelineOutcome = pipeline::PipelineOutcome<f64>;
