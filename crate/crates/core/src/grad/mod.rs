//! Parameter registry, optimizers, finite-difference verification and checkpoints.
//!
//! Gradients are derived by hand for each loss; this module only stores,
//! checks and applies them.

mod check;
mod checkpoint;
mod optim;
mod param;

pub use check::{
    check_gradients, relative_error, ComponentMismatch, GradReport, ParamCheck,
    RELATIVE_ERROR_FLOOR,
};
pub use checkpoint::{Checkpoint, CheckpointManifest, OptimizerSection, TensorEntry, CHECKPOINT_FORMAT};
pub use optim::{Optimizer, OptimizerKind, SlotState};
pub use param::{ParamTensor, Parameterized};
