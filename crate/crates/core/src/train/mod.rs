//! Phase-I dual-prompt training, collaborative filtering, Phase-II fine-tuning
//! and the momentum-contrastive extension.

mod dual;
mod filter;
mod iterate;
mod model;
mod momentum;
mod phase1;
mod phase2;

pub use dual::{
    clean_probability, draw_complements, dual_objective, loss_negative, loss_negative_with, loss_positive,
    negative_terms, phase1_loss, NegativeTerms, Phase1Loss,
};
pub use filter::{collaborate, collaborative_filter, FilterOutcome};
pub use iterate::{init_model, iterate_peft, PeftOutcome, PeftSettings, RoundRecord};
pub use model::{AdaptedModel, ModelId, ModelShape, TextTables};
pub use momentum::{
    contrastive_loss_fixed, contrastive_objective, contrastive_views, loss_contrastive, momentum_update,
    Augmenter, ContrastiveValue, ContrastiveViews, EmbeddingAugmenter, KeyQueue, MomentumState,
};
pub use phase1::{train_phase1, EpochStats, TrainReport};
pub use phase2::{fft_loss, phase2_loss, train_fft, train_phase2_plus, ContrastiveSetup, Phase2Loss};
