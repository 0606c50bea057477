//! Frozen embedding provider and the learnable pieces attached to it.

mod adapter;
mod fft;
mod prompt;
mod provider;

pub use adapter::{adapt_visual, AdapterTrace, VisualAdapter};
pub use fft::{fft_logits, EncoderTrace, FcHead, FftEncoder, FftStudent};
pub use prompt::{compose_text, encode_classes, Polarity, PromptBank, TextEncoding};
pub use provider::{random_mixer, FrozenProvider};
