//! Run configuration.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! On disk the configuration is TOML written as flat dotted keys
//! (`phase1.epochs = 50`), one per line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::grad::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Single-round PEFT, collaborative filtering, supervised FFT.
    #[default]
    Coft,
    /// Iterated PEFT rounds and momentum-contrastive FFT.
    CoftPlus,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Coft => "coft",
            Mode::CoftPlus => "coft-plus",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coft" => Ok(Mode::Coft),
            "coft-plus" => Ok(Mode::CoftPlus),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Number of context tokens per prompt.
    pub context_len: usize,
    /// Context token width; 0 means "same as the embedding dimension".
    pub context_dim: usize,
    pub context_init_sigma: f64,
    pub adapter_rank: usize,
    pub adapter_scale: f64,
    /// Hidden width of the FFT encoder; 0 means twice the embedding dimension.
    pub fft_hidden: usize,
    pub mixer_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            context_len: 4,
            context_dim: 0,
            context_init_sigma: 0.02,
            adapter_rank: 4,
            adapter_scale: 0.1,
            fft_hidden: 0,
            mixer_seed: 0x5eed,
        }
    }
}

impl EncoderConfig {
    pub fn resolved_context_dim(&self, dim: usize) -> usize {
        if self.context_dim == 0 {
            dim
        } else {
            self.context_dim
        }
    }

    pub fn resolved_hidden(&self, dim: usize) -> usize {
        if self.fft_hidden == 0 {
            2 * dim
        } else {
            self.fft_hidden
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Per-class budget of the high-confidence subset.
    pub top_k: usize,
    /// Temperature of zero-shot inference and of the adapted models.
    pub tau: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { top_k: 16, tau: 0.07 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase1Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the negative-prompt loss.
    pub lambda: f64,
    pub optimizer: OptimizerKind,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-2,
            lambda: 1.0,
            optimizer: OptimizerKind::adam(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase2Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the contrastive loss (coft-plus only).
    pub gamma: f64,
    pub optimizer: OptimizerKind,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            gamma: 0.5,
            optimizer: OptimizerKind::adam(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    /// EMA coefficient of the momentum encoder.
    pub mu: f64,
    pub tau_prime: f64,
    pub queue_capacity: usize,
    pub noise_sigma: f64,
    pub dropout: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            mu: 0.99,
            tau_prime: 0.2,
            queue_capacity: 256,
            noise_sigma: 0.05,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationConfig {
    /// Rounds of re-initialized PEFT (coft-plus only).
    pub rounds: usize,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self { rounds: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    pub paths: PathsConfig,
    pub encoder: EncoderConfig,
    pub selection: SelectionConfig,
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
    pub contrastive: ContrastiveConfig,
    pub iteration: IterationConfig,
    pub synthetic: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Coft,
            paths: PathsConfig::default(),
            encoder: EncoderConfig::default(),
            selection: SelectionConfig::default(),
            phase1: Phase1Config::default(),
            phase2: Phase2Config::default(),
            contrastive: ContrastiveConfig::default(),
            iteration: IterationConfig::default(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<String>) {
    for (key, value) in table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(inner) => flatten(&path, inner, out),
            leaf => out.push(format!("{path} = {leaf}")),
        }
    }
}

impl RunConfig {
    /// Parses TOML (dotted or sectioned) and applies `key = value` overrides on top.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for (key, raw) in overrides {
            let mut parts: Vec<&str> = key.split('.').collect();
            let leaf = parts.pop().filter(|p| !p.is_empty()).ok_or_else(|| {
                Error::Config(format!("empty override key `{key}`"))
            })?;
            let mut cursor = &mut table;
            for part in parts {
                let entry = cursor
                    .entry(part.to_owned())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                cursor = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
            }
            cursor.insert(leaf.to_owned(), parse_override_value(raw));
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flat dotted-key rendering, sorted by key.
    pub fn to_dotted(&self) -> Result<String> {
        let table = toml::Table::try_from(self)
            .map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))?;
        let mut lines = Vec::new();
        flatten("", &table, &mut lines);
        lines.sort();
        Ok(lines.join("\n") + "\n")
    }

    /// Rounds actually executed: coft always runs a single round.
    pub fn effective_rounds(&self) -> usize {
        match self.mode {
            Mode::Coft => 1,
            Mode::CoftPlus => self.iteration.rounds,
        }
    }

    /// Contrastive weight actually applied: zero in coft mode.
    pub fn effective_gamma(&self) -> f64 {
        match self.mode {
            Mode::Coft => 0.0,
            Mode::CoftPlus => self.phase2.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.selection.tau > 0.0) {
            return bad(format!("selection.tau must be positive, got {}", self.selection.tau));
        }
        if self.selection.top_k == 0 {
            return bad("selection.top_k must be at least 1".into());
        }
        if !(self.phase1.lambda >= 0.0) {
            return bad(format!("phase1.lambda must be >= 0, got {}", self.phase1.lambda));
        }
        if !(self.phase2.gamma >= 0.0) {
            return bad(format!("phase2.gamma must be >= 0, got {}", self.phase2.gamma));
        }
        if self.iteration.rounds == 0 {
            return bad("iteration.rounds must be at least 1".into());
        }
        if self.phase1.batch_size == 0 || self.phase2.batch_size == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if !(self.phase1.learning_rate >= 0.0) || !(self.phase2.learning_rate >= 0.0) {
            return bad("learning rates must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.contrastive.mu) {
            return bad(format!("contrastive.mu must lie in [0, 1), got {}", self.contrastive.mu));
        }
        if !(self.contrastive.tau_prime > 0.0) {
            return bad("contrastive.tau_prime must be positive".into());
        }
        if self.contrastive.queue_capacity == 0 {
            return bad("contrastive.queue_capacity must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.contrastive.dropout) || !(self.contrastive.noise_sigma >= 0.0) {
            return bad("contrastive augmentation needs dropout in [0, 1) and noise_sigma >= 0".into());
        }
        if self.encoder.context_len == 0 || self.encoder.adapter_rank == 0 {
            return bad("encoder.context_len and encoder.adapter_rank must be at least 1".into());
        }
        self.synthetic.validate()
    }
}
