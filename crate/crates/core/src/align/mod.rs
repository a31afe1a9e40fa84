//! Alignment training: divergences, losses, gradients, AdamW, and the
//! training loop over a linear adapter.

pub mod adapter;
pub mod divergence;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapter::{AdapterGrads, AdapterParams};
pub use divergence::{jsd, kl_div, softmax, softmax_t, DistributionVector};
pub use loss::{
    grad_adapter, loss_combined, loss_jsd, loss_nce, loss_nce_psg, LossBreakdown, TrainTriplet,
};
pub use optim::{adamw_step, lr_at};
pub use train::{alignment_stats, train, AlignmentStats, StepLog, TrainOutcome, TripletIds};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("triplet line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// `L_JSD + L_NCE`
    Combined,
    JsdOnly,
    NceOnly,
    /// `L_NCE + L_NCE_psg`: passage-pair contrastive alignment instead of JSD.
    NcePsg,
}

impl LossMode {
    pub const ALL: [LossMode; 4] = [
        LossMode::Combined,
        LossMode::JsdOnly,
        LossMode::NceOnly,
        LossMode::NcePsg,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            LossMode::Combined => "combined",
            LossMode::JsdOnly => "jsd-only",
            LossMode::NceOnly => "nce-only",
            LossMode::NcePsg => "nce-psg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub adam_eps: f64,
    /// Added under the square root of the JSD loss.
    pub eps_jsd: f64,
    pub seed: u64,
    pub loss_mode: LossMode,
    /// Softmax temperature for the JSD view; 1 reproduces the plain softmax.
    pub softmax_temperature: f64,
    /// InfoNCE temperature; 1 means raw cosine logits.
    pub nce_temperature: f64,
    /// Adds the query-anchored direction to InfoNCE (averaged with the
    /// passage-anchored one).
    pub nce_symmetric: bool,
    /// Weights of the alignment term and the InfoNCE term.
    pub loss_weights: [f64; 2],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 1,
            lr: 1e-2,
            warmup_ratio: 0.15,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.01,
            adam_eps: 1e-8,
            eps_jsd: 1e-12,
            seed: 42,
            loss_mode: LossMode::Combined,
            softmax_temperature: 1.0,
            nce_temperature: 1.0,
            nce_symmetric: false,
            loss_weights: [1.0, 1.0],
        }
    }
}

impl TrainConfig {
    // negated comparisons so that NaN fails every check
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), AlignError> {
        let bad = |m: &str| Err(AlignError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            return bad("warmup_ratio must lie in (0, 1)");
        }
        if !(self.eps_jsd > 0.0) {
            return bad("eps_jsd must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) {
            return bad("weight_decay must be >= 0 and adam_eps > 0");
        }
        if !(self.softmax_temperature > 0.0) || !(self.nce_temperature > 0.0) {
            return bad("temperatures must be positive");
        }
        if self
            .loss_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return bad("loss weights must be finite and non-negative");
        }
        Ok(())
    }
}
