//! Evaluation and alignment harness for cross-lingual dense retrieval.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! | Module | Role |
//! |--------|------|
//! | [`corpus`] | fully parallel query/document corpora |
//! | [`synth`] | deterministic synthetic corpora and misaligned embeddings |
//! | [`embedding`] | dense vectors, normalization, cosine, binary `.xleb` files |
//! | [`scenario`] | Multi / Multi-1 / Mono-Same / Mono-Cross pools and gold sets |
//! | [`retrieval`] | exhaustive cosine ranking |
//! | [`metrics`] | Max@R, Max@R-norm, Complete@K, NDCG@1, MRR, language gaps |
//! | [`align`] | JSD + InfoNCE losses, analytic adapter gradients, AdamW training |
//!
//! A multi-reference query has one gold document per pool language; Max@R is
//! the worst rank among them, i.e. the cutoff at which every gold document has
//! been retrieved.

pub mod align;
pub mod corpus;
pub mod embedding;
pub mod metrics;
pub mod retrieval;
pub mod rng;
pub mod scenario;
pub mod synth;

pub use align::{AdapterParams, LossMode, TrainConfig, TrainTriplet};
pub use corpus::{CorpusItem, ItemKind, LanguageTag, ParallelCorpus};
pub use embedding::EmbeddingMatrix;
pub use metrics::{MetricReport, QueryMetrics};
pub use retrieval::Ranking;
pub use scenario::{EvalInstance, ScenarioKind, ScenarioSpec};
pub use synth::SynthConfig;
