//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xlb_core::{LanguageTag, ScenarioKind, SynthConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Synth,
    File,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub source: Source,
    pub path: Option<PathBuf>,
    /// Used when `source` is `synth`; also drives synthetic embeddings.
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingsSection {
    pub source: Source,
    pub path: Option<PathBuf>,
    /// Adapter checkpoint applied to the embeddings before `eval`.
    pub adapter: Option<PathBuf>,
}

/// One scenario kind, expanded over every query language (and partner
/// language) drawn from `langs`, or from the corpus when `langs` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub langs: Option<Vec<LanguageTag>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletSection {
    pub source: Source,
    pub path: Option<PathBuf>,
    /// Number of synthetic triplets (one per sampled group).
    pub n: usize,
    /// Non-English languages cycled through for `p_tgt`; all when absent.
    pub target_langs: Option<Vec<LanguageTag>>,
}

impl Default for TripletSection {
    fn default() -> Self {
        Self {
            source: Source::Synth,
            path: None,
            n: 400,
            target_langs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub config: TrainConfig,
    pub triplets: TripletSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSection {
    pub seed: u64,
    pub batches: usize,
    pub batch_size: usize,
    pub dim: usize,
    pub h: f64,
    pub tolerance: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            seed: 42,
            batches: 20,
            batch_size: 4,
            dim: 8,
            h: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Txt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub embeddings: EmbeddingsSection,
    pub scenarios: Vec<ScenarioEntry>,
    pub k_values: Vec<usize>,
    pub train: TrainSection,
    pub grad_check: GradCheckSection,
    pub output_dir: PathBuf,
    pub report_formats: Vec<ReportFormat>,
    /// Keep per-query metrics inside the JSON reports.
    pub per_query: bool,
    pub dump_rankings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSection::default(),
            embeddings: EmbeddingsSection::default(),
            scenarios: [
                ScenarioKind::Multi,
                ScenarioKind::Multi1,
                ScenarioKind::MonoSame,
                ScenarioKind::MonoCross,
            ]
            .into_iter()
            .map(|kind| ScenarioEntry { kind, langs: None })
            .collect(),
            k_values: vec![1, 5, 10, 20, 100],
            train: TrainSection::default(),
            grad_check: GradCheckSection::default(),
            output_dir: PathBuf::from("out"),
            report_formats: vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::Txt],
            per_query: true,
            dump_rankings: false,
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.corpus.path.as_mut(),
            self.embeddings.path.as_mut(),
            self.embeddings.adapter.as_mut(),
            self.train.triplets.path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Applies a `--seed` override to every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.corpus.synth.seed = seed;
        self.train.config.seed = seed;
        self.grad_check.seed = seed;
    }

    // negated comparisons so that NaN fails every check
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.scenarios.is_empty() {
            return bad("at least one scenario is required".into());
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k_values must be non-empty and all >= 1".into());
        }
        let need = |src: Source, path: &Option<PathBuf>, what: &str| match (src, path) {
            (Source::File, None) => Err(CliError::Config(format!("{what}.path is required"))),
            (Source::File, Some(p)) if !p.exists() => Err(CliError::Config(format!(
                "{what}.path {} does not exist",
                p.display()
            ))),
            _ => Ok(()),
        };
        need(self.corpus.source, &self.corpus.path, "corpus")?;
        need(self.embeddings.source, &self.embeddings.path, "embeddings")?;
        need(
            self.train.triplets.source,
            &self.train.triplets.path,
            "train.triplets",
        )?;
        if self.embeddings.source == Source::Synth && self.corpus.source != Source::Synth {
            return bad("synthetic embeddings need a synthetic corpus".into());
        }
        if let Some(a) = &self.embeddings.adapter {
            if !a.exists() {
                return bad(format!("embeddings.adapter {} does not exist", a.display()));
            }
        }
        self.corpus
            .synth
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train
            .config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let g = &self.grad_check;
        if g.batches == 0 || g.batch_size == 0 || g.dim == 0 || !(g.h > 0.0) || !(g.tolerance > 0.0)
        {
            return bad("grad_check needs positive batches, batch_size, dim, h, tolerance".into());
        }
        Ok(())
    }
}
