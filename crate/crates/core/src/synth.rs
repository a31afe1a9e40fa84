//! Synthetic parallel corpora with controllable cross-lingual misalignment.
//!
//! Each item of group `g`, language `l`, kind `k` is embedded as
//!
//! ```text
//! e = alpha * R_l s_g + (1 - alpha) * (beta_l b_l + delta_k) + noise
//! ```
//!
//! * `s_g`: unit latent meaning of the group, shared by every language.
//! * `R_l`: per-language orthogonal map; `R_en = I`, others are the
//!   QR-orthogonalized factor of `I + rotation_strength * G / sqrt(dim)` with
//!   `G` seeded Gaussian.
//! * `b_l`: unit language-identity direction shared by queries and documents
//!   of `l`; `beta_l = bias_strength`, scaled by `pivot_bias_scale` for English.
//! * `delta_k`: `kind_offset` times a fixed unit vector for queries, zero for
//!   documents.
//! * `noise`: i.i.d. Gaussian with standard deviation `noise_sigma`.
//!
//! All draws are keyed by `(seed, stream, group/lang/kind)` through
//! [`crate::rng`], so the output does not depend on generation order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusItem, ItemKind, LanguageTag, ParallelCorpus};
use crate::embedding::EmbeddingMatrix;
use crate::rng::{gaussian_vec, unit_vec};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("language mismatch: corpus has {corpus:?}, config has {config:?}")]
    LanguageMismatch {
        corpus: Vec<String>,
        config: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_groups: usize,
    pub languages: Vec<LanguageTag>,
    pub dim: usize,
    pub alpha: f64,
    pub bias_strength: f64,
    pub noise_sigma: f64,
    pub rotation_strength: f64,
    pub pivot_bias_scale: f64,
    pub kind_offset: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_groups: 500,
            languages: vec![
                LanguageTag::new("en").unwrap(),
                LanguageTag::new("zh").unwrap(),
            ],
            dim: 64,
            alpha: 0.6,
            bias_strength: 0.5,
            noise_sigma: 0.05,
            rotation_strength: 0.9,
            pivot_bias_scale: 0.5,
            kind_offset: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_groups == 0 {
            return bad("n_groups must be positive");
        }
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        for (name, v) in [
            ("bias_strength", self.bias_strength),
            ("noise_sigma", self.noise_sigma),
            ("rotation_strength", self.rotation_strength),
            ("pivot_bias_scale", self.pivot_bias_scale),
            ("kind_offset", self.kind_offset),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if self.languages.first().map(LanguageTag::as_str) != Some("en") {
            return bad("languages must start with \"en\"");
        }
        let mut sorted = self.languages.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.languages.len() {
            return bad("languages must be distinct");
        }
        Ok(())
    }

    fn group_width(&self) -> usize {
        let digits = (self.n_groups.saturating_sub(1)).to_string().len();
        digits.max(4)
    }

    pub fn group_id(&self, g: usize) -> String {
        format!("g{:0width$}", g, width = self.group_width())
    }
}

pub fn item_id(group: &str, lang: &LanguageTag, kind: ItemKind) -> String {
    let k = match kind {
        ItemKind::Query => "q",
        ItemKind::Document => "d",
    };
    format!("{group}-{lang}-{k}")
}

pub fn gen_synthetic_corpus(cfg: &SynthConfig) -> Result<ParallelCorpus, SynthError> {
    cfg.validate()?;
    let mut items = Vec::with_capacity(2 * cfg.n_groups * cfg.languages.len());
    for g in 0..cfg.n_groups {
        let group = cfg.group_id(g);
        for lang in &cfg.languages {
            for kind in [ItemKind::Query, ItemKind::Document] {
                items.push(CorpusItem {
                    id: item_id(&group, lang, kind),
                    group: group.clone(),
                    lang: lang.clone(),
                    kind,
                    text: format!("synthetic {kind} of group {group} in {lang}"),
                });
            }
        }
    }
    // ids are unique and every slot is filled by construction
    Ok(ParallelCorpus::from_items(items).expect("synthetic corpus is parallel"))
}

/// Orthogonal map for a language; identity for English.
pub fn language_rotation(cfg: &SynthConfig, lang: &LanguageTag) -> DMatrix<f64> {
    let d = cfg.dim;
    if lang.is_english() || cfg.rotation_strength == 0.0 {
        return DMatrix::identity(d, d);
    }
    let g = gaussian_vec(cfg.seed, "rotation", &[lang.as_str().as_bytes()], d * d);
    let scale = cfg.rotation_strength / (d as f64).sqrt();
    let m = DMatrix::from_row_slice(d, d, &g).scale(scale) + DMatrix::identity(d, d);
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix column signs so the factorization is unique
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn language_bias(cfg: &SynthConfig, lang: &LanguageTag) -> Vec<f64> {
    unit_vec(cfg.seed, "bias", &[lang.as_str().as_bytes()], cfg.dim)
}

pub fn group_latent(cfg: &SynthConfig, group: &str) -> Vec<f64> {
    unit_vec(cfg.seed, "latent", &[group.as_bytes()], cfg.dim)
}

fn query_offset(cfg: &SynthConfig) -> Vec<f64> {
    unit_vec(cfg.seed, "kind-offset", &[], cfg.dim)
}

pub fn embed_synthetic(
    corpus: &ParallelCorpus,
    cfg: &SynthConfig,
) -> Result<EmbeddingMatrix, SynthError> {
    cfg.validate()?;
    let mut want: Vec<&LanguageTag> = cfg.languages.iter().collect();
    want.sort();
    let have: Vec<&LanguageTag> = corpus.languages().iter().collect();
    if want != have {
        return Err(SynthError::LanguageMismatch {
            corpus: have.iter().map(|l| l.to_string()).collect(),
            config: cfg.languages.iter().map(|l| l.to_string()).collect(),
        });
    }

    let d = cfg.dim;
    let a = cfg.alpha;
    let rotations: Vec<DMatrix<f64>> = corpus
        .languages()
        .iter()
        .map(|l| language_rotation(cfg, l))
        .collect();
    let biases: Vec<Vec<f64>> = corpus
        .languages()
        .iter()
        .map(|l| {
            let scale = if l.is_english() {
                cfg.bias_strength * cfg.pivot_bias_scale
            } else {
                cfg.bias_strength
            };
            language_bias(cfg, l)
                .into_iter()
                .map(|x| x * scale)
                .collect()
        })
        .collect();
    let q_offset: Vec<f64> = query_offset(cfg)
        .into_iter()
        .map(|x| x * cfg.kind_offset)
        .collect();

    let mut ids = Vec::with_capacity(corpus.items().len());
    let mut data = Vec::with_capacity(corpus.items().len() * d);
    let mut latent_cache: Option<(String, nalgebra::DVector<f64>)> = None;
    for item in corpus.items() {
        let li = corpus
            .languages()
            .iter()
            .position(|l| *l == item.lang)
            .expect("item language is a corpus language");
        let latent = match &latent_cache {
            Some((g, v)) if *g == item.group => v.clone(),
            _ => {
                let v = nalgebra::DVector::from_vec(group_latent(cfg, &item.group));
                latent_cache = Some((item.group.clone(), v.clone()));
                v
            }
        };
        let semantic = &rotations[li] * latent;
        let noise = if cfg.noise_sigma > 0.0 {
            let kind = item.kind.to_string();
            gaussian_vec(
                cfg.seed,
                "noise",
                &[
                    item.group.as_bytes(),
                    item.lang.as_str().as_bytes(),
                    kind.as_bytes(),
                ],
                d,
            )
        } else {
            vec![0.0; d]
        };
        for i in 0..d {
            let mut style = biases[li][i];
            if item.kind == ItemKind::Query {
                style += q_offset[i];
            }
            let v = a * semantic[i] + (1.0 - a) * style + cfg.noise_sigma * noise[i];
            data.push(v as f32);
        }
        ids.push(item.id.clone());
    }
    Ok(EmbeddingMatrix::new(d, ids, data).expect("shape is consistent"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_similarity;

    fn small(seed: u64, n: usize) -> SynthConfig {
        SynthConfig {
            seed,
            n_groups: n,
            dim: 16,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn corpus_size_and_determinism() {
        let cfg = small(42, 3);
        let a = gen_synthetic_corpus(&cfg).unwrap();
        assert_eq!(a.items().len(), 12);
        let b = gen_synthetic_corpus(&cfg).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert!(a.violations().is_empty());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig {
                n_groups: 0,
                ..small(1, 1)
            },
            SynthConfig {
                dim: 1,
                ..small(1, 1)
            },
            SynthConfig {
                alpha: 1.5,
                ..small(1, 1)
            },
            SynthConfig {
                noise_sigma: -1.0,
                ..small(1, 1)
            },
            SynthConfig {
                languages: vec![LanguageTag::new("zh").unwrap()],
                ..small(1, 1)
            },
        ];
        for cfg in bad {
            assert!(matches!(
                gen_synthetic_corpus(&cfg),
                Err(SynthError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn rotations_are_orthogonal() {
        let cfg = small(5, 1);
        let r = language_rotation(&cfg, &LanguageTag::new("zh").unwrap());
        let eye = DMatrix::<f64>::identity(16, 16);
        assert!((r.transpose() * &r - eye).abs().max() < 1e-12);
        let en = language_rotation(&cfg, &LanguageTag::new("en").unwrap());
        assert_eq!(en, DMatrix::identity(16, 16));
    }

    #[test]
    fn perfect_alignment_limit() {
        let cfg = SynthConfig {
            alpha: 1.0,
            bias_strength: 0.0,
            noise_sigma: 0.0,
            ..small(42, 4)
        };
        let c = gen_synthetic_corpus(&cfg).unwrap();
        let e = embed_synthetic(&c, &cfg).unwrap();
        let en = LanguageTag::new("en").unwrap();
        let zh = LanguageTag::new("zh").unwrap();
        let r = language_rotation(&cfg, &zh);
        for g in c.groups() {
            let d_en = e.get(&item_id(g, &en, ItemKind::Document)).unwrap();
            let d_zh = e.get(&item_id(g, &zh, ItemKind::Document)).unwrap();
            let mapped =
                &r * nalgebra::DVector::from_iterator(16, d_en.iter().map(|&x| f64::from(x)));
            for i in 0..16 {
                assert!((mapped[i] - f64::from(d_zh[i])).abs() < 1e-6);
            }
            for lang in [&en, &zh] {
                let q = e.get(&item_id(g, lang, ItemKind::Query)).unwrap();
                let d = e.get(&item_id(g, lang, ItemKind::Document)).unwrap();
                assert!((cosine_similarity(q, d).unwrap() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pure_bias_limit() {
        let cfg = SynthConfig {
            alpha: 0.0,
            bias_strength: 1.0,
            noise_sigma: 0.0,
            ..small(42, 3)
        };
        let c = gen_synthetic_corpus(&cfg).unwrap();
        let e = embed_synthetic(&c, &cfg).unwrap();
        let en = LanguageTag::new("en").unwrap();
        let zh = LanguageTag::new("zh").unwrap();
        let b_en = language_bias(&cfg, &en);
        let b_zh = language_bias(&cfg, &zh);
        let expected: f64 = b_en.iter().zip(&b_zh).map(|(a, b)| a * b).sum();
        let docs = |l: &LanguageTag| -> Vec<&[f32]> {
            c.of(l, ItemKind::Document)
                .map(|i| e.get(&i.id).unwrap())
                .collect()
        };
        for l in [&en, &zh] {
            let ds = docs(l);
            for d in &ds {
                assert_eq!(*d, ds[0]);
            }
        }
        let cross = cosine_similarity(docs(&en)[0], docs(&zh)[0]).unwrap();
        assert!((cross - expected).abs() < 1e-6);
    }

    #[test]
    fn embeddings_are_deterministic() {
        let cfg = small(9, 5);
        let c = gen_synthetic_corpus(&cfg).unwrap();
        let a = embed_synthetic(&c, &cfg).unwrap();
        let b = embed_synthetic(&c, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let other = embed_synthetic(&c, &SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.to_bytes(), other.to_bytes());
    }

    #[test]
    fn language_mismatch() {
        let cfg = small(1, 2);
        let c = gen_synthetic_corpus(&cfg).unwrap();
        let other = SynthConfig {
            languages: vec![
                LanguageTag::new("en").unwrap(),
                LanguageTag::new("ar").unwrap(),
            ],
            ..cfg
        };
        assert!(matches!(
            embed_synthetic(&c, &other),
            Err(SynthError::LanguageMismatch { .. })
        ));
    }
}
