//! Seeded, strictly sequential training loop and triplet data.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adapter::AdapterParams;
use super::divergence::{jsd, softmax};
use super::loss::{grad_adapter, TrainTriplet};
use super::optim::{adamw_step, lr_at};
use super::{AlignError, TrainConfig};
use crate::corpus::{ItemKind, LanguageTag, ParallelCorpus};
use crate::embedding::EmbeddingMatrix;
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub l_jsd: f64,
    pub l_nce: f64,
    pub l_nce_psg: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub adapter: AdapterParams,
    pub log: Vec<StepLog>,
}

pub fn steps_per_epoch(n_triplets: usize, batch_size: usize) -> usize {
    n_triplets.div_ceil(batch_size)
}

/// Trains an identity-initialized adapter. Each epoch visits the triplets in
/// an order drawn from `(seed, epoch)`; the last batch of an epoch may be
/// short.
pub fn train(triplets: &[TrainTriplet], cfg: &TrainConfig) -> Result<TrainOutcome, AlignError> {
    cfg.validate()?;
    let first = triplets.first().ok_or(AlignError::EmptyBatch)?;
    let mut adapter = AdapterParams::identity(first.dim());
    let per_epoch = steps_per_epoch(triplets.len(), cfg.batch_size);
    let total_steps = per_epoch * cfg.epochs;
    let mut log = Vec::with_capacity(total_steps);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        let mut rng = keyed_rng(cfg.seed, "shuffle", &[&(epoch as u64).to_le_bytes()]);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch: Vec<TrainTriplet> = chunk.iter().map(|&i| triplets[i].clone()).collect();
            let (loss, grads) = grad_adapter(&batch, &adapter, cfg)?;
            if !loss.total.is_finite() {
                return Err(AlignError::NonFiniteLoss { step });
            }
            let lr = lr_at(step, total_steps, cfg);
            log.push(StepLog {
                step,
                epoch,
                lr,
                l_jsd: loss.l_jsd,
                l_nce: loss.l_nce,
                l_nce_psg: loss.l_nce_psg,
                total: loss.total,
            });
            adamw_step(&mut adapter, &grads, cfg, lr).map_err(|e| match e {
                AlignError::NonFiniteGradient { .. } => AlignError::NonFiniteGradient { step },
                other => other,
            })?;
        }
    }
    Ok(TrainOutcome { adapter, log })
}

pub fn loss_log_csv(log: &[StepLog]) -> String {
    let mut out = String::from("step,epoch,lr,l_jsd,l_nce,l_nce_psg,total\n");
    for s in log {
        let _ = writeln!(
            out,
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            s.step, s.epoch, s.lr, s.l_jsd, s.l_nce, s.l_nce_psg, s.total
        );
    }
    out
}

/// Parallel-pair diagnostics of an adapter over a set of triplets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    /// Mean `JSD(softmax(A p_en), softmax(A p_tgt))`.
    pub mean_jsd: f64,
    pub mean_cos_q_en_p_tgt: f64,
    pub mean_cos_p_en_p_tgt: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn alignment_stats(
    triplets: &[TrainTriplet],
    adapter: &AdapterParams,
) -> Result<AlignmentStats, AlignError> {
    if triplets.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let (mut j, mut cq, mut cp) = (0.0, 0.0, 0.0);
    for t in triplets {
        let q = adapter.apply(&t.q_en);
        let pe = adapter.apply(&t.p_en);
        let pt = adapter.apply(&t.p_tgt);
        j += jsd(softmax(&pe)?.as_slice(), softmax(&pt)?.as_slice())?;
        cq += cosine(&q, &pt);
        cp += cosine(&pe, &pt);
    }
    let n = triplets.len() as f64;
    Ok(AlignmentStats {
        mean_jsd: j / n,
        mean_cos_q_en_p_tgt: cq / n,
        mean_cos_p_en_p_tgt: cp / n,
    })
}

/// One line of a triplet file: item ids resolved against an embedding matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletIds {
    pub q_en: String,
    pub p_en: String,
    pub p_tgt: String,
}

pub fn parse_triplets<R: BufRead>(reader: R) -> Result<Vec<TripletIds>, AlignError> {
    let mut out = Vec::new();
    for (ix, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AlignError::Parse {
            line: ix + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn triplets_jsonl(ids: &[TripletIds]) -> String {
    ids.iter()
        .map(|t| serde_json::to_string(t).expect("triplet serializes") + "\n")
        .collect()
}

pub fn resolve_triplets(
    ids: &[TripletIds],
    emb: &EmbeddingMatrix,
) -> Result<Vec<TrainTriplet>, AlignError> {
    let get = |id: &str| -> Result<Vec<f64>, AlignError> {
        emb.get(id)
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .ok_or_else(|| AlignError::MissingEmbedding(id.to_string()))
    };
    ids.iter()
        .map(|t| {
            Ok(TrainTriplet {
                q_en: get(&t.q_en)?,
                p_en: get(&t.p_en)?,
                p_tgt: get(&t.p_tgt)?,
            })
        })
        .collect()
}

/// `(q_en, p_en, p_tgt)` ids for `n` seeded-random groups of a parallel
/// corpus, cycling through `targets`.
pub fn parallel_triplet_ids(
    corpus: &ParallelCorpus,
    targets: &[LanguageTag],
    n: usize,
    seed: u64,
) -> Result<Vec<TripletIds>, AlignError> {
    let en = LanguageTag::new("en").expect("valid code");
    if !corpus.has_language(&en) {
        return Err(AlignError::InvalidConfig(
            "corpus has no English items".into(),
        ));
    }
    if targets.is_empty() {
        return Err(AlignError::InvalidConfig("no target languages".into()));
    }
    for t in targets {
        if t.is_english() || !corpus.has_language(t) {
            return Err(AlignError::InvalidConfig(format!(
                "target language {t} must be a non-English corpus language"
            )));
        }
    }
    if n == 0 || n > corpus.groups().len() {
        return Err(AlignError::InvalidConfig(format!(
            "cannot draw {n} triplets from {} groups",
            corpus.groups().len()
        )));
    }
    let mut groups: Vec<&String> = corpus.groups().iter().collect();
    groups.shuffle(&mut keyed_rng(seed, "triplets", &[]));
    let id = |g: &str, l: &LanguageTag, k: ItemKind| {
        corpus
            .lookup(g, l, k)
            .map(|i| i.id.clone())
            .expect("parallel corpus has every slot")
    };
    Ok(groups
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, g)| {
            let tgt = &targets[i % targets.len()];
            TripletIds {
                q_en: id(g, &en, ItemKind::Query),
                p_en: id(g, &en, ItemKind::Document),
                p_tgt: id(g, tgt, ItemKind::Document),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::gradcheck::random_case;
    use crate::synth::{gen_synthetic_corpus, SynthConfig};

    fn data() -> Vec<TrainTriplet> {
        random_case(5, 0, 50, 6).0
    }

    #[test]
    fn zero_lr_leaves_adapter_unchanged() {
        let batch = random_case(1, 0, 10, 4).0;
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let out = train(&batch, &cfg).unwrap();
        assert_eq!(out.adapter.w, AdapterParams::identity(4).w);
        assert_eq!(out.adapter.b, vec![0.0; 4]);
        assert_eq!(out.log.len(), 3);
        for s in &out.log {
            assert!((s.total - out.log[0].total).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 2,
            ..TrainConfig::default()
        };
        let a = train(&data(), &cfg).unwrap();
        let b = train(&data(), &cfg).unwrap();
        assert_eq!(a.adapter.to_bytes(), b.adapter.to_bytes());
        assert_eq!(loss_log_csv(&a.log), loss_log_csv(&b.log));
        let c = train(&data(), &TrainConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a.adapter.to_bytes(), c.adapter.to_bytes());
    }

    #[test]
    fn short_final_batch_is_kept() {
        let cfg = TrainConfig {
            batch_size: 16,
            ..TrainConfig::default()
        };
        let out = train(&data(), &cfg).unwrap();
        assert_eq!(out.log.len(), 4);
        assert_eq!(out.adapter.steps(), 4);
    }

    #[test]
    fn rejects_bad_config_and_empty_data() {
        assert!(matches!(
            train(&[], &TrainConfig::default()),
            Err(AlignError::EmptyBatch)
        ));
        for cfg in [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                warmup_ratio: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                eps_jsd: 0.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(
                train(&data(), &cfg),
                Err(AlignError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn triplet_ids_are_seeded_and_resolvable() {
        let scfg = SynthConfig {
            n_groups: 20,
            dim: 8,
            ..SynthConfig::default()
        };
        let corpus = gen_synthetic_corpus(&scfg).unwrap();
        let zh = LanguageTag::new("zh").unwrap();
        let a = parallel_triplet_ids(&corpus, std::slice::from_ref(&zh), 12, 42).unwrap();
        assert_eq!(
            a,
            parallel_triplet_ids(&corpus, std::slice::from_ref(&zh), 12, 42).unwrap()
        );
        assert_eq!(a.len(), 12);
        for t in &a {
            let g = &corpus.item(&t.q_en).unwrap().group;
            assert_eq!(&corpus.item(&t.p_tgt).unwrap().group, g);
            assert!(t.p_tgt.ends_with("-zh-d"));
        }
        let text = triplets_jsonl(&a);
        assert_eq!(parse_triplets(text.as_bytes()).unwrap(), a);
        let emb = crate::synth::embed_synthetic(&corpus, &scfg).unwrap();
        assert_eq!(resolve_triplets(&a, &emb).unwrap().len(), 12);
        assert!(parallel_triplet_ids(&corpus, &[zh], 21, 42).is_err());
        let missing = [TripletIds {
            q_en: "nope".into(),
            p_en: a[0].p_en.clone(),
            p_tgt: a[0].p_tgt.clone(),
        }];
        assert!(matches!(
            resolve_triplets(&missing, &emb),
            Err(AlignError::MissingEmbedding(_))
        ));
    }
}
