//! Exhaustive cosine ranking over per-query pools.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::embedding::{dot, EmbeddingMatrix};
use crate::scenario::EvalInstance;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("embedding matrix must be L2-normalized before retrieval")]
    NotNormalized,
    #[error("query dimension {query} does not match embedding dimension {emb}")]
    DimensionMismatch { query: usize, emb: usize },
}

/// Full similarity-ordered pool for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub query_id: String,
    #[serde(rename = "ranking")]
    pub ordered: Vec<(String, f64)>,
}

impl Ranking {
    /// 1-based rank of a document, if it is in the ranking.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.ordered
            .iter()
            .position(|(d, _)| d == doc_id)
            .map(|p| p + 1)
    }

    pub fn len(&self) -> usize {
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }
}

/// Descending score, then ascending id.
fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

pub fn rank(
    query_id: &str,
    query_vec: &[f32],
    pool: &[String],
    emb: &EmbeddingMatrix,
) -> Result<Ranking, RetrievalError> {
    if !emb.is_normalized() {
        return Err(RetrievalError::NotNormalized);
    }
    if query_vec.len() != emb.dim() {
        return Err(RetrievalError::DimensionMismatch {
            query: query_vec.len(),
            emb: emb.dim(),
        });
    }
    let mut ordered = pool
        .iter()
        .map(|id| {
            emb.get(id)
                .map(|v| (id.clone(), dot(query_vec, v)))
                .ok_or_else(|| RetrievalError::MissingEmbedding(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ordered.sort_by(by_score_then_id);
    Ok(Ranking {
        query_id: query_id.to_string(),
        ordered,
    })
}

/// Ranks every instance; query vectors are looked up in `emb` by query id.
/// Output order matches `instances` regardless of thread scheduling.
pub fn retrieve_all(
    instances: &[EvalInstance],
    emb: &EmbeddingMatrix,
) -> Result<Vec<Ranking>, RetrievalError> {
    if !emb.is_normalized() {
        return Err(RetrievalError::NotNormalized);
    }
    instances
        .par_iter()
        .map(|inst| {
            let q = emb
                .get(&inst.query_id)
                .ok_or_else(|| RetrievalError::MissingEmbedding(inst.query_id.clone()))?;
            rank(&inst.query_id, q, &inst.pool, emb)
        })
        .collect()
}

/// Writes one `{"query_id", "ranking": [[doc_id, score], ...]}` line per ranking.
pub fn write_rankings<W: Write>(mut w: W, rankings: &[Ranking]) -> std::io::Result<()> {
    for r in rankings {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn emb(rows: &[(&str, [f32; 2])]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            2,
            rows.iter().map(|(id, _)| id.to_string()).collect(),
            rows.iter().flat_map(|(_, v)| v.iter().copied()).collect(),
        )
        .unwrap()
        .l2_normalize()
        .unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_doc_pool() {
        let e = emb(&[("q", [1.0, 0.0]), ("a", [0.0, 1.0])]);
        let r = rank("q", e.get("q").unwrap(), &ids(&["a"]), &e).unwrap();
        assert_eq!(r.rank_of("a"), Some(1));
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let e = emb(&[
            ("q", [1.0, 0.0]),
            ("b", [1.0, 1.0]),
            ("a", [1.0, 1.0]),
            ("c", [1.0, 0.0]),
        ]);
        let r = rank("q", e.get("q").unwrap(), &ids(&["b", "a", "c"]), &e).unwrap();
        let order: Vec<_> = r.ordered.iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(order, ["c", "a", "b"]);
    }

    #[test]
    fn errors() {
        let e = emb(&[("q", [1.0, 0.0])]);
        assert_eq!(
            rank("q", e.get("q").unwrap(), &ids(&["zz"]), &e),
            Err(RetrievalError::MissingEmbedding("zz".into()))
        );
        let raw = EmbeddingMatrix::new(2, ids(&["q"]), vec![1.0, 0.0]).unwrap();
        assert_eq!(
            rank("q", &[1.0, 0.0], &ids(&["q"]), &raw),
            Err(RetrievalError::NotNormalized)
        );
    }

    #[test]
    fn retrieve_all_matches_one_by_one() {
        let e = emb(&[
            ("q1", [1.0, 0.2]),
            ("q2", [0.1, 1.0]),
            ("a", [1.0, 0.0]),
            ("b", [0.0, 1.0]),
            ("c", [0.7, 0.7]),
        ]);
        assert!(retrieve_all(&[], &e).unwrap().is_empty());
        let inst: Vec<EvalInstance> = ["q1", "q2"]
            .iter()
            .map(|q| EvalInstance {
                query_id: q.to_string(),
                pool: ids(&["a", "b", "c"]),
                gold: BTreeSet::from(["a".to_string()]),
            })
            .collect();
        let all = retrieve_all(&inst, &e).unwrap();
        for (i, r) in inst.iter().zip(&all) {
            assert_eq!(
                *r,
                rank(&i.query_id, e.get(&i.query_id).unwrap(), &i.pool, &e).unwrap()
            );
        }
        let mut permuted = inst.clone();
        for p in &mut permuted {
            p.pool.reverse();
        }
        assert_eq!(retrieve_all(&permuted, &e).unwrap(), all);
    }

    #[test]
    fn dump_format() {
        let r = Ranking {
            query_id: "q".into(),
            ordered: vec![("a".into(), 0.5), ("b".into(), 0.25)],
        };
        let mut buf = Vec::new();
        write_rankings(&mut buf, &[r]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"query_id\":\"q\",\"ranking\":[[\"a\",0.5],[\"b\",0.25]]}\n"
        );
    }
}
