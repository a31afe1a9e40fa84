//! Multi-reference ranking metrics and per-scenario aggregates.
//!
//! * Max@R: worst 1-based rank over the gold set.
//! * Max@R-norm: `100 * (log2|D| - log2 MaxR) / (log2|D| - log2|R|)`, averaged
//!   over queries.
//! * Complete@K: 1 iff every gold document ranks within the top K; aggregated
//!   as a percentage.
//! * NDCG@1 and MRR for single-gold scenarios (binary relevance).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::Ranking;
use crate::scenario::{EvalInstance, ScenarioSpec};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gold document {0:?} is not in the ranking")]
    GoldNotInRanking(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("NDCG@1 is only defined here for a single gold document (got {0})")]
    MultiGoldUnsupported(usize),
    #[error("incompatible reports: {0}")]
    IncompatibleReports(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

/// 1-based ranks of the gold documents, in gold-set order.
pub fn gold_ranks(ranking: &Ranking, gold: &BTreeSet<String>) -> Result<Vec<usize>, MetricsError> {
    let mut ranks: BTreeMap<&str, usize> = gold.iter().map(|g| (g.as_str(), 0)).collect();
    for (pos, (doc, _)) in ranking.ordered.iter().enumerate() {
        if let Some(r) = ranks.get_mut(doc.as_str()) {
            *r = pos + 1;
        }
    }
    ranks
        .into_iter()
        .map(|(g, r)| {
            if r == 0 {
                Err(MetricsError::GoldNotInRanking(g.to_string()))
            } else {
                Ok(r)
            }
        })
        .collect()
}

pub fn max_at_r(ranking: &Ranking, gold: &BTreeSet<String>) -> Result<usize, MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::DomainError("empty gold set".into()));
    }
    Ok(gold_ranks(ranking, gold)?.into_iter().max().unwrap_or(0))
}

pub fn max_at_r_norm(
    max_r: usize,
    pool_size: usize,
    gold_size: usize,
) -> Result<f64, MetricsError> {
    if gold_size == 0 || pool_size <= gold_size {
        return Err(MetricsError::DomainError(format!(
            "need 0 < |R| < |D| (|R| = {gold_size}, |D| = {pool_size})"
        )));
    }
    if max_r < gold_size || max_r > pool_size {
        return Err(MetricsError::DomainError(format!(
            "Max@R {max_r} outside [{gold_size}, {pool_size}]"
        )));
    }
    let d = (pool_size as f64).log2();
    // ratio first so both endpoints come out exact
    let v = 100.0 * ((d - (max_r as f64).log2()) / (d - (gold_size as f64).log2()));
    Ok(v.clamp(0.0, 100.0))
}

pub fn complete_at_k(
    ranking: &Ranking,
    gold: &BTreeSet<String>,
    k: usize,
) -> Result<bool, MetricsError> {
    if k == 0 {
        return Err(MetricsError::DomainError("k must be >= 1".into()));
    }
    Ok(max_at_r(ranking, gold)? <= k)
}

fn single_gold_rank(ranking: &Ranking, gold: &BTreeSet<String>) -> Result<usize, MetricsError> {
    if gold.len() != 1 {
        return Err(MetricsError::MultiGoldUnsupported(gold.len()));
    }
    max_at_r(ranking, gold)
}

pub fn ndcg_at_1(ranking: &Ranking, gold: &BTreeSet<String>) -> Result<f64, MetricsError> {
    Ok(if single_gold_rank(ranking, gold)? == 1 {
        1.0
    } else {
        0.0
    })
}

pub fn reciprocal_rank(ranking: &Ranking, gold: &BTreeSet<String>) -> Result<f64, MetricsError> {
    Ok(1.0 / single_gold_rank(ranking, gold)? as f64)
}

pub fn mrr(rankings: &[Ranking], golds: &[BTreeSet<String>]) -> Result<f64, MetricsError> {
    if rankings.is_empty() || rankings.len() != golds.len() {
        return Err(MetricsError::DomainError(format!(
            "{} rankings for {} gold sets",
            rankings.len(),
            golds.len()
        )));
    }
    let mut sum = 0.0;
    for (r, g) in rankings.iter().zip(golds) {
        sum += reciprocal_rank(r, g)?;
    }
    Ok(sum / rankings.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub max_at_r: usize,
    pub max_at_r_norm: f64,
    pub complete_at_k: BTreeMap<usize, u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ndcg_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reciprocal_rank: Option<f64>,
}

pub fn query_metrics(
    ranking: &Ranking,
    instance: &EvalInstance,
    ks: &[usize],
) -> Result<QueryMetrics, MetricsError> {
    let max_r = max_at_r(ranking, &instance.gold)?;
    let mut complete = BTreeMap::new();
    for &k in ks {
        if k == 0 {
            return Err(MetricsError::DomainError("k must be >= 1".into()));
        }
        complete.insert(k, u8::from(max_r <= k));
    }
    let single = instance.gold.len() == 1;
    Ok(QueryMetrics {
        query_id: instance.query_id.clone(),
        max_at_r: max_r,
        max_at_r_norm: max_at_r_norm(max_r, ranking.len(), instance.gold.len())?,
        complete_at_k: complete,
        ndcg_at_1: single.then_some(if max_r == 1 { 1.0 } else { 0.0 }),
        reciprocal_rank: single.then(|| 1.0 / max_r as f64),
    })
}

/// Aggregate metric selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    MaxAtR,
    MaxAtRNorm,
    CompleteAtK(usize),
    NdcgAt1,
    Mrr,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::MaxAtR => f.write_str("max@r"),
            Metric::MaxAtRNorm => f.write_str("max@r_norm"),
            Metric::CompleteAtK(k) => write!(f, "complete@{k}"),
            Metric::NdcgAt1 => f.write_str("ndcg@1"),
            Metric::Mrr => f.write_str("mrr"),
        }
    }
}

impl FromStr for Metric {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "max@r" => Ok(Metric::MaxAtR),
            "max@r_norm" => Ok(Metric::MaxAtRNorm),
            "ndcg@1" => Ok(Metric::NdcgAt1),
            "mrr" => Ok(Metric::Mrr),
            _ => lower
                .strip_prefix("complete@")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k >= 1)
                .map(Metric::CompleteAtK)
                .ok_or_else(|| MetricsError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub metric: String,
    pub lang_a: String,
    pub lang_b: String,
    pub delta: f64,
}

/// Means over the queries of one scenario and query language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: ScenarioSpec,
    pub n_queries: usize,
    pub pool_size: usize,
    pub gold_size: usize,
    pub max_at_r: f64,
    pub max_at_r_norm: f64,
    /// Percentage (0-100) of queries with every gold document in the top K.
    pub complete_at_k: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ndcg_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mrr: Option<f64>,
    #[serde(default)]
    pub language_gaps: Vec<GapEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_query: Option<Vec<QueryMetrics>>,
}

impl MetricReport {
    pub fn build(
        scenario: &ScenarioSpec,
        instances: &[EvalInstance],
        rankings: &[Ranking],
        ks: &[usize],
        keep_per_query: bool,
    ) -> Result<Self, MetricsError> {
        if instances.is_empty() || instances.len() != rankings.len() {
            return Err(MetricsError::DomainError(format!(
                "{} instances for {} rankings",
                instances.len(),
                rankings.len()
            )));
        }
        let per_query = instances
            .iter()
            .zip(rankings)
            .map(|(i, r)| query_metrics(r, i, ks))
            .collect::<Result<Vec<_>, _>>()?;
        let mut report = Self::aggregate(scenario, &per_query, ks);
        report.pool_size = instances[0].pool.len();
        report.gold_size = instances[0].gold.len();
        if keep_per_query {
            report.per_query = Some(per_query);
        }
        Ok(report)
    }

    /// Arithmetic means over `per_query`, summed in the given order.
    pub fn aggregate(scenario: &ScenarioSpec, per_query: &[QueryMetrics], ks: &[usize]) -> Self {
        let n = per_query.len() as f64;
        let mean = |f: &dyn Fn(&QueryMetrics) -> f64| per_query.iter().map(f).sum::<f64>() / n;
        let complete_at_k = ks
            .iter()
            .map(|&k| {
                (
                    k,
                    100.0 * mean(&|q| f64::from(q.complete_at_k.get(&k).copied().unwrap_or(0))),
                )
            })
            .collect();
        let single = per_query.iter().all(|q| q.reciprocal_rank.is_some());
        Self {
            scenario: scenario.clone(),
            n_queries: per_query.len(),
            pool_size: 0,
            gold_size: scenario.kind.gold_size(),
            max_at_r: mean(&|q| q.max_at_r as f64),
            max_at_r_norm: mean(&|q| q.max_at_r_norm),
            complete_at_k,
            ndcg_at_1: single.then(|| mean(&|q| q.ndcg_at_1.unwrap_or(0.0))),
            mrr: single.then(|| mean(&|q| q.reciprocal_rank.unwrap_or(0.0))),
            language_gaps: Vec::new(),
            per_query: None,
        }
    }

    pub fn value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::MaxAtR => Some(self.max_at_r),
            Metric::MaxAtRNorm => Some(self.max_at_r_norm),
            Metric::CompleteAtK(k) => self.complete_at_k.get(&k).copied(),
            Metric::NdcgAt1 => self.ndcg_at_1,
            Metric::Mrr => self.mrr,
        }
    }

    /// Every aggregate this report carries, in a fixed order.
    pub fn metrics(&self) -> Vec<Metric> {
        let mut m = vec![Metric::MaxAtR, Metric::MaxAtRNorm];
        m.extend(self.complete_at_k.keys().map(|&k| Metric::CompleteAtK(k)));
        if self.ndcg_at_1.is_some() {
            m.push(Metric::NdcgAt1);
        }
        if self.mrr.is_some() {
            m.push(Metric::Mrr);
        }
        m
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn csv_header() -> &'static str {
        "scenario,query_lang,doc_langs,metric,value\n"
    }

    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        let docs = doc_langs(&self.scenario);
        for m in self.metrics() {
            let v = self.value(m).unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                self.scenario.label(),
                self.scenario.query_lang,
                docs,
                m,
                v
            );
        }
        out
    }
}

fn doc_langs(s: &ScenarioSpec) -> String {
    s.doc_langs
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

/// Signed `a - b` of one aggregate for two reports of the same scenario kind
/// and K set. Identical reports give 0.
pub fn language_gap(
    a: &MetricReport,
    b: &MetricReport,
    metric: Metric,
) -> Result<f64, MetricsError> {
    if a.scenario.kind != b.scenario.kind {
        return Err(MetricsError::IncompatibleReports(format!(
            "scenario kinds differ ({} vs {})",
            a.scenario.kind, b.scenario.kind
        )));
    }
    if a.complete_at_k.keys().ne(b.complete_at_k.keys()) {
        return Err(MetricsError::IncompatibleReports("K values differ".into()));
    }
    match (a.value(metric), b.value(metric)) {
        (Some(x), Some(y)) => Ok(x - y),
        _ => Err(MetricsError::IncompatibleReports(format!(
            "{metric} missing"
        ))),
    }
}

/// Fills `language_gaps` of every report with its deltas against each other
/// report of the same scenario kind and a different query language.
pub fn attach_language_gaps(reports: &mut [MetricReport]) {
    let snapshot: Vec<MetricReport> = reports.to_vec();
    for r in reports.iter_mut() {
        r.language_gaps.clear();
        for other in &snapshot {
            if other.scenario.query_lang == r.scenario.query_lang {
                continue;
            }
            for m in r.metrics() {
                if let Ok(delta) = language_gap(r, other, m) {
                    r.language_gaps.push(GapEntry {
                        metric: m.to_string(),
                        lang_a: r.scenario.query_lang.to_string(),
                        lang_b: other.scenario.query_lang.to_string(),
                        delta,
                    });
                }
            }
        }
    }
}

/// Fixed-width text table of reports, one row per report.
pub fn render_table(reports: &[MetricReport]) -> String {
    let ks: BTreeSet<usize> = reports
        .iter()
        .flat_map(|r| r.complete_at_k.keys().copied())
        .collect();
    let mut header = vec![
        "scenario".to_string(),
        "qlang".to_string(),
        "docs".to_string(),
        "n".to_string(),
        "Max@R".to_string(),
        "Max@R_norm".to_string(),
    ];
    header.extend(ks.iter().map(|k| format!("Comp@{k}")));
    header.push("NDCG@1".into());
    header.push("MRR".into());

    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![
            r.scenario.label(),
            r.scenario.query_lang.to_string(),
            doc_langs(&r.scenario),
            r.n_queries.to_string(),
            format!("{:.2}", r.max_at_r),
            format!("{:.2}", r.max_at_r_norm),
        ];
        row.extend(ks.iter().map(|k| {
            r.complete_at_k
                .get(k)
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into())
        }));
        row.push(opt(r.ndcg_at_1));
        row.push(opt(r.mrr));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
