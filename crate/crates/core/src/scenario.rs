//! Evaluation scenarios as explicit per-query pools and gold sets.
//!
//! * `Multi`: both languages' documents in one pool; two gold documents.
//! * `Multi1`: the Multi pool minus the query-language gold document; the
//!   remaining gold is the opposite-language one.
//! * `MonoSame` / `MonoCross`: a single-language pool, same as or different
//!   from the query language.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ItemKind, LanguageTag, ParallelCorpus};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("language {0} is not in the corpus")]
    LanguageNotInCorpus(String),
    #[error("invalid scenario: {0}")]
    SpecViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Multi,
    #[serde(rename = "multi1")]
    Multi1,
    MonoSame,
    MonoCross,
}

impl ScenarioKind {
    pub fn slug(self) -> &'static str {
        match self {
            ScenarioKind::Multi => "multi",
            ScenarioKind::Multi1 => "multi1",
            ScenarioKind::MonoSame => "mono-same",
            ScenarioKind::MonoCross => "mono-cross",
        }
    }

    pub fn gold_size(self) -> usize {
        match self {
            ScenarioKind::Multi => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub query_lang: LanguageTag,
    pub doc_langs: Vec<LanguageTag>,
}

impl ScenarioSpec {
    /// Multi or Multi-1 over `{query_lang, other}`, documents ordered by code.
    pub fn multi(kind: ScenarioKind, query_lang: &LanguageTag, other: &LanguageTag) -> Self {
        let mut doc_langs = vec![query_lang.clone(), other.clone()];
        doc_langs.sort();
        Self {
            kind,
            query_lang: query_lang.clone(),
            doc_langs,
        }
    }

    pub fn mono(query_lang: &LanguageTag, doc_lang: &LanguageTag) -> Self {
        let kind = if query_lang == doc_lang {
            ScenarioKind::MonoSame
        } else {
            ScenarioKind::MonoCross
        };
        Self {
            kind,
            query_lang: query_lang.clone(),
            doc_langs: vec![doc_lang.clone()],
        }
    }

    /// Short name used in report file names, e.g. `multi` or `mono-cross-zh`.
    pub fn label(&self) -> String {
        match self.kind {
            ScenarioKind::MonoCross => format!("mono-cross-{}", self.doc_langs[0]),
            k => k.slug().to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::SpecViolation(m));
        let distinct: BTreeSet<_> = self.doc_langs.iter().collect();
        if distinct.len() != self.doc_langs.len() {
            return fail("doc_langs must be distinct".into());
        }
        match self.kind {
            ScenarioKind::Multi | ScenarioKind::Multi1 => {
                if self.doc_langs.len() != 2 || !self.doc_langs.contains(&self.query_lang) {
                    return fail(format!(
                        "{} needs two doc languages including the query language",
                        self.kind
                    ));
                }
            }
            ScenarioKind::MonoSame => {
                if self.doc_langs != [self.query_lang.clone()] {
                    return fail("mono-same needs doc_langs = [query_lang]".into());
                }
            }
            ScenarioKind::MonoCross => {
                if self.doc_langs.len() != 1 || self.doc_langs[0] == self.query_lang {
                    return fail("mono-cross needs one doc language other than the query's".into());
                }
            }
        }
        Ok(())
    }
}

/// One query, its candidate pool, and its gold documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalInstance {
    pub query_id: String,
    pub pool: Vec<String>,
    pub gold: BTreeSet<String>,
}

pub fn build_scenario(
    corpus: &ParallelCorpus,
    spec: &ScenarioSpec,
) -> Result<Vec<EvalInstance>, ScenarioError> {
    spec.validate()?;
    for l in std::iter::once(&spec.query_lang).chain(&spec.doc_langs) {
        if !corpus.has_language(l) {
            return Err(ScenarioError::LanguageNotInCorpus(l.to_string()));
        }
    }

    // corpus order is (group, lang), so the shared pool is group-major
    let base_pool: Vec<&str> = corpus
        .items()
        .iter()
        .filter(|i| i.kind == ItemKind::Document && spec.doc_langs.contains(&i.lang))
        .map(|i| i.id.as_str())
        .collect();

    let mut out = Vec::with_capacity(corpus.groups().len());
    for query in corpus.of(&spec.query_lang, ItemKind::Query) {
        let gold_group = corpus
            .gold_group(&query.group)
            .expect("gold map is total over query groups");
        let gold_doc = |l: &LanguageTag| {
            corpus
                .lookup(gold_group, l, ItemKind::Document)
                .expect("parallel corpus has every document")
                .id
                .clone()
        };
        let (pool, gold): (Vec<String>, BTreeSet<String>) = match spec.kind {
            ScenarioKind::Multi => (
                base_pool.iter().map(|s| s.to_string()).collect(),
                spec.doc_langs.iter().map(gold_doc).collect(),
            ),
            ScenarioKind::Multi1 => {
                let same = gold_doc(&spec.query_lang);
                let other = spec
                    .doc_langs
                    .iter()
                    .find(|l| **l != spec.query_lang)
                    .expect("validated: two languages");
                (
                    base_pool
                        .iter()
                        .filter(|s| **s != same)
                        .map(|s| s.to_string())
                        .collect(),
                    BTreeSet::from([gold_doc(other)]),
                )
            }
            ScenarioKind::MonoSame | ScenarioKind::MonoCross => (
                base_pool.iter().map(|s| s.to_string()).collect(),
                BTreeSet::from([gold_doc(&spec.doc_langs[0])]),
            ),
        };
        out.push(EvalInstance {
            query_id: query.id.clone(),
            pool,
            gold,
        });
    }
    Ok(out)
}
