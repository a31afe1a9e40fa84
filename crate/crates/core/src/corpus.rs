//! Fully parallel multilingual corpora.
//!
//! A corpus is a set of translation groups. Every group holds exactly one
//! query and one document in every corpus language. Relevance is structural:
//! the gold documents of a query are the documents of its gold group.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate item: {0}")]
    DuplicateItem(String),
    #[error("parallelism violation: missing {kind} for group {group:?}, language {lang:?}")]
    ParallelismViolation {
        group: String,
        lang: String,
        kind: ItemKind,
    },
    #[error("corpus is empty")]
    Empty,
    #[error("invalid gold map: {0}")]
    InvalidGoldMap(String),
}

/// Lowercase two-letter language code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(code: &str) -> Result<Self, String> {
        if code.len() == 2 && code.bytes().all(|b| b.is_ascii_lowercase()) {
            Ok(Self(code.to_string()))
        } else {
            Err(format!(
                "invalid language code {code:?} (expected two lowercase letters)"
            ))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s)
    }
}

impl From<LanguageTag> for String {
    fn from(t: LanguageTag) -> String {
        t.0
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemKind {
    #[serde(rename = "query")]
    Query,
    #[serde(rename = "doc")]
    Document,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemKind::Query => f.write_str("query"),
            ItemKind::Document => f.write_str("doc"),
        }
    }
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusItem {
    pub id: String,
    pub group: String,
    pub lang: LanguageTag,
    pub kind: ItemKind,
    pub text: String,
}

impl CorpusItem {
    fn slot(&self) -> (&str, &LanguageTag, ItemKind) {
        (&self.group, &self.lang, self.kind)
    }
}

/// A breach of the one-query-one-document-per-(group, language) rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Missing {
        group: String,
        lang: LanguageTag,
        kind: ItemKind,
    },
    Duplicate {
        group: String,
        lang: LanguageTag,
        kind: ItemKind,
        count: usize,
    },
}

/// Scans `items` for every (group, language, kind) slot that does not hold
/// exactly one item. Groups and languages are those present in `items`.
pub fn validate_parallelism(items: &[CorpusItem]) -> Vec<Violation> {
    let groups: BTreeSet<&str> = items.iter().map(|i| i.group.as_str()).collect();
    let langs: BTreeSet<&LanguageTag> = items.iter().map(|i| &i.lang).collect();
    let mut counts: HashMap<(&str, &LanguageTag, ItemKind), usize> = HashMap::new();
    for item in items {
        *counts.entry(item.slot()).or_default() += 1;
    }
    let mut out = Vec::new();
    for g in &groups {
        for l in &langs {
            for kind in [ItemKind::Query, ItemKind::Document] {
                match counts.get(&(*g, *l, kind)).copied().unwrap_or(0) {
                    1 => {}
                    0 => out.push(Violation::Missing {
                        group: g.to_string(),
                        lang: (*l).clone(),
                        kind,
                    }),
                    count => out.push(Violation::Duplicate {
                        group: g.to_string(),
                        lang: (*l).clone(),
                        kind,
                        count,
                    }),
                }
            }
        }
    }
    out
}

/// Validated, immutable parallel corpus. Items are ordered by
/// (group, lang, kind).
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    items: Vec<CorpusItem>,
    languages: Vec<LanguageTag>,
    groups: Vec<String>,
    gold_map: BTreeMap<String, String>,
    by_id: HashMap<String, usize>,
    by_slot: HashMap<(String, LanguageTag, ItemKind), usize>,
}

impl ParallelCorpus {
    pub fn from_items(mut items: Vec<CorpusItem>) -> Result<Self, CorpusError> {
        if items.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(CorpusError::DuplicateItem(item.id.clone()));
            }
        }
        if let Some(v) = validate_parallelism(&items).into_iter().next() {
            return Err(match v {
                Violation::Missing { group, lang, kind } => CorpusError::ParallelismViolation {
                    group,
                    lang: lang.to_string(),
                    kind,
                },
                Violation::Duplicate {
                    group, lang, kind, ..
                } => CorpusError::DuplicateItem(format!("({group}, {lang}, {kind})")),
            });
        }
        items.sort_by(|a, b| a.slot().cmp(&b.slot()));

        let languages: Vec<LanguageTag> = items
            .iter()
            .map(|i| i.lang.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let groups: Vec<String> = items
            .iter()
            .map(|i| i.group.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let gold_map = groups.iter().map(|g| (g.clone(), g.clone())).collect();
        let by_id = items
            .iter()
            .enumerate()
            .map(|(ix, i)| (i.id.clone(), ix))
            .collect();
        let by_slot = items
            .iter()
            .enumerate()
            .map(|(ix, i)| ((i.group.clone(), i.lang.clone(), i.kind), ix))
            .collect();
        Ok(Self {
            items,
            languages,
            groups,
            gold_map,
            by_id,
            by_slot,
        })
    }

    /// Replaces the identity gold map for the listed query groups.
    pub fn with_gold_overrides(
        mut self,
        overrides: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, CorpusError> {
        for (q, d) in overrides {
            if !self.gold_map.contains_key(&q) {
                return Err(CorpusError::InvalidGoldMap(format!(
                    "unknown query group {q:?}"
                )));
            }
            if !self.gold_map.contains_key(&d) {
                return Err(CorpusError::InvalidGoldMap(format!(
                    "unknown document group {d:?}"
                )));
            }
            self.gold_map.insert(q, d);
        }
        Ok(self)
    }

    pub fn items(&self) -> &[CorpusItem] {
        &self.items
    }

    pub fn languages(&self) -> &[LanguageTag] {
        &self.languages
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn has_language(&self, lang: &LanguageTag) -> bool {
        self.languages.contains(lang)
    }

    pub fn item(&self, id: &str) -> Option<&CorpusItem> {
        self.by_id.get(id).map(|&ix| &self.items[ix])
    }

    pub fn lookup(&self, group: &str, lang: &LanguageTag, kind: ItemKind) -> Option<&CorpusItem> {
        self.by_slot
            .get(&(group.to_string(), lang.clone(), kind))
            .map(|&ix| &self.items[ix])
    }

    /// Gold document group for a query group.
    pub fn gold_group(&self, query_group: &str) -> Option<&str> {
        self.gold_map.get(query_group).map(String::as_str)
    }

    /// Items of one language and kind, in group order.
    pub fn of(&self, lang: &LanguageTag, kind: ItemKind) -> impl Iterator<Item = &CorpusItem> {
        let lang = lang.clone();
        self.items
            .iter()
            .filter(move |i| i.lang == lang && i.kind == kind)
    }

    pub fn violations(&self) -> Vec<Violation> {
        validate_parallelism(&self.items)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("corpus item serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

/// Parses newline-delimited corpus records. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<ParallelCorpus, CorpusError> {
    let mut items = Vec::new();
    for (ix, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: CorpusItem = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: ix + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    ParallelCorpus::from_items(items)
}

pub fn load_corpus(path: &Path) -> Result<ParallelCorpus, CorpusError> {
    let f = fs::File::open(path)?;
    parse_corpus(BufReader::new(f))
}
