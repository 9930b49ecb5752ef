//! Keyword ontology for health resources and the tokenized matcher that
//! decides whether a review mentions one.
//!
//! Text and keywords are lowercased and split on every non-alphanumeric
//! character, so hyphens and apostrophes act as token boundaries
//! ("pepto-bismol" matches "Pepto Bismol"). A keyword matches a contiguous run
//! of text tokens; its final token also accepts a trailing "s" or "es".

use std::io::Read;

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Review;

const DEFAULT_ONTOLOGY: &[(&str, &[&str])] = &[
    (
        "Essential health supplies",
        &[
            "sanitizer",
            "soap",
            "toilet paper",
            "mask",
            "disinfectant",
            "gloves",
            "thermometer",
            "tissues",
            "wipes",
            "face shield",
            "hand wash",
            "respirators",
            "alcohol",
        ],
    ),
    (
        "Over-the-counter medications",
        &[
            "acetaminophen",
            "tylenol",
            "advil",
            "motrin",
            "ibuprofen",
            "dayquil",
            "nyquil",
            "mucinex",
            "robitussin",
            "sudafed",
            "pepto-bismol",
            "tums",
            "vick's vaporub",
        ],
    ),
    (
        "Preventive healthcare items",
        &["vitamins", "zinc", "pedialyte", "gatorade"],
    ),
    ("Diagnostic tools", &["test kit", "home test", "self test"]),
    ("COVID-19 specific items", &["n95", "hydroxychloroquine"]),
    (
        "Household sanitization products",
        &["lysol spray", "disinfectant wipes"],
    ),
];

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Hit {
    pub category: String,
    pub keyword: String,
}

/// Token range `[start, end)` of one keyword occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
struct CompiledKeyword {
    category: usize,
    keyword: usize,
    tokens: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct KeywordOntology {
    categories: IndexMap<String, Vec<String>>,
    compiled: Vec<CompiledKeyword>,
}

impl PartialEq for KeywordOntology {
    fn eq(&self, other: &Self) -> bool {
        self.categories == other.categories
    }
}

impl KeywordOntology {
    /// Build from category → phrases, lowercasing phrases.
    pub fn new(categories: IndexMap<String, Vec<String>>) -> Result<Self> {
        let mut normalized = IndexMap::with_capacity(categories.len());
        let mut compiled = Vec::new();
        for (ci, (name, phrases)) in categories.into_iter().enumerate() {
            let mut kept: Vec<String> = Vec::with_capacity(phrases.len());
            for phrase in phrases {
                let phrase = phrase.trim().to_lowercase();
                let tokens = tokenize(&phrase);
                if tokens.is_empty() {
                    return Err(Error::format(
                        "ontology",
                        format!("empty keyword in category `{name}`"),
                    ));
                }
                if kept.contains(&phrase) {
                    return Err(Error::format(
                        "ontology",
                        format!("keyword `{phrase}` repeated in category `{name}`"),
                    ));
                }
                compiled.push(CompiledKeyword {
                    category: ci,
                    keyword: kept.len(),
                    tokens,
                });
                kept.push(phrase);
            }
            if normalized.insert(name.clone(), kept).is_some() {
                return Err(Error::format("ontology", format!("category `{name}` repeated")));
            }
        }
        Ok(Self {
            categories: normalized,
            compiled,
        })
    }

    /// Load a JSON object mapping category names to keyword lists.
    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let map: IndexMap<String, Vec<String>> = serde_json::from_reader(reader)
            .map_err(|e| Error::format("ontology", e.to_string()))?;
        Self::new(map)
    }

    pub fn categories(&self) -> &IndexMap<String, Vec<String>> {
        &self.categories
    }

    pub fn keywords(&self, category: &str) -> Option<&[String]> {
        self.categories.get(category).map(Vec::as_slice)
    }

    pub fn contains_keyword(&self, category: &str, keyword: &str) -> bool {
        let keyword = keyword.to_lowercase();
        self.keywords(category)
            .is_some_and(|ks| ks.contains(&keyword))
    }

    fn hit(&self, kw: &CompiledKeyword) -> Hit {
        let (name, phrases) = self
            .categories
            .get_index(kw.category)
            .expect("compiled keyword refers to a known category");
        Hit {
            category: name.clone(),
            keyword: phrases[kw.keyword].clone(),
        }
    }

    /// Every keyword occurrence in an already tokenized text, in keyword
    /// order then position order.
    pub fn find_spans(&self, tokens: &[String]) -> Vec<(Hit, Span)> {
        let mut out = Vec::new();
        for kw in &self.compiled {
            let len = kw.tokens.len();
            if len > tokens.len() {
                continue;
            }
            for start in 0..=tokens.len() - len {
                if phrase_matches(&kw.tokens, &tokens[start..start + len]) {
                    out.push((self.hit(kw), Span { start, end: start + len }));
                }
            }
        }
        out
    }
}

impl Default for KeywordOntology {
    fn default() -> Self {
        default_ontology()
    }
}

fn phrase_matches(keyword: &[String], window: &[String]) -> bool {
    let last = keyword.len() - 1;
    keyword.iter().zip(window).enumerate().all(|(i, (k, t))| {
        if i < last {
            k == t
        } else {
            t == k
                || t.strip_prefix(k.as_str())
                    .is_some_and(|rest| rest == "s" || rest == "es")
        }
    })
}

/// The built-in health-resource ontology: six categories.
pub fn default_ontology() -> KeywordOntology {
    let map = DEFAULT_ONTOLOGY
        .iter()
        .map(|(c, ks)| (c.to_string(), ks.iter().map(|k| k.to_string()).collect()))
        .collect();
    KeywordOntology::new(map).expect("built-in ontology is well formed")
}

/// Distinct (category, keyword) pairs mentioned in `text`.
pub fn matches(text: &str, ontology: &KeywordOntology) -> Vec<Hit> {
    let tokens = tokenize(text);
    let mut hits: Vec<Hit> = Vec::new();
    for (hit, _) in ontology.find_spans(&tokens) {
        if !hits.contains(&hit) {
            hits.push(hit);
        }
    }
    hits
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub kept: Vec<Review>,
    pub dropped: usize,
}

/// Keep reviews that mention at least one ontology keyword, in input order.
pub fn filter_corpus<I>(reviews: I, ontology: &KeywordOntology) -> FilterOutcome
where
    I: IntoIterator<Item = Review>,
{
    let mut kept = Vec::new();
    let mut dropped = 0;
    for review in reviews {
        let tokens = tokenize(&review.text);
        if ontology.find_spans(&tokens).is_empty() {
            dropped += 1;
        } else {
            kept.push(review);
        }
    }
    FilterOutcome { kept, dropped }
}
