//! Three-class shortage labels, interchangeable labelling backends, and the
//! classifier evaluation metrics.

mod lexicon;
mod metrics;
mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PeriodName, Review};
use crate::ontology::KeywordOntology;

pub use lexicon::{classify_lexicon, WINDOW};
pub use metrics::{evaluate, ClassMetrics, EvalReport};
pub use remote::{classify_remote, RemoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Shortage,
    NoShortage,
    Unrelated,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Shortage, Label::NoShortage, Label::Unrelated];

    pub fn value(self) -> i64 {
        match self {
            Label::Shortage => -1,
            Label::NoShortage => 1,
            Label::Unrelated => 9,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            -1 => Some(Label::Shortage),
            1 => Some(Label::NoShortage),
            9 => Some(Label::Unrelated),
            _ => None,
        }
    }

    /// Contribution to a perception score; `None` for unrelated reviews.
    pub fn polarity(self) -> Option<i64> {
        match self {
            Label::Unrelated => None,
            other => Some(other.value()),
        }
    }

    fn index(self) -> usize {
        match self {
            Label::Shortage => 0,
            Label::NoShortage => 1,
            Label::Unrelated => 2,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.value())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::from_value(v).ok_or_else(|| serde::de::Error::custom(format!("invalid label {v}")))
    }
}

/// A review joined to its county, period and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReview {
    pub review_id: String,
    pub fips: String,
    pub period: PeriodName,
    pub label: Label,
    /// Epoch milliseconds, kept for monthly aggregation.
    pub timestamp: i64,
}

/// Read a `review_id,label` CSV into a map.
pub fn load_labels<R: Read>(reader: R) -> Result<BTreeMap<String, Label>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["review_id", "label"] {
        return Err(Error::format("labels", "expected header review_id,label"));
    }
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |m: String| Error::format("labels", format!("row {line}: {m}"));
        if record.len() != 2 {
            return Err(err("expected 2 fields".into()));
        }
        let label = record[1]
            .parse::<i64>()
            .ok()
            .and_then(Label::from_value)
            .ok_or_else(|| err(format!("invalid label `{}`", &record[1])))?;
        if out.insert(record[0].to_string(), label).is_some() {
            return Err(err(format!("duplicate review_id {}", &record[0])));
        }
    }
    Ok(out)
}

/// Where labels come from.
#[derive(Debug, Clone)]
pub enum Backend {
    Lexicon(KeywordOntology),
    Remote(RemoteConfig),
    /// Precomputed labels keyed by review id.
    File(BTreeMap<String, Label>),
}

impl Backend {
    /// One label per review, in input order.
    pub fn label(&self, reviews: &[Review]) -> Result<Vec<Label>> {
        match self {
            Backend::Lexicon(ontology) => Ok(reviews
                .iter()
                .map(|r| classify_lexicon(&r.text, ontology))
                .collect()),
            Backend::Remote(cfg) => {
                let texts: Vec<String> = reviews.iter().map(|r| r.text.clone()).collect();
                classify_remote(&texts, cfg)
            }
            Backend::File(map) => reviews
                .iter()
                .map(|r| {
                    map.get(&r.review_id).copied().ok_or_else(|| {
                        Error::format("labels", format!("no label for review {}", r.review_id))
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_file_parsing() {
        let m = load_labels("review_id,label\nr1,-1\nr2,9\n".as_bytes()).unwrap();
        assert_eq!(m["r1"], Label::Shortage);
        assert_eq!(m["r2"], Label::Unrelated);
        let e = load_labels("review_id,label\nr1,2\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        assert!(load_labels("review_id,label\nr1,1\nr1,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn label_values_round_trip() {
        for l in Label::ALL {
            assert_eq!(Label::from_value(l.value()), Some(l));
        }
        assert_eq!(Label::from_value(0), None);
        assert_eq!(serde_json::to_string(&Label::Shortage).unwrap(), "-1");
    }
}
