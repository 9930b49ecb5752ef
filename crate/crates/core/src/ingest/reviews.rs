//! Line-delimited JSON review corpus.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of malformed line numbers kept for diagnostics.
const MALFORMED_SAMPLE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub business_id: String,
    pub text: String,
    /// Epoch milliseconds, UTC.
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
}

impl Review {
    /// (0, 0) is the usual placeholder for a missing location.
    pub fn has_location(&self) -> bool {
        !(self.latitude == 0.0 && self.longitude == 0.0)
    }
}

#[derive(Deserialize)]
struct RawReview {
    review_id: String,
    business_id: String,
    #[serde(default)]
    text: Option<String>,
    timestamp: i64,
    #[serde(default)]
    latitude: Option<f64>,
    #[serde(default)]
    longitude: Option<f64>,
    #[serde(default)]
    rating: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    MissingText,
    MissingCoordinates,
    CoordinatesOutOfBounds,
    EmptyReviewId,
    DuplicateReviewId,
    InvalidRating,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ParseStats {
    pub lines: usize,
    pub blank: usize,
    pub parsed: usize,
    pub malformed: usize,
    /// First few 1-based line numbers that failed to parse.
    pub malformed_lines: Vec<usize>,
    pub skipped: BTreeMap<SkipReason, usize>,
}

#[derive(Debug, Clone)]
pub struct ParsedReviews {
    pub reviews: Vec<Review>,
    pub stats: ParseStats,
}

/// Parse a JSONL corpus, one review object per line.
///
/// Malformed lines are tallied rather than fatal, unless they make up more
/// than half of the non-blank lines.
pub fn parse_reviews<R: BufRead>(reader: R) -> Result<ParsedReviews> {
    let mut stats = ParseStats::default();
    let mut reviews = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        stats.lines += 1;
        if line.trim().is_empty() {
            stats.blank += 1;
            continue;
        }
        let raw: RawReview = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(_) => {
                stats.malformed += 1;
                if stats.malformed_lines.len() < MALFORMED_SAMPLE {
                    stats.malformed_lines.push(idx + 1);
                }
                continue;
            }
        };
        match validate(raw, &mut seen_ids) {
            Ok(review) => {
                stats.parsed += 1;
                reviews.push(review);
            }
            Err(reason) => *stats.skipped.entry(reason).or_default() += 1,
        }
    }
    let nonblank = stats.lines - stats.blank;
    if nonblank > 0 && stats.malformed * 2 > nonblank {
        return Err(Error::format(
            "review corpus",
            format!(
                "{} of {nonblank} lines are not valid review records; wrong input file?",
                stats.malformed
            ),
        ));
    }
    Ok(ParsedReviews { reviews, stats })
}

fn validate(raw: RawReview, seen: &mut HashSet<String>) -> std::result::Result<Review, SkipReason> {
    if raw.review_id.is_empty() {
        return Err(SkipReason::EmptyReviewId);
    }
    let text = raw.text.ok_or(SkipReason::MissingText)?;
    let (lat, lon) = match (raw.latitude, raw.longitude) {
        (Some(lat), Some(lon)) => (lat, lon),
        _ => return Err(SkipReason::MissingCoordinates),
    };
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(SkipReason::CoordinatesOutOfBounds);
    }
    if matches!(raw.rating, Some(r) if !(1..=5).contains(&r)) {
        return Err(SkipReason::InvalidRating);
    }
    if !seen.insert(raw.review_id.clone()) {
        return Err(SkipReason::DuplicateReviewId);
    }
    Ok(Review {
        review_id: raw.review_id,
        business_id: raw.business_id,
        text,
        timestamp: raw.timestamp,
        latitude: lat,
        longitude: lon,
        rating: raw.rating,
    })
}

/// Drop exact (business_id, text, timestamp) repeats, keeping the first.
/// Returns the number dropped.
pub fn dedup_reviews(reviews: &mut Vec<Review>) -> usize {
    let before = reviews.len();
    let mut seen = HashSet::new();
    reviews.retain(|r| seen.insert((r.business_id.clone(), r.text.clone(), r.timestamp)));
    before - reviews.len()
}

pub fn write_jsonl<W: Write, T: Serialize>(mut writer: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(|e| Error::format("jsonl", e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
