//! Deterministic rule-based labeller.
//!
//! A shortage cue or an availability cue decides the label when it sits
//! within [`WINDOW`] content tokens of an ontology hit. The cue closest to a
//! hit wins; an exact distance tie goes to Shortage. Function words (articles,
//! prepositions, pronouns) are skipped when measuring distance, so the window
//! spans content words.

use super::Label;
use crate::ontology::{tokenize, KeywordOntology, Span};

/// Maximum cue-to-hit distance in content tokens.
pub const WINDOW: usize = 5;

const SHORTAGE_CUES: &[&str] = &[
    "no",
    "out of",
    "ran out",
    "sold out",
    "empty",
    "none left",
    "shortage",
];

const AVAILABILITY_CUES: &[&str] = &[
    "in stock",
    "plenty",
    "fully stocked",
    "had",
    "able to buy",
    "available",
];

const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "of", "as", "well", "and", "or", "to", "at", "in", "on", "for", "with", "by",
    "from", "there", "their", "them", "they", "it", "its", "this", "that", "these", "those", "i",
    "we", "you", "he", "she", "my", "our", "your", "me", "us", "was", "were", "is", "are", "be",
    "been", "am", "so", "very", "also", "some", "any",
];

fn is_function_word(token: &str) -> bool {
    FUNCTION_WORDS.contains(&token)
}

fn cue_spans(tokens: &[String], cues: &[&str]) -> Vec<Span> {
    let mut out = Vec::new();
    for cue in cues {
        let cue_tokens: Vec<&str> = cue.split(' ').collect();
        let len = cue_tokens.len();
        if len > tokens.len() {
            continue;
        }
        for start in 0..=tokens.len() - len {
            if tokens[start..start + len]
                .iter()
                .zip(&cue_tokens)
                .all(|(t, c)| t == c)
            {
                out.push(Span {
                    start,
                    end: start + len,
                });
            }
        }
    }
    out
}

/// Content-token distance between two spans: 0 when they overlap, otherwise
/// one plus the number of content tokens strictly between them.
fn distance(tokens: &[String], a: Span, b: Span) -> usize {
    let (gap_start, gap_end) = if a.end <= b.start {
        (a.end, b.start)
    } else if b.end <= a.start {
        (b.end, a.start)
    } else {
        return 0;
    };
    1 + tokens[gap_start..gap_end]
        .iter()
        .filter(|t| !is_function_word(t))
        .count()
}

fn nearest(tokens: &[String], cues: &[Span], hits: &[Span]) -> Option<usize> {
    cues.iter()
        .flat_map(|&c| hits.iter().map(move |&h| (c, h)))
        .map(|(c, h)| distance(tokens, c, h))
        .filter(|&d| d <= WINDOW)
        .min()
}

/// Label a review text by the cue nearest to an ontology hit.
pub fn classify_lexicon(text: &str, ontology: &KeywordOntology) -> Label {
    let tokens = tokenize(text);
    let hits: Vec<Span> = ontology
        .find_spans(&tokens)
        .into_iter()
        .map(|(_, span)| span)
        .collect();
    if hits.is_empty() {
        return Label::Unrelated;
    }
    let shortage = nearest(&tokens, &cue_spans(&tokens, SHORTAGE_CUES), &hits);
    let available = nearest(&tokens, &cue_spans(&tokens, AVAILABILITY_CUES), &hits);
    match (shortage, available) {
        (Some(s), Some(a)) if a < s => Label::NoShortage,
        (Some(_), _) => Label::Shortage,
        (None, Some(_)) => Label::NoShortage,
        (None, None) => Label::Unrelated,
    }
}
