//! Realignment of non-extractive predictions onto spans of the input text.
//!
//! Candidates are all contiguous runs of whitespace-delimited words. The
//! replacement is the candidate with the highest normalized character-level
//! Levenshtein similarity; ties go to the shorter span (in bytes), then to
//! the earlier one.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FailureMode;
use crate::model::Locus;
use crate::scalar::Scalar;
use crate::validate::{RepairNote, ValidationResult};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanCandidate {
    /// Byte offset of the first word.
    pub start: usize,
    /// Exclusive byte offset after the last word.
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig<T = f64> {
    pub max_span_words: usize,
    pub min_similarity: T,
}

impl<T: Scalar> Default for AlignConfig<T> {
    fn default() -> Self {
        AlignConfig {
            max_span_words: 30,
            min_similarity: T::from_u8(2).expect("2") / T::from_u8(5).expect("5"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOutcome<T = f64> {
    /// Absent when the best candidate scores below `min_similarity`.
    pub replacement: Option<SpanCandidate>,
    /// Similarity of the best candidate, whether or not it was accepted.
    pub similarity: T,
    /// Number of candidates enumerated; zero when the prediction was already extractive.
    pub candidates_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("empty prediction")]
    EmptyPrediction,
}

/// Word boundaries as byte ranges; words are maximal non-whitespace runs.
fn word_ranges(text: &str) -> Vec<(usize, usize)> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                words.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push((s, text.len()));
    }
    words
}

/// All word spans of at most `max_span_words` words, by (start, end).
pub fn enumerate_spans<T>(text: &str, config: &AlignConfig<T>) -> Vec<SpanCandidate> {
    let words = word_ranges(text);
    let max = config.max_span_words.max(1);
    let mut spans = Vec::new();
    for i in 0..words.len() {
        for j in i..words.len().min(i.saturating_add(max)) {
            let (start, end) = (words[i].0, words[j].1);
            spans.push(SpanCandidate { start, end, text: text[start..end].to_string() });
        }
    }
    spans
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut rows = PrefixDistances::new(b);
    for &c in a {
        rows.push(c);
    }
    rows.distance()
}

/// Edit distances between a fixed pattern and a growing text, one DP row per
/// appended character.
struct PrefixDistances<'a> {
    pattern: &'a [char],
    prev: Vec<usize>,
    cur: Vec<usize>,
    consumed: usize,
}

impl<'a> PrefixDistances<'a> {
    fn new(pattern: &'a [char]) -> Self {
        PrefixDistances {
            pattern,
            prev: (0..=pattern.len()).collect(),
            cur: vec![0; pattern.len() + 1],
            consumed: 0,
        }
    }

    fn push(&mut self, c: char) {
        self.consumed += 1;
        self.cur[0] = self.consumed;
        for (j, &p) in self.pattern.iter().enumerate() {
            let sub = self.prev[j] + usize::from(p != c);
            self.cur[j + 1] = sub.min(self.prev[j + 1] + 1).min(self.cur[j] + 1);
        }
        std::mem::swap(&mut self.prev, &mut self.cur);
    }

    /// Distance between the pattern and everything pushed so far.
    fn distance(&self) -> usize {
        self.prev[self.pattern.len()]
    }
}

/// `1 - distance / max(len)` over characters; two empty strings score 1.
pub fn similarity<T: Scalar>(a: &str, b: &str) -> T {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let len = a.len().max(b.len());
    T::one() - T::ratio(levenshtein(&a, &b), len)
}

/// Similarity kept as the exact fraction `1 - dist / len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Fraction {
    dist: usize,
    len: usize,
}

impl Fraction {
    fn new(dist: usize, len: usize) -> Self {
        if len == 0 {
            Fraction { dist: 0, len: 1 }
        } else {
            Fraction { dist, len }
        }
    }

    /// Ordering by similarity value (greater = more similar).
    fn cmp_similarity(self, other: Fraction) -> Ordering {
        let lhs = other.dist as u128 * self.len as u128;
        let rhs = self.dist as u128 * other.len as u128;
        lhs.cmp(&rhs)
    }

    fn value<T: Scalar>(self) -> T {
        T::one() - T::ratio(self.dist, self.len)
    }
}

#[derive(Debug, Clone, Copy)]
struct Best {
    score: Fraction,
    start: usize,
    end: usize,
}

impl Best {
    /// True if (score, start, end) beats `self` under the tie-break rule.
    fn beaten_by(&self, score: Fraction, start: usize, end: usize) -> bool {
        match score.cmp_similarity(self.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (end - start, start) < (self.end - self.start, self.start),
        }
    }
}

pub fn align<T: Scalar>(
    prediction: &str,
    text: &str,
    config: &AlignConfig<T>,
) -> Result<AlignOutcome<T>, AlignError> {
    if prediction.is_empty() {
        return Err(AlignError::EmptyPrediction);
    }
    if let Some(start) = text.find(prediction) {
        let end = start + prediction.len();
        return Ok(AlignOutcome {
            replacement: Some(SpanCandidate { start, end, text: prediction.to_string() }),
            similarity: T::one(),
            candidates_scored: 0,
        });
    }

    let pred: Vec<char> = prediction.chars().collect();
    let words = word_ranges(text);
    // Character offsets of each word boundary.
    let mut char_at = Vec::with_capacity(words.len());
    let mut chars_seen = 0;
    let mut last_byte = 0;
    for &(s, e) in &words {
        chars_seen += text[last_byte..s].chars().count();
        let start_char = chars_seen;
        chars_seen += text[s..e].chars().count();
        char_at.push((start_char, chars_seen));
        last_byte = e;
    }
    let text_chars: Vec<char> = text.chars().collect();
    let max_words = config.max_span_words.max(1);

    let mut best: Option<Best> = None;
    let mut enumerated = 0;
    for i in 0..words.len() {
        let last = words.len().min(i.saturating_add(max_words));
        enumerated += last - i;
        // Spans sharing a start word share a DP: extend it one word at a time.
        let cs = char_at[i].0;
        let mut rows = PrefixDistances::new(&pred);
        for j in i..last {
            let (start, end) = (words[i].0, words[j].1);
            let cand_len = char_at[j].1 - cs;
            let len = pred.len().max(cand_len);
            let bound = Fraction::new(pred.len().abs_diff(cand_len), len);
            let hopeless = best.is_some_and(|b| bound.cmp_similarity(b.score) == Ordering::Less);
            // The bound only decreases once the span is longer than the prediction.
            if hopeless && cand_len >= pred.len() {
                break;
            }
            while rows.consumed < cand_len {
                rows.push(text_chars[cs + rows.consumed]);
            }
            if hopeless {
                continue;
            }
            let score = Fraction::new(rows.distance(), len);
            if best.is_none_or(|b| b.beaten_by(score, start, end)) {
                best = Some(Best { score, start, end });
            }
        }
    }

    let Some(best) = best else {
        return Ok(AlignOutcome { replacement: None, similarity: T::zero(), candidates_scored: 0 });
    };
    let similarity: T = best.score.value();
    let replacement = (similarity >= config.min_similarity).then(|| SpanCandidate {
        start: best.start,
        end: best.end,
        text: text[best.start..best.end].to_string(),
    });
    Ok(AlignOutcome { replacement, similarity, candidates_scored: enumerated })
}

/// Marker appended to the detail of a failure record that could not be repaired.
pub const UNREPAIRED_MARKER: &str = " [unrepaired]";

/// Replaces non-extractive targets and expressions with their best aligned
/// span. Failure records are kept as they were; successful repairs add a
/// [`RepairNote`] and failed ones get [`UNREPAIRED_MARKER`] in their detail.
pub fn repair_result<T: Scalar>(
    result: &ValidationResult,
    sample_text: &str,
    config: &AlignConfig<T>,
) -> ValidationResult {
    let mut repaired = result.clone();
    for failure in &mut repaired.failures {
        let field = match failure.mode {
            FailureMode::NonExtractiveTarget => "target",
            FailureMode::NonExtractiveOpinionExpression => "opinion_expression",
            _ => continue,
        };
        let Locus::QuadIndex(index) = failure.locus else { continue };
        let Some(quad) = repaired.quads.iter_mut().find(|q| q.source_index == index) else {
            continue;
        };
        let slot = if field == "target" {
            &mut quad.target
        } else {
            &mut quad.opinion_expression
        };
        match align(slot, sample_text, config) {
            Ok(AlignOutcome { replacement: Some(span), similarity, .. }) => {
                repaired.repairs.push(RepairNote {
                    quad_index: index,
                    field: field.to_string(),
                    original: std::mem::replace(slot, span.text.clone()),
                    replacement: span.text,
                    similarity: similarity.to_f64_lossy(),
                });
            }
            _ => failure.detail.push_str(UNREPAIRED_MARKER),
        }
    }
    repaired
}
