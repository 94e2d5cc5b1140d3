//! Failure-mode ladder over mended model output.
//!
//! Response-level checks (unparsable output, missing wrapper) stop the ladder.
//! Element-level key problems drop the element. Label and extractiveness
//! problems are recorded but the quad is kept, so it still counts as a
//! prediction.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::mend::MendOutcome;
use crate::model::{
    DomainTaxonomy, FailureMode, FailureRecord, Locus, PredictedQuad, SentimentLabel, TaskArity,
    IMPLICIT_TARGET,
};
use crate::prompt::ANSWER_KEY;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub allowed_sentiments: BTreeSet<SentimentLabel>,
    pub allowed_categories: BTreeSet<String>,
    pub arity: TaskArity,
    pub sentiment_case_insensitive: bool,
    pub category_case_insensitive: bool,
}

impl ValidationConfig {
    pub fn from_taxonomy(taxonomy: &DomainTaxonomy) -> Self {
        ValidationConfig {
            allowed_sentiments: taxonomy.sentiments.iter().copied().collect(),
            allowed_categories: taxonomy.labels().map(str::to_string).collect(),
            arity: taxonomy.task_arity,
            sentiment_case_insensitive: true,
            category_case_insensitive: false,
        }
    }

    fn sentiment_allowed(&self, raw: &str) -> bool {
        let label = if self.sentiment_case_insensitive {
            SentimentLabel::parse_case_insensitive(raw)
        } else {
            raw.parse().ok()
        };
        label.is_some_and(|l| self.allowed_sentiments.contains(&l))
    }

    fn category_allowed(&self, raw: &str) -> bool {
        if self.category_case_insensitive {
            self.allowed_categories
                .iter()
                .any(|c| c.to_lowercase() == raw.to_lowercase())
        } else {
            self.allowed_categories.contains(raw)
        }
    }

    fn required_keys(&self) -> &'static [&'static str] {
        match self.arity {
            TaskArity::Quad => &["target", "aspect_category", "sentiment", "opinion_expression"],
            TaskArity::Triple => &["target", "aspect_category", "sentiment"],
        }
    }
}

/// Audit entry for a span replaced by realignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairNote {
    pub quad_index: usize,
    pub field: String,
    pub original: String,
    pub replacement: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationResult {
    pub quads: Vec<PredictedQuad>,
    pub failures: Vec<FailureRecord>,
    /// Number of elements that passed the key checks.
    pub pred_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs: Vec<RepairNote>,
}

fn response_failure(mode: FailureMode, sample_id: &str, detail: String) -> ValidationResult {
    ValidationResult {
        failures: vec![FailureRecord {
            mode,
            sample_id: sample_id.to_string(),
            locus: Locus::Response,
            detail,
        }],
        ..Default::default()
    }
}

fn truncate_detail(s: &str) -> String {
    const LIMIT: usize = 200;
    match s.char_indices().nth(LIMIT) {
        Some((cut, _)) => format!("{}...", &s[..cut]),
        None => s.to_string(),
    }
}

pub fn validate(
    outcome: &MendOutcome,
    sample_id: &str,
    sample_text: &str,
    config: &ValidationConfig,
) -> ValidationResult {
    let Some(value) = &outcome.value else {
        return response_failure(FailureMode::InvalidJson, sample_id, "unparsable output".into());
    };
    let Some(root) = value.as_object() else {
        return response_failure(
            FailureMode::IncorrectKeys,
            sample_id,
            format!("response: root is not an object: {}", truncate_detail(&value.to_string())),
        );
    };
    let items = match root.get(ANSWER_KEY) {
        Some(Value::Array(items)) => items,
        Some(other) => {
            return response_failure(
                FailureMode::IncorrectKeys,
                sample_id,
                format!("response: {ANSWER_KEY} is not an array: {}", truncate_detail(&other.to_string())),
            )
        }
        None => {
            let keys: Vec<&str> = root.keys().map(String::as_str).collect();
            return response_failure(
                FailureMode::IncorrectKeys,
                sample_id,
                format!("response: missing {ANSWER_KEY}; keys {keys:?}"),
            );
        }
    };

    let mut result = ValidationResult::default();
    let mut record = |mode, index, detail: String| {
        result.failures.push(FailureRecord {
            mode,
            sample_id: sample_id.to_string(),
            locus: Locus::QuadIndex(index),
            detail,
        });
    };
    let mut quads = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let quad = match extract_quad(item, index, config) {
            Ok(q) => q,
            Err(detail) => {
                record(FailureMode::IncorrectKeys, index, format!("quad: {detail}"));
                continue;
            }
        };
        if !config.sentiment_allowed(&quad.sentiment) {
            record(FailureMode::InvalidSentiment, index, quad.sentiment.clone());
        }
        if !config.category_allowed(&quad.aspect_category) {
            record(FailureMode::InvalidAspectCategory, index, quad.aspect_category.clone());
        }
        if !is_extractive_target(&quad.target, sample_text) {
            record(FailureMode::NonExtractiveTarget, index, quad.target.clone());
        }
        if config.arity.has_opinion_expression()
            && !is_extractive_span(&quad.opinion_expression, sample_text)
        {
            record(
                FailureMode::NonExtractiveOpinionExpression,
                index,
                quad.opinion_expression.clone(),
            );
        }
        quads.push(quad);
    }
    result.pred_count = quads.len();
    result.quads = quads;
    result
}

pub(crate) fn is_extractive_target(target: &str, text: &str) -> bool {
    target == IMPLICIT_TARGET || is_extractive_span(target, text)
}

pub(crate) fn is_extractive_span(span: &str, text: &str) -> bool {
    !span.is_empty() && text.contains(span)
}

fn extract_quad(item: &Value, index: usize, config: &ValidationConfig) -> Result<PredictedQuad, String> {
    let Some(obj) = item.as_object() else {
        return Err(format!("element is not an object: {}", truncate_detail(&item.to_string())));
    };
    let missing: Vec<&str> = config
        .required_keys()
        .iter()
        .copied()
        .filter(|k| !obj.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        let present: Vec<&str> = obj.keys().map(String::as_str).collect();
        return Err(format!("missing keys {missing:?}; present {present:?}"));
    }
    let field = |obj: &Map<String, Value>, key: &str| -> Result<String, String> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(format!("key {key:?} holds non-string {}", truncate_detail(&other.to_string()))),
            None => Ok(String::new()),
        }
    };
    Ok(PredictedQuad {
        target: field(obj, "target")?,
        aspect_category: field(obj, "aspect_category")?,
        sentiment: field(obj, "sentiment")?,
        opinion_expression: if config.arity.has_opinion_expression() {
            field(obj, "opinion_expression")?
        } else {
            String::new()
        },
        source_index: index,
    })
}

/// Per-mode record counts plus total predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FailureTally {
    pub counts: [usize; 6],
    pub total_preds: usize,
}

impl FailureTally {
    pub fn get(&self, mode: FailureMode) -> usize {
        self.counts[mode.index()]
    }

    pub fn add(&mut self, result: &ValidationResult) {
        for failure in &result.failures {
            self.counts[failure.mode.index()] += 1;
        }
        self.total_preds += result.pred_count;
    }

    pub fn merge(mut self, other: FailureTally) -> FailureTally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.total_preds += other.total_preds;
        self
    }

    pub fn header() -> String {
        let mut cols: Vec<String> = FailureMode::ALL.iter().map(|m| format!("{:>8}", m.short_name())).collect();
        cols.push(format!("{:>12}", "Total preds"));
        cols.join("")
    }

    pub fn row(&self) -> String {
        let mut cols: Vec<String> = self.counts.iter().map(|c| format!("{c:>8}")).collect();
        cols.push(format!("{:>12}", self.total_preds));
        cols.join("")
    }
}

impl Serialize for FailureTally {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(7))?;
        for mode in FailureMode::ALL {
            map.serialize_entry(&mode, &self.get(mode))?;
        }
        map.serialize_entry("total_preds", &self.total_preds)?;
        map.end()
    }
}

pub fn tally_failures<'a>(results: impl IntoIterator<Item = &'a ValidationResult>) -> FailureTally {
    let mut tally = FailureTally::default();
    for result in results {
        tally.add(result);
    }
    tally
}
