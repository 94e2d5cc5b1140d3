//! Shared domain types.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal used for an implicit target. Matched case-sensitively.
pub const IMPLICIT_TARGET: &str = "NULL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown sentiment label {0:?}")]
pub struct UnknownSentiment(pub String);

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 4] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Mixed,
    ];

    /// Order in which labels are listed to the model.
    pub const PROMPT_ORDER: [SentimentLabel; 4] = [
        SentimentLabel::Negative,
        SentimentLabel::Positive,
        SentimentLabel::Neutral,
        SentimentLabel::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Mixed => "mixed",
        }
    }

    /// Case-insensitive match against the four labels, ignoring surrounding whitespace.
    pub fn parse_case_insensitive(raw: &str) -> Option<Self> {
        let raw = raw.trim();
        Self::ALL
            .into_iter()
            .find(|label| label.as_str().eq_ignore_ascii_case(raw))
    }

    /// Annotation clean-up: case folding plus the `POS`/`NEG`/`NEU`/`MIX` abbreviations.
    pub fn normalize(raw: &str) -> Option<Self> {
        if let Some(label) = Self::parse_case_insensitive(raw) {
            return Some(label);
        }
        match raw.trim().to_ascii_lowercase().as_str() {
            "pos" => Some(SentimentLabel::Positive),
            "neg" => Some(SentimentLabel::Negative),
            "neu" => Some(SentimentLabel::Neutral),
            "mix" => Some(SentimentLabel::Mixed),
            _ => None,
        }
    }
}

impl FromStr for SentimentLabel {
    type Err = UnknownSentiment;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|label| label.as_str() == s)
            .ok_or_else(|| UnknownSentiment(s.to_string()))
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether opinion expressions are part of the task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArity {
    #[default]
    Quad,
    Triple,
}

impl TaskArity {
    pub fn has_opinion_expression(self) -> bool {
        matches!(self, TaskArity::Quad)
    }
}

impl FromStr for TaskArity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quad" => Ok(TaskArity::Quad),
            "triple" => Ok(TaskArity::Triple),
            other => Err(format!("unknown task arity {other:?}")),
        }
    }
}

/// One gold opinion quadruple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quad {
    pub target: String,
    pub aspect_category: String,
    pub sentiment: SentimentLabel,
    /// Empty in triple mode.
    #[serde(default)]
    pub opinion_expression: String,
}

impl Quad {
    pub fn new(
        target: impl Into<String>,
        aspect_category: impl Into<String>,
        sentiment: SentimentLabel,
        opinion_expression: impl Into<String>,
    ) -> Self {
        Quad {
            target: target.into(),
            aspect_category: aspect_category.into(),
            sentiment,
            opinion_expression: opinion_expression.into(),
        }
    }

    pub fn is_implicit(&self) -> bool {
        self.target == IMPLICIT_TARGET
    }

    /// Checks the extractive invariant against `text`. Returns the name of the
    /// first offending field.
    pub fn check_extractive(&self, text: &str, arity: TaskArity) -> Result<(), &'static str> {
        if self.target.is_empty() {
            return Err("target");
        }
        if !self.is_implicit() && !text.contains(self.target.as_str()) {
            return Err("target");
        }
        if arity.has_opinion_expression()
            && (self.opinion_expression.is_empty()
                || !text.contains(self.opinion_expression.as_str()))
        {
            return Err("opinion_expression");
        }
        Ok(())
    }
}

/// A quad recovered from model output. Labels are kept as raw strings so that
/// out-of-schema values survive validation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictedQuad {
    pub target: String,
    pub aspect_category: String,
    pub sentiment: String,
    #[serde(default)]
    pub opinion_expression: String,
    /// Position of the element in the model's output array.
    #[serde(default)]
    pub source_index: usize,
}

impl PredictedQuad {
    pub fn sentiment_label(&self) -> Option<SentimentLabel> {
        SentimentLabel::parse_case_insensitive(&self.sentiment)
    }
}

impl From<&Quad> for PredictedQuad {
    fn from(q: &Quad) -> Self {
        PredictedQuad {
            target: q.target.clone(),
            aspect_category: q.aspect_category.clone(),
            sentiment: q.sentiment.as_str().to_string(),
            opinion_expression: q.opinion_expression.clone(),
            source_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub language: String,
    pub domain: String,
    /// Kept in canonical order, see [`canonical_quad_order`].
    pub gold: Vec<Quad>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShot {
    pub text: String,
    pub quads: Vec<Quad>,
}

fn default_sentiments() -> Vec<SentimentLabel> {
    SentimentLabel::PROMPT_ORDER.to_vec()
}

/// Per-domain prompt variables: label set, system prompt and worked example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTaxonomy {
    pub domain_id: String,
    pub system_prompt: String,
    pub categories: Vec<Category>,
    pub one_shot: OneShot,
    #[serde(default)]
    pub task_arity: TaskArity,
    /// Allowed sentiments, in the order they are listed to the model.
    #[serde(default = "default_sentiments")]
    pub sentiments: Vec<SentimentLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("taxonomy {0:?} has no categories")]
    NoCategories(String),
    #[error("taxonomy {0:?} has no sentiments")]
    NoSentiments(String),
    #[error("taxonomy {domain:?} repeats category label {label:?}")]
    DuplicateCategory { domain: String, label: String },
    #[error("one-shot quad {index} of taxonomy {domain:?} is not extractive ({field})")]
    NonExtractiveExample {
        domain: String,
        index: usize,
        field: &'static str,
    },
    #[error("cannot read taxonomy {path}: {reason}")]
    Load { path: String, reason: String },
}

impl DomainTaxonomy {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.label.as_str())
    }

    pub fn check(&self) -> Result<(), TaxonomyError> {
        if self.categories.is_empty() {
            return Err(TaxonomyError::NoCategories(self.domain_id.clone()));
        }
        if self.sentiments.is_empty() {
            return Err(TaxonomyError::NoSentiments(self.domain_id.clone()));
        }
        let mut seen = std::collections::HashSet::new();
        for label in self.labels() {
            if !seen.insert(label) {
                return Err(TaxonomyError::DuplicateCategory {
                    domain: self.domain_id.clone(),
                    label: label.to_string(),
                });
            }
        }
        for (index, quad) in self.one_shot.quads.iter().enumerate() {
            quad.check_extractive(&self.one_shot.text, self.task_arity)
                .map_err(|field| TaxonomyError::NonExtractiveExample {
                    domain: self.domain_id.clone(),
                    index,
                    field,
                })?;
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, TaxonomyError> {
        let taxonomy: DomainTaxonomy =
            serde_json::from_str(json).map_err(|e| TaxonomyError::Load {
                path: "<inline>".into(),
                reason: e.to_string(),
            })?;
        taxonomy.check()?;
        Ok(taxonomy)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TaxonomyError> {
        let raw = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Load {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&raw).map_err(|e| match e {
            TaxonomyError::Load { reason, .. } => TaxonomyError::Load {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }
}

/// The six structural failure classes, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureMode {
    InvalidJson,
    IncorrectKeys,
    InvalidSentiment,
    InvalidAspectCategory,
    NonExtractiveTarget,
    NonExtractiveOpinionExpression,
}

impl FailureMode {
    pub const ALL: [FailureMode; 6] = [
        FailureMode::InvalidJson,
        FailureMode::IncorrectKeys,
        FailureMode::InvalidSentiment,
        FailureMode::InvalidAspectCategory,
        FailureMode::NonExtractiveTarget,
        FailureMode::NonExtractiveOpinionExpression,
    ];

    /// Column header used in failure tables.
    pub fn short_name(self) -> &'static str {
        match self {
            FailureMode::InvalidJson => "JSON",
            FailureMode::IncorrectKeys => "Keys",
            FailureMode::InvalidSentiment => "Sent",
            FailureMode::InvalidAspectCategory => "AspCat",
            FailureMode::NonExtractiveTarget => "NETarg",
            FailureMode::NonExtractiveOpinionExpression => "NEOpExp",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locus {
    Response,
    QuadIndex(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub mode: FailureMode,
    pub sample_id: String,
    pub locus: Locus,
    /// Offending raw fragment, plus repair markers appended after realignment.
    pub detail: String,
}

/// Sorts quads by the first occurrence of their opinion expression in `text`,
/// then by the first occurrence of their target. Quads whose expression cannot
/// be located sort after those that can; the sort is stable.
pub fn canonical_quad_order<Q: Clone + OrderKey>(quads: &[Q], text: &str) -> Vec<Q> {
    let mut keyed: Vec<_> = quads
        .iter()
        .map(|q| {
            let expr = locate(text, q.expression());
            let target = locate(text, q.target());
            ((expr.is_none(), expr.unwrap_or(0)), (target.is_none(), target.unwrap_or(0)), q)
        })
        .collect();
    keyed.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    keyed.into_iter().map(|(_, _, q)| q.clone()).collect()
}

fn locate(text: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    text.find(needle)
}

/// Fields used by [`canonical_quad_order`].
pub trait OrderKey {
    fn target(&self) -> &str;
    fn expression(&self) -> &str;
}

impl OrderKey for Quad {
    fn target(&self) -> &str {
        &self.target
    }
    fn expression(&self) -> &str {
        &self.opinion_expression
    }
}

impl OrderKey for PredictedQuad {
    fn target(&self) -> &str {
        &self.target
    }
    fn expression(&self) -> &str {
        &self.opinion_expression
    }
}
