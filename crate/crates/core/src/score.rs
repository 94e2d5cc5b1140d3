//! Strict and relaxed micro-averaged precision, recall and F1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::model::{PredictedQuad, Quad, Sample};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Strict,
    Relaxed,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Strict => "strict",
            MatchMode::Relaxed => "relaxed",
        })
    }
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(MatchMode::Strict),
            "relaxed" => Ok(MatchMode::Relaxed),
            other => Err(format!("unknown match mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Trim leading/trailing whitespace before comparing fields.
    pub trim: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { trim: true }
    }
}

impl ScoreOptions {
    fn prep<'a>(&self, s: &'a str) -> &'a str {
        if self.trim {
            s.trim()
        } else {
            s
        }
    }

    fn labels_equal(&self, pred: &PredictedQuad, gold: &Quad) -> bool {
        self.prep(&pred.target) == self.prep(&gold.target)
            && self.prep(&pred.aspect_category) == self.prep(&gold.aspect_category)
            && crate::model::SentimentLabel::parse_case_insensitive(self.prep(&pred.sentiment))
                == Some(gold.sentiment)
    }
}

pub fn quad_equal_strict(pred: &PredictedQuad, gold: &Quad, options: &ScoreOptions) -> bool {
    options.labels_equal(pred, gold)
        && options.prep(&pred.opinion_expression) == options.prep(&gold.opinion_expression)
}

fn quad_equal_relaxed(pred: &PredictedQuad, gold: &Quad, text: &str, options: &ScoreOptions) -> bool {
    options.labels_equal(pred, gold)
        && expressions_overlap(
            options.prep(&pred.opinion_expression),
            options.prep(&gold.opinion_expression),
            text,
        )
}

/// Partial-overlap test for opinion expressions.
///
/// Both expressions are located at their first occurrence in `text` and
/// match when the character intervals intersect. When either cannot be
/// located, they match if one contains the other or they share a
/// lowercased whitespace token.
pub fn expressions_overlap(pred_expr: &str, gold_expr: &str, text: &str) -> bool {
    let (p, g) = (pred_expr.trim(), gold_expr.trim());
    if p == g {
        return true;
    }
    if p.is_empty() || g.is_empty() {
        return false;
    }
    if let (Some(ps), Some(gs)) = (text.find(p), text.find(g)) {
        let (pe, ge) = (ps + p.len(), gs + g.len());
        return ps < ge && gs < pe;
    }
    if p.contains(g) || g.contains(p) {
        return true;
    }
    let (pl, gl) = (p.to_lowercase(), g.to_lowercase());
    pl.split_whitespace().any(|t| gl.split_whitespace().any(|u| t == u))
}

pub fn quads_match(
    pred: &PredictedQuad,
    gold: &Quad,
    text: &str,
    mode: MatchMode,
    options: &ScoreOptions,
) -> bool {
    match mode {
        MatchMode::Strict => quad_equal_strict(pred, gold, options),
        MatchMode::Relaxed => quad_equal_relaxed(pred, gold, text, options),
    }
}

/// Size of a maximum one-to-one matching between predictions and golds.
pub fn match_sample(
    preds: &[PredictedQuad],
    golds: &[Quad],
    text: &str,
    mode: MatchMode,
    options: &ScoreOptions,
) -> usize {
    let edges: Vec<Vec<usize>> = preds
        .iter()
        .map(|p| {
            golds
                .iter()
                .enumerate()
                .filter(|(_, g)| quads_match(p, g, text, mode, options))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    max_bipartite_matching(&edges, golds.len())
}

/// Kuhn's augmenting-path algorithm over an adjacency list from left to right vertices.
pub fn max_bipartite_matching(edges: &[Vec<usize>], right: usize) -> usize {
    fn augment(u: usize, edges: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &edges[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, edges, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; right];
    let mut size = 0;
    for u in 0..edges.len() {
        let mut seen = vec![false; right];
        if augment(u, edges, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

/// Raw counts for one slice of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub pred: usize,
    pub gold: usize,
}

impl Counts {
    pub fn merge(&mut self, other: Counts) {
        self.tp += other.tp;
        self.pred += other.pred;
        self.gold += other.gold;
    }

    pub fn precision<T: Scalar>(&self) -> T {
        T::ratio(self.tp, self.pred)
    }

    pub fn recall<T: Scalar>(&self) -> T {
        T::ratio(self.tp, self.gold)
    }

    /// `2PR / (P + R)`, computed as `2tp / (pred + gold)` which is equal
    /// whenever P + R > 0.
    pub fn f1<T: Scalar>(&self) -> T {
        if self.tp == 0 {
            return T::zero();
        }
        T::ratio(2 * self.tp, self.pred + self.gold)
    }
}

fn serialize_scalar<T: Scalar, S: Serializer>(value: &T, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_f64(value.to_f64_lossy())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct Breakdown<T> {
    pub tp: usize,
    pub pred: usize,
    pub gold: usize,
    #[serde(serialize_with = "serialize_scalar")]
    pub f1: T,
}

impl<T: Scalar> From<Counts> for Breakdown<T> {
    fn from(c: Counts) -> Self {
        Breakdown { tp: c.tp, pred: c.pred, gold: c.gold, f1: c.f1() }
    }
}

pub const OVERLAP_RULE: &str =
    "first-occurrence interval intersection; fallback containment or shared lowercased token";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct EvalReport<T> {
    pub mode: MatchMode,
    pub tp: usize,
    pub pred_total: usize,
    pub gold_total: usize,
    #[serde(serialize_with = "serialize_scalar")]
    pub precision: T,
    #[serde(serialize_with = "serialize_scalar")]
    pub recall: T,
    #[serde(serialize_with = "serialize_scalar")]
    pub f1: T,
    pub by_language: BTreeMap<String, Breakdown<T>>,
    pub by_domain: BTreeMap<String, Breakdown<T>>,
    pub averaging: &'static str,
    pub overlap_rule: &'static str,
    pub trim: bool,
}

impl<T: Scalar> EvalReport<T> {
    fn from_counts(
        mode: MatchMode,
        options: &ScoreOptions,
        total: Counts,
        by_language: BTreeMap<String, Counts>,
        by_domain: BTreeMap<String, Counts>,
    ) -> Self {
        let conv = |m: BTreeMap<String, Counts>| m.into_iter().map(|(k, c)| (k, c.into())).collect();
        EvalReport {
            mode,
            tp: total.tp,
            pred_total: total.pred,
            gold_total: total.gold,
            precision: total.precision(),
            recall: total.recall(),
            f1: total.f1(),
            by_language: conv(by_language),
            by_domain: conv(by_domain),
            averaging: "micro",
            overlap_rule: OVERLAP_RULE,
            trim: options.trim,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts { tp: self.tp, pred: self.pred_total, gold: self.gold_total }
    }
}

/// Micro-averaged scores over `(sample, predictions)` pairs.
pub fn evaluate<'a, T, I>(corpus: I, mode: MatchMode, options: &ScoreOptions) -> EvalReport<T>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a Sample, &'a [PredictedQuad])>,
{
    let mut total = Counts::default();
    let mut by_language: BTreeMap<String, Counts> = BTreeMap::new();
    let mut by_domain: BTreeMap<String, Counts> = BTreeMap::new();
    for (sample, preds) in corpus {
        let counts = Counts {
            tp: match_sample(preds, &sample.gold, &sample.text, mode, options),
            pred: preds.len(),
            gold: sample.gold.len(),
        };
        total.merge(counts);
        by_language.entry(sample.language.clone()).or_default().merge(counts);
        by_domain.entry(sample.domain.clone()).or_default().merge(counts);
    }
    EvalReport::from_counts(mode, options, total, by_language, by_domain)
}

/// Percentage with two decimals, e.g. `30.61`.
pub fn format_percent<T: Scalar>(value: T) -> String {
    format!("{:.2}", value.to_f64_lossy() * 100.0)
}

/// `strict/relaxed` F1 cell, e.g. `30.61/42.46`.
pub fn format_cell<T: Scalar>(strict: T, relaxed: T) -> String {
    format!("{}/{}", format_percent(strict), format_percent(relaxed))
}
