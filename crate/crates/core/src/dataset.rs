//! Line-delimited JSON datasets and their descriptive statistics.
//!
//! One sample per line:
//!
//! ```json
//! {"id": "s1", "text": "...", "language": "fr", "domain": "ps",
//!  "quads": [{"target": "NULL", "aspect_category": "price",
//!             "sentiment": "negative", "opinion_expression": "..."}]}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::model::{canonical_quad_order, Quad, Sample, SentimentLabel, TaskArity};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed sample: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: unknown sentiment {value:?}")]
    UnknownSentiment { line: usize, value: String },
    #[error("line {line}: invalid quad: {reason}")]
    InvalidQuad { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    #[default]
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }

    /// Guesses the split from a file name (`train`, `validation`/`valid`/`dev`, `test`).
    pub fn infer_from_path(path: &Path) -> Option<Self> {
        let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
        if stem.contains("train") {
            Some(SplitName::Train)
        } else if stem.contains("valid") || stem.contains("dev") {
            Some(SplitName::Validation)
        } else if stem.contains("test") {
            Some(SplitName::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub arity: TaskArity,
    pub split: SplitName,
    /// Accept `POS`/`NEG`/`Positive`-style labels and fold them onto the enum.
    pub normalize_sentiment: bool,
}

impl LoadOptions {
    pub fn new(arity: TaskArity) -> Self {
        LoadOptions { arity, ..Default::default() }
    }
}

#[derive(Deserialize)]
struct RawSample {
    id: String,
    text: String,
    language: String,
    domain: String,
    quads: Vec<RawQuad>,
}

#[derive(Deserialize)]
struct RawQuad {
    target: String,
    aspect_category: String,
    sentiment: String,
    opinion_expression: Option<String>,
}

#[derive(Serialize)]
struct OutSample<'a> {
    id: &'a str,
    text: &'a str,
    language: &'a str,
    domain: &'a str,
    quads: Vec<OutQuad<'a>>,
}

#[derive(Serialize)]
struct OutQuad<'a> {
    target: &'a str,
    aspect_category: &'a str,
    sentiment: SentimentLabel,
    #[serde(skip_serializing_if = "Option::is_none")]
    opinion_expression: Option<&'a str>,
}

pub fn load_dataset(path: &Path, options: LoadOptions) -> Result<DatasetSplit, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(BufReader::new(file), options).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// Parses a dataset from any line source. Blank lines are skipped.
pub fn read_dataset<R: BufRead>(reader: R, options: LoadOptions) -> Result<DatasetSplit, DatasetError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(DatasetError::DuplicateId(raw.id));
        }
        let mut gold = Vec::with_capacity(raw.quads.len());
        for rq in raw.quads {
            gold.push(convert_quad(rq, line_no, options)?);
        }
        let gold = canonical_quad_order(&gold, &raw.text);
        samples.push(Sample {
            id: raw.id,
            text: raw.text,
            language: raw.language,
            domain: raw.domain,
            gold,
        });
    }
    Ok(DatasetSplit { name: options.split, samples })
}

fn convert_quad(rq: RawQuad, line: usize, options: LoadOptions) -> Result<Quad, DatasetError> {
    let sentiment = if options.normalize_sentiment {
        SentimentLabel::normalize(&rq.sentiment)
    } else {
        rq.sentiment.parse().ok()
    }
    .ok_or_else(|| DatasetError::UnknownSentiment {
        line,
        value: rq.sentiment.clone(),
    })?;
    if rq.target.is_empty() {
        return Err(DatasetError::InvalidQuad {
            line,
            reason: "empty target".into(),
        });
    }
    let opinion_expression = match (options.arity, rq.opinion_expression) {
        (TaskArity::Quad, Some(expr)) if !expr.is_empty() => expr,
        (TaskArity::Quad, _) => {
            return Err(DatasetError::InvalidQuad {
                line,
                reason: "missing opinion_expression".into(),
            })
        }
        (TaskArity::Triple, expr) => expr.unwrap_or_default(),
    };
    Ok(Quad {
        target: rq.target,
        aspect_category: rq.aspect_category,
        sentiment,
        opinion_expression,
    })
}

pub fn write_dataset(split: &DatasetSplit, path: &Path, arity: TaskArity) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for sample in &split.samples {
        let line = sample_to_json(sample, arity);
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn sample_to_json(sample: &Sample, arity: TaskArity) -> String {
    let quads = canonical_quad_order(&sample.gold, &sample.text);
    let out = OutSample {
        id: &sample.id,
        text: &sample.text,
        language: &sample.language,
        domain: &sample.domain,
        quads: quads
            .iter()
            .map(|q| OutQuad {
                target: &q.target,
                aspect_category: &q.aspect_category,
                sentiment: q.sentiment,
                opinion_expression: arity
                    .has_opinion_expression()
                    .then_some(q.opinion_expression.as_str()),
            })
            .collect(),
    };
    serde_json::to_string(&out).expect("sample serializes")
}

/// Counts of samples by number of gold quads: buckets 0..=4 and "5+".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuadHistogram(pub [usize; 6]);

impl QuadHistogram {
    pub const BUCKETS: [&'static str; 6] = ["0", "1", "2", "3", "4", "5+"];

    pub fn record(&mut self, quads: usize) {
        self.0[quads.min(5)] += 1;
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

impl Serialize for QuadHistogram {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(6))?;
        for (name, count) in Self::BUCKETS.iter().zip(self.0) {
            map.serialize_entry(name, &count)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub total_quads: usize,
    pub per_language_counts: BTreeMap<String, usize>,
    pub implicit_targets: usize,
    pub explicit_targets: usize,
    pub avg_quads_per_sample: f64,
    pub quad_histogram: QuadHistogram,
}

impl DatasetStats {
    /// Average quads per sample in the requested scalar type.
    pub fn avg_quads<T: Scalar>(&self) -> T {
        T::ratio(self.total_quads, self.samples)
    }

    /// Field-wise sum; the average is recomputed from the totals.
    pub fn merge(&self, other: &DatasetStats) -> DatasetStats {
        let mut per_language_counts = self.per_language_counts.clone();
        for (lang, n) in &other.per_language_counts {
            *per_language_counts.entry(lang.clone()).or_default() += n;
        }
        let mut hist = self.quad_histogram;
        for (a, b) in hist.0.iter_mut().zip(other.quad_histogram.0) {
            *a += b;
        }
        let samples = self.samples + other.samples;
        let total_quads = self.total_quads + other.total_quads;
        DatasetStats {
            samples,
            total_quads,
            per_language_counts,
            implicit_targets: self.implicit_targets + other.implicit_targets,
            explicit_targets: self.explicit_targets + other.explicit_targets,
            avg_quads_per_sample: f64::ratio(total_quads, samples),
            quad_histogram: hist,
        }
    }

    /// Plain-text rendering: language counts, target split, average, histogram.
    pub fn render(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {title} ==");
        let _ = writeln!(out, "samples: {}", self.samples);
        let langs: Vec<_> = self.per_language_counts.iter().collect();
        let header: Vec<String> = langs.iter().map(|(l, _)| format!("{l:>8}")).collect();
        let values: Vec<String> = langs.iter().map(|(_, n)| format!("{n:>8}")).collect();
        let _ = writeln!(out, "languages {}", header.join(""));
        let _ = writeln!(out, "          {}", values.join(""));
        let _ = writeln!(
            out,
            "targets    implicit {:>8}  explicit {:>8}",
            self.implicit_targets, self.explicit_targets
        );
        let _ = writeln!(out, "avg quads  {:.2}", self.avg_quads_per_sample);
        let buckets: Vec<String> = QuadHistogram::BUCKETS.iter().map(|b| format!("{b:>8}")).collect();
        let counts: Vec<String> = self.quad_histogram.0.iter().map(|c| format!("{c:>8}")).collect();
        let _ = writeln!(out, "quads/sample {}", buckets.join(""));
        let _ = writeln!(out, "             {}", counts.join(""));
        out
    }
}

pub fn compute_stats(split: &DatasetSplit) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for sample in &split.samples {
        stats.samples += 1;
        stats.total_quads += sample.gold.len();
        *stats.per_language_counts.entry(sample.language.clone()).or_default() += 1;
        for quad in &sample.gold {
            if quad.is_implicit() {
                stats.implicit_targets += 1;
            } else {
                stats.explicit_targets += 1;
            }
        }
        stats.quad_histogram.record(sample.gold.len());
    }
    stats.avg_quads_per_sample = stats.avg_quads();
    stats
}

/// Drops samples with any explicit gold target that is not a substring of the text.
pub fn filter_unlocatable(split: &DatasetSplit) -> (DatasetSplit, Vec<String>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for sample in &split.samples {
        let locatable = sample
            .gold
            .iter()
            .all(|q| q.is_implicit() || sample.text.contains(q.target.as_str()));
        if locatable {
            kept.push(sample.clone());
        } else {
            dropped.push(sample.id.clone());
        }
    }
    (DatasetSplit { name: split.name, samples: kept }, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn load(src: &str, options: LoadOptions) -> Result<DatasetSplit, DatasetError> {
        read_dataset(Cursor::new(src), options)
    }

    fn sample(id: &str, text: &str, targets: &[&str]) -> Sample {
        Sample {
            id: id.into(),
            text: text.into(),
            language: "en".into(),
            domain: "ps".into(),
            gold: targets
                .iter()
                .map(|t| Quad::new(*t, "price", SentimentLabel::Positive, text))
                .collect(),
        }
    }

    #[test]
    fn empty_quads_load_as_empty_gold() {
        let split = load(
            r#"{"id":"a","text":"hello","language":"en","domain":"ps","quads":[]}"#,
            LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(split.samples.len(), 1);
        assert!(split.samples[0].gold.is_empty());
    }

    #[test]
    fn sentiment_normalization_is_opt_in() {
        let line = r#"{"id":"a","text":"good phone","language":"en","domain":"ps","quads":[{"target":"phone","aspect_category":"x","sentiment":"POS"}]}"#;
        let strict = load(line, LoadOptions::new(TaskArity::Triple));
        assert!(matches!(strict, Err(DatasetError::UnknownSentiment { .. })));
        let options = LoadOptions {
            normalize_sentiment: true,
            ..LoadOptions::new(TaskArity::Triple)
        };
        let split = load(line, options).unwrap();
        assert_eq!(split.samples[0].gold[0].sentiment, SentimentLabel::Positive);
        assert_eq!(split.samples[0].gold[0].opinion_expression, "");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let src = [
            r#"{"id":"a","text":"x","language":"en","domain":"ps","quads":[]}"#,
            r#"{"id":"b","text":"x","language":"en","domain":"ps","quads":[]}"#,
            r#"{"id":"a","text":"x","language":"en","domain":"ps","quads":[]}"#,
        ]
        .join("\n");
        match load(&src, LoadOptions::default()) {
            Err(DatasetError::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = "{\"id\":\"a\",\"text\":\"x\",\"language\":\"en\",\"domain\":\"ps\",\"quads\":[]}\n{oops";
        assert!(matches!(
            load(src, LoadOptions::default()),
            Err(DatasetError::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn quad_mode_requires_expression() {
        let line = r#"{"id":"a","text":"good phone","language":"en","domain":"ps","quads":[{"target":"phone","aspect_category":"x","sentiment":"positive"}]}"#;
        assert!(matches!(
            load(line, LoadOptions::default()),
            Err(DatasetError::InvalidQuad { .. })
        ));
    }

    #[test]
    fn gold_is_reordered_on_load() {
        let line = r#"{"id":"a","text":"My new TV never breaks down, but I think that the app store is too expensive.","language":"en","domain":"ps","quads":[{"target":"app store","aspect_category":"price","sentiment":"negative","opinion_expression":"the app store is too expensive"},{"target":"TV","aspect_category":"reliability","sentiment":"positive","opinion_expression":"My new TV never breaks down"}]}"#;
        let split = load(line, LoadOptions::default()).unwrap();
        assert_eq!(split.samples[0].gold[0].target, "TV");
    }

    #[test]
    fn stats_basic_arithmetic() {
        let split = DatasetSplit {
            name: SplitName::Test,
            samples: vec![sample("a", "x y", &["x"]), sample("b", "x y", &["x", "NULL", "y"])],
        };
        let stats = compute_stats(&split);
        assert_eq!(stats.avg_quads_per_sample, 2.0);
        assert_eq!(stats.quad_histogram.0, [0, 1, 0, 1, 0, 0]);
        assert_eq!(stats.implicit_targets, 1);
        assert_eq!(stats.explicit_targets, 3);
    }

    #[test]
    fn implicit_only_sample() {
        let split = DatasetSplit {
            name: SplitName::Test,
            samples: vec![sample("a", "pretty good", &["NULL"])],
        };
        let stats = compute_stats(&split);
        assert_eq!((stats.implicit_targets, stats.explicit_targets), (1, 0));
    }

    #[test]
    fn empty_split_stats() {
        let stats = compute_stats(&DatasetSplit { name: SplitName::Train, samples: vec![] });
        assert_eq!(stats.avg_quads_per_sample, 0.0);
        assert_eq!(stats.quad_histogram.total(), 0);
    }

    #[test]
    fn histogram_serializes_in_bucket_order() {
        let mut h = QuadHistogram::default();
        h.record(7);
        h.record(0);
        assert_eq!(
            serde_json::to_string(&h).unwrap(),
            r#"{"0":1,"1":0,"2":0,"3":0,"4":0,"5+":1}"#
        );
    }

    #[test]
    fn filter_drops_unlocatable_targets() {
        let split = DatasetSplit {
            name: SplitName::Test,
            samples: vec![
                sample("keep", "good phone", &["phone"]),
                sample("drop", "good phone", &["telephone"]),
                sample("null", "good phone", &["NULL"]),
                sample("drop2", "nice screen", &["screen", "battery"]),
                sample("empty", "nothing", &[]),
            ],
        };
        let (kept, dropped) = filter_unlocatable(&split);
        assert_eq!(kept.samples.len(), 3);
        assert_eq!(dropped, vec!["drop".to_string(), "drop2".to_string()]);
    }

    #[test]
    fn split_name_inference() {
        assert_eq!(SplitName::infer_from_path(Path::new("ps_train.jsonl")), Some(SplitName::Train));
        assert_eq!(SplitName::infer_from_path(Path::new("hr-dev.jsonl")), Some(SplitName::Validation));
        assert_eq!(SplitName::infer_from_path(Path::new("data.jsonl")), None);
    }
}
