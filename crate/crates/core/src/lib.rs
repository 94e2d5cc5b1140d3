//! Building blocks for structured quadruple extraction with generative models.
//!
//! A quad is `{target, aspect category, sentiment, opinion expression}` where
//! the target and expression are verbatim spans of the input text and the
//! target `NULL` marks an implicit target. The crate covers the whole offline
//! side of such a system:
//!
//! - [`dataset`]: line-delimited JSON datasets and descriptive statistics
//! - [`prompt`]: prompt rendering and supervised fine-tuning export
//! - [`mend`]: best-effort repair of malformed model output
//! - [`validate`]: the failure-mode ladder over parsed output
//! - [`align`]: realignment of non-extractive spans onto the input text
//! - [`score`]: strict and relaxed micro-averaged precision/recall/F1
//!
//! Numeric results are generic over [`Scalar`]; the aliases below fix the
//! common instantiations.

pub mod align;
pub mod dataset;
pub mod mend;
pub mod model;
pub mod prompt;
pub mod scalar;
pub mod score;
pub mod validate;

pub use model::{
    canonical_quad_order, Category, DomainTaxonomy, FailureMode, FailureRecord, Locus, OneShot,
    PredictedQuad, Quad, Sample, SentimentLabel, TaskArity, IMPLICIT_TARGET,
};
pub use scalar::Scalar;

/// Exact rational scalar, useful when comparing scores without rounding.
pub type Rational = num_rational::Ratio<i64>;

pub type AlignConfig = align::AlignConfig<f64>;
pub type AlignOutcome = align::AlignOutcome<f64>;
pub type ExactAlignOutcome = align::AlignOutcome<Rational>;

pub type EvalReport = score::EvalReport<f64>;
pub type EvalReportF32 = score::EvalReport<f32>;
pub type ExactEvalReport = score::EvalReport<Rational>;
