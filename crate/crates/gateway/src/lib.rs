//! Batch client for OpenAI-compatible chat-completions endpoints.
//!
//! [`run_batch`] sends one request per prompt with bounded concurrency and
//! retries, and returns one [`RawPrediction`] per prompt in input order.
//! [`store`] persists predictions as line-delimited JSON so interrupted runs
//! can resume.

mod client;
mod schema;
pub mod store;

pub use client::{run_batch, EndpointConfig, GatewayError, PromptItem, RawPrediction};
pub use schema::{emit_json_schema, SCHEMA_NAME};
