//! Building and scoring fact-conflicting hallucination benchmarks.

pub mod config;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod graph;
pub mod markers;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod providers;
pub mod review;
pub mod retrieval;
pub mod sampler;
pub mod scalar;
pub mod screening;
pub mod synthesis;
pub mod templates;

pub use error::{Error, Result};

pub type ExpMatchConfig = metrics::ExpMatchConfig<f64>;
pub type ExpMatchConfig32 = metrics::ExpMatchConfig<f32>;
pub type ExpMatchBreakdown = metrics::ExpMatchBreakdown<f64>;
pub type ExpMatchBreakdown32 = metrics::ExpMatchBreakdown<f32>;
pub type Bm25Params = retrieval::Bm25Params<f64>;
pub type Bm25Params32 = retrieval::Bm25Params<f32>;
pub type ScoredParagraph = retrieval::ScoredParagraph<f64>;
pub type EvidenceBundle = retrieval::EvidenceBundle<f64>;
pub type ScreenReport = screening::ScreenReport<f64>;
pub type ScreenReport32 = screening::ScreenReport<f32>;
pub type PatternScore = detector::PatternScore<f64>;
pub type EvalReport = detector::EvalReport<f64>;
pub type EvalReport32 = detector::EvalReport<f32>;
