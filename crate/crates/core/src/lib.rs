//! Detection, diagnosis and repair of harmful retrieved web pages in
//! retrieval-augmented code generation.
//!
//! Scores are generic over [`score::Score`]; the aliases below fix the
//! scalar used by the pipeline.

pub mod cache;
pub mod corpus;
pub mod debugging;
pub mod extraction;
pub mod gateway;
pub mod harness;
pub mod lang;
pub mod metrics;
pub mod oracle;
pub mod score;
pub mod sii;
pub mod similarity;

/// Scalar used by the pipeline and its reports.
pub type Scalar = f64;
/// Exact scalar for reproducing published ratios.
pub type Exact = num_rational::Rational64;

pub type Similarity = similarity::SimilarityVector<Scalar>;
pub type Detection = metrics::DetectionScore<Scalar>;
pub type Study = sii::StudyMetrics<Scalar>;
