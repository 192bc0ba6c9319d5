//! Table enrichment for machine learning.
//!
//! A query table is augmented with columns found in a lake of target tables.
//! The stages are join-row search ([`lakeindex`], [`enrich`]), task-related
//! table selection, row and column alignment ([`enrich`]) and feature
//! selection with cross-validated evaluation ([`mlkit`]). [`pipeline`] wires
//! them together under the ablation modes.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which is what the pipeline uses.

// comparisons such as `!(a < b)` are meant to treat NaN as failing
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod enrich;
pub mod lakeindex;
pub mod mlkit;
pub mod pipeline;
pub mod scalar;
pub mod tablecore;
pub mod textenc;

pub use scalar::Scalar;

/// Embedding vector in double precision.
pub type Embedding = textenc::EmbeddingVector<f64>;
/// Single precision embedding vector.
pub type EmbeddingF32 = textenc::EmbeddingVector<f32>;

pub type Features = mlkit::FeatureMatrix<f64>;
pub type FeaturesF32 = mlkit::FeatureMatrix<f32>;
pub type Lasso = mlkit::LassoModel<f64>;
pub type LassoF32 = mlkit::LassoModel<f32>;
pub type Logistic = mlkit::LogisticModel<f64>;
pub type Forest = mlkit::RandomForest<f64>;
pub type ForestF32 = mlkit::RandomForest<f32>;
pub type Model = mlkit::Model<f64>;
