//! Multi-task toxicity prediction toolkit.
//!
//! The pipeline parses compounds from SMILES ([`smiles`]), featurizes them
//! with circular count fingerprints and reference similarities
//! ([`fingerprints`], [`dataset`]), builds clustered cross-validation folds
//! ([`folds`]), trains multi-task feedforward networks with a masked
//! cross-entropy objective ([`mtnn`]), scores and compares them
//! ([`evaluation`], [`hypersearch`]) and probes hidden units against
//! reference patterns ([`interpret`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below fix the common instantiations.

pub mod dataset;
pub mod demo;
pub mod elements;
pub mod evaluation;
pub mod fingerprints;
pub mod folds;
pub mod hypersearch;
pub mod interpret;
pub mod model;
pub mod mtnn;
pub mod scalar;
pub mod smiles;

pub use scalar::Scalar;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Smiles(#[from] smiles::SmilesError),
    #[error(transparent)]
    Fingerprint(#[from] fingerprints::FingerprintError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Folds(#[from] folds::FoldError),
    #[error(transparent)]
    Train(#[from] mtnn::TrainError),
    #[error(transparent)]
    Evaluation(#[from] evaluation::EvaluationError),
    #[error(transparent)]
    Search(#[from] hypersearch::SearchError),
    #[error(transparent)]
    Interpret(#[from] interpret::InterpretError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type Dataset64 = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type FeatureMatrix64 = dataset::SparseFeatureMatrix<f64>;
pub type FeatureMatrix32 = dataset::SparseFeatureMatrix<f32>;
pub type Network64 = mtnn::Network<f64>;
pub type Network32 = mtnn::Network<f32>;
