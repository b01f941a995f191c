//! Joint-subspace domain adaptation.
//!
//! Labelled source data (and, in the zero-shot condition, labelled target data for a
//! subset of classes) is mapped into a shared subspace learned by supervised locality
//! preserving projection. Target instances are classified by nearest class mean in that
//! subspace. For unsupervised adaptation the subspace is relearned iteratively from a
//! growing, class-wise selection of the most confident pseudo-labelled target instances.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at the crate
//! root fix the scalar to `f64`, which is what the command-line tool uses.

pub mod capls;
pub mod cli;
pub mod data;
mod error;
pub mod eval;
pub mod linalg;
pub mod preprocess;
mod scalar;
pub mod slpp;
pub mod subspace;
pub mod zsl;

pub use error::{Error, Result};
pub use scalar::Real;

pub use capls::{run_uda, select_confident, IterationRecord, IterationState, ProjectionKind, UdaConfig, UdaOutcome};
pub use linalg::{cholesky, solve_generalized_sym, symmetric_eigs, EigenPairs, SolverConfig, SymMatrix};
pub use preprocess::{l2_normalize_rows, zscore_columns, Domain, FeatureMatrix, ZScoreStats};
pub use slpp::{build_similarity, learn_projection, LabeledDataset, ProjectionMatrix, SimilarityGraph, SlppConfig};
pub use subspace::{center_and_normalize, fit_model, predict, project, ConfidenceTable, SubspaceModel};
pub use zsl::{gzsl_metrics, make_split, run_zsl, GzslMetrics, ZslConfig, ZslSplit};

/// Double-precision aliases.
pub type Features = FeatureMatrix<f64>;
pub type Dataset = LabeledDataset<f64>;
pub type Projection = ProjectionMatrix<f64>;
pub type Model = SubspaceModel<f64>;
pub type Confidences = ConfidenceTable<f64>;
pub type Eigen = EigenPairs<f64>;

/// Single-precision aliases.
pub type FeaturesF32 = FeatureMatrix<f32>;
pub type DatasetF32 = LabeledDataset<f32>;
pub type ModelF32 = SubspaceModel<f32>;
