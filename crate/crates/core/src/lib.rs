//! Deceptive review detection: reviewer-graph clustering, ground-truth
//! labeling, syntactic feature extraction, maximum-entropy classification
//! and the cross-domain evaluation protocols.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod graph;
mod mincut;
pub mod synthetic;
pub mod treebank;
pub mod treequery;

pub use classifier::{MaxentModel, TrainConfig};
pub use corpus::{
    Domain, Label, LabeledCorpus, LabeledReview, Product, ProductId, Review, ReviewId, ReviewerId,
    SieveLabel, TaskSet,
};
pub use error::{Error, Result};
pub use evaluation::{EvalReport, Evaluator, Prf, ProtocolConfig};
pub use features::{FeatureConfig, FeatureFamily, FeatureSpace, FeatureVector};
pub use graph::{MrfParams, ReviewerGraph};
pub use synthetic::{generate_synthetic_corpus, SyntheticCorpus, SyntheticSpec};
pub use treebank::{parse_bracketed, ParseTree, ProductionRule};
pub use treequery::{compile_pattern, ComplexityCounts, ComplexityVector, TreePattern};
