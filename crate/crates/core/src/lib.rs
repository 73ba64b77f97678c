//! Balanced neighborhood collective learning for weakly supervised
//! multi-label classification.
//!
//! The core is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`, with `*32` variants for `f32`.

pub mod error;
pub mod graph;
pub mod interchange;
pub mod loss;
pub mod metrics;
pub mod propagation;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
pub use graph::{
    balanced_neighborhoods, embed_labels, similarity_matrix, threshold_graph,
    BalancedNeighborhoods, PercentilePair, Sign, SignedLabelGraph,
};
pub use interchange::{
    load_manifest, FeatureMatrix, GroundTruth, LabelEmbeddings, LabelSpace, Manifest, Setting,
    SupervisionConfig,
};
pub use loss::{BatchTargets, LossBreakdown, LossConfig};
pub use metrics::{compute_all, MetricsReport};
pub use propagation::{
    baseline_0shot, forward, init_params, predict, HiddenStates, ModelParams, PredictionSet,
};
pub use scalar::Scalar;
pub use synth::{generate, SynthConfig, SynthDataset};
pub use trainer::{train, Checkpoint, TrainConfig, TrainHistory};

pub type Features = FeatureMatrix<f64>;
pub type Embeddings = LabelEmbeddings<f64>;
pub type Graph = SignedLabelGraph<f64>;
pub type Params = ModelParams<f64>;
pub type States = HiddenStates<f64>;
pub type Losses = LossConfig<f64>;
pub type Report = MetricsReport<f64>;
pub type Dataset = SynthDataset<f64>;

pub type Features32 = FeatureMatrix<f32>;
pub type Embeddings32 = LabelEmbeddings<f32>;
pub type Graph32 = SignedLabelGraph<f32>;
pub type Params32 = ModelParams<f32>;
pub type States32 = HiddenStates<f32>;
pub type Losses32 = LossConfig<f32>;
pub type Report32 = MetricsReport<f32>;
pub type Dataset32 = SynthDataset<f32>;
