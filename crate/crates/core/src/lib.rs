//! Training toolkit for sparsely-connected neural networks.
//!
//! Bipartite layers start from an Erdős–Rényi sparse topology whose link
//! count is linear in the neuron count; after every training epoch the
//! weights closest to zero are removed and (except after the final epoch)
//! replaced by links at random free positions. The same mechanism drives
//! supervised multi-layer perceptrons (SGD with momentum) and
//! unsupervised restricted Boltzmann machines (contrastive divergence),
//! alongside static-sparse and dense baselines. Generative models are
//! scored by annealed importance sampling, and the evolving topologies
//! are analyzed for emergent scale-free degree structure.

pub mod ais;
pub mod analysis;
pub mod data;
pub mod error;
pub mod io;
pub mod layers;
pub mod matrix;
pub mod mlp;
pub mod rbm;
pub mod rng;
pub mod topology;

pub use ais::{ais_log_z, test_log_prob, AisConfig, AisEstimate};
pub use analysis::{
    fit_power_law, null_hypothesis_p_value, power_law_report, visible_connectivity_map,
    ConnectivityMap, PowerLawReport,
};
pub use data::{Dataset, FeatureKind, SyntheticSpec};
pub use error::{Error, Result};
pub use layers::{Activation, RegularizerKind, SparseLayer, SreluParams};
pub use matrix::BatchMatrix;
pub use mlp::{build_mlp, evaluate, sgd_step, EpochMetrics, MlpModel, MlpTrainer, TrainConfig};
pub use rbm::{
    CdStatistics, LogProbMethod, RbmEpochMetrics, RbmModel, RbmTrainConfig, RbmTrainer,
};
pub use topology::{
    expected_connection_count, EvolutionConfig, EvolutionDelta, Link, Side, SparseWeights,
    SparsityMode, WeightInitSpec,
};
