//! Clustered meta-learning of signal controllers.
//!
//! Training flows are grouped by summaries of the experience they produce;
//! each group keeps its own initialization, refined with first-order
//! meta-gradient steps. At test time a short random warm-up feeds a
//! predictor that picks the initialization to adapt from.

mod bank;
mod features;
mod kmeans;
mod predictor;
mod train;

pub use bank::{global_update, outer_gradient, ClusterBank, OuterOutcome, BANK_FORMAT};
pub use features::{collect_features, FeatureCollector, ZScore, STD_FLOOR};
pub use kmeans::{
    kmeans_recluster, kmeans_recluster_from, lloyd, nearest, within_ssq, Clustering, MAX_ITERATIONS, RESTARTS,
};
pub use predictor::{
    nearest_centroid, predict_cluster, predictor_loss_and_grads, predictor_update, PredictorNet, PREDICTOR_HIDDEN,
};
pub(crate) use train::state_dim;
pub use train::{maml_train, meta_test, meta_train, MetaConfig, MetaOutcome, RoundTrace, TestOutcome};

#[cfg(test)]
mod tests;
