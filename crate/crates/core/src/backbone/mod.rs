//! Reference graph collaborative-filtering backbone: LightGCN-style bipartite propagation
//! over ID embeddings plus additively injected modality projections, smoothed over a frozen
//! item-item kNN graph, trained with BPR.

pub mod checkpoint;
pub mod graph;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use graph::{build_item_knn_graph, build_norm_bipartite, CsrMatrix, ItemSemanticGraph};
pub use model::{
    bpr_loss, bpr_loss_grad, ItemFeatures, ModelScorer, Precision, Propagated, RecConfig, RecModel,
};
pub use train::{train, EpochLog, TrainOptions, TrainOutcome};

use crate::data::InteractionDataset;
use crate::error::Result;
use crate::eval::ScoreProvider;

/// A downstream recommender that consumes fused item features.
pub trait Backbone {
    type Scorer: ScoreProvider;

    fn name(&self) -> &'static str;

    fn fit(
        &self,
        ds: &InteractionDataset,
        features: ItemFeatures,
        config: &RecConfig,
        opts: TrainOptions,
    ) -> Result<(Self::Scorer, TrainOutcome)>;
}

/// The bipartite + frozen item graph backbone implemented in this crate.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphBackbone;

impl Backbone for GraphBackbone {
    type Scorer = ModelScorer;

    fn name(&self) -> &'static str {
        "graph-knn"
    }

    fn fit(
        &self,
        ds: &InteractionDataset,
        features: ItemFeatures,
        config: &RecConfig,
        opts: TrainOptions,
    ) -> Result<(ModelScorer, TrainOutcome)> {
        let outcome = train(ds, features, config, opts)?;
        Ok((outcome.model.scorer(), outcome))
    }
}
