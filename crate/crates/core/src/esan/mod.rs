//! Subgraph-bag classifier: edge-weighted GIN encoders (DS and DSS), mean
//! readout per subgraph, a set encoder over the bag, and a linear head.

mod batch;
mod model;
mod train;

pub use batch::BagBatch;
pub use model::{
    argmax, gin_layer, predictions, EncoderKind, EsanConfig, EsanModel, Forward, GinParams, Messages, Readout,
};
pub use train::{
    accuracy, batch_accuracy, build_batches, build_bags, check_policy, eval_stream, index_graphs, train_classifier,
    train_stream, EpochStats, IndexedGraph, TrainConfig, TrainOutcome,
};
