//! Parameterised edge-mask explainer for subgraph-bag classifiers.
//!
//! A shared MLP scores every retained edge of every subgraph from the
//! classifier's node embeddings. Training samples relaxed masks, hardens them
//! with a straight-through threshold, and reruns the frozen classifier.

mod sampler;
mod scorer;
mod train;

pub use sampler::{harden, open_uniform, sample_soft, sigmoid, temperature, NoiseKind};
pub use scorer::EdgeScorer;
pub use train::{
    explainer_loss, explainer_step_graph, train_explainer, EdgeMask, Explainer, ExplainerConfig, ExplainerEpoch,
    ExplainerOutcome, GraphMasks, LossTerms, StepGraph, MASK_CSV_HEADER, relaxed_masks,
};
