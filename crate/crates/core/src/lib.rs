pub mod diffmath;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod policies;

pub use error::{Error, Result};
pub use graph::{induced_subgraph, Graph, PolicyTag, Subgraph, SubgraphBag};
pub use matrix::Matrix;
pub mod datasets;
pub mod esan;
pub mod explainer;
pub mod merge;
pub mod metrics;
