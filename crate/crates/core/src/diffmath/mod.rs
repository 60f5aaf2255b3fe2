//! Dense tensors with reverse-mode differentiation, Adam, and checkpoints.

mod adam;
mod params;
mod tape;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use params::{Bound, Checkpoint, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
