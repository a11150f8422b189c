//! Dense reverse-mode differentiation and the Adam optimizer.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, GradCheckConfig, RELATIVE_FLOOR};
pub use graph::{ComputeGraph, LeafKind, Node, NodeId, Op};
pub use params::{Bindings, Gradients, Overlay, ParamStore};
pub use tape::{backward_grads, forward_eval, Tape};
