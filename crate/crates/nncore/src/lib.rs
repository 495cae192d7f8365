//! Minimal dense-tensor numeric core: a recorded forward pass with
//! reverse-mode gradients, the layers a small transformer and a graph
//! convolution need, Adam with per-group learning rates, a finite-difference
//! gradient checker and a versioned binary checkpoint format.
//!
//! All arithmetic is `f64`.

mod adam;
mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig, LrGroups};
pub use checkpoint::{write_atomic, Checkpoint, MAGIC, VERSION};
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, relative_error, CoordError, GradCheckConfig, GradCheckReport};
pub use graph::{elu, softmax_in_place, Graph, Var};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
