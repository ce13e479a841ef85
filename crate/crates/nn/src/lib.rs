//! Minimal differentiable compute layer.
//!
//! Values are row-major matrices ([`Tensor`]); rows are batch entries and
//! columns are features. A [`Graph`] records operations on a tape during the
//! forward pass and [`Graph::backward`] propagates gradients in reverse.
//! Trainable parameters live in a [`ParamSet`] and are registered into a
//! graph by [`ParamId`], so one parameter set can be evaluated by many
//! independent graphs (rollout workers, finite-difference probes).

mod error;
pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod tensor;

pub use error::NnError;
pub use graph::{Gradients, Graph, Var};
pub use layers::{Activation, AttentionBlock, CategoricalHead, Dense, Mlp};
pub use optim::Adam;
pub use params::{ParamId, ParamSet, CHECKPOINT_MAGIC};
pub use tensor::Tensor;

pub type Result<T, E = NnError> = std::result::Result<T, E>;
