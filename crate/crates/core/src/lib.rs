pub mod bifurcation;
pub mod cli;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod jet;
pub mod model;
pub mod ode;
pub mod steady;
pub mod validation;

pub use error::{Error, Result};
pub use model::{build_model, ModelConfig, NeuronModel, Preset};
