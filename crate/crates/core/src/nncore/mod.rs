//! Dense numeric core: MLP layers with explicit forward/backward passes, Adam,
//! a central-difference gradient checker and the text checkpoint codec.
//!
//! Matrices are `ndarray::Array2<f64>` in row-major layout. Layer weights have
//! shape `(out_dim, in_dim)`; batches have shape `(batch, features)`.

mod adam;
pub mod codec;
mod gradcheck;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use mlp::{Activation, DenseLayer, ForwardCache, LayerGrad, Mlp, MlpGrads};

pub type Matrix = ndarray::Array2<f64>;
pub type Vector = ndarray::Array1<f64>;
