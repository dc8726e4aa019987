//! A small f64 neural network engine over NCHW tensors.
//!
//! Everything the pipeline trains or explains runs on this engine: static
//! graphs of convolution, batch norm, pooling, dropout, and dense nodes,
//! with seeded stochastic forward passes and backpropagation from arbitrary
//! nodes in standard or guided mode.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod init;
pub mod layers;
pub mod loss;

pub use adam::Adam;
pub use graph::{Activations, BackpropMode, Gradients, Graph, GraphBuilder, NodeId, Op, Phase};
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Dense, Tensor};
