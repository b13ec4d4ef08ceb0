//! Small neural-network engine: explicit per-layer backpropagation over
//! dense, convolutional, batch-norm and spectrally normalized layers, plus
//! an adaptive-moment optimizer and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod spectral;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, NamedTensor, OptimizerState};
pub use layers::{
    BatchNorm, Conv2d, Dense, Flatten, Layer, LeakyRelu, Mode, Module, Param, Sequential, Sigmoid,
};
pub use spectral::SpectralNorm;
pub use tensor::{Scalar, Tensor};
