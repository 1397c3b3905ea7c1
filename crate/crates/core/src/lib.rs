//! Convolutional glitch classifiers over multi-duration spectrogram views.
//!
//! The crate provides a small dense-tensor core, the layer set needed for
//! the classifiers (valid 2-D convolution, 2x2 max-pooling, ReLU, fully
//! connected, softmax), a summed cross-entropy loss with an Adadelta
//! optimizer, builders for one single-view and two multi-view architectures,
//! a deterministic synthetic spectrogram corpus, and binary checkpoint /
//! corpus formats consumed by the `glitchnet` CLI.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

pub(crate) mod seedmix {
    /// splitmix64 finalizer; used to derive independent deterministic
    /// sub-seeds from a run seed.
    pub fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn mix2(a: u64, b: u64) -> u64 {
        mix(mix(a) ^ b.wrapping_mul(0xd6e8feb86659fd93))
    }

    pub fn mix3(a: u64, b: u64, c: u64) -> u64 {
        mix2(mix2(a, b), c)
    }
}
