//! Forward and backward passes for the layer set used by the classifiers:
//! valid 2-D convolution, 2x2 max-pooling, ReLU, fully connected layers and
//! softmax, plus a flatten adapter and the stack container.
//!
//! Layers accept either a single sample (rank 3 for spatial layers, rank 1
//! for dense layers) or a batch with a leading batch axis. `forward` caches
//! whatever the matching `backward` needs; `infer` is the cache-free path
//! for read-only evaluation.

mod activation;
mod conv;
mod dense;
mod pool;

pub use activation::{softmax, ReluLayer, SoftmaxLayer};
pub use conv::ConvLayer;
pub use dense::{FcLayer, FlattenLayer};
pub use pool::MaxPoolLayer;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mutable view of one parameter tensor and its gradient accumulator.
pub struct ParamSlot<'a, S> {
    pub name: String,
    pub value: &'a mut Tensor<S>,
    pub grad: &'a mut Tensor<S>,
}

/// Immutable view of one parameter tensor, used for checkpointing.
pub struct ParamView<'a, S> {
    pub name: String,
    pub value: &'a Tensor<S>,
}

pub trait Layer<S: Scalar>: Send {
    fn name(&self) -> &str;

    /// Per-sample output dims for the given per-sample input dims. Used for
    /// build-time shape validation; never sees a batch axis.
    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    /// Training-path forward: computes the output and caches backward state.
    fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>>;

    /// Cache-free forward for evaluation; shares no mutable state.
    fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>>;

    /// Propagates the loss gradient, accumulating parameter gradients.
    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>>;

    fn params(&mut self) -> Vec<ParamSlot<'_, S>> {
        Vec::new()
    }

    fn params_view(&self) -> Vec<ParamView<'_, S>> {
        Vec::new()
    }

    fn param_count(&self) -> usize {
        0
    }

    fn zero_grads(&mut self) {}
}

/// Ordered list of layers trained as one unit. Forward caches live inside
/// the layers, so a stack is single-threaded during training; `infer` is
/// safe to share read-only.
pub struct LayerStack<S: Scalar> {
    layers: Vec<Box<dyn Layer<S>>>,
}

impl<S: Scalar> LayerStack<S> {
    pub fn new(layers: Vec<Box<dyn Layer<S>>>) -> Self {
        LayerStack { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn into_layers(self) -> Vec<Box<dyn Layer<S>>> {
        self.layers
    }

    pub fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Backward through every layer, gradient taken w.r.t. the stack output.
    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cur = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    /// Backward that skips the final softmax layer; used with the fused
    /// softmax/cross-entropy gradient, which is already w.r.t. the logits.
    pub fn backward_logits(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cur = grad.clone();
        for layer in self.layers.iter_mut().rev().skip(1) {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    /// Per-layer output shapes for a given per-sample input shape.
    pub fn shape_pipeline(&self, input: &[usize]) -> Result<Vec<(String, Vec<usize>)>> {
        let mut cur = input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            cur = layer.out_shape(&cur)?;
            out.push((layer.name().to_string(), cur.clone()));
        }
        Ok(out)
    }

    pub fn params(&mut self) -> Vec<ParamSlot<'_, S>> {
        self.layers.iter_mut().flat_map(|l| l.params()).collect()
    }

    pub fn params_view(&self) -> Vec<ParamView<'_, S>> {
        self.layers.iter().flat_map(|l| l.params_view()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }
}

/// Splits a possibly-batched shape into (batch size, per-sample dims).
/// `sample_rank` is the rank a single sample has for the layer in question.
pub(crate) fn split_batch(dims: &[usize], sample_rank: usize) -> Option<(usize, &[usize])> {
    if dims.len() == sample_rank {
        Some((1, dims))
    } else if dims.len() == sample_rank + 1 {
        Some((dims[0], &dims[1..]))
    } else {
        None
    }
}

/// Rebuilds an output shape with the same batch convention as the input.
pub(crate) fn with_batch(batched: bool, bsz: usize, sample_dims: &[usize]) -> Vec<usize> {
    if batched {
        let mut v = Vec::with_capacity(sample_dims.len() + 1);
        v.push(bsz);
        v.extend_from_slice(sample_dims);
        v
    } else {
        sample_dims.to_vec()
    }
}
