use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gemm_into, Tensor};

use super::{split_batch, Layer, ParamSlot, ParamView};

/// Fully connected layer: y = W x + b with `weights` `[out, in]` and
/// `bias` `[out]`. Accepts `[in]` or `[B, in]`.
pub struct FcLayer<S: Scalar> {
    name: String,
    weights: Tensor<S>,
    bias: Tensor<S>,
    grad_weights: Tensor<S>,
    grad_bias: Tensor<S>,
    cache: Option<Tensor<S>>,
}

impl<S: Scalar> FcLayer<S> {
    /// Glorot-uniform weights, zero bias.
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        assert!(in_dim >= 1 && out_dim >= 1);
        let limit = (6.0 / (in_dim as f64 + out_dim as f64)).sqrt();
        let data = (0..out_dim * in_dim)
            .map(|_| S::of_f64(rng.gen_range(-limit..limit)))
            .collect();
        let weights = Tensor::new(&[out_dim, in_dim], data).unwrap();
        FcLayer {
            name: name.into(),
            grad_weights: Tensor::zeros(weights.dims()),
            grad_bias: Tensor::zeros(&[out_dim]),
            bias: Tensor::zeros(&[out_dim]),
            weights,
            cache: None,
        }
    }

    pub fn from_params(name: impl Into<String>, weights: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        if weights.rank() != 2 || bias.rank() != 1 || bias.dims()[0] != weights.dims()[0] {
            return Err(Error::Dimension {
                op: "fc",
                detail: format!(
                    "weights must be [out,in] with bias [out], got {:?} and {:?}",
                    weights.dims(),
                    bias.dims()
                ),
            });
        }
        Ok(FcLayer {
            name: name.into(),
            grad_weights: Tensor::zeros(weights.dims()),
            grad_bias: Tensor::zeros(bias.dims()),
            weights,
            bias,
            cache: None,
        })
    }

    fn in_dim(&self) -> usize {
        self.weights.dims()[1]
    }

    fn out_dim(&self) -> usize {
        self.weights.dims()[0]
    }

    fn check(&self, dims: &[usize]) -> Result<usize> {
        let (bsz, sample) = split_batch(dims, 1).ok_or_else(|| Error::Dimension {
            op: "fc_forward",
            detail: format!("expected [in] or [B,in], got {dims:?}"),
        })?;
        if sample[0] != self.in_dim() {
            return Err(Error::Dimension {
                op: "fc_forward",
                detail: format!(
                    "input length {} does not match weights {:?}",
                    sample[0],
                    self.weights.dims()
                ),
            });
        }
        Ok(bsz)
    }

    fn run_forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let bsz = self.check(x.dims())?;
        let (din, dout) = (self.in_dim(), self.out_dim());
        // y = x W^T, then add bias per row.
        let mut out = vec![S::zero(); bsz * dout];
        gemm_into(
            x.data(),
            (bsz, din),
            false,
            self.weights.data(),
            (dout, din),
            true,
            &mut out,
        );
        let bias = self.bias.data();
        for row in out.chunks_mut(dout) {
            for (o, &b) in row.iter_mut().zip(bias) {
                *o = *o + b;
            }
        }
        let dims: Vec<usize> = if x.rank() == 2 {
            vec![bsz, dout]
        } else {
            vec![dout]
        };
        Tensor::new(&dims, out)
    }
}

impl<S: Scalar> Layer<S> for FcLayer<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 1 {
            return Err(Error::Dimension {
                op: "fc_forward",
                detail: format!("expected per-sample shape [in], got {input:?}"),
            });
        }
        if input[0] != self.in_dim() {
            return Err(Error::Dimension {
                op: "fc_forward",
                detail: format!(
                    "input length {} does not match weights {:?}",
                    input[0],
                    self.weights.dims()
                ),
            });
        }
        Ok(vec![self.out_dim()])
    }

    fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let out = self.run_forward(x)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.run_forward(x)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let x = self.cache.as_ref().ok_or(Error::State {
            op: "fc_backward",
            detail: "backward called before forward",
        })?;
        let bsz = self.check(x.dims())?;
        let (din, dout) = (self.in_dim(), self.out_dim());
        let expected: Vec<usize> = if x.rank() == 2 {
            vec![bsz, dout]
        } else {
            vec![dout]
        };
        if grad.dims() != expected.as_slice() {
            return Err(Error::Dimension {
                op: "fc_backward",
                detail: format!(
                    "gradient shape {:?} does not match forward output {expected:?}",
                    grad.dims()
                ),
            });
        }

        // grad_W += G^T x  ([out,B] x [B,in])
        let mut gw = vec![S::zero(); dout * din];
        gemm_into(
            grad.data(),
            (bsz, dout),
            true,
            x.data(),
            (bsz, din),
            false,
            &mut gw,
        );
        for (acc, g) in self.grad_weights.data_mut().iter_mut().zip(gw) {
            *acc = *acc + g;
        }
        // grad_b += column sums of G
        let gb = self.grad_bias.data_mut();
        for row in grad.data().chunks(dout) {
            for (acc, &g) in gb.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        // grad_x = G W  ([B,out] x [out,in])
        let mut gx = vec![S::zero(); bsz * din];
        gemm_into(
            grad.data(),
            (bsz, dout),
            false,
            self.weights.data(),
            (dout, din),
            false,
            &mut gx,
        );
        Tensor::new(x.dims(), gx)
    }

    fn params(&mut self) -> Vec<ParamSlot<'_, S>> {
        vec![
            ParamSlot {
                name: format!("{}.weights", self.name),
                value: &mut self.weights,
                grad: &mut self.grad_weights,
            },
            ParamSlot {
                name: format!("{}.bias", self.name),
                value: &mut self.bias,
                grad: &mut self.grad_bias,
            },
        ]
    }

    fn params_view(&self) -> Vec<ParamView<'_, S>> {
        vec![
            ParamView {
                name: format!("{}.weights", self.name),
                value: &self.weights,
            },
            ParamView {
                name: format!("{}.bias", self.name),
                value: &self.bias,
            },
        ]
    }

    fn param_count(&self) -> usize {
        self.weights.numel() + self.bias.numel()
    }

    fn zero_grads(&mut self) {
        self.grad_weights.data_mut().fill(S::zero());
        self.grad_bias.data_mut().fill(S::zero());
    }
}

/// Reshapes `[C,H,W]` (or batched) feature maps to a flat vector ahead of
/// the fully connected layers.
pub struct FlattenLayer<S: Scalar> {
    name: String,
    cache: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> FlattenLayer<S> {
    pub fn new(name: impl Into<String>) -> Self {
        FlattenLayer {
            name: name.into(),
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    fn flat_dims(x_dims: &[usize]) -> Result<Vec<usize>> {
        let (bsz, sample) = split_batch(x_dims, 3).ok_or_else(|| Error::Dimension {
            op: "flatten",
            detail: format!("expected [C,H,W] or [B,C,H,W], got {x_dims:?}"),
        })?;
        let flat: usize = sample.iter().product();
        Ok(if x_dims.len() == 4 {
            vec![bsz, flat]
        } else {
            vec![flat]
        })
    }
}

impl<S: Scalar> Layer<S> for FlattenLayer<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 {
            return Err(Error::Dimension {
                op: "flatten",
                detail: format!("expected per-sample shape [C,H,W], got {input:?}"),
            });
        }
        Ok(vec![input.iter().product()])
    }

    fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.cache = Some(x.dims().to_vec());
        x.reshape(&Self::flat_dims(x.dims())?)
    }

    fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.reshape(&Self::flat_dims(x.dims())?)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let dims = self.cache.as_ref().ok_or(Error::State {
            op: "flatten",
            detail: "backward called before forward",
        })?;
        grad.reshape(dims)
    }
}
