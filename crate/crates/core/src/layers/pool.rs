use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{split_batch, with_batch, Layer};

/// Max-pooling over disjoint 2x2 windows. Odd trailing rows/columns are
/// dropped. Ties break to the first maximum in row-major window order so
/// backward routing is deterministic.
pub struct MaxPoolLayer<S: Scalar> {
    name: String,
    cache: Option<PoolCache>,
    _marker: std::marker::PhantomData<S>,
}

struct PoolCache {
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
    /// Flat index into the input for each output element's argmax.
    argmax: Vec<u32>,
}

const WINDOW: usize = 2;

impl<S: Scalar> MaxPoolLayer<S> {
    pub fn new(name: impl Into<String>) -> Self {
        MaxPoolLayer {
            name: name.into(),
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    fn check(&self, sample: &[usize]) -> Result<(usize, usize, usize)> {
        let (c, h, w) = (sample[0], sample[1], sample[2]);
        if h < WINDOW || w < WINDOW {
            return Err(Error::Dimension {
                op: "maxpool_forward",
                detail: format!("spatial dims of {sample:?} are smaller than the 2x2 window"),
            });
        }
        Ok((c, h, w))
    }

    fn run_forward(&self, x: &Tensor<S>) -> Result<(Tensor<S>, PoolCache)> {
        let (bsz, sample) = split_batch(x.dims(), 3).ok_or_else(|| Error::Dimension {
            op: "maxpool_forward",
            detail: format!("expected [C,H,W] or [B,C,H,W], got {:?}", x.dims()),
        })?;
        let (c, h, w) = self.check(sample)?;
        let (oh, ow) = (h / WINDOW, w / WINDOW);
        let data = x.data();
        let mut out = vec![S::zero(); bsz * c * oh * ow];
        let mut argmax = vec![0u32; out.len()];
        let mut oi = 0;
        for b in 0..bsz {
            for ci in 0..c {
                let base = (b * c + ci) * h * w;
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best_idx = base + (i * WINDOW) * w + j * WINDOW;
                        let mut best = data[best_idx];
                        for u in 0..WINDOW {
                            for v in 0..WINDOW {
                                let idx = base + (i * WINDOW + u) * w + j * WINDOW + v;
                                if data[idx] > best {
                                    best = data[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out[oi] = best;
                        argmax[oi] = best_idx as u32;
                        oi += 1;
                    }
                }
            }
        }
        let out_dims = with_batch(x.rank() == 4, bsz, &[c, oh, ow]);
        let cache = PoolCache {
            in_dims: x.dims().to_vec(),
            out_dims: out_dims.clone(),
            argmax,
        };
        Ok((Tensor::new(&out_dims, out)?, cache))
    }
}

impl<S: Scalar> Layer<S> for MaxPoolLayer<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 {
            return Err(Error::Dimension {
                op: "maxpool_forward",
                detail: format!("expected per-sample shape [C,H,W], got {input:?}"),
            });
        }
        let (c, h, w) = self.check(input)?;
        Ok(vec![c, h / WINDOW, w / WINDOW])
    }

    fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (out, cache) = self.run_forward(x)?;
        self.cache = Some(cache);
        Ok(out)
    }

    fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.run_forward(x)?.0)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self.cache.as_ref().ok_or(Error::State {
            op: "maxpool_backward",
            detail: "backward called before forward",
        })?;
        if grad.dims() != cache.out_dims.as_slice() {
            return Err(Error::Dimension {
                op: "maxpool_backward",
                detail: format!(
                    "gradient shape {:?} does not match forward output {:?}",
                    grad.dims(),
                    cache.out_dims
                ),
            });
        }
        let mut gx = Tensor::zeros(&cache.in_dims);
        let gxd = gx.data_mut();
        for (g, &idx) in grad.data().iter().zip(&cache.argmax) {
            gxd[idx as usize] = gxd[idx as usize] + *g;
        }
        Ok(gx)
    }
}
