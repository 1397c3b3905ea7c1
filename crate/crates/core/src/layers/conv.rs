use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gemm_into, Tensor};

use super::{split_batch, with_batch, Layer, ParamSlot, ParamView};

/// Valid (unpadded) 2-D convolution, implemented as cross-correlation in
/// the usual deep-learning convention. `kernels` is `[K, C, f, f]`, `bias`
/// is `[K]`; a `C x H x W` input maps to `K x (H-f+1) x (W-f+1)`.
pub struct ConvLayer<S: Scalar> {
    name: String,
    kernels: Tensor<S>,
    bias: Tensor<S>,
    grad_kernels: Tensor<S>,
    grad_bias: Tensor<S>,
    cache: Option<Tensor<S>>,
}

impl<S: Scalar> ConvLayer<S> {
    /// Glorot-uniform kernels (fan_in = C*f*f, fan_out = K*f*f), zero bias.
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(in_channels >= 1 && filters >= 1 && kernel >= 1);
        let fan_in = (in_channels * kernel * kernel) as f64;
        let fan_out = (filters * kernel * kernel) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let n = filters * in_channels * kernel * kernel;
        let data = (0..n)
            .map(|_| S::of_f64(rng.gen_range(-limit..limit)))
            .collect();
        let kernels = Tensor::new(&[filters, in_channels, kernel, kernel], data).unwrap();
        ConvLayer {
            name: name.into(),
            grad_kernels: Tensor::zeros(kernels.dims()),
            grad_bias: Tensor::zeros(&[filters]),
            bias: Tensor::zeros(&[filters]),
            kernels,
            cache: None,
        }
    }

    pub fn from_params(name: impl Into<String>, kernels: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        if kernels.rank() != 4 || bias.rank() != 1 || bias.dims()[0] != kernels.dims()[0] {
            return Err(Error::Dimension {
                op: "conv",
                detail: format!(
                    "kernels must be [K,C,f,f] with bias [K], got {:?} and {:?}",
                    kernels.dims(),
                    bias.dims()
                ),
            });
        }
        Ok(ConvLayer {
            name: name.into(),
            grad_kernels: Tensor::zeros(kernels.dims()),
            grad_bias: Tensor::zeros(bias.dims()),
            kernels,
            bias,
            cache: None,
        })
    }

    fn filters(&self) -> usize {
        self.kernels.dims()[0]
    }

    fn in_channels(&self) -> usize {
        self.kernels.dims()[1]
    }

    fn kernel(&self) -> usize {
        self.kernels.dims()[2]
    }

    fn check_input(&self, dims: &[usize]) -> Result<(usize, usize, usize)> {
        let (c, h, w) = (dims[0], dims[1], dims[2]);
        let f = self.kernel();
        if c != self.in_channels() {
            return Err(Error::Dimension {
                op: "conv_forward",
                detail: format!(
                    "input {dims:?} has {c} channels but kernels {:?} expect {}",
                    self.kernels.dims(),
                    self.in_channels()
                ),
            });
        }
        if h < f || w < f {
            return Err(Error::Dimension {
                op: "conv_forward",
                detail: format!(
                    "input {dims:?} is smaller than the {f}x{f} kernel"
                ),
            });
        }
        Ok((c, h, w))
    }

    fn run_forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (bsz, sample) = split_batch(x.dims(), 3).ok_or_else(|| Error::Dimension {
            op: "conv_forward",
            detail: format!("expected [C,H,W] or [B,C,H,W], got {:?}", x.dims()),
        })?;
        let (c, h, w) = self.check_input(sample)?;
        let f = self.kernel();
        let k = self.filters();
        let (oh, ow) = (h - f + 1, w - f + 1);
        let p = oh * ow;
        let cff = c * f * f;
        let chw = c * h * w;

        let mut out = vec![S::zero(); bsz * k * p];
        let kernels = self.kernels.data();
        let bias = self.bias.data();
        out.par_chunks_mut(k * p)
            .zip(x.data().par_chunks(chw))
            .for_each(|(ob, xb)| {
                let mut cols = vec![S::zero(); cff * p];
                im2col(xb, c, h, w, f, &mut cols);
                gemm_into(kernels, (k, cff), false, &cols, (cff, p), false, ob);
                for (ki, row) in ob.chunks_mut(p).enumerate() {
                    let bk = bias[ki];
                    for v in row.iter_mut() {
                        *v = *v + bk;
                    }
                }
            });

        Tensor::new(&with_batch(x.rank() == 4, bsz, &[k, oh, ow]), out)
    }
}

impl<S: Scalar> Layer<S> for ConvLayer<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 {
            return Err(Error::Dimension {
                op: "conv_forward",
                detail: format!("expected per-sample shape [C,H,W], got {input:?}"),
            });
        }
        let (_, h, w) = self.check_input(input)?;
        let f = self.kernel();
        Ok(vec![self.filters(), h - f + 1, w - f + 1])
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
            op: "conv_backward",
            detail: "backward called before forward",
        })?;
        let (bsz, sample) = split_batch(x.dims(), 3).expect("cached input validated");
        let (c, h, w) = (sample[0], sample[1], sample[2]);
        let f = self.kernel();
        let k = self.filters();
        let (oh, ow) = (h - f + 1, w - f + 1);
        let p = oh * ow;
        let cff = c * f * f;
        let chw = c * h * w;

        let expected = with_batch(x.rank() == 4, bsz, &[k, oh, ow]);
        if grad.dims() != expected.as_slice() {
            return Err(Error::Dimension {
                op: "conv_backward",
                detail: format!(
                    "gradient shape {:?} does not match forward output {expected:?}",
                    grad.dims()
                ),
            });
        }

        for gb in grad.data().chunks(k * p) {
            for (ki, row) in gb.chunks(p).enumerate() {
                let mut acc = S::zero();
                for &g in row {
                    acc = acc + g;
                }
                self.grad_bias.data_mut()[ki] = self.grad_bias.data_mut()[ki] + acc;
            }
        }

        let kernels = self.kernels.data();
        let mut grad_x = vec![S::zero(); bsz * chw];
        // Per-sample kernel gradients come back in sample order and are
        // reduced sequentially, which keeps the sum bit-deterministic.
        let per_sample: Vec<Vec<S>> = grad_x
            .par_chunks_mut(chw)
            .zip(x.data().par_chunks(chw))
            .zip(grad.data().par_chunks(k * p))
            .map(|((gxb, xb), gb)| {
                let mut cols = vec![S::zero(); cff * p];
                im2col(xb, c, h, w, f, &mut cols);
                let mut gk = vec![S::zero(); k * cff];
                gemm_into(gb, (k, p), false, &cols, (cff, p), true, &mut gk);
                let mut gcols = vec![S::zero(); cff * p];
                gemm_into(kernels, (k, cff), true, gb, (k, p), false, &mut gcols);
                col2im_add(&gcols, c, h, w, f, gxb);
                gk
            })
            .collect();
        let gk_acc = self.grad_kernels.data_mut();
        for gk in per_sample {
            for (acc, g) in gk_acc.iter_mut().zip(gk) {
                *acc = *acc + g;
            }
        }

        Tensor::new(&with_batch(x.rank() == 4, bsz, &[c, h, w]), grad_x)
    }

    fn params(&mut self) -> Vec<ParamSlot<'_, S>> {
        vec![
            ParamSlot {
                name: format!("{}.kernels", self.name),
                value: &mut self.kernels,
                grad: &mut self.grad_kernels,
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
                name: format!("{}.kernels", self.name),
                value: &self.kernels,
            },
            ParamView {
                name: format!("{}.bias", self.name),
                value: &self.bias,
            },
        ]
    }

    fn param_count(&self) -> usize {
        self.kernels.numel() + self.bias.numel()
    }

    fn zero_grads(&mut self) {
        self.grad_kernels.data_mut().fill(S::zero());
        self.grad_bias.data_mut().fill(S::zero());
    }
}

/// Unrolls `x` ([C,H,W] flat) into `cols` ([C*f*f, P] flat) so convolution
/// becomes one matrix product. Row r = c*f*f + u*f + v holds the input
/// pixel (c, oh+u, ow+v) for every output position p = oh*OW + ow.
fn im2col<S: Scalar>(x: &[S], c: usize, h: usize, w: usize, f: usize, cols: &mut [S]) {
    let (oh, ow) = (h - f + 1, w - f + 1);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for u in 0..f {
            for v in 0..f {
                let dst = &mut cols[row * p..(row + 1) * p];
                for i in 0..oh {
                    let src = &plane[(i + u) * w + v..(i + u) * w + v + ow];
                    dst[i * ow..(i + 1) * ow].copy_from_slice(src);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of `im2col`: scatter-adds column gradients back onto the input.
fn col2im_add<S: Scalar>(cols: &[S], c: usize, h: usize, w: usize, f: usize, gx: &mut [S]) {
    let (oh, ow) = (h - f + 1, w - f + 1);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut gx[ci * h * w..(ci + 1) * h * w];
        for u in 0..f {
            for v in 0..f {
                let src = &cols[row * p..(row + 1) * p];
                for i in 0..oh {
                    let dst = &mut plane[(i + u) * w + v..(i + u) * w + v + ow];
                    for (d, s) in dst.iter_mut().zip(&src[i * ow..(i + 1) * ow]) {
                        *d = *d + *s;
                    }
                }
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::{self, random_tensor};
    use crate::layers::Layer;

    /// Direct six-nested-loop valid cross-correlation, the oracle.
    fn conv_oracle(x: &Tensor<f64>, kernels: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
        let (c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let (k, f) = (kernels.dims()[0], kernels.dims()[2]);
        let (oh, ow) = (h - f + 1, w - f + 1);
        let mut out = Tensor::zeros(&[k, oh, ow]);
        for ki in 0..k {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for u in 0..f {
                            for v in 0..f {
                                acc += x.at(&[ci, i + u, j + v]) * kernels.at(&[ki, ci, u, v]);
                            }
                        }
                    }
                    out.data_mut()[(ki * oh + i) * ow + j] = acc + bias.data()[ki];
                }
            }
        }
        out
    }

    fn layer_from(kernels: &Tensor<f64>, bias: &Tensor<f64>) -> ConvLayer<f64> {
        ConvLayer::from_params("conv", kernels.clone(), bias.clone()).unwrap()
    }

    #[test]
    fn one_by_one_identity_kernel_passes_input_through() {
        let kernels = Tensor::new(&[1, 1, 1, 1], vec![1.0f64]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let layer = layer_from(&kernels, &bias);
        let x = random_tensor(&mut testutil::rng(3), &[1, 4, 5], -1.0, 1.0);
        let y = layer.infer(&x).unwrap();
        assert_eq!(y.dims(), x.dims());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn full_size_input_shape() {
        let mut rng = testutil::rng(5);
        let layer = ConvLayer::<f64>::new("conv1", 1, 128, 5, &mut rng);
        assert_eq!(
            layer.out_shape(&[1, 47, 57]).unwrap(),
            vec![128, 43, 53]
        );
    }

    #[test]
    fn matches_nested_loop_oracle_exactly() {
        let mut rng = testutil::rng(11);
        let x = random_tensor(&mut rng, &[2, 9, 9], -1.0, 1.0);
        let kernels = random_tensor(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
        let bias = random_tensor(&mut rng, &[3], -0.2, 0.2);
        let layer = layer_from(&kernels, &bias);
        let got = layer.infer(&x).unwrap();
        let want = conv_oracle(&x, &kernels, &bias);
        assert_eq!(got, want);
    }

    #[test]
    fn batch_forward_equals_per_sample_forward() {
        let mut rng = testutil::rng(13);
        let kernels = random_tensor(&mut rng, &[2, 1, 3, 3], -0.5, 0.5);
        let bias = random_tensor(&mut rng, &[2], -0.1, 0.1);
        let layer = layer_from(&kernels, &bias);
        let a = random_tensor(&mut rng, &[1, 6, 7], -1.0, 1.0);
        let b = random_tensor(&mut rng, &[1, 6, 7], -1.0, 1.0);
        let mut batch = a.data().to_vec();
        batch.extend_from_slice(b.data());
        let batch = Tensor::new(&[2, 1, 6, 7], batch).unwrap();
        let y = layer.infer(&batch).unwrap();
        let ya = layer.infer(&a).unwrap();
        let yb = layer.infer(&b).unwrap();
        assert_eq!(&y.data()[..ya.numel()], ya.data());
        assert_eq!(&y.data()[ya.numel()..], yb.data());
    }

    #[test]
    fn input_smaller_than_kernel_rejected() {
        let mut rng = testutil::rng(1);
        let layer = ConvLayer::<f64>::new("conv", 1, 2, 5, &mut rng);
        let x = Tensor::zeros(&[1, 4, 8]);
        assert!(matches!(
            layer.infer(&x),
            Err(Error::Dimension { .. })
        ));
        assert!(layer.out_shape(&[1, 4, 8]).is_err());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut rng = testutil::rng(1);
        let layer = ConvLayer::<f64>::new("conv", 2, 2, 3, &mut rng);
        let x = Tensor::zeros(&[3, 8, 8]);
        let err = layer.infer(&x).map(|_| ()).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut rng = testutil::rng(1);
        let mut layer = ConvLayer::<f64>::new("conv", 1, 2, 3, &mut rng);
        let g = Tensor::zeros(&[2, 4, 4]);
        assert!(matches!(
            layer.backward(&g),
            Err(Error::State { .. })
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = testutil::rng(7);
        let mut layer = ConvLayer::<f64>::new("conv", 1, 2, 3, &mut rng);
        let x = random_tensor(&mut rng, &[1, 6, 6], -1.0, 1.0);
        let y = layer.forward(&x).unwrap();
        let gx = layer.backward(&Tensor::zeros(y.dims())).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        for p in layer.params() {
            assert!(p.grad.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn bias_gradient_sums_output_gradient_per_filter() {
        let mut rng = testutil::rng(9);
        let mut layer = ConvLayer::<f64>::new("conv", 1, 2, 3, &mut rng);
        let x = random_tensor(&mut rng, &[1, 6, 6], -1.0, 1.0);
        let y = layer.forward(&x).unwrap();
        let g = random_tensor(&mut rng, y.dims(), -1.0, 1.0);
        layer.backward(&g).unwrap();
        let p = y.dims()[1] * y.dims()[2];
        let grads = layer.params();
        let grad_bias = grads
            .iter()
            .find(|s| s.name.ends_with(".bias"))
            .unwrap();
        for k in 0..2 {
            let want: f64 = g.data()[k * p..(k + 1) * p].iter().sum();
            let got = grad_bias.grad.data()[k];
            assert!((got - want).abs() < 1e-12, "filter {k}: {got} vs {want}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        // 1x6x6 input, 2 filters of 3x3, h = 1e-5, 1e-5 relative.
        let mut rng = testutil::rng(21);
        let x = random_tensor(&mut rng, &[1, 6, 6], -1.0, 1.0);
        let kernels = random_tensor(&mut rng, &[2, 1, 3, 3], -0.5, 0.5);
        let bias = random_tensor(&mut rng, &[2], -0.2, 0.2);
        let mut init: Vec<f64> = kernels.data().to_vec();
        init.extend_from_slice(bias.data());
        let kdims = kernels.dims().to_vec();
        let knum = kernels.numel();
        testutil::check_layer_gradients(
            move |params| {
                let k = Tensor::new(&kdims, params[..knum].to_vec()).unwrap();
                let b = Tensor::new(&[2], params[knum..].to_vec()).unwrap();
                Box::new(ConvLayer::from_params("conv", k, b).unwrap())
            },
            &init,
            &x,
            77,
            1e-5,
            1e-5,
        );
    }
}
