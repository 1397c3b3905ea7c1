use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{split_batch, Layer};

/// Elementwise max(0, x). Backward passes gradient where x > 0 and zero
/// elsewhere (subgradient 0 at exactly 0).
pub struct ReluLayer<S: Scalar> {
    name: String,
    /// Positive-input mask from the last forward, one byte per element.
    cache: Option<(Vec<usize>, Vec<u8>)>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> ReluLayer<S> {
    pub fn new(name: impl Into<String>) -> Self {
        ReluLayer {
            name: name.into(),
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<S: Scalar> Layer<S> for ReluLayer<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mask = x.data().iter().map(|&v| (v > S::zero()) as u8).collect();
        self.cache = Some((x.dims().to_vec(), mask));
        Ok(x.map(|v| if v > S::zero() { v } else { S::zero() }))
    }

    fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(x.map(|v| if v > S::zero() { v } else { S::zero() }))
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let (dims, mask) = self.cache.as_ref().ok_or(Error::State {
            op: "relu_backward",
            detail: "backward called before forward",
        })?;
        if grad.dims() != dims.as_slice() {
            return Err(Error::Dimension {
                op: "relu_backward",
                detail: format!(
                    "gradient shape {:?} does not match forward input {dims:?}",
                    grad.dims()
                ),
            });
        }
        let data = grad
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m == 1 { g } else { S::zero() })
            .collect();
        Tensor::new(dims, data)
    }
}

/// Row-wise softmax with mandatory max subtraction for overflow safety.
/// Accepts `[C]` or `[B, C]`.
pub struct SoftmaxLayer<S: Scalar> {
    name: String,
    /// Output probabilities of the last forward.
    cache: Option<Tensor<S>>,
}

impl<S: Scalar> SoftmaxLayer<S> {
    pub fn new(name: impl Into<String>) -> Self {
        SoftmaxLayer {
            name: name.into(),
            cache: None,
        }
    }
}

/// exp(z_i - max z) / sum_j exp(z_j - max z) over the trailing axis.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    let (_, sample) = split_batch(logits.dims(), 1).ok_or_else(|| Error::Dimension {
        op: "softmax",
        detail: format!("expected [C] or [B,C], got {:?}", logits.dims()),
    })?;
    let c = sample[0];
    if c < 2 {
        return Err(Error::Dimension {
            op: "softmax",
            detail: format!("need at least 2 classes, got {c}"),
        });
    }
    if logits.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            op: "softmax",
            detail: "non-finite logit".to_string(),
        });
    }
    let mut out = vec![S::zero(); logits.numel()];
    for (row_out, row_in) in out.chunks_mut(c).zip(logits.data().chunks(c)) {
        let mut max = row_in[0];
        for &v in row_in {
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        for (o, &v) in row_out.iter_mut().zip(row_in) {
            *o = (v - max).exp();
            sum = sum + *o;
        }
        for o in row_out.iter_mut() {
            *o = *o / sum;
        }
    }
    Tensor::new(logits.dims(), out)
}

impl<S: Scalar> Layer<S> for SoftmaxLayer<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 1 || input[0] < 2 {
            return Err(Error::Dimension {
                op: "softmax",
                detail: format!("expected per-sample shape [C] with C >= 2, got {input:?}"),
            });
        }
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let out = softmax(x)?;
        self.cache = Some(out.clone());
        Ok(out)
    }

    fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        softmax(x)
    }

    fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        let probs = self.cache.as_ref().ok_or(Error::State {
            op: "softmax_backward",
            detail: "backward called before forward",
        })?;
        if grad.dims() != probs.dims() {
            return Err(Error::Dimension {
                op: "softmax_backward",
                detail: format!(
                    "gradient shape {:?} does not match forward output {:?}",
                    grad.dims(),
                    probs.dims()
                ),
            });
        }
        let c = *probs.dims().last().unwrap();
        let mut out = vec![S::zero(); probs.numel()];
        for ((row_out, row_g), row_p) in out
            .chunks_mut(c)
            .zip(grad.data().chunks(c))
            .zip(probs.data().chunks(c))
        {
            // dL/dz_i = p_i * (g_i - sum_j g_j p_j)
            let mut dot = S::zero();
            for (&g, &p) in row_g.iter().zip(row_p) {
                dot = dot + g * p;
            }
            for ((o, &g), &p) in row_out.iter_mut().zip(row_g).zip(row_p) {
                *o = p * (g - dot);
            }
        }
        Tensor::new(probs.dims(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::{self, random_tensor};
    use crate::layers::Layer;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::new(&[3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        let layer = ReluLayer::new("relu");
        assert_eq!(layer.infer(&x).unwrap().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_keeps_non_negative_input_unchanged() {
        let x = random_tensor(&mut testutil::rng(4), &[2, 3, 4], 0.0, 2.0);
        let layer = ReluLayer::new("relu");
        assert_eq!(layer.infer(&x).unwrap(), x);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let x = Tensor::new(&[2], vec![0.0f64, 1.0]).unwrap();
        let mut layer = ReluLayer::new("relu");
        layer.forward(&x).unwrap();
        let g = Tensor::filled(&[2], 3.0f64);
        assert_eq!(layer.backward(&g).unwrap().data(), &[0.0, 3.0]);
    }

    #[test]
    fn relu_backward_before_forward_is_state_error() {
        let mut layer = ReluLayer::<f64>::new("relu");
        assert!(matches!(
            layer.backward(&Tensor::zeros(&[2])),
            Err(Error::State { .. })
        ));
    }

    #[test]
    fn relu_gradients_match_finite_differences_away_from_zero() {
        // Inputs pushed to |x| > 1e-3 so the kink is never probed.
        let mut rng = testutil::rng(6);
        let mut x = random_tensor(&mut rng, &[2, 3, 4], -1.0, 1.0);
        for v in x.data_mut().iter_mut() {
            if v.abs() < 1e-3 {
                *v = 2e-3 * v.signum().max(0.5);
            }
        }
        testutil::check_layer_gradients(
            |_| Box::new(ReluLayer::new("relu")),
            &[],
            &x,
            31,
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let logits = Tensor::filled(&[20], 1.7f64);
        let p = softmax(&logits).unwrap();
        for &v in p.data() {
            assert!((v - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_hand_example() {
        let logits = Tensor::new(&[2], vec![0.0f64, 3.0f64.ln()]).unwrap();
        let p = softmax(&logits).unwrap();
        assert!((p.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut rng = testutil::rng(8);
        for _ in 0..20 {
            let logits = random_tensor(&mut rng, &[7], -5.0, 5.0);
            let base = softmax(&logits).unwrap();
            for c in [-100.0, -1.0, 0.5, 1000.0] {
                let shifted = logits.map(|v| v + c);
                let p = softmax(&shifted).unwrap();
                for (a, b) in p.data().iter().zip(base.data()) {
                    assert!((a - b).abs() < 1e-12, "shift {c}");
                }
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = testutil::rng(12);
        let logits = random_tensor(&mut rng, &[5, 9], -50.0, 50.0);
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks(9) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let logits = Tensor::new(&[2], vec![1000.0f64, 1000.5]).unwrap();
        let p = softmax(&logits).unwrap();
        assert!(p.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_rejects_non_finite_logits() {
        let logits = Tensor::new(&[2], vec![f64::INFINITY, 0.0]).unwrap();
        assert!(matches!(
            softmax(&logits),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn softmax_needs_at_least_two_classes() {
        let logits = Tensor::new(&[1], vec![0.3f64]).unwrap();
        assert!(matches!(
            softmax(&logits),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn softmax_jacobian_matches_finite_differences() {
        let mut rng = testutil::rng(14);
        let x = random_tensor(&mut rng, &[6], -2.0, 2.0);
        testutil::check_layer_gradients(
            |_| Box::new(SoftmaxLayer::new("softmax")),
            &[],
            &x,
            41,
            1e-5,
            1e-5,
        );
    }
}
