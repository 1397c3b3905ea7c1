//! Summed cross-entropy objective and its fused softmax gradient.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities below this are clamped before the log so the loss stays
/// finite under single-precision underflow.
pub const PROB_CLAMP: f64 = 1e-12;

/// Total loss plus its per-sample decomposition. The total is the sum, not
/// the mean, over samples; `value == per_sample.iter().sum()` by
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub per_sample: Vec<f64>,
}

fn check_rows<S: Scalar>(probs: &Tensor<S>, labels: &Tensor<S>) -> Result<(usize, usize)> {
    if probs.rank() != 2 || labels.rank() != 2 || probs.dims() != labels.dims() {
        return Err(Error::Dimension {
            op: "cross_entropy",
            detail: format!(
                "expected matching [N,C] tensors, got {:?} and {:?}",
                probs.dims(),
                labels.dims()
            ),
        });
    }
    Ok((probs.dims()[0], probs.dims()[1]))
}

fn validate_distributions<S: Scalar>(probs: &Tensor<S>, labels: &Tensor<S>) -> Result<()> {
    let (_, c) = check_rows(probs, labels)?;
    for (i, row) in probs.data().chunks(c).enumerate() {
        let sum: f64 = row.iter().map(|&p| p.as_f64()).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "probability row {i} sums to {sum}, not 1"
            )));
        }
    }
    for (i, row) in labels.data().chunks(c).enumerate() {
        let ones = row.iter().filter(|&&v| v.as_f64() == 1.0).count();
        let zeros = row.iter().filter(|&&v| v.as_f64() == 0.0).count();
        if ones != 1 || zeros != c - 1 {
            return Err(Error::Validation(format!(
                "label row {i} is not one-hot"
            )));
        }
    }
    Ok(())
}

/// E = -sum_n sum_i y_i^n log o_i^n over one-hot labels, summed (not
/// averaged) over the N samples.
pub fn cross_entropy<S: Scalar>(probs: &Tensor<S>, labels: &Tensor<S>) -> Result<LossValue> {
    validate_distributions(probs, labels)?;
    let c = probs.dims()[1];
    let per_sample: Vec<f64> = probs
        .data()
        .chunks(c)
        .zip(labels.data().chunks(c))
        .map(|(p_row, y_row)| {
            let mut acc = 0.0;
            for (&p, &y) in p_row.iter().zip(y_row) {
                let y = y.as_f64();
                if y != 0.0 {
                    acc -= y * p.as_f64().max(PROB_CLAMP).ln();
                }
            }
            acc
        })
        .collect();
    let value = per_sample.iter().sum();
    Ok(LossValue { value, per_sample })
}

/// Gradient of `cross_entropy` w.r.t. the softmax logits: probs - labels.
pub fn softmax_xent_grad<S: Scalar>(probs: &Tensor<S>, labels: &Tensor<S>) -> Result<Tensor<S>> {
    check_rows(probs, labels)?;
    probs.sub(labels)
}

/// One-hot label matrix `[N, C]` from class indices.
pub fn one_hot<S: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<S>> {
    let mut out = Tensor::zeros(&[labels.len(), classes]);
    for (n, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Validation(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        out.data_mut()[n * classes + l] = S::one();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::softmax;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_one_hot_prediction_is_zero() {
        let probs = Tensor::new(&[2, 3], vec![1.0f64, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let labels = probs.clone();
        let loss = cross_entropy(&probs, &labels).unwrap();
        assert_eq!(loss.value, 0.0);
        assert_eq!(loss.per_sample, vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_prediction_over_20_classes_is_ln_20() {
        let probs = Tensor::filled(&[1, 20], 0.05f64);
        let labels = one_hot(&[7], 20).unwrap();
        let loss = cross_entropy(&probs, &labels).unwrap();
        assert!((loss.value - 20.0f64.ln()).abs() < 1e-9, "{}", loss.value);
    }

    #[test]
    fn loss_sums_over_samples() {
        let single = Tensor::new(&[1, 4], vec![0.1f64, 0.2, 0.3, 0.4]).unwrap();
        let label_single = one_hot(&[2], 4).unwrap();
        let one = cross_entropy(&single, &label_single).unwrap();

        let double = Tensor::new(&[2, 4], vec![0.1f64, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4]).unwrap();
        let label_double = one_hot(&[2, 2], 4).unwrap();
        let two = cross_entropy(&double, &label_double).unwrap();
        assert_eq!(two.value, 2.0 * one.value);
    }

    #[test]
    fn non_distribution_row_rejected() {
        let probs = Tensor::new(&[1, 3], vec![0.5f64, 0.2, 0.2]).unwrap();
        let labels = one_hot(&[0], 3).unwrap();
        assert!(matches!(
            cross_entropy(&probs, &labels),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn non_one_hot_label_rejected() {
        let probs = Tensor::filled(&[1, 4], 0.25f64);
        let labels = Tensor::new(&[1, 4], vec![0.5f64, 0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cross_entropy(&probs, &labels),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn loss_clamps_zero_probability() {
        let probs = Tensor::new(&[1, 2], vec![0.0f64, 1.0]).unwrap();
        let labels = one_hot(&[0], 2).unwrap();
        let loss = cross_entropy(&probs, &labels).unwrap();
        assert!(loss.value.is_finite());
        assert!((loss.value - (-PROB_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn grad_zero_at_optimum() {
        let probs = Tensor::new(&[2, 3], vec![1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let labels = probs.clone();
        let g = softmax_xent_grad(&probs, &labels).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let logits_data: Vec<f64> = (0..15).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let logits = Tensor::new(&[3, 5], logits_data).unwrap();
            let probs = softmax(&logits).unwrap();
            let labels = one_hot(&[0, 2, 4], 5).unwrap();
            let g = softmax_xent_grad(&probs, &labels).unwrap();
            for row in g.data().chunks(5) {
                let s: f64 = row.iter().sum();
                assert!(s.abs() < 1e-12, "row sums to {s}");
            }
        }
    }

    #[test]
    fn grad_matches_finite_differences_of_composed_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut logits: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let labels = one_hot::<f64>(&[1, 4, 0], 5).unwrap();
            let analytic = {
                let t = Tensor::new(&[3, 5], logits.clone()).unwrap();
                let probs = softmax(&t).unwrap();
                softmax_xent_grad(&probs, &labels).unwrap()
            };
            let h = 1e-6;
            for i in 0..logits.len() {
                let orig = logits[i];
                logits[i] = orig + h;
                let plus = cross_entropy(
                    &softmax(&Tensor::new(&[3, 5], logits.clone()).unwrap()).unwrap(),
                    &labels,
                )
                .unwrap()
                .value;
                logits[i] = orig - h;
                let minus = cross_entropy(
                    &softmax(&Tensor::new(&[3, 5], logits.clone()).unwrap()).unwrap(),
                    &labels,
                )
                .unwrap()
                .value;
                logits[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic.data()[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-6, "analytic {a} vs numeric {numeric}");
            }
        }
    }

    #[test]
    fn cross_entropy_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..12).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let probs = softmax(&Tensor::new(&[3, 4], logits).unwrap()).unwrap();
            let labels = one_hot(&[rng.gen_range(0..4), 0, 3], 4).unwrap();
            assert!(cross_entropy(&probs, &labels).unwrap().value >= 0.0);
        }
    }
}
