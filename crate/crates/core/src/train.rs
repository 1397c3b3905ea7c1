//! Mini-batch Adadelta training with shuffled epochs and best-validation
//! checkpointing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::loss::{cross_entropy, one_hot, softmax_xent_grad};
use crate::model::Architecture;
use crate::optim::Adadelta;
use crate::scalar::Scalar;
use crate::seedmix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Scale each batch gradient by 1/len(batch). Off by default: the loss
    /// is a sum over samples and the updates use the batch sum.
    pub mean_reduction: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 130,
            batch_size: 30,
            seed: 0,
            mean_reduction: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed cross-entropy over the training split, after the epoch.
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    /// Summed training loss before any update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Trains in place. Epochs are full shuffled passes; the last partial
/// batch is processed, not dropped. After training the parameters of the
/// best epoch (highest validation accuracy, ties broken by lower
/// validation loss) are restored into the model.
///
/// Deterministic: (model seed, corpus, config) fixes every shuffle and
/// update, so reports and final parameters are bit-reproducible.
pub fn train<S: Scalar>(
    arch: &mut Architecture<S>,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<TrainingReport> {
    if cfg.epochs == 0 {
        return Err(Error::Validation("epochs must be at least 1".to_string()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Validation("batch size must be at least 1".to_string()));
    }
    if corpus.class_count() != arch.class_count() {
        return Err(Error::Validation(format!(
            "corpus has {} classes but the model expects {}",
            corpus.class_count(),
            arch.class_count()
        )));
    }
    let train_idx = corpus.indices(Split::Train);
    let val_idx = corpus.indices(Split::Validation);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Validation(
            "corpus must have non-empty train and validation splits".to_string(),
        ));
    }

    let classes = arch.class_count();
    let mut optimizer = Adadelta::new(&arch.param_dims());
    let initial_loss = split_loss(arch, corpus, &train_idx)?.0;

    let mut order = train_idx.clone();
    let mut report = TrainingReport {
        initial_loss,
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
    };
    let mut best_val_loss = f64::INFINITY;
    let mut best_params = arch.snapshot_params();

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seedmix::mix3(cfg.seed, 0x53484646, epoch as u64));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<&_> = batch.iter().map(|&i| corpus.sample(i)).collect();
            let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
            arch.zero_grads();
            let probs = arch.forward_batch(&samples)?;
            let targets = one_hot::<S>(&labels, classes)?;
            let mut grad = softmax_xent_grad(&probs, &targets)?;
            if cfg.mean_reduction {
                grad = grad.scale(S::one() / S::of_f64(samples.len() as f64));
            }
            arch.backward_logits(&grad)?;
            optimizer.step(arch.params())?;
        }

        let (train_loss, _) = split_loss(arch, corpus, &train_idx)?;
        let (val_loss, val_accuracy) = split_loss(arch, corpus, &val_idx)?;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
            val_loss,
        });
        if val_accuracy > report.best_val_accuracy
            || (val_accuracy == report.best_val_accuracy && val_loss < best_val_loss)
        {
            report.best_val_accuracy = val_accuracy;
            report.best_epoch = epoch;
            best_val_loss = val_loss;
            best_params = arch.snapshot_params();
        }
    }

    arch.restore_params(&best_params)?;
    Ok(report)
}

/// Summed cross-entropy and accuracy of the model over the given sample
/// indices, without touching training caches.
fn split_loss<S: Scalar>(
    arch: &Architecture<S>,
    corpus: &Corpus,
    indices: &[usize],
) -> Result<(f64, f64)> {
    let classes = arch.class_count();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for batch in indices.chunks(32) {
        let samples: Vec<&_> = batch.iter().map(|&i| corpus.sample(i)).collect();
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let probs = arch.infer_batch(&samples)?;
        let targets = one_hot::<S>(&labels, classes)?;
        loss += cross_entropy(&probs, &targets)?.value;
        for (row, &label) in probs.data().chunks(classes).zip(&labels) {
            if argmax(row) == label {
                correct += 1;
            }
        }
    }
    Ok((loss, correct as f64 / indices.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_corpus_with;
    use crate::loss::{one_hot, softmax_xent_grad};
    use crate::model::ModelConfig;
    use crate::optim::Adadelta;
    use crate::synth::GLITCH_CLASSES;

    /// Few filters over full-size views keeps these fast while exercising
    /// the real corpus.
    fn small_config(classes: usize) -> ModelConfig {
        ModelConfig {
            classes,
            view_rows: 47,
            view_cols: 57,
            conv_filters: 4,
            kernel_size: 3,
            fc_units: 8,
        }
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..3], 8, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            seed: 5,
            mean_reduction: false,
        };
        let run = || {
            let mut arch: Architecture<f32> =
                Architecture::single_view(small_config(3), 1, 5).unwrap();
            let report = train(&mut arch, &corpus, &cfg).unwrap();
            (report, arch.snapshot_params())
        };
        let (ra, pa) = run();
        let (rb, pb) = run();
        assert_eq!(ra, rb);
        assert_eq!(pa, pb);
    }

    #[test]
    fn partial_final_batch_is_processed() {
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..2], 8, 3).unwrap();
        // 12 training samples, batch size 30: one partial batch only. If
        // it were dropped no update would happen and the parameters would
        // keep their initial values.
        let mut arch: Architecture<f32> = Architecture::single_view(small_config(2), 0, 9).unwrap();
        let before = arch.snapshot_params();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 30,
            seed: 1,
            mean_reduction: false,
        };
        train(&mut arch, &corpus, &cfg).unwrap();
        assert_ne!(arch.snapshot_params(), before);
    }

    #[test]
    fn one_epoch_reduces_training_loss_for_most_seeds() {
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..3], 10, 7).unwrap();
        let mut improved = 0;
        for seed in 0..20u64 {
            let mut arch: Architecture<f32> =
                Architecture::single_view(small_config(3), 1, seed).unwrap();
            let cfg = TrainConfig {
                epochs: 1,
                batch_size: 10,
                seed,
                mean_reduction: false,
            };
            let report = train(&mut arch, &corpus, &cfg).unwrap();
            if report.epochs[0].train_loss < report.initial_loss {
                improved += 1;
            }
        }
        assert!(improved >= 18, "loss improved for only {improved}/20 seeds");
    }

    #[test]
    fn single_optimizer_step_reduces_loss_on_fixed_batch() {
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..3], 8, 11).unwrap();
        let samples: Vec<&_> = (0..10).map(|i| corpus.sample(i)).collect();
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let mut improved = 0;
        for seed in 0..20u64 {
            let mut arch: Architecture<f32> =
                Architecture::single_view(small_config(3), 0, seed).unwrap();
            let targets = one_hot::<f32>(&labels, 3).unwrap();
            let before = {
                let probs = arch.infer_batch(&samples).unwrap();
                cross_entropy(&probs, &targets).unwrap().value
            };
            arch.zero_grads();
            let probs = arch.forward_batch(&samples).unwrap();
            let grad = softmax_xent_grad(&probs, &targets).unwrap();
            arch.backward_logits(&grad).unwrap();
            let mut opt = Adadelta::new(&arch.param_dims());
            opt.step(arch.params()).unwrap();
            let after = {
                let probs = arch.infer_batch(&samples).unwrap();
                cross_entropy(&probs, &targets).unwrap().value
            };
            if after < before {
                improved += 1;
            }
        }
        assert!(improved >= 18, "loss decreased for only {improved}/20 seeds");
    }

    #[test]
    fn best_validation_parameters_are_restored() {
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..3], 8, 13).unwrap();
        let mut arch: Architecture<f32> = Architecture::single_view(small_config(3), 1, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 6,
            seed: 3,
            mean_reduction: false,
        };
        let report = train(&mut arch, &corpus, &cfg).unwrap();
        assert!(report.best_epoch >= 1 && report.best_epoch <= 3);
        let best = &report.epochs[report.best_epoch - 1];
        assert_eq!(best.val_accuracy, report.best_val_accuracy);
        // every epoch's validation accuracy is at most the best
        for e in &report.epochs {
            assert!(e.val_accuracy <= report.best_val_accuracy);
        }
    }

    #[test]
    fn empty_splits_and_bad_config_rejected() {
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..2], 8, 1).unwrap();
        let mut arch: Architecture<f32> = Architecture::single_view(small_config(2), 0, 1).unwrap();
        let bad_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&mut arch, &corpus, &bad_epochs).is_err());

        // a corpus with no validation samples is rejected
        let empty = crate::corpus::Corpus::from_parts(
            vec!["a".into(), "b".into()],
            (0..4).map(|i| corpus.sample(i).clone()).collect(),
            vec![Split::Train; 4],
        );
        assert!(matches!(
            train(&mut arch, &empty, &TrainConfig::default()),
            Err(Error::Validation(_))
        ));

        // class-count mismatch is rejected
        let mut arch3: Architecture<f32> = Architecture::single_view(small_config(3), 0, 1).unwrap();
        assert!(train(&mut arch3, &corpus, &TrainConfig::default()).is_err());
    }

    #[test]
    fn mean_reduction_changes_updates_but_stays_deterministic() {
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..2], 8, 17).unwrap();
        let run = |mean: bool| {
            let mut arch: Architecture<f32> =
                Architecture::single_view(small_config(2), 0, 21).unwrap();
            let cfg = TrainConfig {
                epochs: 1,
                batch_size: 6,
                seed: 2,
                mean_reduction: mean,
            };
            train(&mut arch, &corpus, &cfg).unwrap();
            arch.snapshot_params()
        };
        let sum_a = run(false);
        let sum_b = run(false);
        assert_eq!(sum_a, sum_b);
        let mean_a = run(true);
        assert_ne!(sum_a, mean_a);
    }
}
