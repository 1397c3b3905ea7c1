//! Command-line front end: generate a synthetic corpus, train any of the
//! six classifiers, evaluate with per-class accuracy and a confusion
//! matrix, and predict single samples. All models run at f32; checkpoint
//! reloads reproduce forward outputs bit-exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use glitchnet::checkpoint::{Checkpoint, TrainEcho};
use glitchnet::corpus::{corpus_digest, export_corpus, generate_corpus, import_corpus, Split};
use glitchnet::error::{Error, Result};
use glitchnet::eval::{argmax, evaluate};
use glitchnet::model::{ArchKind, Architecture, ModelConfig, MultiViewSample};
use glitchnet::train::{train, TrainConfig};
use glitchnet::Tensor;

#[derive(Parser)]
#[command(
    name = "glitchnet",
    version,
    about = "Multi-view CNN glitch classifiers over synthetic spectrogram corpora"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    /// 40 samples per class (800 total).
    Desk,
    /// 386 samples per class (7720 total).
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelName {
    Single0,
    Single1,
    Single2,
    Single3,
    Parallel,
    Merged,
}

impl ModelName {
    fn kind(self) -> ArchKind {
        match self {
            ModelName::Single0 => ArchKind::SingleView { duration: 0 },
            ModelName::Single1 => ArchKind::SingleView { duration: 1 },
            ModelName::Single2 => ArchKind::SingleView { duration: 2 },
            ModelName::Single3 => ArchKind::SingleView { duration: 3 },
            ModelName::Parallel => ArchKind::ParallelView,
            ModelName::Merged => ArchKind::MergedView,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Test,
    Validation,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a deterministic synthetic corpus.
    GenData {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Samples per class; overrides --scale when given.
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
    },
    /// Train one model on a corpus directory and write a checkpoint.
    Train {
        /// Corpus directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelName,
        #[arg(long, default_value_t = 130)]
        epochs: usize,
        #[arg(long, default_value_t = 30)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Write the per-epoch CSV log here instead of standard output.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Average (rather than sum) the loss gradient over each batch.
        #[arg(long, default_value_t = false)]
        mean_loss: bool,
    },
    /// Evaluate a checkpoint: overall and per-class accuracy plus the
    /// confusion matrix, as CSV on standard output.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Classify exported samples; one CSV row per sample.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        /// Sample view files (the `_0.glv` file or its path stem).
        #[arg(long, num_args = 1.., required = true)]
        sample: Vec<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData {
            out,
            per_class,
            seed,
            scale,
        } => cmd_gen_data(&out, per_class, seed, scale),
        Cmd::Train {
            data,
            model,
            epochs,
            batch,
            seed,
            out,
            log,
            mean_loss,
        } => cmd_train(&data, model, epochs, batch, seed, &out, log.as_deref(), mean_loss),
        Cmd::Eval { ckpt, data, split } => cmd_eval(&ckpt, &data, split),
        Cmd::Predict { ckpt, sample } => cmd_predict(&ckpt, &sample),
    }
}

fn cmd_gen_data(out: &Path, per_class: Option<usize>, seed: u64, scale: Scale) -> Result<()> {
    let per_class = per_class.unwrap_or(match scale {
        Scale::Desk => 40,
        Scale::Paper => 386,
    });
    if matches!(scale, Scale::Paper) && per_class == 386 {
        eprintln!(
            "note: paper scale renders 386 samples per class (7720 total), \
             the closest uniform count to the reported 7730"
        );
    }
    let corpus = generate_corpus(per_class, seed)?;
    export_corpus(&corpus, out)?;
    let manifest = fs::read_to_string(out.join("manifest.csv"))
        .map_err(|e| Error::io(out.join("manifest.csv"), e))?;
    print!("{manifest}");
    eprintln!("wrote {} samples to {}", corpus.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &Path,
    model: ModelName,
    epochs: usize,
    batch: usize,
    seed: u64,
    out: &Path,
    log: Option<&Path>,
    mean_loss: bool,
) -> Result<()> {
    let corpus = import_corpus(data)?;
    let digest = corpus_digest(data)?;
    let mut arch: Architecture<f32> = build_model(model.kind(), seed)?;
    let cfg = TrainConfig {
        epochs,
        batch_size: batch,
        seed,
        mean_reduction: mean_loss,
    };
    let report = train(&mut arch, &corpus, &cfg)?;

    let mut csv = String::from("epoch,train_loss,val_accuracy\n");
    for e in &report.epochs {
        csv.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.train_loss, e.val_accuracy));
    }
    match log {
        Some(path) => fs::write(path, csv).map_err(|e| Error::io(path, e))?,
        None => {
            print!("{csv}");
            std::io::stdout().flush().ok();
        }
    }

    let echo = TrainEcho {
        epochs: epochs as u32,
        batch: batch as u32,
        seed,
        mean_reduction: mean_loss,
    };
    Checkpoint::from_model(&arch, echo, digest).save(out)?;
    eprintln!(
        "best epoch {} (validation accuracy {:.4}); checkpoint written to {}",
        report.best_epoch,
        report.best_val_accuracy,
        out.display()
    );
    Ok(())
}

fn build_model(kind: ArchKind, seed: u64) -> Result<Architecture<f32>> {
    let cfg = ModelConfig::paper();
    match kind {
        ArchKind::SingleView { duration } => Architecture::single_view(cfg, duration, seed),
        ArchKind::ParallelView => Architecture::parallel_view(cfg, seed),
        ArchKind::MergedView => Architecture::merged_view(cfg, seed),
    }
}

fn cmd_eval(ckpt: &Path, data: &Path, split: SplitArg) -> Result<()> {
    let checkpoint = Checkpoint::load(ckpt)?;
    let arch: Architecture<f32> = checkpoint.into_model()?;
    let corpus = import_corpus(data)?;
    let split = match split {
        SplitArg::Test => Split::Test,
        SplitArg::Validation => Split::Validation,
    };
    let report = evaluate(&arch, &corpus, split)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_predict(ckpt: &Path, samples: &[PathBuf]) -> Result<()> {
    let checkpoint = Checkpoint::load(ckpt)?;
    let arch: Architecture<f32> = checkpoint.into_model()?;
    let class_names: Vec<&str> = glitchnet::synth::GLITCH_CLASSES
        .iter()
        .map(|c| c.name)
        .collect();

    let mut out = String::from("sample,prediction");
    for name in &class_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');

    for path in samples {
        let sample = load_sample(path)?;
        let probs: Tensor<f32> = arch.infer_sample(&sample)?;
        let predicted = argmax(probs.data());
        let name = class_names
            .get(predicted)
            .copied()
            .unwrap_or("unknown");
        out.push_str(&format!("{},{name}", path.display()));
        for &p in probs.data() {
            out.push_str(&format!(",{p:.6}"));
        }
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

/// Accepts either a view-0 file (`<stem>_0.glv`) or the bare stem and
/// loads all four views of the sample.
fn load_sample(path: &Path) -> Result<MultiViewSample> {
    let text = path.to_string_lossy();
    let stem = text
        .strip_suffix("_0.glv")
        .or_else(|| text.strip_suffix(".glv").and_then(|s| {
            // tolerate any view index being named as long as the stem is clear
            s.strip_suffix("_1")
                .or_else(|| s.strip_suffix("_2"))
                .or_else(|| s.strip_suffix("_3"))
        }))
        .unwrap_or(&text)
        .to_string();
    let mut views = Vec::with_capacity(4);
    for v in 0..4 {
        let view_path = PathBuf::from(format!("{stem}_{v}.glv"));
        let bytes = fs::read(&view_path).map_err(|e| Error::io(&view_path, e))?;
        let view = glitchnet::corpus::decode_view(&bytes).map_err(|e| match e {
            Error::Parse(detail) => Error::Parse(format!("{}: {detail}", view_path.display())),
            other => other,
        })?;
        views.push(view);
    }
    // label is unused for prediction
    MultiViewSample::new(
        [
            views.remove(0),
            views.remove(0),
            views.remove(0),
            views.remove(0),
        ],
        0,
    )
}
