//! Builders and forward/backward drivers for the three classifier
//! architectures: single-view, parallel-view (one conv branch per view,
//! fused by channel concatenation) and merged-view (views tiled into one
//! double-size image).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    ConvLayer, FcLayer, FlattenLayer, Layer, LayerStack, MaxPoolLayer, ParamSlot, ParamView,
    ReluLayer, SoftmaxLayer,
};
use crate::scalar::Scalar;
use crate::seedmix;
use crate::tensor::Tensor;

/// Number of spectrogram views per sample (0.5 s, 1 s, 2 s, 4 s windows).
pub const VIEW_COUNT: usize = 4;

/// Hyperparameters shared by all three builders. `paper()` is the
/// full-size configuration; `tiny()` is the shrunk variant used by
/// gradient-check suites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub classes: usize,
    pub view_rows: usize,
    pub view_cols: usize,
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub fc_units: usize,
}

impl ModelConfig {
    /// Full-size configuration: 1x47x57 views, two 5x5 conv-128 stages,
    /// FC-256, 20 classes.
    pub fn paper() -> Self {
        ModelConfig {
            classes: 20,
            view_rows: 47,
            view_cols: 57,
            conv_filters: 128,
            kernel_size: 5,
            fc_units: 256,
        }
    }

    /// Shrunk configuration for finite-difference checks: 1x12x14 views,
    /// 8 filters of 3x3, FC-16, 3 classes.
    pub fn tiny() -> Self {
        ModelConfig {
            classes: 3,
            view_rows: 12,
            view_cols: 14,
            conv_filters: 8,
            kernel_size: 3,
            fc_units: 16,
        }
    }
}

/// Which of the three architectures a model is, plus the bound view for
/// single-view classifiers (duration index 0..=3 maps to the 0.5/1/2/4 s
/// views).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    SingleView { duration: usize },
    ParallelView,
    MergedView,
}

impl ArchKind {
    /// CLI / checkpoint model name.
    pub fn model_name(&self) -> String {
        match self {
            ArchKind::SingleView { duration } => format!("single{duration}"),
            ArchKind::ParallelView => "parallel".to_string(),
            ArchKind::MergedView => "merged".to_string(),
        }
    }

    pub fn parse(name: &str) -> Option<ArchKind> {
        match name {
            "single0" => Some(ArchKind::SingleView { duration: 0 }),
            "single1" => Some(ArchKind::SingleView { duration: 1 }),
            "single2" => Some(ArchKind::SingleView { duration: 2 }),
            "single3" => Some(ArchKind::SingleView { duration: 3 }),
            "parallel" => Some(ArchKind::ParallelView),
            "merged" => Some(ArchKind::MergedView),
            _ => None,
        }
    }
}

/// One glitch rendered over the four time windows, plus its class label.
/// Views are `[rows, cols]` grayscale tensors with pixels in [0, 1], all
/// four the same size. View data is stored at f32, the on-disk precision;
/// models widen it to their own scalar type on input.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewSample {
    views: [Tensor<f32>; VIEW_COUNT],
    pub label: usize,
}

impl MultiViewSample {
    pub fn new(views: [Tensor<f32>; VIEW_COUNT], label: usize) -> Result<Self> {
        let dims = views[0].dims().to_vec();
        if views[0].rank() != 2 {
            return Err(Error::Validation(format!(
                "views must be rank-2 [rows, cols], got {dims:?}"
            )));
        }
        for (i, v) in views.iter().enumerate() {
            if v.dims() != dims.as_slice() {
                return Err(Error::Validation(format!(
                    "view {i} has shape {:?}, expected {dims:?}",
                    v.dims()
                )));
            }
            if v.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Validation(format!(
                    "view {i} has pixels outside [0, 1]"
                )));
            }
        }
        Ok(MultiViewSample { views, label })
    }

    pub fn view(&self, idx: usize) -> &Tensor<f32> {
        &self.views[idx]
    }

    pub fn view_dims(&self) -> &[usize] {
        self.views[0].dims()
    }
}

/// Tiles the four views into one `[1, 2m, 2k]` image: 0.5 s top-left,
/// 1 s top-right, 2 s bottom-left, 4 s bottom-right.
pub fn tile_views(sample: &MultiViewSample) -> Result<Tensor<f32>> {
    let dims = sample.view_dims();
    let (m, k) = (dims[0], dims[1]);
    let mut out = vec![0.0f32; 4 * m * k];
    tile_into(sample, &mut out, |v| v);
    Tensor::new(&[1, 2 * m, 2 * k], out)
}

fn tile_into<S: Copy>(sample: &MultiViewSample, out: &mut [S], convert: impl Fn(f32) -> S) {
    let dims = sample.view_dims();
    let (m, k) = (dims[0], dims[1]);
    let row_len = 2 * k;
    for (vi, view) in sample.views.iter().enumerate() {
        let (r0, c0) = (m * (vi / 2), k * (vi % 2));
        for r in 0..m {
            let dst = &mut out[(r0 + r) * row_len + c0..(r0 + r) * row_len + c0 + k];
            for (d, &s) in dst.iter_mut().zip(&view.data()[r * k..(r + 1) * k]) {
                *d = convert(s);
            }
        }
    }
}

/// Crops the `[1, 2m, 2k]` tiling back into the four views; inverse of
/// `tile_views`.
pub fn crop_quadrants(tiled: &Tensor<f32>) -> Result<[Tensor<f32>; VIEW_COUNT]> {
    if tiled.rank() != 3 || tiled.dims()[0] != 1 || tiled.dims()[1] % 2 != 0 || tiled.dims()[2] % 2 != 0
    {
        return Err(Error::Dimension {
            op: "crop_quadrants",
            detail: format!("expected [1, 2m, 2k], got {:?}", tiled.dims()),
        });
    }
    let (m, k) = (tiled.dims()[1] / 2, tiled.dims()[2] / 2);
    let row_len = 2 * k;
    let mut views = Vec::with_capacity(VIEW_COUNT);
    for vi in 0..VIEW_COUNT {
        let (r0, c0) = (m * (vi / 2), k * (vi % 2));
        let mut data = Vec::with_capacity(m * k);
        for r in 0..m {
            data.extend_from_slice(&tiled.data()[(r0 + r) * row_len + c0..(r0 + r) * row_len + c0 + k]);
        }
        views.push(Tensor::new(&[m, k], data)?);
    }
    Ok([
        views.remove(0),
        views.remove(0),
        views.remove(0),
        views.remove(0),
    ])
}

/// A built classifier: layer stacks with validated shapes. Single-threaded
/// while training (forward caches); `infer_*` is read-only and shareable.
pub struct Architecture<S: Scalar> {
    kind: ArchKind,
    config: ModelConfig,
    /// Per-view conv branches; only the parallel-view model has any.
    branches: Vec<LayerStack<S>>,
    trunk: LayerStack<S>,
    pipeline: Vec<(String, Vec<usize>)>,
}

fn conv_block<S: Scalar>(
    prefix: &str,
    in_channels: usize,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Box<dyn Layer<S>>> {
    vec![
        Box::new(ConvLayer::new(
            prefix.to_string(),
            in_channels,
            cfg.conv_filters,
            cfg.kernel_size,
            rng,
        )),
        Box::new(MaxPoolLayer::new(format!("{prefix}_pool"))),
        Box::new(ReluLayer::new(format!("{prefix}_relu"))),
    ]
}

/// Shared tail: flatten, FC, class logits, softmax. `flat_dim` must match
/// the upstream feature-map size.
fn tail_layers<S: Scalar>(
    flat_dim: usize,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Box<dyn Layer<S>>> {
    vec![
        Box::new(FlattenLayer::new("flatten")),
        Box::new(FcLayer::new("fc", flat_dim, cfg.fc_units, rng)),
        Box::new(FcLayer::new("out", cfg.fc_units, cfg.classes, rng)),
        Box::new(SoftmaxLayer::new("softmax")),
    ]
}

impl<S: Scalar> Architecture<S> {
    /// conv-pool-ReLU twice, FC, softmax over one `[1, rows, cols]` view.
    pub fn single_view(cfg: ModelConfig, duration: usize, seed: u64) -> Result<Self> {
        if duration >= VIEW_COUNT {
            return Err(Error::Validation(format!(
                "duration index {duration} out of range (0..{VIEW_COUNT})"
            )));
        }
        let mut rng = init_rng(seed);
        let input = vec![1, cfg.view_rows, cfg.view_cols];
        let trunk = Self::two_stage_stack(&cfg, &input, &mut rng)?;
        let pipeline = trunk.shape_pipeline(&input)?;
        Ok(Architecture {
            kind: ArchKind::SingleView { duration },
            config: cfg,
            branches: Vec::new(),
            trunk,
            pipeline,
        })
    }

    /// Same stack as single-view applied to the `[1, 2m, 2k]` tiling of
    /// all four views.
    pub fn merged_view(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = init_rng(seed);
        let input = vec![1, 2 * cfg.view_rows, 2 * cfg.view_cols];
        let trunk = Self::two_stage_stack(&cfg, &input, &mut rng)?;
        let pipeline = trunk.shape_pipeline(&input)?;
        Ok(Architecture {
            kind: ArchKind::MergedView,
            config: cfg,
            branches: Vec::new(),
            trunk,
            pipeline,
        })
    }

    /// Four independent conv-pool-ReLU branches, one per view, fused by
    /// channel concatenation into a shared conv-pool-ReLU stage and the
    /// common tail.
    pub fn parallel_view(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = init_rng(seed);
        let input = vec![1, cfg.view_rows, cfg.view_cols];
        let mut branches = Vec::with_capacity(VIEW_COUNT);
        let mut branch_out = Vec::new();
        for v in 0..VIEW_COUNT {
            let stack = LayerStack::new(conv_block(&format!("view{v}_conv"), 1, &cfg, &mut rng));
            branch_out = stack
                .shape_pipeline(&input)?
                .last()
                .map(|(_, s)| s.clone())
                .unwrap();
            branches.push(stack);
        }
        // Merger: channel-wise concatenation of the four branch maps.
        let merged = vec![
            VIEW_COUNT * branch_out[0],
            branch_out[1],
            branch_out[2],
        ];

        let mut layers = conv_block("shared_conv", merged[0], &cfg, &mut rng);
        let probe = LayerStack::new(layers.drain(..).collect::<Vec<_>>());
        let shared_out = probe
            .shape_pipeline(&merged)?
            .last()
            .map(|(_, s)| s.clone())
            .unwrap();
        let mut layers = probe.into_layers();
        layers.extend(tail_layers(shared_out.iter().product(), &cfg, &mut rng));
        let trunk = LayerStack::new(layers);

        let mut pipeline = branches[0].shape_pipeline(&input)?;
        pipeline.push(("merge".to_string(), merged.clone()));
        pipeline.extend(trunk.shape_pipeline(&merged)?);
        Ok(Architecture {
            kind: ArchKind::ParallelView,
            config: cfg,
            branches,
            trunk,
            pipeline,
        })
    }

    fn two_stage_stack(
        cfg: &ModelConfig,
        input: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<LayerStack<S>> {
        let mut layers: Vec<Box<dyn Layer<S>>> = conv_block("conv1", input[0], cfg, rng);
        layers.extend(conv_block("conv2", cfg.conv_filters, cfg, rng));
        let probe = LayerStack::new(layers);
        let conv_out = probe
            .shape_pipeline(input)?
            .last()
            .map(|(_, s)| s.clone())
            .unwrap();
        let mut layers = probe.into_layers();
        layers.extend(tail_layers(conv_out.iter().product(), cfg, rng));
        Ok(LayerStack::new(layers))
    }

    pub fn kind(&self) -> ArchKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Per-layer per-sample output shapes recorded at build time.
    pub fn pipeline(&self) -> &[(String, Vec<usize>)] {
        &self.pipeline
    }

    pub fn class_count(&self) -> usize {
        self.config.classes
    }

    fn check_samples(&self, samples: &[&MultiViewSample]) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::Validation("empty sample batch".to_string()));
        }
        let want = [self.config.view_rows, self.config.view_cols];
        for s in samples {
            if s.view_dims() != want {
                return Err(Error::Dimension {
                    op: "forward",
                    detail: format!(
                        "sample views are {:?} but the model expects {want:?}",
                        s.view_dims()
                    ),
                });
            }
        }
        Ok(())
    }

    fn batch_views(&self, samples: &[&MultiViewSample], view: usize) -> Tensor<S> {
        let (m, k) = (self.config.view_rows, self.config.view_cols);
        let mut data = Vec::with_capacity(samples.len() * m * k);
        for s in samples {
            data.extend(s.view(view).data().iter().map(|&p| S::of_f32(p)));
        }
        Tensor::new(&[samples.len(), 1, m, k], data).unwrap()
    }

    fn batch_tiled(&self, samples: &[&MultiViewSample]) -> Tensor<S> {
        let (m, k) = (self.config.view_rows, self.config.view_cols);
        let per = 4 * m * k;
        let mut data = vec![S::zero(); samples.len() * per];
        for (chunk, s) in data.chunks_mut(per).zip(samples) {
            tile_into(s, chunk, S::of_f32);
        }
        Tensor::new(&[samples.len(), 1, 2 * m, 2 * k], data).unwrap()
    }

    /// Training-path forward over a batch; returns `[B, classes]`
    /// posteriors and caches backward state.
    pub fn forward_batch(&mut self, samples: &[&MultiViewSample]) -> Result<Tensor<S>> {
        self.check_samples(samples)?;
        match self.kind {
            ArchKind::SingleView { duration } => {
                let x = self.batch_views(samples, duration);
                self.trunk.forward(&x)
            }
            ArchKind::MergedView => {
                let x = self.batch_tiled(samples);
                self.trunk.forward(&x)
            }
            ArchKind::ParallelView => {
                let mut outs = Vec::with_capacity(VIEW_COUNT);
                for v in 0..VIEW_COUNT {
                    let x = self.batch_views(samples, v);
                    outs.push(self.branches[v].forward(&x)?);
                }
                let fused = concat_channels(&outs)?;
                self.trunk.forward(&fused)
            }
        }
    }

    /// Cache-free batch forward for evaluation.
    pub fn infer_batch(&self, samples: &[&MultiViewSample]) -> Result<Tensor<S>> {
        self.check_samples(samples)?;
        match self.kind {
            ArchKind::SingleView { duration } => {
                let x = self.batch_views(samples, duration);
                self.trunk.infer(&x)
            }
            ArchKind::MergedView => {
                let x = self.batch_tiled(samples);
                self.trunk.infer(&x)
            }
            ArchKind::ParallelView => {
                let mut outs = Vec::with_capacity(VIEW_COUNT);
                for v in 0..VIEW_COUNT {
                    let x = self.batch_views(samples, v);
                    outs.push(self.branches[v].infer(&x)?);
                }
                let fused = concat_channels(&outs)?;
                self.trunk.infer(&fused)
            }
        }
    }

    /// Class posterior for one sample, `[classes]`.
    pub fn infer_sample(&self, sample: &MultiViewSample) -> Result<Tensor<S>> {
        let out = self.infer_batch(&[sample])?;
        let c = self.config.classes;
        out.into_reshaped(&[c])
    }

    /// Backward from a gradient w.r.t. the softmax *logits* (the fused
    /// cross-entropy gradient). Accumulates parameter gradients.
    pub fn backward_logits(&mut self, grad: &Tensor<S>) -> Result<()> {
        match self.kind {
            ArchKind::SingleView { .. } | ArchKind::MergedView => {
                self.trunk.backward_logits(grad)?;
            }
            ArchKind::ParallelView => {
                let fused = self.trunk.backward_logits(grad)?;
                let parts = split_channels(&fused, VIEW_COUNT)?;
                for (branch, part) in self.branches.iter_mut().zip(parts) {
                    branch.backward(&part)?;
                }
            }
        }
        Ok(())
    }

    /// Backward from a gradient w.r.t. the output probabilities, routed
    /// through the softmax Jacobian.
    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<()> {
        match self.kind {
            ArchKind::SingleView { .. } | ArchKind::MergedView => {
                self.trunk.backward(grad)?;
            }
            ArchKind::ParallelView => {
                let fused = self.trunk.backward(grad)?;
                let parts = split_channels(&fused, VIEW_COUNT)?;
                for (branch, part) in self.branches.iter_mut().zip(parts) {
                    branch.backward(&part)?;
                }
            }
        }
        Ok(())
    }

    pub fn params(&mut self) -> Vec<ParamSlot<'_, S>> {
        let mut out = Vec::new();
        for b in &mut self.branches {
            out.extend(b.params());
        }
        out.extend(self.trunk.params());
        out
    }

    pub fn params_view(&self) -> Vec<ParamView<'_, S>> {
        let mut out = Vec::new();
        for b in &self.branches {
            out.extend(b.params_view());
        }
        out.extend(self.trunk.params_view());
        out
    }

    pub fn param_dims(&self) -> Vec<Vec<usize>> {
        self.params_view()
            .iter()
            .map(|p| p.value.dims().to_vec())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.branches.iter().map(|b| b.param_count()).sum::<usize>() + self.trunk.param_count()
    }

    pub fn zero_grads(&mut self) {
        for b in &mut self.branches {
            b.zero_grads();
        }
        self.trunk.zero_grads();
    }

    /// Copies of every parameter tensor, in enumeration order.
    pub fn snapshot_params(&self) -> Vec<Tensor<S>> {
        self.params_view().iter().map(|p| p.value.clone()).collect()
    }

    /// Writes a snapshot back; shapes must match in order.
    pub fn restore_params(&mut self, snapshot: &[Tensor<S>]) -> Result<()> {
        let mut slots = self.params();
        if slots.len() != snapshot.len() {
            return Err(Error::State {
                op: "restore_params",
                detail: "snapshot parameter count does not match the model",
            });
        }
        for (slot, saved) in slots.iter_mut().zip(snapshot) {
            if slot.value.dims() != saved.dims() {
                return Err(Error::Dimension {
                    op: "restore_params",
                    detail: format!(
                        "parameter {} has shape {:?}, snapshot has {:?}",
                        slot.name,
                        slot.value.dims(),
                        saved.dims()
                    ),
                });
            }
            *slot.value = saved.clone();
        }
        Ok(())
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seedmix::mix2(seed, 0x494e4954))
}

/// `[B, C_i, H, W]` feature maps concatenated along the channel axis.
fn concat_channels<S: Scalar>(parts: &[Tensor<S>]) -> Result<Tensor<S>> {
    let first = parts[0].dims();
    if first.len() != 4 {
        return Err(Error::Dimension {
            op: "concat_channels",
            detail: format!("expected [B,C,H,W] parts, got {first:?}"),
        });
    }
    for p in parts {
        if p.dims()[0] != first[0] || p.dims()[2..] != first[2..] {
            return Err(Error::Dimension {
                op: "concat_channels",
                detail: format!("mismatched part shapes {:?} vs {first:?}", p.dims()),
            });
        }
    }
    let bsz = first[0];
    let hw = first[2] * first[3];
    let total_c: usize = parts.iter().map(|p| p.dims()[1]).sum();
    let mut data = Vec::with_capacity(bsz * total_c * hw);
    for b in 0..bsz {
        for p in parts {
            let c = p.dims()[1];
            data.extend_from_slice(&p.data()[b * c * hw..(b + 1) * c * hw]);
        }
    }
    Tensor::new(&[bsz, total_c, first[2], first[3]], data)
}

/// Inverse of `concat_channels` for equal-size parts.
fn split_channels<S: Scalar>(fused: &Tensor<S>, parts: usize) -> Result<Vec<Tensor<S>>> {
    let dims = fused.dims();
    if dims.len() != 4 || dims[1] % parts != 0 {
        return Err(Error::Dimension {
            op: "split_channels",
            detail: format!("cannot split {dims:?} into {parts} channel groups"),
        });
    }
    let (bsz, c, h, w) = (dims[0], dims[1] / parts, dims[2], dims[3]);
    let hw = h * w;
    let mut out = Vec::with_capacity(parts);
    for part in 0..parts {
        let mut data = Vec::with_capacity(bsz * c * hw);
        for b in 0..bsz {
            let base = (b * parts + part) * c * hw;
            data.extend_from_slice(&fused.data()[base..base + c * hw]);
        }
        out.push(Tensor::new(&[bsz, c, h, w], data)?);
    }
    Ok(out)
}
