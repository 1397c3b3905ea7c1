//! Deterministic synthetic spectrogram corpus.
//!
//! Every sample is rendered onto a 4-second time-frequency canvas (47
//! frequency rows by 456 time columns, 114 columns per second) with the
//! glitch centered at t = 0. The four views window the canvas at +-0.25,
//! +-0.5, +-1.0 and +-2.0 s around the center and resample each window to
//! 47x57 by block-averaging columns, so the 0.5 s view is native
//! resolution and the 4 s view is 8:1 compressed in time.
//!
//! Classes are built from eight component shapes (time-localized blob,
//! repeated blobs, horizontal line, low-frequency band, arch set,
//! wandering track, broadband burst, modulated band) with per-class
//! parameter ranges. Short-duration classes keep their energy inside the
//! 0.5 s window; long-duration classes spread it over seconds. A few class
//! pairs are deliberately hard to tell apart in one extreme view but easy
//! in the other, so classifiers bound to different durations develop
//! measurably different per-class strengths:
//!
//! - Blip vs Repeating Blips and Tomte vs Twin Blips differ only in fine
//!   time structure that the 8:1 compression of the 4 s view smears away.
//! - Light Modulation vs Steady Band and Wandering Line vs Fixed Line
//!   (and partly Rising Track) look alike inside the +-0.25 s window and
//!   only separate once seconds of context are visible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::MultiViewSample;
use crate::seedmix;
use crate::tensor::Tensor;

pub const VIEW_ROWS: usize = 47;
pub const VIEW_COLS: usize = 57;
pub const CANVAS_ROWS: usize = VIEW_ROWS;
pub const CANVAS_COLS: usize = 8 * VIEW_COLS; // 456 columns over 4 seconds
pub const COLS_PER_SEC: f64 = CANVAS_COLS as f64 / 4.0;
/// Continuous column coordinate of t = 0.
pub const CENTER_COL: f64 = 227.5;
/// The four view durations in seconds, shortest first.
pub const VIEW_DURATIONS_SECS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// (first canvas column, width in canvas columns) of each view window.
pub fn view_window(view: usize) -> (usize, usize) {
    let width = VIEW_COLS << view;
    ((CANVAS_COLS - width) / 2, width)
}

/// Whether a class concentrates its energy in a brief burst or spreads it
/// over seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DurationCategory {
    Short,
    Long,
}

/// Closed interval a morphology parameter is drawn from.
#[derive(Clone, Copy, Debug)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

const fn r(lo: f64, hi: f64) -> ParamRange {
    ParamRange { lo, hi }
}

impl ParamRange {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..self.hi)
        }
    }
}

/// Component-shape generator with per-class parameter ranges. Frequencies
/// are canvas row coordinates (row 0 = highest frequency), times are
/// seconds relative to the glitch center, durations and widths seconds.
#[derive(Clone, Copy, Debug)]
pub enum Morphology {
    /// Time-localized Gaussian blob.
    Blob {
        freq: ParamRange,
        sigma_f: ParamRange,
        sigma_t: ParamRange,
        intensity: ParamRange,
    },
    /// `count` blobs evenly spaced around the center.
    RepeatedBlobs {
        count: (usize, usize),
        spacing: ParamRange,
        freq: ParamRange,
        sigma_f: ParamRange,
        sigma_t: ParamRange,
        intensity: ParamRange,
    },
    /// One or more thin horizontal lines of a given duration.
    HorizontalLines {
        count: (usize, usize),
        freq: ParamRange,
        line_gap: ParamRange,
        thickness: ParamRange,
        duration: ParamRange,
        intensity: ParamRange,
    },
    /// Solid block from `top_row` to the bottom of the canvas; `ramp`
    /// makes the intensity rise linearly over the duration.
    LowFreqBand {
        top_row: ParamRange,
        duration: ParamRange,
        intensity: ParamRange,
        ramp: bool,
    },
    /// Half-ellipse arcs rising `height` rows from `base_row`, evenly
    /// spaced `gap` seconds apart.
    ArchSet {
        count: (usize, usize),
        base_row: ParamRange,
        height: ParamRange,
        half_span: ParamRange,
        gap: ParamRange,
        intensity: ParamRange,
    },
    /// Narrow track whose frequency follows a sinusoid in time.
    WanderingTrack {
        freq: ParamRange,
        amplitude: ParamRange,
        period: ParamRange,
        phase: ParamRange,
        duration: ParamRange,
        thickness: ParamRange,
        intensity: ParamRange,
    },
    /// Full-bandwidth burst with a Gaussian time profile.
    BroadbandBurst {
        sigma_t: ParamRange,
        intensity: ParamRange,
    },
    /// Horizontal band with a sinusoidal intensity envelope; `mod_depth`
    /// 0 renders a steady band.
    ModulatedBand {
        freq: ParamRange,
        half_width: ParamRange,
        mod_period: ParamRange,
        mod_depth: f64,
        duration: ParamRange,
        intensity: ParamRange,
    },
}

/// One glitch class: a component morphology plus its parameter ranges and
/// the background noise floor (fraction of the canvas peak).
#[derive(Clone, Copy, Debug)]
pub struct GlitchClassSpec {
    pub name: &'static str,
    pub class_index: usize,
    pub duration: DurationCategory,
    pub morphology: Morphology,
    pub noise_floor: f64,
}

const FLOOR: f64 = 0.05;

/// The fixed 20-class table. The first eleven names and their
/// short/long categories are the conventional detector glitch classes;
/// the rest are synthetic filler classes over the same component shapes.
pub static GLITCH_CLASSES: [GlitchClassSpec; 20] = [
    GlitchClassSpec {
        name: "Air Compressor",
        class_index: 0,
        duration: DurationCategory::Short,
        morphology: Morphology::Blob {
            freq: r(10.0, 16.0),
            sigma_f: r(1.5, 2.5),
            sigma_t: r(0.018, 0.035),
            intensity: r(0.8, 1.0),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Blip",
        class_index: 1,
        duration: DurationCategory::Short,
        morphology: Morphology::Blob {
            freq: r(18.0, 26.0),
            sigma_f: r(7.0, 10.0),
            sigma_t: r(0.022, 0.035),
            intensity: r(0.9, 1.1),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Helix",
        class_index: 2,
        duration: DurationCategory::Short,
        morphology: Morphology::ArchSet {
            count: (2, 3),
            base_row: r(34.0, 38.0),
            height: r(8.0, 12.0),
            half_span: r(0.05, 0.08),
            gap: r(0.10, 0.13),
            intensity: r(0.7, 0.9),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Power Line",
        class_index: 3,
        duration: DurationCategory::Short,
        morphology: Morphology::HorizontalLines {
            count: (1, 1),
            freq: r(38.0, 41.0),
            line_gap: r(0.0, 0.0),
            thickness: r(0.9, 1.4),
            duration: r(0.22, 0.32),
            intensity: r(0.8, 1.0),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Repeating Blips",
        class_index: 4,
        duration: DurationCategory::Short,
        morphology: Morphology::RepeatedBlobs {
            count: (3, 3),
            spacing: r(0.09, 0.115),
            freq: r(18.0, 26.0),
            sigma_f: r(7.0, 10.0),
            sigma_t: r(0.008, 0.012),
            intensity: r(0.9, 1.1),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Tomte",
        class_index: 5,
        duration: DurationCategory::Short,
        morphology: Morphology::Blob {
            freq: r(30.0, 35.0),
            sigma_f: r(3.0, 4.5),
            sigma_t: r(0.025, 0.04),
            intensity: r(0.8, 1.0),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Extremely Loud",
        class_index: 6,
        duration: DurationCategory::Long,
        morphology: Morphology::BroadbandBurst {
            sigma_t: r(0.44, 0.58),
            intensity: r(1.6, 2.0),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Light Modulation",
        class_index: 7,
        duration: DurationCategory::Long,
        morphology: Morphology::ModulatedBand {
            freq: r(27.0, 33.0),
            half_width: r(3.0, 4.5),
            mod_period: r(0.8, 1.3),
            mod_depth: 1.0,
            duration: r(2.6, 3.4),
            intensity: r(0.7, 0.9),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Low Frequency Lines",
        class_index: 8,
        duration: DurationCategory::Long,
        morphology: Morphology::HorizontalLines {
            count: (2, 3),
            freq: r(39.0, 41.0),
            line_gap: r(1.8, 2.4),
            thickness: r(0.7, 1.1),
            duration: r(2.5, 3.4),
            intensity: r(0.6, 0.8),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Scattered Light",
        class_index: 9,
        duration: DurationCategory::Long,
        morphology: Morphology::ArchSet {
            count: (4, 6),
            base_row: r(43.0, 45.5),
            height: r(4.0, 7.0),
            half_span: r(0.13, 0.2),
            gap: r(0.5, 0.62),
            intensity: r(0.6, 0.8),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Wandering Line",
        class_index: 10,
        duration: DurationCategory::Long,
        morphology: Morphology::WanderingTrack {
            freq: r(20.0, 26.0),
            amplitude: r(6.0, 10.0),
            period: r(2.2, 3.2),
            phase: r(0.0, std::f64::consts::TAU),
            duration: r(2.6, 3.4),
            thickness: r(0.9, 1.3),
            intensity: r(0.7, 0.9),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Twin Blips",
        class_index: 11,
        duration: DurationCategory::Short,
        morphology: Morphology::RepeatedBlobs {
            count: (2, 2),
            spacing: r(0.12, 0.16),
            freq: r(30.0, 35.0),
            sigma_f: r(3.0, 4.5),
            sigma_t: r(0.012, 0.018),
            intensity: r(0.8, 1.0),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Steady Band",
        class_index: 12,
        duration: DurationCategory::Long,
        morphology: Morphology::ModulatedBand {
            freq: r(27.0, 33.0),
            half_width: r(3.0, 4.5),
            mod_period: r(1.0, 1.0),
            mod_depth: 0.0,
            duration: r(2.6, 3.4),
            intensity: r(0.35, 0.55),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Fixed Line",
        class_index: 13,
        duration: DurationCategory::Long,
        morphology: Morphology::HorizontalLines {
            count: (1, 1),
            freq: r(20.0, 26.0),
            line_gap: r(0.0, 0.0),
            thickness: r(0.9, 1.3),
            duration: r(2.6, 3.4),
            intensity: r(0.7, 0.9),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "High Blob",
        class_index: 14,
        duration: DurationCategory::Short,
        morphology: Morphology::Blob {
            freq: r(3.0, 7.0),
            sigma_f: r(1.8, 3.0),
            sigma_t: r(0.02, 0.035),
            intensity: r(0.8, 1.0),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Broadband Click",
        class_index: 15,
        duration: DurationCategory::Short,
        morphology: Morphology::BroadbandBurst {
            sigma_t: r(0.008, 0.013),
            intensity: r(0.5, 0.7),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Slow Arches",
        class_index: 16,
        duration: DurationCategory::Long,
        morphology: Morphology::ArchSet {
            count: (3, 4),
            base_row: r(10.0, 14.0),
            height: r(5.0, 8.0),
            half_span: r(0.2, 0.3),
            gap: r(0.75, 0.95),
            intensity: r(0.6, 0.8),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Rising Track",
        class_index: 17,
        duration: DurationCategory::Long,
        morphology: Morphology::WanderingTrack {
            freq: r(24.0, 30.0),
            amplitude: r(10.0, 14.0),
            period: r(5.0, 6.5),
            phase: r(0.0, 0.0),
            duration: r(2.8, 3.6),
            thickness: r(0.9, 1.3),
            intensity: r(0.7, 0.9),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Comb Band",
        class_index: 18,
        duration: DurationCategory::Long,
        morphology: Morphology::RepeatedBlobs {
            count: (5, 6),
            spacing: r(0.5, 0.62),
            freq: r(21.0, 26.0),
            sigma_f: r(2.0, 3.0),
            sigma_t: r(0.018, 0.028),
            intensity: r(0.7, 0.9),
        },
        noise_floor: FLOOR,
    },
    GlitchClassSpec {
        name: "Noise Ramp",
        class_index: 19,
        duration: DurationCategory::Long,
        morphology: Morphology::LowFreqBand {
            top_row: r(38.0, 41.0),
            duration: r(2.6, 3.4),
            intensity: r(0.5, 0.7),
            ramp: true,
        },
        noise_floor: FLOOR,
    },
];

fn sample_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for one sample of a corpus: a pure function of the corpus seed and
/// the sample's (class, index) coordinates, so rendering parallelizes.
pub fn sample_seed(corpus_seed: u64, class_index: usize, sample_index: usize) -> u64 {
    seedmix::mix3(corpus_seed, class_index as u64, sample_index as u64)
}

struct Canvas {
    data: Vec<f64>,
}

impl Canvas {
    fn new() -> Self {
        Canvas {
            data: vec![0.0; CANVAS_ROWS * CANVAS_COLS],
        }
    }

    fn add(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * CANVAS_COLS + col] += v;
    }

    /// Adds a Gaussian bump centered at continuous coordinates
    /// (`f_c` rows, `t_c` cols), truncated at 4 sigma.
    fn blob(&mut self, t_c: f64, f_c: f64, sigma_t: f64, sigma_f: f64, intensity: f64) {
        let r0 = ((f_c - 4.0 * sigma_f).floor().max(0.0)) as usize;
        let r1 = ((f_c + 4.0 * sigma_f).ceil().min(CANVAS_ROWS as f64 - 1.0)) as usize;
        let c0 = ((t_c - 4.0 * sigma_t).floor().max(0.0)) as usize;
        let c1 = ((t_c + 4.0 * sigma_t).ceil().min(CANVAS_COLS as f64 - 1.0)) as usize;
        for row in r0..=r1 {
            let df = (row as f64 + 0.5 - f_c) / sigma_f;
            let rowv = (-0.5 * df * df).exp();
            for col in c0..=c1 {
                let dt = (col as f64 + 0.5 - t_c) / sigma_t;
                self.add(row, col, intensity * rowv * (-0.5 * dt * dt).exp());
            }
        }
    }

    /// Vertical Gaussian profile of the given thickness at continuous row
    /// `f_c`, over one column.
    fn track_point(&mut self, col: usize, f_c: f64, thickness: f64, intensity: f64) {
        let r0 = ((f_c - 3.5 * thickness).floor().max(0.0)) as usize;
        let r1 = ((f_c + 3.5 * thickness).ceil().min(CANVAS_ROWS as f64 - 1.0)) as usize;
        if r0 > r1 {
            return;
        }
        for row in r0..=r1 {
            let df = (row as f64 + 0.5 - f_c) / thickness;
            self.add(row, col, intensity * (-0.5 * df * df).exp());
        }
    }

    fn col_range(t0: f64, t1: f64) -> (usize, usize) {
        let c0 = (CENTER_COL + t0 * COLS_PER_SEC).floor().max(0.0) as usize;
        let c1 = ((CENTER_COL + t1 * COLS_PER_SEC).ceil() as usize).min(CANVAS_COLS);
        (c0, c1.max(c0))
    }
}

fn draw_canvas(spec: &GlitchClassSpec, rng: &mut ChaCha8Rng) -> Canvas {
    let mut canvas = Canvas::new();
    match spec.morphology {
        Morphology::Blob {
            freq,
            sigma_f,
            sigma_t,
            intensity,
        } => {
            let (f, sf) = (freq.sample(rng), sigma_f.sample(rng));
            let (st, i) = (sigma_t.sample(rng) * COLS_PER_SEC, intensity.sample(rng));
            canvas.blob(CENTER_COL, f, st, sf, i);
        }
        Morphology::RepeatedBlobs {
            count,
            spacing,
            freq,
            sigma_f,
            sigma_t,
            intensity,
        } => {
            let n = rng.gen_range(count.0..=count.1);
            let gap = spacing.sample(rng);
            let (f, sf) = (freq.sample(rng), sigma_f.sample(rng));
            let (st, i) = (sigma_t.sample(rng) * COLS_PER_SEC, intensity.sample(rng));
            for b in 0..n {
                let t = (b as f64 - (n as f64 - 1.0) / 2.0) * gap;
                canvas.blob(CENTER_COL + t * COLS_PER_SEC, f, st, sf, i);
            }
        }
        Morphology::HorizontalLines {
            count,
            freq,
            line_gap,
            thickness,
            duration,
            intensity,
        } => {
            let n = rng.gen_range(count.0..=count.1);
            let base = freq.sample(rng);
            let gap = line_gap.sample(rng);
            let th = thickness.sample(rng);
            let half = duration.sample(rng) / 2.0;
            let i = intensity.sample(rng);
            let (c0, c1) = Canvas::col_range(-half, half);
            for line in 0..n {
                let f = base + line as f64 * gap;
                for col in c0..c1 {
                    canvas.track_point(col, f, th, i);
                }
            }
        }
        Morphology::LowFreqBand {
            top_row,
            duration,
            intensity,
            ramp,
        } => {
            let top = top_row.sample(rng) as usize;
            let half = duration.sample(rng) / 2.0;
            let i = intensity.sample(rng);
            let (c0, c1) = Canvas::col_range(-half, half);
            for col in c0..c1 {
                let scale = if ramp {
                    // 0.25 at onset rising to 1.0 at the end
                    0.25 + 0.75 * (col - c0) as f64 / (c1 - c0).max(1) as f64
                } else {
                    1.0
                };
                for row in top..CANVAS_ROWS {
                    canvas.add(row, col, i * scale);
                }
            }
        }
        Morphology::ArchSet {
            count,
            base_row,
            height,
            half_span,
            gap,
            intensity,
        } => {
            let n = rng.gen_range(count.0..=count.1);
            let base = base_row.sample(rng);
            let h = height.sample(rng);
            let span = half_span.sample(rng) * COLS_PER_SEC;
            let g = gap.sample(rng);
            let i = intensity.sample(rng);
            for a in 0..n {
                let t_c = CENTER_COL + (a as f64 - (n as f64 - 1.0) / 2.0) * g * COLS_PER_SEC;
                let c0 = ((t_c - span).floor().max(0.0)) as usize;
                let c1 = ((t_c + span).ceil().min(CANVAS_COLS as f64 - 1.0)) as usize;
                for col in c0..=c1 {
                    let u = (col as f64 + 0.5 - t_c) / span;
                    if u.abs() <= 1.0 {
                        let f = base - h * (1.0 - u * u).sqrt();
                        canvas.track_point(col, f, 0.9, i);
                    }
                }
            }
        }
        Morphology::WanderingTrack {
            freq,
            amplitude,
            period,
            phase,
            duration,
            thickness,
            intensity,
        } => {
            let f0 = freq.sample(rng);
            let amp = amplitude.sample(rng);
            let p = period.sample(rng);
            let ph = phase.sample(rng);
            let half = duration.sample(rng) / 2.0;
            let th = thickness.sample(rng);
            let i = intensity.sample(rng);
            let (c0, c1) = Canvas::col_range(-half, half);
            for col in c0..c1 {
                let t = (col as f64 + 0.5 - CENTER_COL) / COLS_PER_SEC;
                let f = f0 + amp * (std::f64::consts::TAU * t / p + ph).sin();
                canvas.track_point(col, f, th, i);
            }
        }
        Morphology::BroadbandBurst { sigma_t, intensity } => {
            let st = sigma_t.sample(rng) * COLS_PER_SEC;
            let i = intensity.sample(rng);
            let c0 = ((CENTER_COL - 4.0 * st).floor().max(0.0)) as usize;
            let c1 = ((CENTER_COL + 4.0 * st).ceil().min(CANVAS_COLS as f64 - 1.0)) as usize;
            for col in c0..=c1 {
                let dt = (col as f64 + 0.5 - CENTER_COL) / st;
                let v = i * (-0.5 * dt * dt).exp();
                for row in 0..CANVAS_ROWS {
                    canvas.add(row, col, v);
                }
            }
        }
        Morphology::ModulatedBand {
            freq,
            half_width,
            mod_period,
            mod_depth,
            duration,
            intensity,
        } => {
            let f = freq.sample(rng);
            let hw = half_width.sample(rng);
            let p = mod_period.sample(rng);
            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
            let half = duration.sample(rng) / 2.0;
            let i = intensity.sample(rng);
            let (c0, c1) = Canvas::col_range(-half, half);
            for col in c0..c1 {
                let t = (col as f64 + 0.5 - CENTER_COL) / COLS_PER_SEC;
                let envelope =
                    1.0 - mod_depth * (0.5 + 0.5 * (std::f64::consts::TAU * t / p + ph).sin());
                canvas.track_point(col, f, hw, i * envelope);
            }
        }
    }
    canvas
}

/// The clean (pre-noise) canvas a given (class, seed) pair renders, as a
/// `[47, 456]` tensor. Useful for inspecting where a class puts its energy.
pub fn render_canvas(spec: &GlitchClassSpec, seed: u64) -> Tensor<f64> {
    let mut rng = sample_rng(seed);
    let canvas = draw_canvas(spec, &mut rng);
    Tensor::new(&[CANVAS_ROWS, CANVAS_COLS], canvas.data).unwrap()
}

/// Renders one sample: draws morphology parameters, rasterizes the canvas,
/// windows and block-averages the four views, adds per-view uniform noise
/// below the class noise floor, and normalizes each view to [0, 1].
/// Deterministic in (spec, seed).
pub fn render_sample(spec: &GlitchClassSpec, seed: u64) -> MultiViewSample {
    let mut rng = sample_rng(seed);
    let canvas = draw_canvas(spec, &mut rng);
    let peak = canvas.data.iter().cloned().fold(0.0f64, f64::max);
    debug_assert!(peak > 0.0);

    let mut views = Vec::with_capacity(4);
    for v in 0..4 {
        let (start, width) = view_window(v);
        let factor = width / VIEW_COLS;
        let mut view = vec![0.0f64; VIEW_ROWS * VIEW_COLS];
        for row in 0..VIEW_ROWS {
            let canvas_row = &canvas.data[row * CANVAS_COLS..(row + 1) * CANVAS_COLS];
            for col in 0..VIEW_COLS {
                let c0 = start + col * factor;
                let sum: f64 = canvas_row[c0..c0 + factor].iter().sum();
                view[row * VIEW_COLS + col] = sum / factor as f64;
            }
        }
        for px in view.iter_mut() {
            *px += rng.gen_range(0.0..spec.noise_floor * peak);
        }
        let vmax = view.iter().cloned().fold(0.0f64, f64::max);
        let data: Vec<f32> = view
            .iter()
            .map(|&p| (p / vmax).clamp(0.0, 1.0) as f32)
            .collect();
        views.push(Tensor::new(&[VIEW_ROWS, VIEW_COLS], data).unwrap());
    }

    let views: [Tensor<f32>; 4] = [
        views.remove(0),
        views.remove(0),
        views.remove(0),
        views.remove(0),
    ];
    MultiViewSample::new(views, spec.class_index).expect("rendered views are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_spec_and_seed_render_identical_samples() {
        for spec in &GLITCH_CLASSES {
            let a = render_sample(spec, 1234);
            let b = render_sample(spec, 1234);
            assert_eq!(a, b, "class {}", spec.name);
        }
    }

    #[test]
    fn different_seeds_render_different_samples() {
        let spec = &GLITCH_CLASSES[1];
        assert_ne!(render_sample(spec, 1), render_sample(spec, 2));
    }

    #[test]
    fn views_are_47x57_with_pixels_in_unit_interval() {
        for spec in &GLITCH_CLASSES {
            let s = render_sample(spec, 9);
            for v in 0..4 {
                let view = s.view(v);
                assert_eq!(view.dims(), &[VIEW_ROWS, VIEW_COLS]);
                assert!(view.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }

    #[test]
    fn class_table_is_twenty_distinct_names() {
        assert_eq!(GLITCH_CLASSES.len(), 20);
        for (i, spec) in GLITCH_CLASSES.iter().enumerate() {
            assert_eq!(spec.class_index, i);
        }
        let mut names: Vec<&str> = GLITCH_CLASSES.iter().map(|s| s.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 20);
    }

    #[test]
    fn named_classes_match_expected_duration_categories() {
        use DurationCategory::*;
        let expected = [
            ("Air Compressor", Short),
            ("Blip", Short),
            ("Helix", Short),
            ("Power Line", Short),
            ("Repeating Blips", Short),
            ("Tomte", Short),
            ("Extremely Loud", Long),
            ("Light Modulation", Long),
            ("Low Frequency Lines", Long),
            ("Scattered Light", Long),
            ("Wandering Line", Long),
        ];
        for (name, cat) in expected {
            let spec = GLITCH_CLASSES.iter().find(|s| s.name == name).unwrap();
            assert_eq!(spec.duration, cat, "{name}");
        }
    }

    /// Energy accounting over the clean canvas: short classes keep at
    /// least 90% of their energy inside the 0.5 s window; long classes
    /// leave less than 50% of their full-canvas (4 s view) energy there.
    #[test]
    fn energy_split_matches_duration_category() {
        let (w0_start, w0_width) = view_window(0);
        for spec in &GLITCH_CLASSES {
            for seed in 0..12u64 {
                let canvas = render_canvas(spec, seed * 31 + 5);
                let total: f64 = canvas.data().iter().sum();
                let mut central = 0.0;
                for row in 0..CANVAS_ROWS {
                    for col in w0_start..w0_start + w0_width {
                        central += canvas.data()[row * CANVAS_COLS + col];
                    }
                }
                let frac = central / total;
                match spec.duration {
                    DurationCategory::Short => assert!(
                        frac >= 0.90,
                        "{}: central fraction {frac:.3} (seed {seed})",
                        spec.name
                    ),
                    DurationCategory::Long => assert!(
                        frac < 0.50,
                        "{}: central fraction {frac:.3} (seed {seed})",
                        spec.name
                    ),
                }
            }
        }
    }

    /// A short glitch seen in the 4 s view sits entirely inside the
    /// central quarter of its columns.
    #[test]
    fn short_classes_concentrate_in_central_quarter_of_full_view() {
        for spec in GLITCH_CLASSES
            .iter()
            .filter(|s| s.duration == DurationCategory::Short)
        {
            let canvas = render_canvas(spec, 77);
            let total: f64 = canvas.data().iter().sum();
            let q0 = CANVAS_COLS / 2 - CANVAS_COLS / 8;
            let q1 = CANVAS_COLS / 2 + CANVAS_COLS / 8;
            let mut central = 0.0;
            for row in 0..CANVAS_ROWS {
                for col in q0..q1 {
                    central += canvas.data()[row * CANVAS_COLS + col];
                }
            }
            assert!(central / total >= 0.99, "{}", spec.name);
        }
    }

    #[test]
    fn view_windows_are_centered_and_nested() {
        assert_eq!(view_window(3), (0, CANVAS_COLS));
        assert_eq!(view_window(0), ((CANVAS_COLS - VIEW_COLS) / 2, VIEW_COLS));
        for v in 0..3 {
            let (s_in, w_in) = view_window(v);
            let (s_out, w_out) = view_window(v + 1);
            assert!(s_out <= s_in && s_in + w_in <= s_out + w_out);
        }
    }
}
