//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "MVG1" | version u32 | kind u8 | duration u8 |
//! classes u32 | view_rows u32 | view_cols u32 |
//! conv_filters u32 | kernel_size u32 | fc_units u32 |
//! epochs u32 | batch u32 | seed u64 | mean_reduction u8 |
//! corpus_digest u64 | param_count u32 |
//! per param: name_len u32 | name utf8 | ndims u32 | dims u32* | f32* data
//! ```
//!
//! Parameters are stored as 32-bit floats; reloading a model saved from a
//! 32-bit build reproduces forward outputs bit-exactly. `from_bytes` is
//! fuzzed and must reject malformed input without panicking or
//! over-allocating.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ArchKind, Architecture, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MVG1";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_PARAMS: u32 = 4096;
const MAX_NAME_LEN: u32 = 4096;
const MAX_NDIMS: u32 = 8;
const MAX_PARAM_ELEMS: u64 = 1 << 26;

/// Training configuration echoed into the checkpoint for provenance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TrainEcho {
    pub epochs: u32,
    pub batch: u32,
    pub seed: u64,
    pub mean_reduction: bool,
}

/// A serialized model: architecture identity, config, training echo,
/// corpus digest and the named parameter tensors in enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ArchKind,
    pub config: ModelConfig,
    pub echo: TrainEcho,
    pub corpus_digest: u64,
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    /// Captures a model's parameters (narrowed to f32).
    pub fn from_model<S: Scalar>(
        arch: &Architecture<S>,
        echo: TrainEcho,
        corpus_digest: u64,
    ) -> Self {
        let params = arch
            .params_view()
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    p.value.dims().to_vec(),
                    p.value.data().iter().map(|&v| v.as_f32()).collect(),
                )
            })
            .collect();
        Checkpoint {
            kind: arch.kind(),
            config: arch.config().clone(),
            echo,
            corpus_digest,
            params,
        }
    }

    /// Rebuilds the architecture and loads the stored parameters into it.
    pub fn into_model<S: Scalar>(&self) -> Result<Architecture<S>> {
        let cfg = self.config.clone();
        let mut arch = match self.kind {
            ArchKind::SingleView { duration } => Architecture::single_view(cfg, duration, 0)?,
            ArchKind::ParallelView => Architecture::parallel_view(cfg, 0)?,
            ArchKind::MergedView => Architecture::merged_view(cfg, 0)?,
        };
        {
            let mut slots = arch.params();
            if slots.len() != self.params.len() {
                return Err(Error::Checkpoint {
                    field: "params",
                    detail: format!(
                        "checkpoint has {} parameters, architecture needs {}",
                        self.params.len(),
                        slots.len()
                    ),
                });
            }
            for (slot, (name, dims, data)) in slots.iter_mut().zip(&self.params) {
                if &slot.name != name {
                    return Err(Error::Checkpoint {
                        field: "params",
                        detail: format!("expected parameter {:?}, found {name:?}", slot.name),
                    });
                }
                if slot.value.dims() != dims.as_slice() {
                    return Err(Error::Checkpoint {
                        field: "params",
                        detail: format!(
                            "parameter {name} has shape {dims:?}, architecture needs {:?}",
                            slot.value.dims()
                        ),
                    });
                }
                let widened: Vec<S> = data.iter().map(|&v| S::of_f32(v)).collect();
                *slot.value = Tensor::new(dims, widened)?;
            }
        }
        Ok(arch)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let (kind, duration) = match self.kind {
            ArchKind::SingleView { duration } => (0u8, duration as u8),
            ArchKind::ParallelView => (1, 0),
            ArchKind::MergedView => (2, 0),
        };
        out.push(kind);
        out.push(duration);
        for v in [
            self.config.classes,
            self.config.view_rows,
            self.config.view_cols,
            self.config.conv_filters,
            self.config.kernel_size,
            self.config.fc_units,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.echo.epochs.to_le_bytes());
        out.extend_from_slice(&self.echo.batch.to_le_bytes());
        out.extend_from_slice(&self.echo.seed.to_le_bytes());
        out.push(self.echo.mean_reduction as u8);
        out.extend_from_slice(&self.corpus_digest.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, dims, data) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for &d in dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint {
                field: "magic",
                detail: "bad magic".to_string(),
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint {
                field: "version",
                detail: format!("unsupported version {version}"),
            });
        }
        let kind_byte = r.u8("kind")?;
        let duration = r.u8("duration")? as usize;
        let kind = match kind_byte {
            0 if duration < 4 => ArchKind::SingleView { duration },
            0 => {
                return Err(Error::Checkpoint {
                    field: "duration",
                    detail: format!("duration index {duration} out of range"),
                })
            }
            1 => ArchKind::ParallelView,
            2 => ArchKind::MergedView,
            other => {
                return Err(Error::Checkpoint {
                    field: "kind",
                    detail: format!("unknown architecture kind {other}"),
                })
            }
        };
        let classes = r.u32("classes")? as usize;
        let view_rows = r.u32("view_rows")? as usize;
        let view_cols = r.u32("view_cols")? as usize;
        let conv_filters = r.u32("conv_filters")? as usize;
        let kernel_size = r.u32("kernel_size")? as usize;
        let fc_units = r.u32("fc_units")? as usize;
        if classes < 2
            || [view_rows, view_cols, conv_filters, kernel_size, fc_units]
                .iter()
                .any(|&v| v == 0 || v > (1 << 20))
        {
            return Err(Error::Checkpoint {
                field: "config",
                detail: "architecture configuration out of range".to_string(),
            });
        }
        let config = ModelConfig {
            classes,
            view_rows,
            view_cols,
            conv_filters,
            kernel_size,
            fc_units,
        };
        let echo = TrainEcho {
            epochs: r.u32("epochs")?,
            batch: r.u32("batch")?,
            seed: r.u64("seed")?,
            mean_reduction: r.u8("mean_reduction")? != 0,
        };
        let corpus_digest = r.u64("corpus_digest")?;
        let count = r.u32("param_count")?;
        if count > MAX_PARAMS {
            return Err(Error::Checkpoint {
                field: "param_count",
                detail: format!("{count} parameters exceeds the limit"),
            });
        }
        let mut params = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = r.u32("name_len")?;
            if name_len > MAX_NAME_LEN {
                return Err(Error::Checkpoint {
                    field: "name_len",
                    detail: format!("parameter name of {name_len} bytes exceeds the limit"),
                });
            }
            let name = std::str::from_utf8(r.take(name_len as usize, "name")?)
                .map_err(|_| Error::Checkpoint {
                    field: "name",
                    detail: "parameter name is not UTF-8".to_string(),
                })?
                .to_string();
            let ndims = r.u32("ndims")?;
            if ndims == 0 || ndims > MAX_NDIMS {
                return Err(Error::Checkpoint {
                    field: "ndims",
                    detail: format!("parameter {name} has {ndims} dimensions"),
                });
            }
            let mut dims = Vec::with_capacity(ndims as usize);
            let mut elems: u64 = 1;
            for _ in 0..ndims {
                let d = r.u32("dims")? as u64;
                elems = elems.saturating_mul(d);
                dims.push(d as usize);
            }
            if elems == 0 || elems > MAX_PARAM_ELEMS {
                return Err(Error::Checkpoint {
                    field: "dims",
                    detail: format!("parameter {name} has unreasonable shape {dims:?}"),
                });
            }
            let raw = r.take(4 * elems as usize, "param data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.push((name, dims, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint {
                field: "trailer",
                detail: format!("{} unexpected trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            kind,
            config,
            echo,
            corpus_digest,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint {
                field,
                detail: "checkpoint truncated".to_string(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_corpus_with;
    use crate::synth::GLITCH_CLASSES;

    fn tiny_model() -> Architecture<f32> {
        let cfg = ModelConfig {
            classes: 3,
            view_rows: 12,
            view_cols: 14,
            conv_filters: 2,
            kernel_size: 3,
            fc_units: 4,
        };
        Architecture::single_view(cfg, 1, 7).unwrap()
    }

    #[test]
    fn byte_round_trip_is_identity() {
        let model = tiny_model();
        let echo = TrainEcho {
            epochs: 5,
            batch: 30,
            seed: 9,
            mean_reduction: false,
        };
        let ckpt = Checkpoint::from_model(&model, echo, 0xfeed);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn reload_reproduces_forward_outputs_bit_exactly() {
        // Full-size 47x57 views with a small filter count keeps this fast.
        let cfg = ModelConfig {
            classes: 3,
            view_rows: 47,
            view_cols: 57,
            conv_filters: 4,
            kernel_size: 3,
            fc_units: 8,
        };
        let model: Architecture<f32> = Architecture::single_view(cfg, 2, 11).unwrap();
        let corpus = generate_corpus_with(&GLITCH_CLASSES[..3], 8, 4).unwrap();
        let sample = corpus.sample(0);
        let before = model.infer_sample(sample).unwrap();
        let ckpt = Checkpoint::from_model(&model, TrainEcho::default(), 0);
        let reloaded: Architecture<f32> = ckpt.into_model().unwrap();
        let after = reloaded.infer_sample(sample).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn bad_magic_is_reported_as_bad_magic() {
        let model = tiny_model();
        let mut bytes = Checkpoint::from_model(&model, TrainEcho::default(), 0).to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let model = tiny_model();
        let bytes = Checkpoint::from_model(&model, TrainEcho::default(), 0).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extended = bytes.clone();
        extended.push(7);
        assert!(Checkpoint::from_bytes(&extended).is_err());
    }

    #[test]
    fn version_mismatch_rejected() {
        let model = tiny_model();
        let mut bytes = Checkpoint::from_model(&model, TrainEcho::default(), 0).to_bytes();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn architecture_mismatch_on_load_rejected() {
        let model = tiny_model();
        let mut ckpt = Checkpoint::from_model(&model, TrainEcho::default(), 0);
        // claim the parameters belong to a merged-view model
        ckpt.kind = ArchKind::MergedView;
        let err = ckpt.into_model::<f32>().map(|_| ()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { .. }), "{err}");
    }
}
