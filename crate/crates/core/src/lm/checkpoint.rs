//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header, then the sections listed in the header as raw little-endian
//! scalars. The parameter section holds tensors in layout order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::train::{EpochMetrics, TrainState};
use super::{Gpt, LmError, ModelConfig, Parameters, Scalar, TrainConfig};
use crate::notation::{NotationScheme, Vocabulary};

pub const MAGIC: &[u8; 8] = b"CHPRBLM\x01";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: usize = 1 << 24;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainMeta {
    train_config: TrainConfig,
    step: usize,
    epochs_done: usize,
    adam_steps: u64,
    best_dev: Option<f64>,
    best_epoch: usize,
    epochs_since_best: usize,
    history: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    scalar: String,
    model_config: ModelConfig,
    vocab_hash: String,
    scheme: String,
    tensors: Vec<TensorEntry>,
    sections: Vec<String>,
    train: Option<TrainMeta>,
    run_config: serde_json::Value,
}

/// A model plus metadata, optionally with resumable training state.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: Gpt<T>,
    pub scheme: NotationScheme,
    pub vocab_hash: String,
    pub run_config: serde_json::Value,
    pub train: Option<(TrainConfig, TrainState<T>)>,
}

fn write_scalars<T: Scalar>(out: &mut Vec<u8>, xs: &[T]) {
    out.reserve(xs.len() * T::BYTES);
    for &x in xs {
        x.write_le(out);
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: Gpt<T>, scheme: NotationScheme, vocab: &Vocabulary) -> Self {
        Checkpoint {
            model,
            scheme,
            vocab_hash: vocab.hash(),
            run_config: serde_json::Value::Null,
            train: None,
        }
    }

    /// The weights to evaluate: the best snapshot when training state is present.
    pub fn best_model(&self) -> Gpt<T> {
        match &self.train {
            Some((_, st)) => st.best_model(),
            None => self.model.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LmError> {
        let layout = self.model.params.layout();
        let mut sections = vec!["params".to_string()];
        let mut train = None;
        if let Some((tcfg, st)) = &self.train {
            sections.push("adam_m".into());
            sections.push("adam_v".into());
            if st.best_params.is_some() {
                sections.push("best".into());
            }
            train = Some(TrainMeta {
                train_config: tcfg.clone(),
                step: st.step,
                epochs_done: st.epochs_done,
                adam_steps: st.optimizer.t,
                best_dev: st.best_dev,
                best_epoch: st.best_epoch,
                epochs_since_best: st.epochs_since_best,
                history: st.history.clone(),
            });
        }
        let header = Header {
            scalar: T::NAME.to_string(),
            model_config: self.model.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            scheme: self.scheme.to_string(),
            tensors: layout
                .tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
            sections,
            train,
            run_config: self.run_config.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| LmError::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        write_scalars(&mut out, self.model.params.as_slice());
        if let Some((_, st)) = &self.train {
            write_scalars(&mut out, &st.optimizer.m);
            write_scalars(&mut out, &st.optimizer.v);
            if let Some(b) = &st.best_params {
                write_scalars(&mut out, b.as_slice());
            }
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LmError> {
        w.write_all(&self.to_bytes()?)?;
        w.flush()?;
        Ok(())
    }

    /// Writes atomically: a temporary sibling file is renamed into place.
    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Parses a checkpoint. When `vocab` is given its hash must match.
    /// Weights stored in a different precision are converted.
    pub fn from_bytes(bytes: &[u8], vocab: Option<&Vocabulary>) -> Result<Self, LmError> {
        let bad = |m: &str| LmError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(LmError::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if hlen > MAX_HEADER || bytes.len() < 16 + hlen {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&bytes[16..16 + hlen]).map_err(|e| LmError::Checkpoint(format!("header: {e}")))?;
        if let Some(v) = vocab {
            let h = v.hash();
            if h != header.vocab_hash {
                return Err(LmError::VocabMismatch {
                    expected: h,
                    found: header.vocab_hash,
                });
            }
        }
        let cfg = header.model_config.clone();
        cfg.validate()?;
        let layout = super::params::Layout::new(&cfg);
        let declared: Vec<(&str, &[usize])> = header.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
        let expected: Vec<(&str, &[usize])> = layout.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
        if declared != expected {
            return Err(LmError::Shape("tensor list does not match the model config".into()));
        }
        let body = &bytes[16 + hlen..];
        let width = match header.scalar.as_str() {
            "f32" => 4,
            "f64" => 8,
            s => return Err(LmError::Checkpoint(format!("unknown scalar type {s:?}"))),
        };
        let n = layout.total;
        let want = header.sections.len() * n * width;
        if body.len() != want {
            return Err(LmError::Checkpoint(format!(
                "body holds {} bytes, header implies {want}",
                body.len()
            )));
        }
        let read_section = |i: usize| -> Vec<T> {
            let raw = &body[i * n * width..(i + 1) * n * width];
            raw.chunks_exact(width)
                .map(|c| {
                    if width == 4 {
                        T::of(f32::read_le(c) as f64)
                    } else {
                        T::of(f64::read_le(c))
                    }
                })
                .collect()
        };
        let idx = |name: &str| header.sections.iter().position(|s| s == name);
        let params_at = idx("params").ok_or_else(|| bad("missing parameter section"))?;
        let params = Parameters::from_raw(&cfg, read_section(params_at))?;
        if !params.all_finite() {
            return Err(bad("non-finite parameter values"));
        }
        let model = Gpt::from_parameters(cfg.clone(), params)?;
        let scheme: NotationScheme = header
            .scheme
            .parse()
            .map_err(|e: crate::notation::NotationError| LmError::Checkpoint(e.to_string()))?;
        let train = match header.train {
            None => None,
            Some(meta) => {
                let (mi, vi) = match (idx("adam_m"), idx("adam_v")) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(bad("training state without optimizer moments")),
                };
                let tc = meta.train_config;
                let mut optimizer = AdamW::new(&model.params, tc.beta1, tc.beta2, tc.eps, tc.weight_decay);
                optimizer.restore(read_section(mi), read_section(vi), meta.adam_steps);
                let best_params = match idx("best") {
                    Some(b) => Some(Parameters::from_raw(&cfg, read_section(b))?),
                    None => None,
                };
                let state = TrainState {
                    model: model.clone(),
                    optimizer,
                    step: meta.step,
                    epochs_done: meta.epochs_done,
                    best_dev: meta.best_dev,
                    best_epoch: meta.best_epoch,
                    epochs_since_best: meta.epochs_since_best,
                    history: meta.history,
                    best_params,
                };
                Some((tc, state))
            }
        };
        Ok(Checkpoint {
            model,
            scheme,
            vocab_hash: header.vocab_hash,
            run_config: header.run_config,
            train,
        })
    }

    pub fn read_from<R: Read>(mut r: R, vocab: Option<&Vocabulary>) -> Result<Self, LmError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, vocab)
    }

    pub fn load(path: &Path, vocab: Option<&Vocabulary>) -> Result<Self, LmError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, vocab)
    }
}
