use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LmError, ModelConfig, Scalar};

const INIT_STD: f64 = 0.02;

/// Name, shape and position of one tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
    #[serde(skip)]
    pub decay: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerSlots {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub qkv_w: Range<usize>,
    pub qkv_b: Range<usize>,
    pub proj_w: Range<usize>,
    pub proj_b: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub fc_w: Range<usize>,
    pub fc_b: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
}

/// Tensor layout derived from a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub(crate) wte: Range<usize>,
    pub(crate) wpe: Range<usize>,
    pub(crate) layers: Vec<LayerSlots>,
    pub(crate) lnf_g: Range<usize>,
    pub(crate) lnf_b: Range<usize>,
    pub(crate) head: Range<usize>,
    pub total: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let v = cfg.vocab_size;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, shape: Vec<usize>, decay: bool| -> Range<usize> {
            let spec = TensorSpec {
                name,
                shape,
                offset,
                decay,
            };
            let r = spec.range();
            offset = r.end;
            tensors.push(spec);
            r
        };
        let wte = add("wte".into(), vec![v, d], true);
        let wpe = add("wpe".into(), vec![cfg.context_len, d], true);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = |s: &str| format!("h{l}.{s}");
            layers.push(LayerSlots {
                ln1_g: add(p("ln1.g"), vec![d], false),
                ln1_b: add(p("ln1.b"), vec![d], false),
                qkv_w: add(p("attn.qkv.w"), vec![d, 3 * d], true),
                qkv_b: add(p("attn.qkv.b"), vec![3 * d], false),
                proj_w: add(p("attn.proj.w"), vec![d, d], true),
                proj_b: add(p("attn.proj.b"), vec![d], false),
                ln2_g: add(p("ln2.g"), vec![d], false),
                ln2_b: add(p("ln2.b"), vec![d], false),
                fc_w: add(p("mlp.fc.w"), vec![d, f], true),
                fc_b: add(p("mlp.fc.b"), vec![f], false),
                out_w: add(p("mlp.proj.w"), vec![f, d], true),
                out_b: add(p("mlp.proj.b"), vec![d], false),
            });
        }
        let lnf_g = add("lnf.g".into(), vec![d], false);
        let lnf_b = add("lnf.b".into(), vec![d], false);
        let head = add("head.w".into(), vec![d, v], true);
        Layout {
            tensors,
            wte,
            wpe,
            layers,
            lnf_g,
            lnf_b,
            head,
            total: offset,
        }
    }

    fn init_of(&self, spec: &TensorSpec, cfg: &ModelConfig) -> Init {
        let n = &spec.name;
        if n.ends_with(".g") {
            Init::Ones
        } else if n.ends_with(".b") {
            Init::Zeros
        } else if n.ends_with("attn.proj.w") || n.ends_with("mlp.proj.w") {
            // residual projections scaled down with depth, as in GPT-2
            Init::Normal(INIT_STD / (2.0 * cfg.n_layers as f64).sqrt())
        } else {
            Init::Normal(INIT_STD)
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Model weights in one flat buffer, viewed through a [`Layout`].
#[derive(Debug, Clone)]
pub struct Parameters<T> {
    pub(crate) layout: Layout,
    pub(crate) data: Vec<T>,
}

impl<T: Scalar> Parameters<T> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, LmError> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let mut data = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in &layout.tensors {
            let slot = &mut data[spec.range()];
            match layout.init_of(spec, cfg) {
                Init::Zeros => {}
                Init::Ones => slot.fill(T::one()),
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("positive std");
                    for x in slot {
                        *x = T::of(dist.sample(&mut rng));
                    }
                }
            }
        }
        Ok(Parameters { layout, data })
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            layout: self.layout.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn from_raw(cfg: &ModelConfig, data: Vec<T>) -> Result<Self, LmError> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        if data.len() != layout.total {
            return Err(LmError::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                data.len()
            )));
        }
        Ok(Parameters { layout, data })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.layout.tensor(name).map(|t| &self.data[t.range()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.layout.tensor(name)?.range();
        Some(&mut self.data[r])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts to another scalar type (e.g. f32 weights to f64 for checks).
    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters {
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_finite() {
        let cfg = ModelConfig::new(2, 2, 16);
        let a = Parameters::<f32>::init(&cfg, 3).unwrap();
        let b = Parameters::<f32>::init(&cfg, 3).unwrap();
        let c = Parameters::<f32>::init(&cfg, 4).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
        assert!(a.all_finite());
        assert!(a.get("h0.ln1.g").unwrap().iter().all(|&x| x == 1.0));
        assert!(a.get("h1.mlp.fc.b").unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn decay_flags() {
        let l = Layout::new(&ModelConfig::new(1, 1, 8));
        for t in &l.tensors {
            let no_decay = t.name.ends_with(".b") || t.name.ends_with(".g");
            assert_eq!(t.decay, !no_decay, "{}", t.name);
        }
    }
}
