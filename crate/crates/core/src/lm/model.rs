use rand::Rng;

use super::loss::{cross_entropy, LossMask};
use super::scalar::matmul;
use super::{LmError, ModelConfig, Parameters, Scalar};
use crate::notation::vocab::PAD;
use crate::notation::TokenId;

const LN_EPS: f64 = 1e-5;

/// A decoder-only transformer: token and learned position embeddings,
/// pre-norm blocks (causal self-attention, GELU MLP), final norm and an
/// untied output projection.
#[derive(Debug, Clone)]
pub struct Gpt<T> {
    pub config: ModelConfig,
    pub params: Parameters<T>,
}

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    att_mask: Vec<T>,
    y: Vec<T>,
    drop1: Vec<T>,
    ln2: LnCache<T>,
    m: Vec<T>,
    h_pre: Vec<T>,
    h: Vec<T>,
    drop2: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache<T> {
    tokens: Vec<TokenId>,
    emb_drop: Vec<T>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    xf: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Softmax attention weights of `layer`, laid out `[head][query][key]`.
    pub fn attention(&self, layer: usize) -> &[T] {
        &self.layers[layer].probs
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize, out: &mut [T]) -> LnCache<T> {
    let rows = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let inv_d = T::one() / T::of(d as f64);
    let eps = T::of(LN_EPS);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let xh = (row[i] - mean) * rs;
            xhat[r * d + i] = xh;
            out[r * d + i] = g[i] * xh + b[i];
        }
    }
    LnCache { xhat, rstd }
}

/// Returns dx; accumulates dg and db.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LnCache<T>,
    g: &[T],
    dg: &mut [T],
    db: &mut [T],
    d: usize,
) -> Vec<T> {
    let rows = dy.len() / d;
    let mut dx = vec![T::zero(); dy.len()];
    let inv_d = T::one() / T::of(d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
            sum_dxhat += dxhat[i];
            sum_dxhat_xhat += dxhat[i] * xh[i];
        }
        let m1 = sum_dxhat * inv_d;
        let m2 = sum_dxhat_xhat * inv_d;
        let rs = cache.rstd[r];
        for i in 0..d {
            dx[r * d + i] = rs * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
    dx
}

fn gelu_consts<T: Scalar>() -> (T, T) {
    (T::of((2.0 / std::f64::consts::PI).sqrt()), T::of(0.044715))
}

fn gelu<T: Scalar>(x: T) -> T {
    let (c, k) = gelu_consts::<T>();
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, k) = gelu_consts::<T>();
    let half = T::of(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * k * x * x)
}

fn add_bias<T: Scalar>(x: &mut [T], b: &[T]) {
    for row in x.chunks_mut(b.len()) {
        for (v, &bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn col_sum_into<T: Scalar>(x: &[T], out: &mut [T]) {
    for row in x.chunks(out.len()) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn dropout_mask<T: Scalar, R: Rng + ?Sized>(n: usize, rate: f64, rng: Option<&mut R>) -> Vec<T> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = T::of(1.0 / (1.0 - rate));
            (0..n)
                .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
                .collect()
        }
        _ => Vec::new(),
    }
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &[T]) {
    if !mask.is_empty() {
        for (v, &m) in x.iter_mut().zip(mask) {
            *v *= m;
        }
    }
}

/// Copies column block `[col, col + w)` of a row-major matrix with `stride` columns.
fn gather_cols<T: Scalar>(src: &[T], rows: usize, stride: usize, col: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * w);
    for r in 0..rows {
        out.extend_from_slice(&src[r * stride + col..r * stride + col + w]);
    }
    out
}

fn scatter_cols<T: Scalar>(dst: &mut [T], src: &[T], rows: usize, stride: usize, col: usize, w: usize) {
    for r in 0..rows {
        dst[r * stride + col..r * stride + col + w].copy_from_slice(&src[r * w..(r + 1) * w]);
    }
}

enum NoRng {}

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        match *self {}
    }
    fn next_u64(&mut self) -> u64 {
        match *self {}
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        match *self {}
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
        match *self {}
    }
}

impl<T: Scalar> Gpt<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, LmError> {
        let params = Parameters::init(&config, seed)?;
        Ok(Gpt { config, params })
    }

    pub fn from_parameters(config: ModelConfig, params: Parameters<T>) -> Result<Self, LmError> {
        config.validate()?;
        let expected = super::params::Layout::new(&config).total;
        if params.len() != expected {
            return Err(LmError::Shape(format!(
                "parameters hold {} values, config needs {expected}",
                params.len()
            )));
        }
        Ok(Gpt { config, params })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, tokens: &[TokenId]) -> Result<(), LmError> {
        if tokens.len() > self.config.context_len {
            return Err(LmError::SequenceTooLong {
                len: tokens.len(),
                max: self.config.context_len,
            });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(LmError::Data(format!("token id {t} outside the vocabulary")));
        }
        Ok(())
    }

    /// Logits for one sequence, row-major `len x vocab`, without dropout.
    pub fn forward_sequence(&self, tokens: &[TokenId]) -> Result<Vec<T>, LmError> {
        self.forward_cached::<NoRng>(tokens, None).map(|(l, _)| l)
    }

    /// Logits for a right- or left-padded batch stored row-major as
    /// `batch x seq_len`. PAD positions never act as attention keys.
    /// Output is `batch x seq_len x vocab`.
    pub fn forward_batch(&self, tokens: &[TokenId], seq_len: usize) -> Result<Vec<T>, LmError> {
        if seq_len == 0 || !tokens.len().is_multiple_of(seq_len) {
            return Err(LmError::Shape(format!(
                "{} tokens do not form rows of length {seq_len}",
                tokens.len()
            )));
        }
        let mut out = Vec::with_capacity(tokens.len() * self.config.vocab_size);
        for row in tokens.chunks(seq_len) {
            out.extend(self.forward_sequence(row)?);
        }
        Ok(out)
    }

    /// Forward pass recording activations. Dropout is applied only when an
    /// RNG is supplied and the configured rate is positive.
    pub fn forward_cached<R: Rng + ?Sized>(
        &self,
        tokens: &[TokenId],
        mut rng: Option<&mut R>,
    ) -> Result<(Vec<T>, ForwardCache<T>), LmError> {
        self.check_input(tokens)?;
        let cfg = &self.config;
        let p = &self.params.data;
        let lay = &self.params.layout;
        let (n, d, f, v) = (tokens.len(), cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let nh = cfg.n_heads;
        let hd = cfg.head_dim();
        let rate = cfg.dropout_rate;
        let scale = T::one() / T::of(hd as f64).sqrt();

        let wte = &p[lay.wte.clone()];
        let wpe = &p[lay.wpe.clone()];
        let mut x = vec![T::zero(); n * d];
        for (t, &tok) in tokens.iter().enumerate() {
            let e = &wte[tok as usize * d..(tok as usize + 1) * d];
            let pe = &wpe[t * d..(t + 1) * d];
            for i in 0..d {
                x[t * d + i] = e[i] + pe[i];
            }
        }
        let emb_drop = dropout_mask(n * d, rate, rng.as_deref_mut());
        apply_mask(&mut x, &emb_drop);

        // key j is visible from query i when lo(i) <= j <= i and j is not PAD
        let lo = |i: usize| match cfg.attention_window {
            Some(w) => (i + 1).saturating_sub(w),
            None => 0,
        };
        let key_ok: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for slots in &lay.layers {
            let mut a = vec![T::zero(); n * d];
            let ln1 = layer_norm(&x, &p[slots.ln1_g.clone()], &p[slots.ln1_b.clone()], d, &mut a);
            let mut qkv = vec![T::zero(); n * 3 * d];
            matmul(n, d, 3 * d, &a, false, &p[slots.qkv_w.clone()], false, T::zero(), &mut qkv);
            add_bias(&mut qkv, &p[slots.qkv_b.clone()]);

            let mut probs = vec![T::zero(); nh * n * n];
            let att_mask = dropout_mask(nh * n * n, rate, rng.as_deref_mut());
            let mut y = vec![T::zero(); n * d];
            let mut scores = vec![T::zero(); n * n];
            let mut yh = vec![T::zero(); n * hd];
            for h in 0..nh {
                let q = gather_cols(&qkv, n, 3 * d, h * hd, hd);
                let k = gather_cols(&qkv, n, 3 * d, d + h * hd, hd);
                let vv = gather_cols(&qkv, n, 3 * d, 2 * d + h * hd, hd);
                matmul(n, hd, n, &q, false, &k, true, T::zero(), &mut scores);
                let ph = &mut probs[h * n * n..(h + 1) * n * n];
                for i in 0..n {
                    let row = &scores[i * n..(i + 1) * n];
                    let prow = &mut ph[i * n..(i + 1) * n];
                    let mut mx = T::neg_infinity();
                    for j in lo(i)..=i {
                        if key_ok[j] {
                            mx = mx.max(row[j] * scale);
                        }
                    }
                    if mx == T::neg_infinity() {
                        continue;
                    }
                    let mut z = T::zero();
                    for j in lo(i)..=i {
                        if key_ok[j] {
                            let e = (row[j] * scale - mx).exp();
                            prow[j] = e;
                            z += e;
                        }
                    }
                    let inv = T::one() / z;
                    for pj in &mut prow[lo(i)..=i] {
                        *pj *= inv;
                    }
                }
                if att_mask.is_empty() {
                    matmul(n, n, hd, ph, false, &vv, false, T::zero(), &mut yh);
                } else {
                    let mut pd = ph.to_vec();
                    apply_mask(&mut pd, &att_mask[h * n * n..(h + 1) * n * n]);
                    matmul(n, n, hd, &pd, false, &vv, false, T::zero(), &mut yh);
                }
                scatter_cols(&mut y, &yh, n, d, h * hd, hd);
            }

            let mut o = vec![T::zero(); n * d];
            matmul(n, d, d, &y, false, &p[slots.proj_w.clone()], false, T::zero(), &mut o);
            add_bias(&mut o, &p[slots.proj_b.clone()]);
            let drop1 = dropout_mask(n * d, rate, rng.as_deref_mut());
            apply_mask(&mut o, &drop1);
            for (xi, oi) in x.iter_mut().zip(&o) {
                *xi += *oi;
            }

            let mut m = vec![T::zero(); n * d];
            let ln2 = layer_norm(&x, &p[slots.ln2_g.clone()], &p[slots.ln2_b.clone()], d, &mut m);
            let mut h_pre = vec![T::zero(); n * f];
            matmul(n, d, f, &m, false, &p[slots.fc_w.clone()], false, T::zero(), &mut h_pre);
            add_bias(&mut h_pre, &p[slots.fc_b.clone()]);
            let h: Vec<T> = h_pre.iter().map(|&z| gelu(z)).collect();
            let mut o2 = vec![T::zero(); n * d];
            matmul(n, f, d, &h, false, &p[slots.out_w.clone()], false, T::zero(), &mut o2);
            add_bias(&mut o2, &p[slots.out_b.clone()]);
            let drop2 = dropout_mask(n * d, rate, rng.as_deref_mut());
            apply_mask(&mut o2, &drop2);
            for (xi, oi) in x.iter_mut().zip(&o2) {
                *xi += *oi;
            }

            layers.push(LayerCache {
                ln1,
                a,
                qkv,
                probs,
                att_mask,
                y,
                drop1,
                ln2,
                m,
                h_pre,
                h,
                drop2,
            });
        }

        let mut xf = vec![T::zero(); n * d];
        let lnf = layer_norm(&x, &p[lay.lnf_g.clone()], &p[lay.lnf_b.clone()], d, &mut xf);
        let mut logits = vec![T::zero(); n * v];
        matmul(n, d, v, &xf, false, &p[lay.head.clone()], false, T::zero(), &mut logits);

        Ok((
            logits,
            ForwardCache {
                tokens: tokens.to_vec(),
                emb_drop,
                layers,
                lnf,
                xf,
            },
        ))
    }

    /// Mean next-token loss of `seq` (inputs `seq[..n-1]`, targets `seq[1..]`)
    /// and its exact gradient, without dropout.
    pub fn loss_and_grad(&self, seq: &[TokenId], mask: &LossMask) -> Result<(f64, Parameters<T>), LmError> {
        if seq.len() < 2 {
            return Err(LmError::NoTargets);
        }
        let targets = &seq[1..];
        let count = targets.iter().filter(|&&t| t != PAD && !mask.masked.contains(&t)).count();
        if count == 0 {
            return Err(LmError::NoTargets);
        }
        let (logits, cache) = self.forward_cached::<NoRng>(&seq[..seq.len() - 1], None)?;
        let mut dlogits = vec![T::zero(); logits.len()];
        let scale = T::one() / T::of(count as f64);
        let (sum, _) = cross_entropy(&logits, targets, self.config.vocab_size, mask, Some((&mut dlogits, scale)));
        let mut grads = self.params.zeros_like();
        self.backward(&cache, &dlogits, &mut grads);
        Ok((sum / count as f64, grads))
    }

    /// Accumulates into `grads` the gradient of `sum(dlogits * logits)`.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &[T], grads: &mut Parameters<T>) {
        let cfg = &self.config;
        let p = &self.params.data;
        let lay = &self.params.layout;
        let g = &mut grads.data;
        let (n, d, f, v) = (cache.tokens.len(), cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let nh = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = T::one() / T::of(hd as f64).sqrt();
        assert_eq!(dlogits.len(), n * v, "dlogits shape");

        matmul(d, n, v, &cache.xf, true, dlogits, false, T::one(), &mut g[lay.head.clone()]);
        let mut dxf = vec![T::zero(); n * d];
        matmul(n, v, d, dlogits, false, &p[lay.head.clone()], true, T::zero(), &mut dxf);
        let (dgf, dbf) = split_pair(g, &lay.lnf_g, &lay.lnf_b);
        let mut dx = layer_norm_backward(&dxf, &cache.lnf, &p[lay.lnf_g.clone()], dgf, dbf, d);

        for (slots, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP branch
            let mut do2 = dx.clone();
            apply_mask(&mut do2, &lc.drop2);
            matmul(f, n, d, &lc.h, true, &do2, false, T::one(), &mut g[slots.out_w.clone()]);
            col_sum_into(&do2, &mut g[slots.out_b.clone()]);
            let mut dh = vec![T::zero(); n * f];
            matmul(n, d, f, &do2, false, &p[slots.out_w.clone()], true, T::zero(), &mut dh);
            for (dhi, &z) in dh.iter_mut().zip(&lc.h_pre) {
                *dhi *= gelu_grad(z);
            }
            matmul(d, n, f, &lc.m, true, &dh, false, T::one(), &mut g[slots.fc_w.clone()]);
            col_sum_into(&dh, &mut g[slots.fc_b.clone()]);
            let mut dm = vec![T::zero(); n * d];
            matmul(n, f, d, &dh, false, &p[slots.fc_w.clone()], true, T::zero(), &mut dm);
            let (dg2, db2) = split_pair(g, &slots.ln2_g, &slots.ln2_b);
            let dln2 = layer_norm_backward(&dm, &lc.ln2, &p[slots.ln2_g.clone()], dg2, db2, d);
            for (a, b) in dx.iter_mut().zip(&dln2) {
                *a += *b;
            }

            // attention branch
            let mut dout = dx.clone();
            apply_mask(&mut dout, &lc.drop1);
            matmul(d, n, d, &lc.y, true, &dout, false, T::one(), &mut g[slots.proj_w.clone()]);
            col_sum_into(&dout, &mut g[slots.proj_b.clone()]);
            let mut dy = vec![T::zero(); n * d];
            matmul(n, d, d, &dout, false, &p[slots.proj_w.clone()], true, T::zero(), &mut dy);

            let mut dqkv = vec![T::zero(); n * 3 * d];
            let mut dp = vec![T::zero(); n * n];
            let mut dv = vec![T::zero(); n * hd];
            let mut dq = vec![T::zero(); n * hd];
            let mut dk = vec![T::zero(); n * hd];
            for h in 0..nh {
                let q = gather_cols(&lc.qkv, n, 3 * d, h * hd, hd);
                let k = gather_cols(&lc.qkv, n, 3 * d, d + h * hd, hd);
                let vv = gather_cols(&lc.qkv, n, 3 * d, 2 * d + h * hd, hd);
                let dyh = gather_cols(&dy, n, d, h * hd, hd);
                let ph = &lc.probs[h * n * n..(h + 1) * n * n];
                let mh = if lc.att_mask.is_empty() {
                    None
                } else {
                    Some(&lc.att_mask[h * n * n..(h + 1) * n * n])
                };
                let pd: std::borrow::Cow<[T]> = match mh {
                    None => ph.into(),
                    Some(mask) => ph.iter().zip(mask).map(|(&a, &b)| a * b).collect::<Vec<_>>().into(),
                };
                matmul(n, n, hd, &pd, true, &dyh, false, T::zero(), &mut dv);
                matmul(n, hd, n, &dyh, false, &vv, true, T::zero(), &mut dp);
                if let Some(mask) = mh {
                    apply_mask(&mut dp, mask);
                }
                for i in 0..n {
                    let prow = &ph[i * n..(i + 1) * n];
                    let drow = &mut dp[i * n..(i + 1) * n];
                    let dot: T = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        drow[j] = prow[j] * (drow[j] - dot) * scale;
                    }
                }
                matmul(n, n, hd, &dp, false, &k, false, T::zero(), &mut dq);
                matmul(n, n, hd, &dp, true, &q, false, T::zero(), &mut dk);
                scatter_cols(&mut dqkv, &dq, n, 3 * d, h * hd, hd);
                scatter_cols(&mut dqkv, &dk, n, 3 * d, d + h * hd, hd);
                scatter_cols(&mut dqkv, &dv, n, 3 * d, 2 * d + h * hd, hd);
            }
            matmul(d, n, 3 * d, &lc.a, true, &dqkv, false, T::one(), &mut g[slots.qkv_w.clone()]);
            col_sum_into(&dqkv, &mut g[slots.qkv_b.clone()]);
            let mut da = vec![T::zero(); n * d];
            matmul(n, 3 * d, d, &dqkv, false, &p[slots.qkv_w.clone()], true, T::zero(), &mut da);
            let (dg1, db1) = split_pair(g, &slots.ln1_g, &slots.ln1_b);
            let dln1 = layer_norm_backward(&da, &lc.ln1, &p[slots.ln1_g.clone()], dg1, db1, d);
            for (a, b) in dx.iter_mut().zip(&dln1) {
                *a += *b;
            }
        }

        apply_mask(&mut dx, &cache.emb_drop);
        for (t, &tok) in cache.tokens.iter().enumerate() {
            let row = &dx[t * d..(t + 1) * d];
            let e = lay.wte.start + tok as usize * d;
            let pe = lay.wpe.start + t * d;
            for i in 0..d {
                g[e + i] += row[i];
                g[pe + i] += row[i];
            }
        }
    }
}

/// Disjoint mutable views of two adjacent (gain, bias) tensors.
fn split_pair<'a, T>(
    g: &'a mut [T],
    first: &std::ops::Range<usize>,
    second: &std::ops::Range<usize>,
) -> (&'a mut [T], &'a mut [T]) {
    assert_eq!(first.end, second.start, "gain and bias must be adjacent");
    let (a, b) = g[first.start..second.end].split_at_mut(first.len());
    (a, b)
}
