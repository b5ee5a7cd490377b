use super::{Parameters, Scalar};

/// Adam with decoupled weight decay. Tensors flagged as non-decaying in the
/// layout (biases, norm gains and shifts) are never decayed.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub(crate) m: Vec<T>,
    pub(crate) v: Vec<T>,
    pub(crate) t: u64,
    decay: Vec<bool>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &Parameters<T>, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let mut decay = vec![false; params.len()];
        for spec in &params.layout.tensors {
            decay[spec.range()].fill(spec.decay);
        }
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: vec![T::zero(); params.len()],
            v: vec![T::zero(); params.len()],
            t: 0,
            decay,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub(crate) fn restore(&mut self, m: Vec<T>, v: Vec<T>, t: u64) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
        self.t = t;
    }

    pub fn step(&mut self, params: &mut Parameters<T>, grads: &Parameters<T>, lr: f64) {
        self.t += 1;
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let one = T::one();
        let bc1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let lr_t = T::of(lr);
        let eps = T::of(self.eps);
        let shrink = T::of(1.0 - lr * self.weight_decay);
        for i in 0..params.data.len() {
            let g = grads.data[i];
            let m = b1 * self.m[i] + (one - b1) * g;
            let v = b2 * self.v[i] + (one - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let mut w = params.data[i];
            if self.decay[i] {
                w *= shrink;
            }
            w -= lr_t * (m / bc1) / ((v / bc2).sqrt() + eps);
            params.data[i] = w;
        }
    }
}

/// Scales `grads` so that its L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut Parameters<T>, max_norm: f64) -> f64 {
    let norm = grads
        .data
        .iter()
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::of(max_norm / (norm + 1e-12));
        for g in &mut grads.data {
            *g *= s;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ModelConfig;

    #[test]
    fn zero_gradient_only_decays_weights() {
        let cfg = ModelConfig::new(1, 1, 4);
        let mut p = Parameters::<f64>::init(&cfg, 0).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8, 0.5);
        opt.step(&mut p, &g, 0.1);
        let wte = before.get("wte").unwrap();
        for (a, b) in p.get("wte").unwrap().iter().zip(wte) {
            assert!((a - b * 0.95).abs() < 1e-15);
        }
        assert_eq!(p.get("h0.ln1.g"), before.get("h0.ln1.g"));
    }

    #[test]
    fn first_step_moves_by_lr() {
        // with bias correction the first update is lr * sign(g)
        let cfg = ModelConfig::new(1, 1, 4);
        let mut p = Parameters::<f64>::init(&cfg, 0).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.data.iter_mut().enumerate().for_each(|(i, x)| *x = if i % 2 == 0 { 0.3 } else { -2.0 });
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-12, 0.0);
        opt.step(&mut p, &g, 0.01);
        for i in 0..p.len() {
            let want = if i % 2 == 0 { -0.01 } else { 0.01 };
            assert!((p.data[i] - before.data[i] - want).abs() < 1e-9);
        }
    }
}
