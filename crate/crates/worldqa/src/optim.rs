//! Decoupled-weight-decay adaptive-moment optimizer (AdamW) over a flat
//! parameter list. Weight decay applies to matrices only; biases and norm
//! gains are exempt.

use crate::tensor::Tensor;

pub struct AdamW {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

impl AdamW {
    pub fn new(param_sizes: &[usize], weight_decay: f32) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One update step. `params` and `grads` are index-aligned with the
    /// sizes given at construction.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f32>], lr: f32) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let decay = if p.shape.len() >= 2 { self.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, g) in grads[i].iter().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                let w = &mut p.data[j];
                *w -= lr * (mhat / (vhat.sqrt() + self.eps) + decay * *w);
            }
        }
    }
}

/// Linear decay from `peak` to zero over `total` steps, with an optional
/// linear warmup ramp at the start.
pub fn lr_at(step: usize, total: usize, peak: f32, warmup: usize) -> f32 {
    if warmup > 0 && step < warmup {
        return peak * (step + 1) as f32 / warmup as f32;
    }
    let remain = (total.saturating_sub(step)) as f32 / (total.saturating_sub(warmup)).max(1) as f32;
    peak * remain.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_minimizes_a_quadratic() {
        // f(w) = sum (w - 3)^2, gradient 2(w - 3)
        let mut w = Tensor::new(vec![4], vec![0.0; 4]).unwrap();
        let mut opt = AdamW::new(&[4], 0.0);
        for _ in 0..500 {
            let g: Vec<f32> = w.data.iter().map(|&x| 2.0 * (x - 3.0)).collect();
            opt.step(&mut [&mut w], &[g], 0.05);
        }
        for &x in &w.data {
            assert!((x - 3.0).abs() < 1e-2, "{x}");
        }
    }

    #[test]
    fn decay_skips_vectors() {
        let mut w = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let mut b = Tensor::new(vec![2], vec![1.0; 2]).unwrap();
        let mut opt = AdamW::new(&[4, 2], 0.5);
        opt.step(&mut [&mut w, &mut b], &[vec![0.0; 4], vec![0.0; 2]], 0.1);
        // Zero gradient: only decay moves the matrix; the bias stays put.
        assert!(w.data[0] < 1.0);
        assert_eq!(b.data[0], 1.0);
    }

    #[test]
    fn lr_schedule_is_linear_decay_with_warmup() {
        assert!((lr_at(0, 100, 1.0, 10) - 0.1).abs() < 1e-6);
        assert!((lr_at(9, 100, 1.0, 10) - 1.0).abs() < 1e-6);
        assert!((lr_at(55, 100, 1.0, 10) - 0.5).abs() < 1e-6);
        assert!(lr_at(100, 100, 1.0, 10) <= 1e-6);
        // no warmup
        assert_eq!(lr_at(0, 200, 0.3, 0), 0.3);
    }
}
