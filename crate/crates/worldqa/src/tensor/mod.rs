//! Dense f32 tensors with tape-based reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: row-major `Vec<f32>` storage, a linear
//! Wengert tape recording one op per output node, and a backward pass that
//! walks the tape in exact reverse order. Gradients flow to every leaf with
//! `requires_grad`, including planner action inputs, not just parameters.
//!
//! No broadcasting beyond leading-dimension expansion (a bias of shape `[n]`
//! may be added to `[m, n]`), which keeps every gradient rule auditable.

pub mod fastmath;
pub mod gradcheck;
mod kernels;
mod tape;

pub use tape::{NodeId, Tape};

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A dense row-major f32 tensor. `grad`, when present, matches `data` in
/// length and is populated by `Tape::backward`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor_new",
                detail: format!("shape {:?} implies {} values, got {}", shape, numel, data.len()),
            });
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel], requires_grad: false, grad: None }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor { shape: vec![1], data: vec![v], requires_grad: false, grad: None }
    }

    /// Uniform init in `[lo, hi)`.
    pub fn uniform(shape: &[usize], lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor { shape: shape.to_vec(), data, requires_grad: false, grad: None }
    }

    /// Gaussian init with the given standard deviation (Box-Muller).
    pub fn normal(shape: &[usize], std: f32, rng: &mut ChaCha8Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| std * sample_standard_normal(rng)).collect();
        Tensor { shape: shape.to_vec(), data, requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller; u1 kept away from 0 so ln() stays finite.
    let u1: f32 = rng.gen_range(1e-7f32..1.0);
    let u2: f32 = rng.gen::<f32>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos()
}

/// Scale a collection of gradient buffers so their global L2 norm does not
/// exceed `max_norm`. Returns the pre-clip norm. An empty collection (or one
/// holding only empty buffers) returns 0 and is left untouched.
pub fn clip_grad_norm(grads: &mut [Vec<f32>], max_norm: f32) -> f32 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let mut sq = 0.0f32;
    for g in grads.iter() {
        for &v in g {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn new_rejects_shape_data_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn clip_analytic_case() {
        // [3, 4] has norm 5; clipping to 1 scales to [0.6, 0.8].
        let mut grads = vec![vec![3.0f32, 4.0]];
        let pre = clip_grad_norm(&mut grads, 1.0);
        assert_eq!(pre, 5.0);
        assert!((grads[0][0] - 0.6).abs() < 1e-6);
        assert!((grads[0][1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn clip_below_threshold_unchanged() {
        let mut grads = vec![vec![0.3f32, 0.4]];
        let pre = clip_grad_norm(&mut grads, 1.0);
        assert!((pre - 0.5).abs() < 1e-6);
        assert_eq!(grads[0], vec![0.3, 0.4]);
    }

    #[test]
    fn clip_empty_returns_zero() {
        let mut grads: Vec<Vec<f32>> = vec![];
        assert_eq!(clip_grad_norm(&mut grads, 1.0), 0.0);
    }

    #[test]
    fn clip_paper_config_values_accepted() {
        // Both shipped planner configs (clip 1 and clip 10) must be usable.
        for max_norm in [1.0f32, 10.0] {
            let mut grads = vec![vec![5.0f32; 8]];
            let pre = clip_grad_norm(&mut grads, max_norm);
            assert!(pre > 0.0);
            let mut sq = 0.0f32;
            for v in &grads[0] {
                sq += v * v;
            }
            assert!(sq.sqrt() <= max_norm * 1.0001);
        }
    }

    #[test]
    fn normal_init_is_seeded() {
        let mut r1 = rng_from_seed(3);
        let mut r2 = rng_from_seed(3);
        let a = Tensor::normal(&[4, 4], 0.02, &mut r1);
        let b = Tensor::normal(&[4, 4], 0.02, &mut r2);
        assert_eq!(a.data, b.data);
    }
}
