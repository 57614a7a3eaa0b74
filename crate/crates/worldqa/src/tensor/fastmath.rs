//! Pure-arithmetic exp/tanh used by the nonlinear primitives. Plain libm
//! calls dominate single-core forward cost at this model size; these are
//! branch-light polynomial versions, deterministic across platforms, with
//! relative error ~2e-6 (well under the f32 working precision of the rest
//! of the pipeline).

const LOG2_E: f32 = std::f32::consts::LOG2_E;
const LN_2: f32 = std::f32::consts::LN_2;

/// exp(x) via 2^(x*log2(e)) with an exponent-bit scale and a degree-5
/// Taylor tail on the residual.
#[inline]
pub fn fast_exp(x: f32) -> f32 {
    let y = x * LOG2_E;
    if y <= -126.0 {
        return 0.0;
    }
    if y >= 127.5 {
        return f32::INFINITY;
    }
    let n = y.round();
    let u = (y - n) * LN_2; // |u| <= ln2/2
    let p = 1.0 + u * (1.0 + u * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u / 120.0))));
    let scale = f32::from_bits((((n as i32) + 127) as u32) << 23);
    scale * p
}

/// tanh(x) = 1 - 2 / (exp(2x) + 1), saturating for large |x|.
#[inline]
pub fn fast_tanh(x: f32) -> f32 {
    if x > 9.0 {
        return 1.0;
    }
    if x < -9.0 {
        return -1.0;
    }
    1.0 - 2.0 / (fast_exp(2.0 * x) + 1.0)
}
