//! Central finite-difference gradient checking. Used by the test suites as
//! an oracle that is independent of the backward pass: it only ever calls a
//! scalar forward closure.

/// Central-difference gradient of `f` at `x` with step `h` per component.
pub fn finite_difference_grad<F>(x: &[f32], h: f32, mut f: F) -> Vec<f32>
where
    F: FnMut(&[f32]) -> f32,
{
    let mut xs = x.to_vec();
    let mut grad = vec![0.0f32; x.len()];
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let hi = f(&xs);
        xs[i] = orig - h;
        let lo = f(&xs);
        xs[i] = orig;
        grad[i] = (hi - lo) / (2.0 * h);
    }
    grad
}

/// Largest relative error between two gradient vectors, with an absolute
/// floor absorbing the f32 evaluation noise of the finite differences
/// (roughly eps_f32 * |f| / (2h) ~ 5e-5 for unit-scale outputs).
pub fn max_rel_error(analytic: &[f32], reference: &[f32], abs_floor: f32) -> f32 {
    assert_eq!(analytic.len(), reference.len());
    let mut worst = 0.0f32;
    for (&a, &r) in analytic.iter().zip(reference) {
        let denom = a.abs().max(r.abs()).max(abs_floor / 1e-3);
        let err = (a - r).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    worst
}

/// Convenience assertion: relative error below `tol` with the given floor.
pub fn assert_grads_match(analytic: &[f32], reference: &[f32], tol: f32, abs_floor: f32) {
    let err = max_rel_error(analytic, reference, abs_floor);
    assert!(
        err < tol,
        "gradient mismatch: max relative error {err:.3e} >= {tol:.1e}\nanalytic {analytic:?}\nreference {reference:?}"
    );
}
