//! Straight-through estimator for the binary child selectors.
//!
//! The forward pass thresholds: candidate `j` is selected iff `tau_j > 0`.
//! The backward pass pretends the threshold was a scaled sigmoid and uses its
//! derivative, so selector parameters receive a learning signal even though
//! the forward pass is piecewise constant.

/// Forward selector mask: `1(tau > 0)`. Exactly zero at `tau = 0`.
#[inline]
pub fn ste_mask(tau: f64) -> f64 {
    if tau > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Backward surrogate `β e^{-τ} / (1 + e^{-τ})²`: the derivative of
/// `sigmoid(τ)` scaled by `β`.
///
/// Evaluated through `e^{-|τ|}` so it underflows to zero at extreme `τ` of
/// either sign instead of overflowing; the function is even, peaks at
/// exactly `β/4` at `τ = 0`, and never exceeds that peak.
#[inline]
pub fn ste_surrogate_grad(tau: f64, beta: f64) -> f64 {
    let a = (-tau.abs()).exp();
    beta * a / ((1.0 + a) * (1.0 + a))
}
