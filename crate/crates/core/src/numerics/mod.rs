//! Dense `f64` tensors with a recorded-operation tape for reverse-mode
//! differentiation.
//!
//! Every forward primitive checks its output for NaN/Inf and fails with
//! [`Error::NonFinite`](crate::Error::NonFinite) instead of propagating it.

mod grad_check;
mod tape;
mod tensor;

pub use grad_check::{central_difference, grad_check, GradCheck};
pub use tape::{Gradients, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

pub(crate) fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) * (0.5 * core::f64::consts::FRAC_2_SQRT_PI)
        * core::f64::consts::FRAC_1_SQRT_2;
    cdf + x * pdf
}
