//! Scalar activations and their derivatives.
//!
//! At the kink `x = 0` both derivatives take the positive-branch value 1.

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
pub const DEFAULT_ELU_ALPHA: f64 = 1.0;

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
pub fn elu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

#[inline]
pub fn elu_grad(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}
