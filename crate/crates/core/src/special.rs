//! Scalar special functions for the standard normal distribution.

use std::f64::consts::{PI, SQRT_2};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `log N(x | mean, var)`.
pub fn log_gaussian(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + var.ln()) - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `log Φ(x)`, accurate far into the lower tail.
///
/// For `x < -5` the tail is evaluated as `log φ(x) + log R(-x)` where `R` is
/// the Mills ratio computed from its continued fraction, which avoids the
/// underflow of `erfc` for large negative arguments.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x >= -5.0 {
        if x > 8.0 {
            // log(1 - Φ(-x)) ≈ -Φ(-x)
            return -norm_cdf(-x);
        }
        norm_cdf(x).ln()
    } else {
        log_norm_pdf(x) + mills_ratio(-x).ln()
    }
}

/// `φ(x) / Φ(x)`, the derivative of `log Φ(x)`.
pub fn inverse_mills(x: f64) -> f64 {
    if x >= -5.0 {
        norm_pdf(x) / norm_cdf(x)
    } else {
        1.0 / mills_ratio(-x)
    }
}

/// Mills ratio `(1 - Φ(t)) / φ(t)` for `t >= 5`, by backward evaluation of
/// the continued fraction `1 / (t + 1 / (t + 2 / (t + 3 / (t + ...))))`.
fn mills_ratio(t: f64) -> f64 {
    debug_assert!(t >= 5.0);
    let mut acc = t;
    for k in (1..=80).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `log(exp(a_1) + ... + exp(a_n))` without overflow.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(1 + exp(x))` in the branch form `max(x, 0) + log(1 + exp(-|x|))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
