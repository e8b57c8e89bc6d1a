//! Special functions used by the density layer.

use std::f64::consts::{LN_2, PI};

/// Above this argument `log I0` switches from the power series to the
/// large-argument expansion.
pub const BESSEL_ASYMPTOTIC_THRESHOLD: f64 = 700.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the modified Bessel function of the first kind, order zero.
///
/// Power series for `|x| <= 700` (summed with an `e^{-x}` scale when the
/// terms get large), and the Hankel expansion
/// `x - ½ log(2πx) + log(1 + 1/(8x) + 9/(128x²) + ...)` beyond that, so the
/// result never overflows.
pub fn log_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    if x > BESSEL_ASYMPTOTIC_THRESHOLD {
        return log_i0_asymptotic(x);
    }
    if x < 20.0 {
        log_i0_series(x)
    } else {
        log_i0_scaled_series(x)
    }
}

fn log_i0_series(x: f64) -> f64 {
    // I0(x) - 1 = sum_{j>=1} (x²/4)^j / (j!)²
    let quarter_sq = 0.25 * x * x;
    let mut term = 1.0;
    let mut rest = 0.0;
    let mut j = 1.0;
    loop {
        term *= quarter_sq / (j * j);
        rest += term;
        if term <= rest * 1e-17 {
            break;
        }
        j += 1.0;
    }
    rest.ln_1p()
}

fn log_i0_scaled_series(x: f64) -> f64 {
    // e^{-x} I0(x), terms rise until j ~ x/2 and then fall off
    let quarter_sq = 0.25 * x * x;
    let peak = 0.5 * x;
    let mut term = (-x).exp();
    let mut sum = term;
    let mut j = 1.0;
    loop {
        term *= quarter_sq / (j * j);
        sum += term;
        if j > peak && term <= sum * 1e-17 {
            break;
        }
        j += 1.0;
    }
    x + sum.ln()
}

fn log_i0_asymptotic(x: f64) -> f64 {
    // c_k = ((2k-1)!!)² / (k! 8^k)
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..30 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= odd * odd / (8.0 * kf * x);
        series += term;
        if term < 1e-18 {
            break;
        }
    }
    x - 0.5 * (2.0 * PI * x).ln() + series.ln()
}

/// `log Φ(z)` for the standard normal CDF, accurate in both tails.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z > 5.0 {
        // Φ(z) = 1 - ½ erfc(z/√2)
        return (-0.5 * libm::erfc(z / std::f64::consts::SQRT_2)).ln_1p();
    }
    if z > -30.0 {
        return (0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)).ln();
    }
    // Mills-ratio expansion: Φ(z) ≈ φ(z)/|z| · (1 - 1/z² + 3/z⁴ - 15/z⁶ + 105/z⁸)
    let z2 = z * z;
    let inv = 1.0 / z2;
    let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
    -0.5 * z2 - HALF_LN_2PI - (-z).ln() + series.ln()
}

/// `log Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `log Σ exp(v_i)`; returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(2)`, re-exported for the chi-square density.
pub(crate) const LOG_TWO: f64 = LN_2;
