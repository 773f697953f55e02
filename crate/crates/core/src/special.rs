//! Special functions for the fading-channel densities.
//!
//! The unknown-CSI likelihoods are built from
//! `Φ(z) = 1 + √π z e^{z²} erfc(−z)` and `Θ(z) = e^{−z²} Φ(z)`.
//! Both overflow or cancel badly in direct form, so everything here works
//! with logarithms.

use std::f64::consts::PI;

pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Scaled complementary error function `e^{x²} erfc(x)` for `x >= 0`.
///
/// Uses the product form below 6 and the asymptotic expansion above, where
/// `erfc` alone would start losing relative precision.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 6.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // Continued fraction: erfcx(x) = (1/√π) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let mut f = x;
        for k in (1..=60).rev() {
            f = x + (k as f64 * 0.5) / f;
        }
        1.0 / (SQRT_PI * f)
    }
}

/// `Φ(−x)` for `x >= 6`, from the Laplace expansion of
/// `∫₀^∞ 2t e^{−t²−2xt} dt`.
fn phi_negative_tail(x: f64) -> f64 {
    let inv = 1.0 / (2.0 * x * x);
    // term_k = (-1)^k (2k+1)!/k! * 2/(2x)^{2k+2}
    let mut term = inv; // k = 0: 2/(4x²)
    let mut sum = term;
    for k in 0..200 {
        let next = -term * (2 * k + 3) as f64 * inv;
        if next.abs() >= term.abs() || next.abs() < 1e-18 * sum.abs() {
            break;
        }
        sum += next;
        term = next;
    }
    sum
}

/// `ln Φ(z)`, finite for every finite `z`.
pub fn ln_phi(z: f64) -> f64 {
    if z >= 0.0 {
        if z < 5.0 {
            (SQRT_PI * z * (z * z).exp() * libm::erfc(-z)).ln_1p()
        } else {
            z * z + (SQRT_PI * z * libm::erfc(-z) + (-z * z).exp()).ln()
        }
    } else {
        let x = -z;
        if x < 6.0 {
            (1.0 - SQRT_PI * x * erfcx(x)).ln()
        } else {
            phi_negative_tail(x).ln()
        }
    }
}

/// `Φ(z)` itself. Overflows to infinity beyond `z ≈ 26.6`; use [`ln_phi`]
/// where the magnitude matters.
pub fn phi(z: f64) -> f64 {
    ln_phi(z).exp()
}

/// `ln Θ(z)` with `Θ(z) = e^{−z²} + √π z erfc(−z)`.
pub fn ln_theta(z: f64) -> f64 {
    ln_phi(z) - z * z
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// `ln Σ e^{v}` over a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln` of the Gaussian density with standard deviation `sigma`.
#[inline]
pub fn ln_gauss(x: f64, sigma: f64) -> f64 {
    -0.5 * (x / sigma).powi(2) - (sigma * (2.0 * PI).sqrt()).ln()
}
