//! True channel LLRs for known and unknown CSI.
//!
//! Conditional densities averaged over the Rayleigh gain are evaluated in
//! log form through [`ln_theta`]; bit LLRs are log-sum-exp ratios over the
//! label subsets.

use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::special::{ln_phi, ln_theta, SQRT_PI};

pub use crate::special::phi as phi_stable;

/// BPSK LLR with the gain known at the receiver.
#[inline]
pub fn llr_bpsk_known_csi(y: f64, a: f64, sigma: f64) -> f64 {
    2.0 * a * y / (sigma * sigma)
}

/// BPSK LLR without CSI: `ln Φ(u) − ln Φ(−u)`, `u = y / √(2σ²(1+2σ²))`.
#[inline]
pub fn llr_bpsk_unknown_csi(y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let u = y / (2.0 * s2 * (1.0 + 2.0 * s2)).sqrt();
    ln_phi(u) - ln_phi(-u)
}

/// `ln p(y | x)` for a real constellation point, gain averaged out.
pub fn ln_pam_cond_pdf(y: f64, x: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let sh2 = x * x + 2.0 * s2;
    let w = x * y / (std::f64::consts::SQRT_2 * sigma * sh2.sqrt());
    (std::f64::consts::SQRT_2 * sigma / (SQRT_PI * sh2)).ln() - y * y / sh2 + ln_theta(w)
}

pub fn pam_cond_pdf(y: f64, x: f64, sigma: f64) -> f64 {
    ln_pam_cond_pdf(y, x, sigma).exp()
}

/// `ln p(y | x)` for a complex point with per-dimension noise variance σ².
pub fn ln_qam_cond_pdf(y: Complex64, x: Complex64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let sh2 = x.norm_sqr() + 2.0 * s2;
    let cross = x.re * y.im - x.im * y.re;
    let w = (x.re * y.re + x.im * y.im) / (std::f64::consts::SQRT_2 * sigma * sh2.sqrt());
    -(std::f64::consts::PI * sh2).ln() - (cross * cross + 2.0 * s2 * y.norm_sqr()) / (2.0 * s2 * sh2)
        + ln_theta(w)
}

pub fn qam_cond_pdf(y: Complex64, x: Complex64, sigma: f64) -> f64 {
    ln_qam_cond_pdf(y, x, sigma).exp()
}

/// Channel-state knowledge for an LLR evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Csi {
    Unknown,
    Known(f64),
}

#[derive(Debug, Clone)]
pub struct LlrQuery<'a> {
    pub constellation: &'a Constellation,
    /// 1-based bit index.
    pub bit: usize,
    pub sigma: f64,
    pub y: Complex64,
    pub csi: Csi,
}

/// LLR of one bit of one channel use.
pub fn bit_llr(q: &LlrQuery<'_>) -> Result<f64> {
    q.constellation.check_bit(q.bit)?;
    if !(q.sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {} must be positive", q.sigma)));
    }
    let d = ExactDemapper::new(q.constellation, q.sigma, q.csi);
    let mut lnp = vec![0.0; q.constellation.len()];
    d.ln_likelihoods(q.y, &mut lnp);
    Ok(d.bit_llr_from_likelihoods(&lnp, q.bit))
}

#[derive(Debug, Clone, Copy)]
struct PointTerms {
    x: Complex64,
    sh2: f64,
    w_scale: f64,
    ln_const: f64,
}

/// Demapper computing exact bit LLRs for every bit of a symbol.
#[derive(Debug, Clone)]
pub struct ExactDemapper {
    constellation: Constellation,
    sigma: f64,
    csi: Csi,
    terms: Vec<PointTerms>,
    zeros: Vec<Vec<usize>>,
    ones: Vec<Vec<usize>>,
}

impl ExactDemapper {
    pub fn new(constellation: &Constellation, sigma: f64, csi: Csi) -> Self {
        let two_d = constellation.is_two_dimensional();
        let s2 = sigma * sigma;
        let terms = constellation
            .points()
            .iter()
            .map(|&x| {
                let sh2 = x.norm_sqr() + 2.0 * s2;
                let ln_const = if two_d {
                    -(std::f64::consts::PI * sh2).ln()
                } else {
                    (std::f64::consts::SQRT_2 * sigma / (SQRT_PI * sh2)).ln()
                };
                PointTerms {
                    x,
                    sh2,
                    w_scale: 1.0 / (std::f64::consts::SQRT_2 * sigma * sh2.sqrt()),
                    ln_const,
                }
            })
            .collect();
        let m = constellation.bits();
        let zeros = (1..=m).map(|i| constellation.subset_indices(i, 0).unwrap()).collect();
        let ones = (1..=m).map(|i| constellation.subset_indices(i, 1).unwrap()).collect();
        Self { constellation: constellation.clone(), sigma, csi, terms, zeros, ones }
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `ln p(y | x)` for every point, up to a common additive constant.
    pub fn ln_likelihoods(&self, y: Complex64, out: &mut [f64]) {
        let s2 = self.sigma * self.sigma;
        match self.csi {
            Csi::Known(a) => {
                for (o, t) in out.iter_mut().zip(&self.terms) {
                    *o = -(y - t.x * a).norm_sqr() / (2.0 * s2);
                }
            }
            Csi::Unknown if self.constellation.is_two_dimensional() => {
                let y2 = y.norm_sqr();
                for (o, t) in out.iter_mut().zip(&self.terms) {
                    let cross = t.x.re * y.im - t.x.im * y.re;
                    let w = (t.x.re * y.re + t.x.im * y.im) * t.w_scale;
                    *o = t.ln_const - (cross * cross + 2.0 * s2 * y2) / (2.0 * s2 * t.sh2) + ln_theta(w);
                }
            }
            Csi::Unknown => {
                let yr = y.re;
                for (o, t) in out.iter_mut().zip(&self.terms) {
                    let w = t.x.re * yr * t.w_scale;
                    *o = t.ln_const - yr * yr / t.sh2 + ln_theta(w);
                }
            }
        }
    }

    /// Bit LLR from precomputed log-likelihoods.
    #[inline]
    pub fn bit_llr_from_likelihoods(&self, lnp: &[f64], bit: usize) -> f64 {
        lse_subset(lnp, &self.zeros[bit - 1]) - lse_subset(lnp, &self.ones[bit - 1])
    }

    /// All `m` bit LLRs for channel output `y`.
    pub fn demap(&self, y: Complex64, out: &mut [f64]) {
        let mut lnp = [0.0f64; 16];
        let n = self.terms.len();
        self.ln_likelihoods(y, &mut lnp[..n]);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.bit_llr_from_likelihoods(&lnp[..n], i + 1);
        }
    }

    pub fn bit(&self, y: Complex64, bit: usize) -> f64 {
        let mut lnp = [0.0f64; 16];
        let n = self.terms.len();
        self.ln_likelihoods(y, &mut lnp[..n]);
        self.bit_llr_from_likelihoods(&lnp[..n], bit)
    }
}

#[inline]
fn lse_subset(lnp: &[f64], idx: &[usize]) -> f64 {
    let m = idx.iter().map(|&i| lnp[i]).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + idx.iter().map(|&i| (lnp[i] - m).exp()).sum::<f64>().ln()
}
