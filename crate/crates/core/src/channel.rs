//! Uncorrelated flat Rayleigh fading: `Y = A·X + Z` with i.i.d. normalized
//! Rayleigh gains (`E[A²] = 1`).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Noise standard deviation per real dimension.
    pub sigma: f64,
    pub csi_at_rx: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelUse {
    pub y: Complex64,
    /// Realized gain, reported only when the receiver has CSI.
    pub gain: Option<f64>,
}

/// Deterministic random stream keyed by `(seed, stream)`.
///
/// Parallel workers use distinct stream ids so results do not depend on
/// scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Combines two indices (e.g. SNR point and frame) into a stream id.
pub fn stream_id(a: u64, b: u64) -> u64 {
    (a << 40) ^ b
}

/// Draws a normalized Rayleigh gain by inverting the CDF `1 − e^{−a²}`.
#[inline]
pub fn sample_gain<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    (-u.ln()).sqrt()
}

/// Sends one point through the channel. Complex noise is used when
/// `two_dimensional` is set.
#[inline]
pub fn transmit<R: Rng + ?Sized>(
    x: Complex64,
    params: &ChannelParams,
    two_dimensional: bool,
    rng: &mut R,
) -> ChannelUse {
    let a = sample_gain(rng);
    let zr: f64 = rng.sample(StandardNormal);
    let zi: f64 = if two_dimensional { rng.sample(StandardNormal) } else { 0.0 };
    let y = x * a + Complex64::new(zr, zi) * params.sigma;
    ChannelUse { y, gain: params.csi_at_rx.then_some(a) }
}
