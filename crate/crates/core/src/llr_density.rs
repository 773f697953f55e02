//! Densities of true and approximate LLRs on a quantized grid.
//!
//! Bit-channel densities are conditioned on the transmitted bit, then passed
//! through the channel adapter (`½[p(l|0) + p(−l|1)]`) so that the resulting
//! symmetric channel can be analysed under the all-zero codeword.

use num_complex::Complex64;
use rand::Rng;

use crate::approx_llr::{alpha_taylor_bpsk, cubic_inverse, taylor_bpsk_cubic, SymbolDemapper};
use crate::channel::{stream_rng, transmit, ChannelParams};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::exact_llr::{pam_cond_pdf, qam_cond_pdf};
use crate::numeric::gauss_legendre;
use crate::special::{ln_theta, SQRT_PI};

/// Uniform LLR grid with `2K + 1` bins centred on `iΔ`, `|i| ≤ K`,
/// `Δ = L_max / K`. The two end bins saturate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrGrid {
    pub half_bins: usize,
    pub l_max: f64,
}

impl LlrGrid {
    /// Grid for a `bits`-bit quantizer: `2^bits − 1` bins so that one bin is
    /// centred on zero.
    pub fn from_bits(bits: u32, l_max: f64) -> Self {
        Self { half_bins: (1usize << (bits - 1)) - 1, l_max }
    }

    pub fn len(&self) -> usize {
        2 * self.half_bins + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn delta(&self) -> f64 {
        self.l_max / self.half_bins as f64
    }

    pub fn center(&self, idx: usize) -> f64 {
        (idx as f64 - self.half_bins as f64) * self.delta()
    }

    /// Nearest bin, saturating at the ends.
    #[inline]
    pub fn index(&self, l: f64) -> usize {
        let k = self.half_bins as f64;
        ((l / self.delta()).round().clamp(-k, k) + k) as usize
    }
}

impl Default for LlrGrid {
    fn default() -> Self {
        Self::from_bits(11, 25.0)
    }
}

/// Probability mass per LLR bin.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDensity {
    pub grid: LlrGrid,
    pub mass: Vec<f64>,
}

impl QuantizedDensity {
    pub fn zeros(grid: LlrGrid) -> Self {
        Self { grid, mass: vec![0.0; grid.len()] }
    }

    /// All mass in the bin nearest to `l`.
    pub fn point(grid: LlrGrid, l: f64) -> Self {
        let mut d = Self::zeros(grid);
        d.mass[grid.index(l)] = 1.0;
        d
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(i, m)| m * self.grid.center(i)).sum::<f64>() / self.total()
    }

    /// Negative mass plus half of the zero bin.
    pub fn error_probability(&self) -> f64 {
        let k = self.grid.half_bins;
        self.mass[..k].iter().sum::<f64>() + 0.5 * self.mass[k]
    }

    pub fn normalize(&mut self) {
        let t = self.total();
        if t > 0.0 {
            self.mass.iter_mut().for_each(|m| *m /= t);
        }
    }

    /// Density of `−L`.
    pub fn flipped(&self) -> Self {
        let mut mass = self.mass.clone();
        mass.reverse();
        Self { grid: self.grid, mass }
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(0.5 * self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Equal-weight mixture.
    pub fn mixture(parts: &[QuantizedDensity]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let mut out = Self::zeros(first.grid);
        for p in parts {
            if p.grid != first.grid {
                return Err(Error::GridMismatch);
            }
            out.mass.iter_mut().zip(&p.mass).for_each(|(o, m)| *o += m / parts.len() as f64);
        }
        Ok(out)
    }

    /// Deposits `mass` spread uniformly over the LLR interval `[a, b]`,
    /// splitting it across the overlapped bins.
    pub fn deposit_interval(&mut self, mass: f64, a: f64, b: f64) {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let delta = self.grid.delta();
        let k = self.grid.half_bins as f64;
        let nb = self.grid.len();
        let ta = a / delta + k + 0.5;
        let tb = b / delta + k + 0.5;
        if tb - ta < 1e-9 {
            let j = ta.floor().clamp(0.0, (nb - 1) as f64) as usize;
            self.mass[j] += mass;
            return;
        }
        let density = mass / (tb - ta);
        let top = nb as f64;
        if ta < 0.0 {
            self.mass[0] += density * (tb.min(0.0) - ta);
        }
        if tb > top {
            self.mass[nb - 1] += density * (tb - ta.max(top));
        }
        let (lo, hi) = (ta.max(0.0), tb.min(top));
        if lo >= hi {
            return;
        }
        let (j0, j1) = (lo.floor() as usize, (hi.ceil() as usize).min(nb));
        for j in j0..j1 {
            let overlap = hi.min((j + 1) as f64) - lo.max(j as f64);
            if overlap > 0.0 {
                self.mass[j] += density * overlap;
            }
        }
    }

    /// Deposits `mass` at `l`, shared linearly between the two nearest bin
    /// centres so the mean is preserved.
    #[inline]
    pub fn deposit_linear(&mut self, mass: f64, l: f64) {
        let k = self.grid.half_bins as f64;
        let t = (l / self.grid.delta() + k).clamp(0.0, 2.0 * k);
        let j = (t.floor() as usize).min(self.grid.len() - 2);
        let frac = t - j as f64;
        self.mass[j] += mass * (1.0 - frac);
        self.mass[j + 1] += mass * frac;
    }
}

/// Channel adapter: `½[p(l | 0) + p(−l | 1)]`.
pub fn symmetrize(given0: &QuantizedDensity, given1: &QuantizedDensity) -> Result<QuantizedDensity> {
    if given0.grid != given1.grid {
        return Err(Error::GridMismatch);
    }
    let n = given0.mass.len();
    let mass = (0..n).map(|i| 0.5 * (given0.mass[i] + given1.mass[n - 1 - i])).collect();
    Ok(QuantizedDensity { grid: given0.grid, mass })
}

/// `p(y | X = +1)` for BPSK over the fading channel with unknown gain.
pub fn pdf_y_given_plus1(y: f64, sigma: f64) -> f64 {
    pam_cond_pdf(y, 1.0, sigma)
}

/// Density of `α_T·Y` given `X = +1`:
/// `σ²/(π σ̂) · e^{−σ² l²/(2π)} · Θ(l/(2√π))` with `σ̂² = 1 + 2σ²`.
pub fn pdf_llr_linear(l: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let sh = (1.0 + 2.0 * s2).sqrt();
    let ln = (s2 / (std::f64::consts::PI * sh)).ln() - s2 * l * l / (2.0 * std::f64::consts::PI)
        + ln_theta(l / (2.0 * SQRT_PI));
    ln.exp()
}

/// Density of `α_T Y + β_T Y³` given `X = +1`, by change of variables
/// through the closed-form cubic inverse.
pub fn pdf_llr_cubic(l: f64, sigma: f64) -> f64 {
    let (a, b) = taylor_bpsk_cubic(sigma);
    let y = cubic_inverse(l, a, b);
    pdf_y_given_plus1(y, sigma) / (a + 3.0 * b * y * y)
}

/// Quantizes the density of `g(Y)`, `Y ~ p(y|+1)`, for a strictly increasing
/// `g` given through its inverse. Each bin receives the exact `Y`-mass of its
/// preimage (8-point Gauss–Legendre per bin).
pub fn quantize_monotone_bpsk(g_inv: impl Fn(f64) -> f64, sigma: f64, grid: LlrGrid) -> QuantizedDensity {
    let (gx, gw) = gauss_legendre(8);
    let mass_between = |a: f64, b: f64| {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        gx.iter().zip(&gw).map(|(x, w)| w * h * pdf_y_given_plus1(c + h * x, sigma)).sum::<f64>()
    };
    let tail = |a: f64, b: f64| {
        let panels = 400;
        let w = (b - a) / panels as f64;
        (0..panels).map(|p| mass_between(a + p as f64 * w, a + (p + 1) as f64 * w)).sum::<f64>()
    };
    let reach = 14.0 * (1.0 + 2.0 * sigma * sigma).sqrt() + 14.0 * sigma;
    let mut d = QuantizedDensity::zeros(grid);
    let half = 0.5 * grid.delta();
    let n = grid.len();
    for (i, m) in d.mass.iter_mut().enumerate() {
        let (la, lb) = (grid.center(i) - half, grid.center(i) + half);
        *m = if i == 0 {
            let b = g_inv(lb);
            tail((-reach).min(b - 1.0), b)
        } else if i == n - 1 {
            let a = g_inv(la);
            tail(a, reach.max(a + 1.0))
        } else {
            mass_between(g_inv(la), g_inv(lb))
        };
    }
    d
}

/// Analytic density of the linear LLR `αY` (BPSK, unknown CSI).
pub fn bpsk_linear_density(alpha: f64, sigma: f64, grid: LlrGrid) -> QuantizedDensity {
    quantize_monotone_bpsk(|l| l / alpha, sigma, grid)
}

/// Analytic density of the cubic Taylor LLR (BPSK, unknown CSI).
pub fn bpsk_cubic_density(sigma: f64, grid: LlrGrid) -> QuantizedDensity {
    let (a, b) = taylor_bpsk_cubic(sigma);
    quantize_monotone_bpsk(|l| cubic_inverse(l, a, b), sigma, grid)
}

/// Analytic density of the first-order Taylor LLR `α_T Y`.
pub fn bpsk_taylor_linear_density(sigma: f64, grid: LlrGrid) -> QuantizedDensity {
    bpsk_linear_density(alpha_taylor_bpsk(sigma), sigma, grid)
}

/// How bit-channel densities are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensitySource {
    /// Deterministic mapping of a fine `y`-grid through the LLR function.
    Transform { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for DensitySource {
    fn default() -> Self {
        DensitySource::Transform { nodes: 1 << 16 }
    }
}

pub const MIN_MC_SAMPLES: usize = 100_000;

/// Adapter-symmetrized densities of all `m` bit channels. The conditioning
/// signal is uniform over the label subset of the transmitted bit value.
pub fn bit_channel_densities(
    c: &Constellation,
    demapper: &dyn SymbolDemapper,
    sigma: f64,
    grid: LlrGrid,
    source: DensitySource,
) -> Result<Vec<QuantizedDensity>> {
    if demapper.bits() != c.bits() {
        return Err(Error::InvalidParameter(format!(
            "demapper produces {} bits, constellation has {}",
            demapper.bits(),
            c.bits()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    match source {
        DensitySource::MonteCarlo { samples, seed } => monte_carlo(c, demapper, sigma, grid, samples, seed),
        DensitySource::Transform { nodes } if !c.is_two_dimensional() => transform_1d(c, demapper, sigma, grid, nodes),
        DensitySource::Transform { nodes } => {
            // same node budget per axis as sqrt of the 1-D count, but never coarser than 0.04
            let per_axis = ((nodes as f64).sqrt() as usize).max(64);
            transform_2d(c, demapper, sigma, grid, per_axis)
        }
    }
}

/// One adapter-symmetrized bit channel.
pub fn bit_channel_density(
    c: &Constellation,
    bit: usize,
    demapper: &dyn SymbolDemapper,
    sigma: f64,
    grid: LlrGrid,
    source: DensitySource,
) -> Result<QuantizedDensity> {
    c.check_bit(bit)?;
    Ok(bit_channel_densities(c, demapper, sigma, grid, source)?.swap_remove(bit - 1))
}

/// Channel density seen by the code under ideal interleaving: the equal
/// mixture of the bit-channel densities.
pub fn bicm_channel_density(
    c: &Constellation,
    demapper: &dyn SymbolDemapper,
    sigma: f64,
    grid: LlrGrid,
    source: DensitySource,
) -> Result<QuantizedDensity> {
    QuantizedDensity::mixture(&bit_channel_densities(c, demapper, sigma, grid, source)?)
}

fn y_extent(c: &Constellation, sigma: f64) -> f64 {
    let e_max = c.points().iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
    // the widest conditional density decays like exp(−y²/(|x|² + 2σ²))
    (32.0 * (e_max + 2.0 * sigma * sigma)).sqrt() + 6.0 * sigma
}

/// Per-bit accumulators `[bit][value]`.
fn new_accumulators(c: &Constellation, grid: LlrGrid) -> Vec<[QuantizedDensity; 2]> {
    (0..c.bits()).map(|_| [QuantizedDensity::zeros(grid), QuantizedDensity::zeros(grid)]).collect()
}

fn finish(c: &Constellation, acc: Vec<[QuantizedDensity; 2]>) -> Result<Vec<QuantizedDensity>> {
    acc.into_iter()
        .map(|[mut d0, mut d1]| {
            d0.normalize();
            d1.normalize();
            let mut s = symmetrize(&d0, &d1)?;
            s.normalize();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| {
            debug_assert_eq!(v.len(), c.bits());
            v
        })
}

fn transform_1d(
    c: &Constellation,
    demapper: &dyn SymbolDemapper,
    sigma: f64,
    grid: LlrGrid,
    nodes: usize,
) -> Result<Vec<QuantizedDensity>> {
    let m = c.bits();
    let r = y_extent(c, sigma);
    let h = 2.0 * r / (nodes - 1) as f64;
    let points: Vec<f64> = c.points().iter().map(|p| p.re).collect();
    // weight of each point in the bit-value conditional mixtures
    let weights: Vec<Vec<[f64; 2]>> = (1..=m)
        .map(|bit| {
            let n0 = c.subset_indices(bit, 0).unwrap().len() as f64;
            let n1 = c.subset_indices(bit, 1).unwrap().len() as f64;
            (0..c.len())
                .map(|p| if c.bit_of(p, bit) == 0 { [1.0 / n0, 0.0] } else { [0.0, 1.0 / n1] })
                .collect()
        })
        .collect();
    let mut acc = new_accumulators(c, grid);
    let eval = |y: f64, pdf: &mut [f64], llr: &mut [f64]| {
        for (o, &x) in pdf.iter_mut().zip(&points) {
            *o = pam_cond_pdf(y, x, sigma);
        }
        demapper.demap(Complex64::new(y, 0.0), llr);
    };
    let mut pdf_a = vec![0.0; c.len()];
    let mut pdf_b = vec![0.0; c.len()];
    let mut llr_a = vec![0.0; m];
    let mut llr_b = vec![0.0; m];
    eval(-r, &mut pdf_a, &mut llr_a);
    let jump = 50.0 * grid.delta();
    for k in 1..nodes {
        let y = -r + k as f64 * h;
        eval(y, &mut pdf_b, &mut llr_b);
        for bit in 0..m {
            let w = &weights[bit];
            let (mut m0, mut m1) = (0.0, 0.0);
            for p in 0..c.len() {
                let cell = 0.5 * h * (pdf_a[p] + pdf_b[p]);
                m0 += w[p][0] * cell;
                m1 += w[p][1] * cell;
            }
            let (la, lb) = (llr_a[bit], llr_b[bit]);
            for (v, mass) in [(0usize, m0), (1usize, m1)] {
                if mass == 0.0 {
                    continue;
                }
                if (lb - la).abs() > jump {
                    // discontinuous approximation: do not smear across the jump
                    acc[bit][v].deposit_linear(0.5 * mass, la);
                    acc[bit][v].deposit_linear(0.5 * mass, lb);
                } else {
                    acc[bit][v].deposit_interval(mass, la, lb);
                }
            }
        }
        std::mem::swap(&mut pdf_a, &mut pdf_b);
        std::mem::swap(&mut llr_a, &mut llr_b);
    }
    finish(c, acc)
}

fn transform_2d(
    c: &Constellation,
    demapper: &dyn SymbolDemapper,
    sigma: f64,
    grid: LlrGrid,
    per_axis: usize,
) -> Result<Vec<QuantizedDensity>> {
    let m = c.bits();
    let r = y_extent(c, sigma) / std::f64::consts::SQRT_2 + 2.0;
    let h = (2.0 * r / per_axis as f64).min(0.04);
    let n = (2.0 * r / h).ceil() as usize;
    let points = c.points().to_vec();
    let bit_of: Vec<Vec<u8>> = (1..=m).map(|bit| (0..c.len()).map(|p| c.bit_of(p, bit)).collect()).collect();
    let mut acc = new_accumulators(c, grid);
    let mut llr = vec![0.0; m];
    let mut pdf = vec![0.0; c.len()];
    for a in 0..n {
        let yr = -r + (a as f64 + 0.5) * h;
        for b in 0..n {
            let y = Complex64::new(yr, -r + (b as f64 + 0.5) * h);
            let mut any = false;
            for (o, &x) in pdf.iter_mut().zip(&points) {
                *o = qam_cond_pdf(y, x, sigma);
                any |= *o > 1e-300;
            }
            if !any {
                continue;
            }
            demapper.demap(y, &mut llr);
            for bit in 0..m {
                let (mut m0, mut m1) = (0.0, 0.0);
                for (p, &v) in pdf.iter().zip(&bit_of[bit]) {
                    if v == 0 {
                        m0 += p;
                    } else {
                        m1 += p;
                    }
                }
                acc[bit][0].deposit_linear(m0, llr[bit]);
                acc[bit][1].deposit_linear(m1, llr[bit]);
            }
        }
    }
    finish(c, acc)
}

fn monte_carlo(
    c: &Constellation,
    demapper: &dyn SymbolDemapper,
    sigma: f64,
    grid: LlrGrid,
    samples: usize,
    seed: u64,
) -> Result<Vec<QuantizedDensity>> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::TooFewSamples(samples));
    }
    let m = c.bits();
    let params = ChannelParams { sigma, csi_at_rx: false };
    let mut rng = stream_rng(seed, 0);
    let mut acc = new_accumulators(c, grid);
    let mut llr = vec![0.0; m];
    for _ in 0..samples {
        let p = rng.random_range(0..c.len());
        let u = transmit(c.points()[p], &params, c.is_two_dimensional(), &mut rng);
        demapper.demap(u.y, &mut llr);
        for bit in 0..m {
            let v = c.bit_of(p, bit + 1) as usize;
            let d = &mut acc[bit][v];
            d.mass[grid.index(llr[bit])] += 1.0;
        }
    }
    finish(c, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx_llr::ApproxLlr;
    use crate::constellation::{snr_to_sigma, ConstellationKind, SnrSpec};
    use crate::exact_llr::{Csi, ExactDemapper};
    use crate::numeric::adaptive_gauss_kronrod;
    use proptest::prelude::*;

    fn ks_against(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                ((i + 1) as f64 / n - f).abs().max((i as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    /// CDF by cumulative trapezoid on a fine grid, then linear interpolation.
    fn tabulated_cdf(pdf: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> impl Fn(f64) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut cdf = vec![0.0; n + 1];
        let mut prev = pdf(lo);
        for k in 1..=n {
            let cur = pdf(lo + k as f64 * h);
            cdf[k] = cdf[k - 1] + 0.5 * h * (prev + cur);
            prev = cur;
        }
        move |x: f64| {
            let t = ((x - lo) / h).clamp(0.0, n as f64 - 1e-9);
            let k = t.floor() as usize;
            cdf[k] + (t - k as f64) * (cdf[k + 1] - cdf[k])
        }
    }

    fn faded_bpsk_samples(sigma: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let p = ChannelParams { sigma, csi_at_rx: false };
        (0..n).map(|_| transmit(Complex64::new(1.0, 0.0), &p, false, &mut rng).y.re).collect()
    }

    #[test]
    fn grid_geometry() {
        let g = LlrGrid::default();
        assert_eq!(g.len(), 2047);
        assert_eq!(g.center(g.half_bins), 0.0);
        assert!((g.center(g.len() - 1) - 25.0).abs() < 1e-12);
        assert_eq!(g.index(1e6), g.len() - 1);
        assert_eq!(g.index(-1e6), 0);
        assert_eq!(g.index(0.0), g.half_bins);
    }

    #[test]
    fn y_pdf_normalizes_and_has_gaussian_left_tail() {
        let s = 0.6449;
        let (v, _) = adaptive_gauss_kronrod(&|y| pdf_y_given_plus1(y, s), -30.0, 30.0, 1e-12, 0.0);
        assert!((v - 1.0).abs() < 1e-6);
        let ratio = crate::exact_llr::ln_pam_cond_pdf(-80.0, 1.0, s) / (-(80.0f64 * 80.0) / (2.0 * s * s));
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn y_pdf_matches_samples() {
        let s = 0.6449;
        let mut v = faded_bpsk_samples(s, 1_000_000, 11);
        let cdf = tabulated_cdf(|y| pdf_y_given_plus1(y, s), -10.0, 10.0, 200_000);
        assert!(ks_against(&mut v, cdf) < 0.01);
    }

    #[test]
    fn linear_llr_pdf() {
        let s = 0.6449;
        let a = alpha_taylor_bpsk(s);
        for k in 0..50 {
            let l = -20.0 + 0.8 * k as f64;
            let cov = pdf_y_given_plus1(l / a, s) / a;
            assert!((pdf_llr_linear(l, s) - cov).abs() < 1e-8);
        }
        let (v, _) = adaptive_gauss_kronrod(&|l| pdf_llr_linear(l, s), -60.0, 80.0, 1e-12, 0.0);
        assert!((v - 1.0).abs() < 1e-6);
        let mut x: Vec<f64> = faded_bpsk_samples(s, 1_000_000, 12).iter().map(|y| a * y).collect();
        let cdf = tabulated_cdf(|l| pdf_llr_linear(l, s), -40.0, 60.0, 200_000);
        assert!(ks_against(&mut x, cdf) < 0.01);
    }

    #[test]
    fn cubic_llr_pdf() {
        let s = 0.6449;
        let (a, b) = taylor_bpsk_cubic(s);
        let f = |l: f64| pdf_llr_cubic(l, s);
        let (v1, _) = adaptive_gauss_kronrod(&f, -400.0, 0.0, 1e-12, 0.0);
        let (v2, _) = adaptive_gauss_kronrod(&f, 0.0, 3000.0, 1e-12, 0.0);
        assert!((v1 + v2 - 1.0).abs() < 1e-6, "{}", v1 + v2);
        let mut x: Vec<f64> = faded_bpsk_samples(s, 1_000_000, 13).iter().map(|y| a * y + b * y * y * y).collect();
        let cdf = tabulated_cdf(f, -200.0, 600.0, 800_000);
        assert!(ks_against(&mut x, cdf) < 0.01);
    }

    #[test]
    fn analytic_quantization_conserves_mass() {
        let g = LlrGrid::default();
        for d in [bpsk_taylor_linear_density(0.6449, g), bpsk_cubic_density(0.6449, LlrGrid::from_bits(11, 35.0))] {
            assert!((d.total() - 1.0).abs() < 1e-10, "{}", d.total());
            assert!(d.mass.iter().all(|&m| m >= 0.0));
        }
    }

    #[test]
    fn transform_matches_analytic_linear() {
        let s = 0.6449;
        let g = LlrGrid::default();
        let c = Constellation::new(ConstellationKind::Bpsk);
        let approx = ApproxLlr::taylor_bpsk_linear(s);
        let num = bit_channel_density(&c, 1, &approx, s, g, DensitySource::default()).unwrap();
        let ana = bpsk_taylor_linear_density(s, g);
        assert!(num.total_variation(&ana).unwrap() < 1e-3);
        assert!((num.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_examples() {
        let g = LlrGrid::default();
        let d = symmetrize(&QuantizedDensity::point(g, 2.0), &QuantizedDensity::point(g, -2.0)).unwrap();
        assert_eq!(d, QuantizedDensity::point(g, 2.0));
        let b = bpsk_taylor_linear_density(0.7, g);
        let s = symmetrize(&b, &b.flipped()).unwrap();
        assert!(s.total_variation(&b).unwrap() < 1e-15);
        let other = QuantizedDensity::zeros(LlrGrid::from_bits(10, 25.0));
        assert!(symmetrize(&b, &other).is_err());
    }

    fn check_consistency(d: &QuantizedDensity) {
        let g = d.grid;
        let k = g.half_bins;
        let mut checked = 0;
        for i in 1..k {
            let l = g.center(k + i);
            if l > 10.0 || d.mass[k + i] < 1e-7 || d.mass[k - i] < 1e-9 {
                continue;
            }
            let ratio = d.mass[k - i] / d.mass[k + i];
            assert!((ratio / (-l).exp() - 1.0).abs() < 0.02, "l={l}: {ratio} vs {}", (-l).exp());
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn exact_densities_are_consistent() {
        let g = LlrGrid::default();
        let pam = Constellation::new(ConstellationKind::Pam8);
        let s = snr_to_sigma(&pam, SnrSpec::es_n0(7.91)).unwrap();
        let d = ExactDemapper::new(&pam, s, Csi::Unknown);
        let dens = bit_channel_densities(&pam, &d, s, g, DensitySource::default()).unwrap();
        for b in &dens {
            assert!(b.mean() > 0.0);
            check_consistency(b);
        }
        let bpsk = Constellation::new(ConstellationKind::Bpsk);
        let d = ExactDemapper::new(&bpsk, 0.6449, Csi::Unknown);
        check_consistency(&bit_channel_density(&bpsk, 1, &d, 0.6449, g, DensitySource::default()).unwrap());
    }

    #[test]
    fn qam_transform_is_consistent_and_close_to_monte_carlo() {
        let g = LlrGrid::default();
        let qam = Constellation::new(ConstellationKind::Qam16);
        let s = snr_to_sigma(&qam, SnrSpec::es_n0(4.89)).unwrap();
        let d = ExactDemapper::new(&qam, s, Csi::Unknown);
        let t = bit_channel_densities(&qam, &d, s, g, DensitySource::default()).unwrap();
        let mc = bit_channel_densities(&qam, &d, s, g, DensitySource::MonteCarlo { samples: 400_000, seed: 3 }).unwrap();
        for (a, b) in t.iter().zip(&mc) {
            check_consistency(a);
            assert!((a.error_probability() - b.error_probability()).abs() < 3e-3);
            assert!((a.mean() - b.mean()).abs() < 0.05 * a.mean());
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let c = Constellation::new(ConstellationKind::Bpsk);
        let d = ExactDemapper::new(&c, 0.7, Csi::Unknown);
        let r = bit_channel_densities(&c, &d, 0.7, LlrGrid::default(), DensitySource::MonteCarlo { samples: 10, seed: 0 });
        assert!(matches!(r, Err(Error::TooFewSamples(10))));
    }

    #[test]
    fn larger_l_max_only_releases_saturated_mass() {
        let s = 0.5;
        let a = bpsk_cubic_density(s, LlrGrid::from_bits(11, 25.0));
        let b = bpsk_cubic_density(s, LlrGrid::from_bits(11, 35.0));
        let sat_a = a.mass[a.mass.len() - 1] + a.mass[0];
        let inner = |d: &QuantizedDensity, lim: f64| {
            d.mass.iter().enumerate().filter(|(i, _)| d.grid.center(*i).abs() < lim).map(|(_, m)| m).sum::<f64>()
        };
        assert!(inner(&b, 24.0) + 1e-9 >= inner(&a, 24.0) - sat_a);
    }

    proptest! {
        #[test]
        fn deposit_interval_conserves_mass(a in -40.0f64..40.0, w in 0.0f64..10.0, m in 0.0f64..1.0) {
            let mut d = QuantizedDensity::zeros(LlrGrid::default());
            d.deposit_interval(m, a, a + w);
            prop_assert!((d.total() - m).abs() < 1e-12);
            prop_assert!(d.mass.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn deposit_linear_preserves_mean(l in -24.0f64..24.0) {
            let mut d = QuantizedDensity::zeros(LlrGrid::default());
            d.deposit_linear(1.0, l);
            prop_assert!((d.mean() - l).abs() < 1e-9);
        }
    }
}
