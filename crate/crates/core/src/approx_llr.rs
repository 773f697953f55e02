//! LLR approximations: scaled linear LLRs for BPSK, closed-form Taylor
//! expansions of the BPSK unknown-CSI LLR, and root-centred piece-wise
//! Taylor fits for PAM (1-D) and QAM (2-D) bit channels.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::constellation::{Constellation, ConstellationKind};
use crate::error::{Error, Result};
use crate::exact_llr::{pam_cond_pdf, Csi, ExactDemapper};
use crate::numeric::{bisect, brent_maximize, CompositeRule};
use crate::special::SQRT_PI;

/// Anything that turns one channel output into `m` bit LLRs.
pub trait SymbolDemapper: Sync {
    fn bits(&self) -> usize;
    fn demap(&self, y: Complex64, out: &mut [f64]);
}

impl SymbolDemapper for ExactDemapper {
    fn bits(&self) -> usize {
        self.constellation().bits()
    }

    fn demap(&self, y: Complex64, out: &mut [f64]) {
        ExactDemapper::demap(self, y, out)
    }
}

/// Linear scaling proposed for Rayleigh fading with unknown gain:
/// `α_A = 2·E[A]/σ² = √π/σ²`.
pub fn alpha_hou(sigma: f64) -> f64 {
    SQRT_PI / (sigma * sigma)
}

/// Slope of the unknown-CSI BPSK LLR at the origin.
pub fn alpha_taylor_bpsk(sigma: f64) -> f64 {
    (2.0 * std::f64::consts::PI / (1.0 + 2.0 * sigma * sigma)).sqrt() / sigma
}

/// First and third-order Taylor coefficients `(α_T, β_T)` of the BPSK
/// unknown-CSI LLR at the origin; `β_T` multiplies `y³` directly.
pub fn taylor_bpsk_cubic(sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let beta = (2.0 * std::f64::consts::PI).sqrt() * (std::f64::consts::PI - 3.0)
        / (6.0 * (1.0 + 2.0 * s2).powf(1.5) * s2 * sigma);
    (alpha_taylor_bpsk(sigma), beta)
}

/// Real inverse of `g(y) = αy + βy³` for `α, β > 0`.
///
/// Cardano's form is evaluated at `|l|` (where it has no cancellation in the
/// radicand) and reflected; one Newton step removes the remaining rounding.
pub fn cubic_inverse(l: f64, alpha: f64, beta: f64) -> f64 {
    if l == 0.0 {
        return 0.0;
    }
    let a = l.abs();
    let phi = (12.0 * beta * beta * (9.0 * a + (12.0 * alpha.powi(3) / beta + 81.0 * a * a).sqrt())).cbrt();
    let mut y = phi / (6.0 * beta) - 2.0 * alpha / phi;
    y -= (alpha * y + beta * y * y * y - a) / (alpha + 3.0 * beta * y * y);
    y.copysign(l)
}

/// `log₂(1 + e^{−t})` without overflow.
#[inline]
fn log2_1p_exp_neg(t: f64) -> f64 {
    ((-t.abs()).exp().ln_1p() + (-t).max(0.0)) / std::f64::consts::LN_2
}

/// `J(α) = 1 − E[log₂(1 + e^{−αY})]` for BPSK with `X = +1`, the capacity of
/// the binary channel seen by a decoder fed with `αY`.
pub fn linear_llr_capacity(alpha: f64, sigma: f64) -> f64 {
    let rule = capacity_rule(sigma);
    1.0 - rule.integrate(|y| log2_1p_exp_neg(alpha * y) * pam_cond_pdf(y, 1.0, sigma))
}

fn capacity_rule(sigma: f64) -> CompositeRule {
    let lo = -1.0 - 14.0 * sigma;
    let hi = 10.0 * (1.0 + 2.0 * sigma * sigma).sqrt();
    CompositeRule::new(lo, hi, 400, 8)
}

/// Capacity-maximizing linear scaling `α_Ĉ`.
pub fn fit_optimized_linear(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    let rule = capacity_rule(sigma);
    let weights: Vec<(f64, f64)> =
        rule.points.iter().zip(&rule.weights).map(|(&y, &w)| (y, w * pam_cond_pdf(y, 1.0, sigma))).collect();
    let j = |alpha: f64| 1.0 - weights.iter().map(|&(y, w)| w * log2_1p_exp_neg(alpha * y)).sum::<f64>();
    let hi = 4.0 * alpha_hou(sigma).max(alpha_taylor_bpsk(sigma));
    let best = brent_maximize(j, 0.0, hi, 1e-10, 500)?;
    let h = 1e-3 * best.x.max(1e-3);
    let curvature = j(best.x + h) - 2.0 * best.value + j(best.x - h);
    if !(curvature < 0.0) || best.x >= hi * 0.999 {
        return Err(Error::NoConvergence { iterations: best.iterations, lo: 0.0, hi });
    }
    Ok(best.x)
}

/// Sorted roots of `f` on `[lo, hi]`, found by a sign scan on `steps`
/// intervals refined by bisection.
pub fn find_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    const TINY: f64 = 1e-12;
    let h = (hi - lo) / steps as f64;
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    if f0.abs() < TINY {
        roots.push(x0);
    }
    for k in 1..=steps {
        let x1 = lo + k as f64 * h;
        let f1 = f(x1);
        if f1.abs() < TINY {
            roots.push(x1);
        } else if f0.abs() >= TINY && (f0 < 0.0) != (f1 < 0.0) {
            roots.push(bisect(&f, x0, x1, 1e-13));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// Roots of the exact bit-`bit` LLR along the real axis (1-D constellations)
/// or along `axis` with the other coordinate at zero (2-D).
pub fn find_llr_roots(c: &Constellation, bit: usize, sigma: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    find_llr_roots_on_axis(c, bit, sigma, Axis::Re, lo, hi)
}

pub fn find_llr_roots_on_axis(
    c: &Constellation,
    bit: usize,
    sigma: f64,
    axis: Axis,
    lo: f64,
    hi: f64,
) -> Result<Vec<f64>> {
    c.check_bit(bit)?;
    let d = ExactDemapper::new(c, sigma, Csi::Unknown);
    let steps = (((hi - lo) / 0.01).ceil() as usize).max(16);
    Ok(find_roots(|t| d.bit(axis.point(t), bit), lo, hi, steps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Re,
    Im,
}

impl Axis {
    fn point(self, t: f64) -> Complex64 {
        match self {
            Axis::Re => Complex64::new(t, 0.0),
            Axis::Im => Complex64::new(0.0, t),
        }
    }
}

const D1: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
const D2: [f64; 7] = [1.0 / 90.0, -3.0 / 20.0, 3.0 / 2.0, -49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
const D3: [f64; 7] = [1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0];

fn stencil(order: usize) -> [f64; 7] {
    match order {
        0 => [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        1 => D1,
        2 => D2,
        3 => D3,
        _ => unreachable!("derivative order above 3"),
    }
}

/// Default finite-difference step.
pub const FD_STEP: f64 = 0.02;

/// `f^{(k)}(x0)` for `k = 0..=3` from 7-point central differences at steps
/// `h` and `h/2` combined by one Richardson extrapolation.
pub fn derivatives_1d(f: impl Fn(f64) -> f64, x0: f64, h: f64) -> Result<[f64; 4]> {
    let at = |h: f64| {
        let v: Vec<f64> = (-3..=3).map(|k| f(x0 + k as f64 * h)).collect();
        let mut out = [0.0; 4];
        for (order, o) in out.iter_mut().enumerate() {
            let w = stencil(order);
            *o = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / h.powi(order as i32);
        }
        out
    };
    let coarse = at(h);
    let fine = at(h / 2.0);
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = fine[k] + (fine[k] - coarse[k]) / 15.0;
        if !out[k].is_finite() {
            return Err(Error::Derivative(x0));
        }
    }
    Ok(out)
}

/// Mixed partials `∂^{ℓ+m} f / ∂u^ℓ ∂v^m` at `(u0, v0)` for `ℓ + m ≤ 3`,
/// indexed `[ℓ][m]`, by tensor-product stencils with Richardson correction.
pub fn derivatives_2d(f: impl Fn(f64, f64) -> f64, u0: f64, v0: f64, h: f64) -> Result<[[f64; 4]; 4]> {
    let at = |h: f64| {
        let mut grid = [[0.0; 7]; 7];
        for (a, row) in grid.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = f(u0 + (a as f64 - 3.0) * h, v0 + (b as f64 - 3.0) * h);
            }
        }
        let mut out = [[0.0; 4]; 4];
        for l in 0..4 {
            for m in 0..4 - l {
                let (wl, wm) = (stencil(l), stencil(m));
                let mut s = 0.0;
                for a in 0..7 {
                    for b in 0..7 {
                        s += wl[a] * wm[b] * grid[a][b];
                    }
                }
                out[l][m] = s / h.powi((l + m) as i32);
            }
        }
        out
    };
    let coarse = at(h);
    let fine = at(h / 2.0);
    let mut out = [[0.0; 4]; 4];
    for l in 0..4 {
        for m in 0..4 - l {
            out[l][m] = fine[l][m] + (fine[l][m] - coarse[l][m]) / 15.0;
            if !out[l][m].is_finite() {
                return Err(Error::Derivative(u0));
            }
        }
    }
    Ok(out)
}

/// `Σ c_k (y − center)^k` valid on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly1D {
    pub center: f64,
    pub coeffs: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Poly1D {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        let t = y - self.center;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Symmetry of a bit LLR under `y → −y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
    None,
}

/// Piece-wise polynomial approximation. With odd or even parity the pieces
/// cover `[0, ∞)` and are evaluated at `|y|`, then reflected.
#[derive(Debug, Clone, PartialEq)]
pub struct Piecewise1D {
    pub pieces: Vec<Poly1D>,
    pub parity: Parity,
}

impl Piecewise1D {
    pub fn eval(&self, y: f64) -> f64 {
        let t = if self.parity == Parity::None { y } else { y.abs() };
        // ties go to the left piece
        let k = self.pieces.iter().position(|p| t <= p.hi).unwrap_or(self.pieces.len() - 1);
        let v = self.pieces[k].eval(t);
        if self.parity == Parity::Odd && y < 0.0 {
            -v
        } else {
            v
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces[..self.pieces.len() - 1].iter().map(|p| p.hi).collect()
    }
}

/// Two-dimensional Taylor polynomial `Σ c_{ℓm} (u − u0)^ℓ (v − v0)^m` where
/// `(u, v)` are `(Re y, Im y)`, optionally replaced by their magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2D {
    pub center: (f64, f64),
    pub fold_re: bool,
    pub fold_im: bool,
    /// `(ℓ, m, c)` triples.
    pub terms: Vec<(u32, u32, f64)>,
}

impl Poly2D {
    #[inline]
    pub fn eval(&self, y: Complex64) -> f64 {
        let u = if self.fold_re { y.re.abs() } else { y.re } - self.center.0;
        let v = if self.fold_im { y.im.abs() } else { y.im } - self.center.1;
        let pu = [1.0, u, u * u, u * u * u];
        let pv = [1.0, v, v * v, v * v * v];
        self.terms.iter().map(|&(l, m, c)| c * pu[l as usize] * pv[m as usize]).sum()
    }

    pub fn order(&self) -> u32 {
        self.terms.iter().map(|&(l, m, _)| l + m).max().unwrap_or(0)
    }

    /// Coefficients of the same polynomial expanded in monomials of the
    /// (possibly folded) coordinates about the origin, `(ℓ, m, c)` sorted by
    /// total degree.
    pub fn expanded(&self) -> Vec<(u32, u32, f64)> {
        let mut acc = [[0.0f64; 4]; 4];
        for &(l, m, c) in &self.terms {
            for a in 0..=l {
                for b in 0..=m {
                    let coef = binom(l, a) as f64
                        * binom(m, b) as f64
                        * (-self.center.0).powi((l - a) as i32)
                        * (-self.center.1).powi((m - b) as i32);
                    acc[a as usize][b as usize] += c * coef;
                }
            }
        }
        let mut out = Vec::new();
        for deg in 0..4u32 {
            for l in (0..=deg).rev() {
                let m = deg - l;
                let c = acc[l as usize][m as usize];
                if c.abs() > 1e-12 {
                    out.push((l, m, c));
                }
            }
        }
        out
    }

    /// Expanded coefficient of `u^ℓ v^m`, zero when absent.
    pub fn monomial(&self, l: u32, m: u32) -> f64 {
        self.expanded().iter().find(|t| t.0 == l && t.1 == m).map_or(0.0, |t| t.2)
    }
}

fn binom(n: u32, k: u32) -> u32 {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

/// Which approximation an [`ApproxLlr`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxKind {
    HouLinear,
    OptLinear,
    TaylorBpskLinear,
    TaylorBpskCubic,
    PiecewiseTaylor1D,
    Taylor2D,
}

/// Per-bit payload.
#[derive(Debug, Clone, PartialEq)]
pub enum BitApprox {
    Linear { alpha: f64 },
    Cubic { alpha: f64, beta: f64 },
    Piecewise(Piecewise1D),
    Poly2D(Poly2D),
}

impl BitApprox {
    #[inline]
    pub fn eval(&self, y: Complex64) -> f64 {
        match self {
            BitApprox::Linear { alpha } => alpha * y.re,
            BitApprox::Cubic { alpha, beta } => alpha * y.re + beta * y.re * y.re * y.re,
            BitApprox::Piecewise(p) => p.eval(y.re),
            BitApprox::Poly2D(p) => p.eval(y),
        }
    }
}

/// A fitted approximation for every bit of a constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxLlr {
    pub kind: ApproxKind,
    pub constellation: ConstellationKind,
    pub sigma_fit: f64,
    pub bits: Vec<BitApprox>,
}

impl ApproxLlr {
    /// Approximate LLR of 1-based bit `bit`.
    #[inline]
    pub fn eval(&self, bit: usize, y: Complex64) -> f64 {
        self.bits[bit - 1].eval(y)
    }

    pub fn hou(sigma: f64) -> Self {
        Self::bpsk(ApproxKind::HouLinear, sigma, BitApprox::Linear { alpha: alpha_hou(sigma) })
    }

    pub fn optimized_linear(sigma: f64) -> Result<Self> {
        Ok(Self::bpsk(ApproxKind::OptLinear, sigma, BitApprox::Linear { alpha: fit_optimized_linear(sigma)? }))
    }

    pub fn taylor_bpsk_linear(sigma: f64) -> Self {
        Self::bpsk(ApproxKind::TaylorBpskLinear, sigma, BitApprox::Linear { alpha: alpha_taylor_bpsk(sigma) })
    }

    pub fn taylor_bpsk_cubic(sigma: f64) -> Self {
        let (alpha, beta) = taylor_bpsk_cubic(sigma);
        Self::bpsk(ApproxKind::TaylorBpskCubic, sigma, BitApprox::Cubic { alpha, beta })
    }

    fn bpsk(kind: ApproxKind, sigma: f64, b: BitApprox) -> Self {
        Self { kind, constellation: ConstellationKind::Bpsk, sigma_fit: sigma, bits: vec![b] }
    }
}

impl SymbolDemapper for ApproxLlr {
    fn bits(&self) -> usize {
        self.bits.len()
    }

    fn demap(&self, y: Complex64, out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(&self.bits) {
            *o = b.eval(y);
        }
    }
}

/// Per-bit Taylor orders, e.g. `3` or `3,2,3,2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaylorOrders(pub Vec<usize>);

impl TaylorOrders {
    pub fn for_bit(&self, bit: usize) -> usize {
        if self.0.len() == 1 {
            self.0[0]
        } else {
            self.0[bit - 1]
        }
    }

    pub fn validate(&self, c: &Constellation) -> Result<()> {
        if self.0.len() != 1 && self.0.len() != c.bits() {
            return Err(Error::InvalidParameter(format!(
                "{} Taylor orders given for a {}-bit constellation",
                self.0.len(),
                c.bits()
            )));
        }
        if let Some(&o) = self.0.iter().find(|&&o| !(1..=3).contains(&o)) {
            return Err(Error::InvalidParameter(format!("Taylor order {o} outside 1..=3")));
        }
        if !c.is_two_dimensional() && self.0.iter().any(|&o| o == 2) {
            return Err(Error::InvalidParameter("1-D Taylor fits take order 1 or 3".into()));
        }
        Ok(())
    }
}

impl FromStr for TaylorOrders {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad Taylor order '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        if v.is_empty() {
            return Err(Error::Parse("empty Taylor order list".into()));
        }
        Ok(Self(v))
    }
}

impl fmt::Display for TaylorOrders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|o| o.to_string()).collect();
        f.write_str(&s.join(","))
    }
}

/// LLR computation selected by name: `true`, `hou`, `optlinear` or
/// `taylor:ORDERS`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlrMethod {
    Exact,
    Hou,
    OptLinear,
    Taylor(TaylorOrders),
}

impl LlrMethod {
    /// Largest polynomial order used, 1 for the linear methods.
    pub fn max_order(&self) -> usize {
        match self {
            LlrMethod::Taylor(o) => o.0.iter().copied().max().unwrap_or(1),
            _ => 1,
        }
    }

    /// Builds the demapper for this method, fitting at `fit_sigma`.
    pub fn demapper(&self, c: &Constellation, fit_sigma: f64) -> Result<Box<dyn SymbolDemapper>> {
        let bpsk_only = |name: &str| {
            if c.kind() == ConstellationKind::Bpsk {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} scaling is defined for BPSK only")))
            }
        };
        Ok(match self {
            LlrMethod::Exact => Box::new(ExactDemapper::new(c, fit_sigma, Csi::Unknown)),
            LlrMethod::Hou => {
                bpsk_only("hou")?;
                Box::new(ApproxLlr::hou(fit_sigma))
            }
            LlrMethod::OptLinear => {
                bpsk_only("optlinear")?;
                Box::new(ApproxLlr::optimized_linear(fit_sigma)?)
            }
            LlrMethod::Taylor(o) => Box::new(fit_taylor(c, fit_sigma, o)?),
        })
    }
}

impl FromStr for LlrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "true" | "exact" => Ok(LlrMethod::Exact),
            "hou" => Ok(LlrMethod::Hou),
            "optlinear" => Ok(LlrMethod::OptLinear),
            t => match t.strip_prefix("taylor:") {
                Some(o) => Ok(LlrMethod::Taylor(o.parse()?)),
                None => Err(Error::Parse(format!("unknown LLR method '{t}'"))),
            },
        }
    }
}

impl fmt::Display for LlrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlrMethod::Exact => f.write_str("true"),
            LlrMethod::Hou => f.write_str("hou"),
            LlrMethod::OptLinear => f.write_str("optlinear"),
            LlrMethod::Taylor(o) => write!(f, "taylor:{o}"),
        }
    }
}

/// Taylor approximation of every bit at noise level `sigma`. BPSK uses the
/// closed forms; PAM uses root-centred pieces; QAM uses 2-D polynomials.
pub fn fit_taylor(c: &Constellation, sigma: f64, orders: &TaylorOrders) -> Result<ApproxLlr> {
    orders.validate(c)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    match c.kind() {
        ConstellationKind::Bpsk => Ok(match orders.for_bit(1) {
            1 => ApproxLlr::taylor_bpsk_linear(sigma),
            _ => ApproxLlr::taylor_bpsk_cubic(sigma),
        }),
        ConstellationKind::Pam8 => {
            let bits = (1..=c.bits())
                .map(|i| fit_piecewise_taylor(c, i, sigma, orders.for_bit(i)).map(BitApprox::Piecewise))
                .collect::<Result<Vec<_>>>()?;
            Ok(ApproxLlr { kind: ApproxKind::PiecewiseTaylor1D, constellation: c.kind(), sigma_fit: sigma, bits })
        }
        ConstellationKind::Qam16 => {
            let bits = (1..=c.bits())
                .map(|i| fit_taylor_2d(c, i, sigma, orders.for_bit(i)).map(BitApprox::Poly2D))
                .collect::<Result<Vec<_>>>()?;
            Ok(ApproxLlr { kind: ApproxKind::Taylor2D, constellation: c.kind(), sigma_fit: sigma, bits })
        }
    }
}

fn search_extent(c: &Constellation, sigma: f64) -> f64 {
    let amax = c.points().iter().map(|p| p.re.abs().max(p.im.abs())).fold(0.0, f64::max);
    2.0 * amax + 8.0 * sigma + 2.0
}

fn parity_1d(l: impl Fn(f64) -> f64, extent: f64) -> Parity {
    let (mut odd, mut even) = (true, true);
    for k in 1..=40 {
        let y = extent * k as f64 / 40.0;
        let (a, b) = (l(y), l(-y));
        let tol = 1e-8 * a.abs().max(1.0);
        odd &= (a + b).abs() < tol;
        even &= (a - b).abs() < tol;
    }
    if odd {
        Parity::Odd
    } else if even {
        Parity::Even
    } else {
        Parity::None
    }
}

/// Root-centred piece-wise Taylor approximation of one bit of a 1-D
/// constellation. Pieces meet where neighbouring first-order polynomials
/// intersect (midpoint if they do not intersect between the roots); higher
/// orders reuse those breakpoints.
///
/// Cubic pieces keep only the odd terms `f'·t + f'''·t³/6` around each root.
/// The quadratic term is small but nonzero near interior roots; keeping it
/// makes the pieces asymmetric and noticeably worse in the threshold search.
pub fn fit_piecewise_taylor(c: &Constellation, bit: usize, sigma: f64, order: usize) -> Result<Piecewise1D> {
    c.check_bit(bit)?;
    if c.is_two_dimensional() {
        return Err(Error::InvalidParameter("piece-wise 1-D fit needs a real constellation".into()));
    }
    if order != 1 && order != 3 {
        return Err(Error::InvalidParameter(format!("1-D Taylor order {order} not in {{1, 3}}")));
    }
    let d = ExactDemapper::new(c, sigma, Csi::Unknown);
    let l = |y: f64| d.bit(Complex64::new(y, 0.0), bit);
    let extent = search_extent(c, sigma);
    let parity = parity_1d(l, extent);
    let steps = ((extent / 0.005).ceil() as usize).max(16);
    let mut roots = if parity == Parity::None {
        find_roots(l, -extent, extent, 2 * steps)
    } else {
        // a root at the origin shows up as a sign change for odd bits only
        let mut r = find_roots(l, 1e-9, extent, steps);
        if parity == Parity::Odd {
            r.insert(0, 0.0);
        }
        r
    };
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if roots.is_empty() {
        return Err(Error::InvalidParameter(format!("bit {bit} LLR has no root to expand about")));
    }
    let derivs = roots.iter().map(|&r| derivatives_1d(l, r, FD_STEP)).collect::<Result<Vec<_>>>()?;
    let mut breaks = Vec::with_capacity(roots.len() - 1);
    for k in 0..roots.len() - 1 {
        let (r0, r1) = (roots[k], roots[k + 1]);
        let (s0, s1) = (derivs[k][1], derivs[k + 1][1]);
        let x = if (s0 - s1).abs() > 1e-14 { (s0 * r0 - s1 * r1) / (s0 - s1) } else { f64::NAN };
        breaks.push(if x > r0 && x < r1 { x } else { 0.5 * (r0 + r1) });
    }
    let lo_edge = if parity == Parity::None { f64::NEG_INFINITY } else { 0.0 };
    let pieces = roots
        .iter()
        .zip(&derivs)
        .enumerate()
        .map(|(k, (&r, d))| {
            let coeffs = match order {
                1 => vec![0.0, d[1]],
                _ => vec![0.0, d[1], 0.0, d[3] / 6.0], // odd terms only
            };
            Poly1D {
                center: r,
                coeffs,
                lo: if k == 0 { lo_edge } else { breaks[k - 1] },
                hi: breaks.get(k).copied().unwrap_or(f64::INFINITY),
            }
        })
        .collect();
    Ok(Piecewise1D { pieces, parity })
}

/// 2-D Taylor polynomial of one 16-QAM bit. Bits that are odd along an axis
/// are expanded about the origin; bits that are even in both coordinates are
/// expanded about the positive root `ξ` on the axis along which they change
/// sign, with that coordinate replaced by its magnitude.
pub fn fit_taylor_2d(c: &Constellation, bit: usize, sigma: f64, order: usize) -> Result<Poly2D> {
    c.check_bit(bit)?;
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidParameter(format!("2-D Taylor order {order} not in 1..=3")));
    }
    let d = ExactDemapper::new(c, sigma, Csi::Unknown);
    let l = |u: f64, v: f64| d.bit(Complex64::new(u, v), bit);
    let extent = search_extent(c, sigma);
    let sym = |axis: Axis, sign: f64| {
        (1..=12).all(|a| {
            (1..=12).all(|b| {
                let (u, v) = (a as f64 * 0.55 - 0.3, b as f64 * 0.45 - 2.9);
                let base = l(u, v);
                let refl = match axis {
                    Axis::Re => l(-u, v),
                    Axis::Im => l(u, -v),
                };
                (refl - sign * base).abs() < 1e-8 * base.abs().max(1.0)
            })
        })
    };
    let (center, fold_re, fold_im) = if sym(Axis::Re, -1.0) || sym(Axis::Im, -1.0) {
        (Complex64::new(0.0, 0.0), false, false)
    } else {
        let re_roots = find_llr_roots_on_axis(c, bit, sigma, Axis::Re, 1e-9, extent)?;
        let im_roots = find_llr_roots_on_axis(c, bit, sigma, Axis::Im, 1e-9, extent)?;
        match (re_roots.first(), im_roots.first()) {
            (Some(&x), None) => (Complex64::new(x, 0.0), true, false),
            (None, Some(&x)) => (Complex64::new(0.0, x), false, true),
            (Some(&x), Some(&z)) => {
                let sx = derivatives_1d(|t| l(t, 0.0), x, FD_STEP)?[1].abs();
                let sz = derivatives_1d(|t| l(0.0, t), z, FD_STEP)?[1].abs();
                if sx >= sz {
                    (Complex64::new(x, 0.0), true, false)
                } else {
                    (Complex64::new(0.0, z), false, true)
                }
            }
            (None, None) => {
                return Err(Error::InvalidParameter(format!("bit {bit} LLR has no root on either axis")))
            }
        }
    };
    let at_center = d.bit(center, bit);
    if at_center.abs() > 1e-3 {
        return Err(Error::NotARoot(center.re, center.im, at_center.abs()));
    }
    let der = derivatives_2d(l, center.re, center.im, FD_STEP)?;
    let mut terms = Vec::new();
    let mut fact = [1.0; 4];
    for k in 1..4 {
        fact[k] = fact[k - 1] * k as f64;
    }
    for deg in 1..=order as u32 {
        for li in (0..=deg).rev() {
            let mi = deg - li;
            let coef = der[li as usize][mi as usize] / (fact[li as usize] * fact[mi as usize]);
            // finite-difference noise on derivatives that vanish by symmetry
            if coef.abs() > 1e-8 {
                terms.push((li, mi, coef));
            }
        }
    }
    Ok(Poly2D { center: (center.re, center.im), fold_re, fold_im, terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{snr_to_sigma, SnrSpec};
    use crate::exact_llr::llr_bpsk_unknown_csi;
    use proptest::prelude::*;

    fn pam_sigma(db: f64) -> f64 {
        snr_to_sigma(&Constellation::new(ConstellationKind::Pam8), SnrSpec::es_n0(db)).unwrap()
    }

    fn qam_sigma(db: f64) -> f64 {
        snr_to_sigma(&Constellation::new(ConstellationKind::Qam16), SnrSpec::es_n0(db)).unwrap()
    }

    #[test]
    fn hou_alpha_values() {
        assert!((alpha_hou(0.6266) - 4.514).abs() < 1e-3);
        assert!((alpha_hou(0.3369) - 15.616).abs() < 1e-3);
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let a = alpha_hou(k as f64 * 0.3);
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn taylor_alpha_values() {
        assert!((alpha_taylor_bpsk(0.6445) - 2.874).abs() < 1e-3);
        assert!((alpha_taylor_bpsk(0.3674) - 6.054).abs() < 1e-3);
        let ratio = alpha_taylor_bpsk(10.0) / alpha_hou(10.0);
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn cubic_coefficient_matches_finite_difference() {
        for &s in &[0.4, 0.6449, 1.0] {
            let (_, beta) = taylor_bpsk_cubic(s);
            let d = derivatives_1d(|y| llr_bpsk_unknown_csi(y, s), 0.0, 0.05).unwrap();
            assert!((d[3] / 6.0 - beta).abs() / beta < 1e-4, "{s}: {} vs {beta}", d[3] / 6.0);
            assert!(beta > 0.0);
        }
    }

    #[test]
    fn cubic_beats_linear_away_from_origin() {
        let s = 0.6449;
        let (a, b) = taylor_bpsk_cubic(s);
        for k in 0..=30 {
            let y = 1.0 + 3.0 * k as f64 / 30.0;
            let t = llr_bpsk_unknown_csi(y, s);
            assert!((t - (a * y + b * y.powi(3))).abs() < (t - a * y).abs(), "{y}");
        }
    }

    #[test]
    fn cubic_inverse_round_trip() {
        let (a, b) = taylor_bpsk_cubic(0.6449);
        for k in 0..100 {
            let l = -35.0 + 70.0 * k as f64 / 99.0;
            let y = cubic_inverse(l, a, b);
            assert!((a * y + b * y.powi(3) - l).abs() < 1e-9);
        }
    }

    #[test]
    fn optimized_linear_values() {
        assert!(linear_llr_capacity(0.0, 0.6).abs() < 1e-12);
        let a1 = fit_optimized_linear(0.6449).unwrap();
        assert!((a1 - 2.957).abs() < 0.01, "{a1}");
        let a2 = fit_optimized_linear(0.3677).unwrap();
        assert!((a2 - 6.302).abs() < 0.01, "{a2}");
    }

    #[test]
    fn pam8_roots() {
        let c = Constellation::new(ConstellationKind::Pam8);
        let s = pam_sigma(7.91);
        let r1 = find_llr_roots(&c, 1, s, -15.0, 15.0).unwrap();
        assert_eq!(r1.len(), 1);
        assert!(r1[0].abs() < 1e-6);
        let r3 = find_llr_roots(&c, 3, s, -15.0, 15.0).unwrap();
        let want = [-6.9832, -1.8848, 1.8848, 6.9832];
        assert_eq!(r3.len(), 4);
        for (g, w) in r3.iter().zip(want) {
            assert!((g - w).abs() < 1e-3, "{g} {w}");
        }
        assert!((r3[0] + r3[3]).abs() < 1e-6 && (r3[1] + r3[2]).abs() < 1e-6);
    }

    #[test]
    fn qam16_bit2_root() {
        let c = Constellation::new(ConstellationKind::Qam16);
        let r = find_llr_roots(&c, 2, qam_sigma(4.83), -10.0, 10.0).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[1] - 1.8908).abs() < 1e-3, "{r:?}");
        assert!((r[0] + r[1]).abs() < 1e-6);
    }

    #[test]
    fn pam8_piecewise_linear_slopes() {
        let c = Constellation::new(ConstellationKind::Pam8);
        let s = pam_sigma(7.91);
        let b1 = fit_piecewise_taylor(&c, 1, s, 1).unwrap();
        assert_eq!(b1.parity, Parity::Odd);
        assert!((b1.pieces[0].coeffs[1] - 1.2135).abs() < 1e-3);
        let b2 = fit_piecewise_taylor(&c, 2, s, 1).unwrap();
        assert_eq!(b2.parity, Parity::Even);
        assert!((b2.pieces[0].center - 3.3449).abs() < 1e-3);
        assert!((b2.pieces[0].coeffs[1] + 0.6147).abs() < 1e-3);
        let b3 = fit_piecewise_taylor(&c, 3, s, 1).unwrap();
        assert!((b3.pieces[0].coeffs[1] - 0.6046).abs() < 1e-3);
        assert!((b3.pieces[1].coeffs[1] + 0.3419).abs() < 1e-3);
        assert!((b3.breakpoints()[0] - 3.7266).abs() < 5e-3);
        assert!(b2.eval(b2.pieces[0].center).abs() < 1e-12);
    }

    #[test]
    fn pam8_cubic_third_derivative() {
        let c = Constellation::new(ConstellationKind::Pam8);
        let b1 = fit_piecewise_taylor(&c, 1, pam_sigma(7.85), 3).unwrap();
        assert!((b1.pieces[0].coeffs[3] * 6.0 - 0.1420).abs() < 2e-3);
    }

    #[test]
    fn bpsk_generic_fit_matches_closed_form() {
        let c = Constellation::new(ConstellationKind::Bpsk);
        let s = 0.6449;
        let p = fit_piecewise_taylor(&c, 1, s, 3).unwrap();
        let (a, b) = taylor_bpsk_cubic(s);
        assert_eq!(p.pieces.len(), 1);
        assert!((p.pieces[0].coeffs[1] - a).abs() < 1e-6);
        assert!((p.pieces[0].coeffs[3] - b).abs() < 1e-6);
    }

    #[test]
    fn richardson_stability() {
        let c = Constellation::new(ConstellationKind::Pam8);
        let d = ExactDemapper::new(&c, pam_sigma(7.91), Csi::Unknown);
        let l = |y: f64| d.bit(Complex64::new(y, 0.0), 3);
        let a = derivatives_1d(l, 1.8848, FD_STEP).unwrap();
        let b = derivatives_1d(l, 1.8848, FD_STEP / 2.0).unwrap();
        for k in 1..4 {
            assert!((a[k] - b[k]).abs() < 1e-4 * a[k].abs().max(1e-2), "{k}: {} {}", a[k], b[k]);
        }
    }

    #[test]
    fn qam16_bit1_polynomial() {
        let c = Constellation::new(ConstellationKind::Qam16);
        let p = fit_taylor_2d(&c, 1, qam_sigma(4.83), 3).unwrap();
        assert_eq!(p.center, (0.0, 0.0));
        assert!((p.monomial(1, 0) + 0.9878).abs() < 2e-3);
        assert!((p.monomial(1, 2) + 0.04285).abs() < 2e-3);
        assert!((p.monomial(3, 0) + 0.01654).abs() < 2e-3);
        assert!(p.eval(Complex64::new(0.0, 2.7)).abs() < 1e-12);
    }

    #[test]
    fn qam16_bit2_polynomial() {
        let c = Constellation::new(ConstellationKind::Qam16);
        let p = fit_taylor_2d(&c, 2, qam_sigma(4.83), 2).unwrap();
        assert!(p.fold_re);
        assert!((p.center.0 - 1.8908).abs() < 1e-3);
        assert!((p.monomial(0, 0) + 0.9285).abs() < 2e-3);
        assert!((p.monomial(1, 0) - 0.2690).abs() < 2e-3);
        assert!((p.monomial(2, 0) - 0.1174).abs() < 2e-3);
        assert!((p.monomial(0, 2) + 0.0364).abs() < 2e-3);
    }

    #[test]
    fn qam16_bits_3_4_are_swapped_1_2() {
        let c = Constellation::new(ConstellationKind::Qam16);
        let s = qam_sigma(4.89);
        let a = fit_taylor(&c, s, &"3,2,3,2".parse().unwrap()).unwrap();
        for k in 0..20 {
            let y = Complex64::new(-4.0 + 0.41 * k as f64, 3.0 - 0.33 * k as f64);
            let sw = Complex64::new(y.im, y.re);
            assert!((a.eval(3, y) + a.eval(1, sw)).abs() < 1e-6);
            assert!((a.eval(4, y) - a.eval(2, sw)).abs() < 1e-6);
        }
    }

    #[test]
    fn approximations_preserve_symmetry_and_hard_decisions() {
        let c = Constellation::new(ConstellationKind::Pam8);
        let s = pam_sigma(7.91);
        let d = ExactDemapper::new(&c, s, Csi::Unknown);
        for orders in ["1", "3"] {
            let a = fit_taylor(&c, s, &orders.parse().unwrap()).unwrap();
            for k in 0..=400 {
                let y = -12.0 + 0.06 * k as f64;
                let (p, n) = (Complex64::new(y, 0.0), Complex64::new(-y, 0.0));
                assert!((a.eval(1, p) + a.eval(1, n)).abs() < 1e-12);
                assert!((a.eval(2, p) - a.eval(2, n)).abs() < 1e-12);
                assert!((a.eval(3, p) - a.eval(3, n)).abs() < 1e-12);
                for bit in 1..=3 {
                    let t = d.bit(p, bit);
                    if t.abs() > 0.1 {
                        assert_eq!(t > 0.0, a.eval(bit, p) > 0.0, "bit {bit} y {y} order {orders}");
                    }
                }
            }
        }
    }

    #[test]
    fn taylor_orders_parse() {
        let o: TaylorOrders = "3,2,3,2".parse().unwrap();
        assert_eq!(o.0, vec![3, 2, 3, 2]);
        assert_eq!(o.to_string(), "3,2,3,2");
        assert!("x".parse::<TaylorOrders>().is_err());
        let pam = Constellation::new(ConstellationKind::Pam8);
        assert!(TaylorOrders(vec![2]).validate(&pam).is_err());
        assert!(TaylorOrders(vec![1, 3]).validate(&pam).is_err());
    }

    #[test]
    fn llr_method_parse() {
        for s in ["true", "hou", "optlinear", "taylor:1", "taylor:3,2,3,2"] {
            assert_eq!(s.parse::<LlrMethod>().unwrap().to_string(), s);
        }
        assert!("taylor:".parse::<LlrMethod>().is_err());
        assert!("max-log".parse::<LlrMethod>().is_err());
        let pam = Constellation::new(ConstellationKind::Pam8);
        assert!(LlrMethod::Hou.demapper(&pam, 1.0).is_err());
    }

    #[test]
    fn poly2d_expansion_round_trip() {
        let p = Poly2D { center: (1.5, -0.5), fold_re: false, fold_im: false, terms: vec![(1, 0, 2.0), (2, 1, -0.3), (0, 3, 0.7)] };
        let e = p.expanded();
        for k in 0..10 {
            let y = Complex64::new(0.3 * k as f64 - 1.0, 0.7 - 0.2 * k as f64);
            let direct: f64 = e.iter().map(|&(l, m, c)| c * y.re.powi(l as i32) * y.im.powi(m as i32)).sum();
            assert!((direct - p.eval(y)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cubic_inverse_is_inverse(l in -40.0f64..40.0, s in 0.2f64..2.0) {
            let (a, b) = taylor_bpsk_cubic(s);
            let y = cubic_inverse(l, a, b);
            prop_assert!((a * y + b * y * y * y - l).abs() < 1e-9 * l.abs().max(1.0));
        }

        #[test]
        fn piecewise_eval_is_continuous_inside_pieces(y in 0.0f64..12.0) {
            let p = Piecewise1D {
                pieces: vec![
                    Poly1D { center: 1.0, coeffs: vec![0.0, 0.5], lo: 0.0, hi: 3.0 },
                    Poly1D { center: 7.0, coeffs: vec![0.0, -0.4], lo: 3.0, hi: f64::INFINITY },
                ],
                parity: Parity::Even,
            };
            prop_assert_eq!(p.eval(y), p.eval(-y));
        }
    }
}
