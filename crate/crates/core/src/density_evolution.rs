//! Quantized density evolution for irregular LDPC ensembles, threshold
//! search over SNR, and the fit/threshold fixed-point iteration for Taylor
//! approximations.
//!
//! Variable nodes add LLRs, so their update is a convolution done with one
//! FFT pair per iteration; the degree mixture is evaluated as a polynomial in
//! the frequency domain. Check nodes use an exact pairwise table on the
//! quantized grid, applied by repeated squaring.

use std::fmt;
use std::sync::Arc;

use log::{debug, info};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::approx_llr::{ApproxLlr, LlrMethod, TaylorOrders};
use crate::constellation::{sigma_to_snr, snr_to_sigma, Constellation, ConstellationKind, SnrSpec};
use crate::error::{Error, Result};
use crate::llr_density::{
    bicm_channel_density, bpsk_cubic_density, bpsk_linear_density, DensitySource, LlrGrid, QuantizedDensity,
};

/// Degree distributions from the edge perspective.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// `(degree, fraction)` on the variable side, ascending degree.
    pub lambda: Vec<(usize, f64)>,
    /// `(degree, fraction)` on the check side, ascending degree.
    pub rho: Vec<(usize, f64)>,
}

impl Ensemble {
    pub fn new(mut lambda: Vec<(usize, f64)>, mut rho: Vec<(usize, f64)>) -> Result<Self> {
        for (name, side) in [("lambda", &mut lambda), ("rho", &mut rho)] {
            side.retain(|&(_, f)| f != 0.0);
            side.sort_by_key(|&(d, _)| d);
            if side.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} is empty")));
            }
            if side.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter(format!("{name} repeats a degree")));
            }
            if let Some(&(d, f)) = side.iter().find(|&&(d, f)| d < 2 || !(0.0..=1.0).contains(&f)) {
                return Err(Error::InvalidParameter(format!("{name}: bad entry degree {d} fraction {f}")));
            }
            let total: f64 = side.iter().map(|p| p.1).sum();
            if (total - 1.0).abs() > 1e-4 {
                return Err(Error::InvalidParameter(format!("{name} fractions sum to {total}")));
            }
            // absorb rounding in published tables
            side.iter_mut().for_each(|p| p.1 /= total);
        }
        let e = Self { lambda, rho };
        let r = e.design_rate();
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidParameter(format!("design rate {r} outside (0, 1)")));
        }
        Ok(e)
    }

    pub fn regular(dv: usize, dc: usize) -> Result<Self> {
        Self::new(vec![(dv, 1.0)], vec![(dc, 1.0)])
    }

    /// `R = 1 − (Σ ρ_j / j) / (Σ λ_i / i)`.
    pub fn design_rate(&self) -> f64 {
        let inv = |s: &[(usize, f64)]| s.iter().map(|&(d, f)| f / d as f64).sum::<f64>();
        1.0 - inv(&self.rho) / inv(&self.lambda)
    }

    pub fn max_variable_degree(&self) -> usize {
        self.lambda.last().map_or(0, |p| p.0)
    }

    pub fn max_check_degree(&self) -> usize {
        self.rho.last().map_or(0, |p| p.0)
    }

    /// Node-perspective fractions `(degree, fraction of nodes)`.
    pub fn node_fractions(side: &[(usize, f64)]) -> Vec<(usize, f64)> {
        let total: f64 = side.iter().map(|&(d, f)| f / d as f64).sum();
        side.iter().map(|&(d, f)| (d, f / d as f64 / total)).collect()
    }

    /// Parses `v <degree> <fraction>` / `c <degree> <fraction>` lines; `#`
    /// starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut lambda, mut rho) = (Vec::new(), Vec::new());
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("ensemble line {}: '{raw}'", no + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            let d: usize = f[1].parse().map_err(|_| bad())?;
            let x: f64 = f[2].parse().map_err(|_| bad())?;
            match f[0] {
                "v" => lambda.push((d, x)),
                "c" => rho.push((d, x)),
                _ => return Err(bad()),
            }
        }
        Self::new(lambda, rho)
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &(d, x) in &self.lambda {
            writeln!(f, "v {d} {x}")?;
        }
        for &(d, x) in &self.rho {
            writeln!(f, "c {d} {x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeParams {
    pub max_iterations: usize,
    pub target_error: f64,
    pub quantizer_bits: u32,
    pub l_max: f64,
    /// A run fails once the error has dropped by less than `stall_tolerance`
    /// (relative) over `stall_window` iterations.
    pub stall_window: usize,
    pub stall_tolerance: f64,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            target_error: 1e-7,
            quantizer_bits: 11,
            l_max: 25.0,
            stall_window: 50,
            stall_tolerance: 1e-6,
        }
    }
}

impl DeParams {
    pub fn grid(&self) -> LlrGrid {
        LlrGrid::from_bits(self.quantizer_bits, self.l_max)
    }

    /// Default clipping level for a method: 35 when cubic terms are present.
    pub fn for_method(method: &LlrMethod) -> Self {
        let mut p = Self::default();
        if method.max_order() >= 3 {
            p.l_max = 35.0;
        }
        p
    }
}

/// Error trajectory of one DE run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub trajectory: Vec<f64>,
}

/// Exact check-node combination table on the magnitude grid. Row `i` stores
/// `T[i][j]` for `i ≤ j < sat[i]`; beyond `sat[i]` the output is `i`.
struct CheckTable {
    rows: Vec<Vec<u16>>,
    sat: Vec<usize>,
}

impl CheckTable {
    fn new(grid: LlrGrid) -> Self {
        let k = grid.half_bins;
        let delta = grid.delta();
        let combine = |a: f64, b: f64| {
            // 2 atanh(tanh(a/2) tanh(b/2)) for a, b > 0
            (-(a + b)).exp().ln_1p() + a.min(b) - (-(a - b).abs()).exp().ln_1p()
        };
        let mut rows = vec![Vec::new(); k + 1];
        let mut sat = vec![k + 1; k + 1];
        for i in 1..=k {
            let a = i as f64 * delta;
            let mut row = Vec::new();
            let mut j = i;
            while j <= k {
                let t = (combine(a, j as f64 * delta) / delta).round() as usize;
                if t >= i && j > i {
                    break;
                }
                row.push(t.min(i) as u16);
                j += 1;
            }
            sat[i] = j;
            rows[i] = row;
        }
        Self { rows, sat }
    }
}

/// Sign/magnitude view of a density: `pos[i]`, `neg[i]` are the masses at
/// `±iΔ` (index 0 unused), `zero` the mass at 0.
#[derive(Clone)]
struct Signed {
    pos: Vec<f64>,
    neg: Vec<f64>,
    zero: f64,
}

impl Signed {
    fn from_density(d: &QuantizedDensity) -> Self {
        let k = d.grid.half_bins;
        let mut pos = vec![0.0; k + 1];
        let mut neg = vec![0.0; k + 1];
        for i in 1..=k {
            pos[i] = d.mass[k + i];
            neg[i] = d.mass[k - i];
        }
        Self { pos, neg, zero: d.mass[k] }
    }

    fn into_density(self, grid: LlrGrid) -> QuantizedDensity {
        let k = grid.half_bins;
        let mut d = QuantizedDensity::zeros(grid);
        for i in 1..=k {
            d.mass[k + i] = self.pos[i];
            d.mass[k - i] = self.neg[i];
        }
        d.mass[k] = self.zero;
        d
    }

    fn total(&self) -> f64 {
        self.zero + self.pos.iter().sum::<f64>() + self.neg.iter().sum::<f64>()
    }

    /// Density of the check output for two independent inputs.
    fn combine(&self, other: &Self, table: &CheckTable) -> Self {
        let k = self.pos.len() - 1;
        let (a, b) = (self, other);
        // suffix sums for the saturated tails
        let suffix = |v: &[f64]| {
            let mut s = vec![0.0; k + 2];
            for i in (1..=k).rev() {
                s[i] = s[i + 1] + v[i];
            }
            s
        };
        let (sap, san, sbp, sbn) = (suffix(&a.pos), suffix(&a.neg), suffix(&b.pos), suffix(&b.neg));
        let mut pos = vec![0.0; k + 1];
        let mut neg = vec![0.0; k + 1];
        let (ta, tb) = (a.total(), b.total());
        let mut zero = a.zero * tb + b.zero * ta - a.zero * b.zero;
        for i in 1..=k {
            let (ap, an, bp, bn) = (a.pos[i], a.neg[i], b.pos[i], b.neg[i]);
            let row = &table.rows[i];
            // diagonal
            let t = row[0] as usize;
            let (pp, pn) = (ap * bp + an * bn, ap * bn + an * bp);
            if t == 0 {
                zero += pp + pn;
            } else {
                pos[t] += pp;
                neg[t] += pn;
            }
            for (off, &t) in row.iter().enumerate().skip(1) {
                let j = i + off;
                let (cp, cn, dp, dn) = (a.pos[j], a.neg[j], b.pos[j], b.neg[j]);
                let pp = ap * dp + an * dn + cp * bp + cn * bn;
                let pn = ap * dn + an * dp + cp * bn + cn * bp;
                let t = t as usize;
                if t == 0 {
                    zero += pp + pn;
                } else {
                    pos[t] += pp;
                    neg[t] += pn;
                }
            }
            let s = table.sat[i];
            if s <= k {
                pos[i] += ap * sbp[s] + an * sbn[s] + bp * sap[s] + bn * san[s];
                neg[i] += ap * sbn[s] + an * sbp[s] + bp * san[s] + bn * sap[s];
            }
        }
        Self { pos, neg, zero }
    }
}

/// Density-evolution engine for one ensemble and grid.
pub struct DensityEvolution {
    ensemble: Ensemble,
    params: DeParams,
    grid: LlrGrid,
    table: CheckTable,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `e^{+2πi kK/P}`, undoing one bin-offset per added message.
    unshift: Vec<Complex64>,
    /// `e^{−2πi kK(D−1)/P}`.
    align: Vec<Complex64>,
}

impl DensityEvolution {
    pub fn new(ensemble: Ensemble, params: DeParams) -> Result<Self> {
        if params.max_iterations == 0 || !(params.target_error > 0.0) || !(params.l_max > 0.0) {
            return Err(Error::InvalidParameter("DE parameters must be positive".into()));
        }
        if !(4..=16).contains(&params.quantizer_bits) {
            return Err(Error::InvalidParameter(format!("quantizer bits {} not in 4..=16", params.quantizer_bits)));
        }
        let grid = params.grid();
        let k = grid.half_bins;
        let dmax = ensemble.max_variable_degree();
        let fft_len = (2 * dmax * k + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let phase = |mult: usize| -> Vec<Complex64> {
            (0..fft_len)
                .map(|f| {
                    let turns = ((f * k) % fft_len * mult % fft_len) as f64 / fft_len as f64;
                    Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * turns)
                })
                .collect()
        };
        let unshift = phase(1).into_iter().map(|z| z.conj()).collect();
        let align = phase(dmax - 1);
        Ok(Self { table: CheckTable::new(grid), ensemble, params, grid, fft_len, forward, inverse, unshift, align })
    }

    pub fn grid(&self) -> LlrGrid {
        self.grid
    }

    pub fn params(&self) -> &DeParams {
        &self.params
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    fn spectrum(&self, d: &QuantizedDensity) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (b, &m) in buf.iter_mut().zip(&d.mass) {
            b.re = m;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Channel spectrum pre-multiplied by the common alignment phase.
    fn channel_spectrum(&self, channel: &QuantizedDensity) -> Result<Vec<Complex64>> {
        if channel.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut s = self.spectrum(channel);
        s.iter_mut().zip(&self.align).for_each(|(a, z)| *a *= z);
        Ok(s)
    }

    fn variable_from_spectrum(&self, chan: &[Complex64], check: &QuantizedDensity) -> QuantizedDensity {
        let q = self.spectrum(check);
        let lambda = &self.ensemble.lambda;
        let mut buf: Vec<Complex64> = q
            .iter()
            .zip(&self.unshift)
            .zip(chan)
            .map(|((&qf, &z), &cf)| {
                // Σ λ_d u^{d−1} by Horner over the (sparse) degree list
                let u = qf * z;
                let mut acc = Complex64::new(0.0, 0.0);
                let mut prev = lambda.last().unwrap().0;
                for &(d, f) in lambda.iter().rev() {
                    acc *= u.powu((prev - d) as u32);
                    acc += f;
                    prev = d;
                }
                acc *= u.powu((prev - 1) as u32);
                acc * cf
            })
            .collect();
        self.inverse.process(&mut buf);
        let k = self.grid.half_bins as isize;
        let offset = self.ensemble.max_variable_degree() as isize * k;
        let scale = 1.0 / self.fft_len as f64;
        let mut out = QuantizedDensity::zeros(self.grid);
        for (s, v) in buf.iter().enumerate() {
            let idx = (s as isize - offset).clamp(-k, k) + k;
            out.mass[idx as usize] += v.re * scale;
        }
        // FFT round-off sits near 1e-16; real mass that small never matters
        out.mass.iter_mut().for_each(|m| {
            if *m < 1e-14 {
                *m = 0.0
            }
        });
        out.normalize();
        out
    }

    /// `Σ_d λ_d · channel ⊛ check^{⊛(d−1)}` with saturation at `±L_max`.
    pub fn variable_update(&self, channel: &QuantizedDensity, check: &QuantizedDensity) -> Result<QuantizedDensity> {
        if check.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.variable_from_spectrum(&self.channel_spectrum(channel)?, check))
    }

    /// Check-node output density mixed over `ρ`.
    pub fn check_update(&self, incoming: &QuantizedDensity) -> Result<QuantizedDensity> {
        if incoming.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let base = Signed::from_density(incoming);
        // powers base^(2^k), built on demand
        let mut squares = vec![base];
        let mut mix = QuantizedDensity::zeros(self.grid);
        for &(d, f) in &self.ensemble.rho {
            let mut e = d - 1;
            let mut acc: Option<Signed> = None;
            let mut level = 0;
            while e > 0 {
                if level == squares.len() {
                    let s = squares[level - 1].combine(&squares[level - 1], &self.table);
                    squares.push(s);
                }
                if e & 1 == 1 {
                    acc = Some(match acc {
                        None => squares[level].clone(),
                        Some(a) => a.combine(&squares[level], &self.table),
                    });
                }
                e >>= 1;
                level += 1;
            }
            let part = acc.expect("check degree at least 2").into_density(self.grid);
            mix.mass.iter_mut().zip(&part.mass).for_each(|(m, p)| *m += f * p);
        }
        let total = mix.total();
        if (total - 1.0).abs() > 1e-9 {
            debug!("check update mass drift {:.3e}", total - 1.0);
        }
        mix.normalize();
        Ok(mix)
    }

    /// Iterates from the (adapter-symmetric) channel density until the
    /// variable-to-check error reaches the target, stalls, or the iteration
    /// cap is hit.
    pub fn run(&self, channel: &QuantizedDensity) -> Result<DeOutcome> {
        let chan = self.channel_spectrum(channel)?;
        let mut v = channel.clone();
        let mut trajectory = Vec::new();
        for it in 1..=self.params.max_iterations {
            let q = self.check_update(&v)?;
            v = self.variable_from_spectrum(&chan, &q);
            let e = v.error_probability();
            trajectory.push(e);
            if e <= self.params.target_error {
                return Ok(DeOutcome { converged: true, iterations: it, trajectory });
            }
            let w = self.params.stall_window;
            if it > w {
                let past = trajectory[it - 1 - w];
                if past - e < self.params.stall_tolerance * e {
                    return Ok(DeOutcome { converged: false, iterations: it, trajectory });
                }
            }
        }
        Ok(DeOutcome { converged: false, iterations: self.params.max_iterations, trajectory })
    }
}

/// Threshold located by bisection; `snr_db` is the lowest SNR at which DE
/// was seen to succeed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub sigma: f64,
    pub snr_db: f64,
    pub iterations: usize,
    /// Bracket narrowed to the requested resolution.
    pub converged: bool,
}

/// Maps an SNR in dB to a channel density.
pub trait ChannelModel {
    fn sigma(&self, snr_db: f64) -> Result<f64>;
    fn density(&self, sigma: f64, grid: LlrGrid) -> Result<QuantizedDensity>;
}

/// Default bisection resolution in dB.
pub const THRESHOLD_RESOLUTION_DB: f64 = 0.01;

fn probe(engine: &DensityEvolution, model: &dyn ChannelModel, snr_db: f64) -> Result<(bool, f64, usize)> {
    let sigma = model.sigma(snr_db)?;
    let out = engine.run(&model.density(sigma, engine.grid())?)?;
    debug!("probe {snr_db:.4} dB (σ = {sigma:.5}): {} after {} iterations", out.converged, out.iterations);
    Ok((out.converged, sigma, out.iterations))
}

/// Bisection on `[lo_db, hi_db]`; DE must fail at `lo_db` and succeed at
/// `hi_db`.
pub fn de_threshold(
    engine: &DensityEvolution,
    model: &dyn ChannelModel,
    lo_db: f64,
    hi_db: f64,
    resolution_db: f64,
) -> Result<ThresholdResult> {
    if !(lo_db < hi_db) {
        return Err(Error::Bracket(format!("lower end {lo_db} dB is not below upper end {hi_db} dB")));
    }
    let (lo_ok, _, _) = probe(engine, model, lo_db)?;
    if lo_ok {
        return Err(Error::Bracket(format!("DE already succeeds at the lower end {lo_db} dB")));
    }
    let (hi_ok, hi_sigma, hi_iter) = probe(engine, model, hi_db)?;
    if !hi_ok {
        return Err(Error::Bracket(format!("DE fails at the upper end {hi_db} dB")));
    }
    bisect_bracket(engine, model, lo_db, (hi_db, hi_sigma, hi_iter), resolution_db)
}

fn bisect_bracket(
    engine: &DensityEvolution,
    model: &dyn ChannelModel,
    mut lo: f64,
    hi: (f64, f64, usize),
    resolution_db: f64,
) -> Result<ThresholdResult> {
    let (mut hi, mut hi_sigma, mut hi_iter) = hi;
    let mut steps = 0;
    while hi - lo > resolution_db && steps < 60 {
        let mid = 0.5 * (lo + hi);
        let (ok, s, it) = probe(engine, model, mid)?;
        if ok {
            (hi, hi_sigma, hi_iter) = (mid, s, it);
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok(ThresholdResult { sigma: hi_sigma, snr_db: hi, iterations: hi_iter, converged: hi - lo <= resolution_db })
}

/// Threshold search that first walks outward from `guess_db` in steps of
/// `step_db` until it has a failing and a succeeding SNR.
pub fn find_threshold(
    engine: &DensityEvolution,
    model: &dyn ChannelModel,
    guess_db: f64,
    step_db: f64,
    resolution_db: f64,
) -> Result<ThresholdResult> {
    const MAX_STEPS: usize = 40;
    let (ok, s, it) = probe(engine, model, guess_db)?;
    if ok {
        let mut hi = (guess_db, s, it);
        for n in 1..=MAX_STEPS {
            let x = guess_db - n as f64 * step_db;
            let (ok, s, it) = probe(engine, model, x)?;
            if !ok {
                return bisect_bracket(engine, model, x, hi, resolution_db);
            }
            hi = (x, s, it);
        }
    } else {
        let mut lo = guess_db;
        for n in 1..=MAX_STEPS {
            let x = guess_db + n as f64 * step_db;
            let (ok, s, it) = probe(engine, model, x)?;
            if ok {
                return bisect_bracket(engine, model, lo, (x, s, it), resolution_db);
            }
            lo = x;
        }
    }
    Err(Error::Bracket(format!("no sign change within {MAX_STEPS} steps of {guess_db} dB")))
}

/// Channel model of a constellation under one LLR method.
pub struct BicmChannel {
    pub constellation: Constellation,
    pub method: LlrMethod,
    pub rate: f64,
    pub source: DensitySource,
    /// Approximation held fixed across probes; refitted at every probe
    /// when `None`.
    pub fixed: Option<ApproxLlr>,
}

impl BicmChannel {
    pub fn new(kind: ConstellationKind, method: LlrMethod, rate: f64) -> Self {
        Self { constellation: Constellation::new(kind), method, rate, source: DensitySource::default(), fixed: None }
    }

    pub fn snr_spec(&self, snr_db: f64) -> SnrSpec {
        SnrSpec::natural(self.constellation.kind(), snr_db, self.rate)
    }

    pub fn snr_of_sigma(&self, sigma: f64) -> Result<f64> {
        sigma_to_snr(&self.constellation, sigma, self.snr_spec(0.0).convention)
    }
}

impl ChannelModel for BicmChannel {
    fn sigma(&self, snr_db: f64) -> Result<f64> {
        snr_to_sigma(&self.constellation, self.snr_spec(snr_db))
    }

    fn density(&self, sigma: f64, grid: LlrGrid) -> Result<QuantizedDensity> {
        let c = &self.constellation;
        if let Some(a) = &self.fixed {
            return bicm_channel_density(c, a, sigma, grid, self.source);
        }
        if c.kind() == ConstellationKind::Bpsk {
            // closed forms where they exist
            match &self.method {
                LlrMethod::Hou => return Ok(bpsk_linear_density(crate::approx_llr::alpha_hou(sigma), sigma, grid)),
                LlrMethod::OptLinear => {
                    let a = crate::approx_llr::fit_optimized_linear(sigma)?;
                    return Ok(bpsk_linear_density(a, sigma, grid));
                }
                LlrMethod::Taylor(o) if o.for_bit(1) == 1 => {
                    return Ok(bpsk_linear_density(crate::approx_llr::alpha_taylor_bpsk(sigma), sigma, grid))
                }
                LlrMethod::Taylor(_) => return Ok(bpsk_cubic_density(sigma, grid)),
                LlrMethod::Exact => {}
            }
        }
        let d = self.method.demapper(c, sigma)?;
        bicm_channel_density(c, d.as_ref(), sigma, grid, self.source)
    }
}

/// Outcome of the fit/threshold alternation.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    /// Thresholds in dB: the starting point, then one per round.
    pub trajectory: Vec<f64>,
    pub threshold: ThresholdResult,
    pub approx: ApproxLlr,
    pub converged: bool,
}

/// Alternates between fitting Taylor coefficients at the current SNR and
/// computing the threshold with those coefficients held fixed, until two
/// successive thresholds differ by less than `tolerance_db` or `max_rounds`
/// rounds have run. Starts from `start_db`, or from the exact-LLR threshold.
pub fn fixed_point_taylor_threshold(
    engine: &DensityEvolution,
    kind: ConstellationKind,
    orders: &TaylorOrders,
    rate: f64,
    start_db: Option<f64>,
    source: DensitySource,
    tolerance_db: f64,
    max_rounds: usize,
) -> Result<FixedPointResult> {
    let mut model = BicmChannel::new(kind, LlrMethod::Exact, rate);
    model.source = source;
    let start = match start_db {
        Some(s) => s,
        None => {
            let guess = default_guess(kind, rate);
            find_threshold(engine, &model, guess, 0.25, THRESHOLD_RESOLUTION_DB)?.snr_db
        }
    };
    info!("fixed point starts at {start:.3} dB");
    let mut trajectory = vec![start];
    let mut current = start;
    for round in 1..=max_rounds {
        let sigma = model.sigma(current)?;
        let approx = crate::approx_llr::fit_taylor(&model.constellation, sigma, orders)?;
        model.fixed = Some(approx.clone());
        let t = find_threshold(engine, &model, current, 0.05, THRESHOLD_RESOLUTION_DB)?;
        info!("round {round}: fitted at {current:.3} dB, threshold {:.3} dB", t.snr_db);
        trajectory.push(t.snr_db);
        let done = (t.snr_db - current).abs() < tolerance_db;
        current = t.snr_db;
        if done {
            return Ok(FixedPointResult { trajectory, threshold: t, approx, converged: true });
        }
        if round == max_rounds {
            return Ok(FixedPointResult { trajectory, threshold: t, approx, converged: false });
        }
    }
    Err(Error::InvalidParameter("fixed point needs at least one round".into()))
}

/// Rough starting SNR for threshold searches.
pub fn default_guess(kind: ConstellationKind, rate: f64) -> f64 {
    match kind {
        ConstellationKind::Bpsk => 3.0 + 4.0 * (rate - 0.5).max(0.0),
        ConstellationKind::Pam8 => 8.0,
        ConstellationKind::Qam16 => 5.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llr_density::bpsk_taylor_linear_density;

    fn engine(dv: usize, dc: usize) -> DensityEvolution {
        DensityEvolution::new(Ensemble::regular(dv, dc).unwrap(), DeParams::default()).unwrap()
    }

    #[test]
    fn ensemble_rate_and_parse() {
        let e = Ensemble::regular(3, 6).unwrap();
        assert!((e.design_rate() - 0.5).abs() < 1e-15);
        let p = Ensemble::parse("# (3,4)\nv 3 1.0\nc 4 1\n").unwrap();
        assert!((p.design_rate() - 0.25).abs() < 1e-15);
        assert_eq!(Ensemble::parse(&p.to_string()).unwrap(), p);
        assert!(Ensemble::parse("v 3 0.5\nc 6 1").is_err());
        assert!(Ensemble::parse("x 3 1\nc 6 1").is_err());
        assert!(Ensemble::new(vec![(1, 1.0)], vec![(6, 1.0)]).is_err());
        let nf = Ensemble::node_fractions(&[(2, 0.5), (4, 0.5)]);
        assert!((nf[0].1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn table_matches_direct_formula() {
        let g = LlrGrid::default();
        let t = CheckTable::new(g);
        let d = g.delta();
        for &(i, j) in &[(1, 1), (1, 500), (10, 20), (300, 301), (1000, 1023), (5, 1023)] {
            let exact = 2.0 * ((i as f64 * d / 2.0).tanh() * (j as f64 * d / 2.0).tanh()).atanh();
            let want = (exact / d).round() as usize;
            let got = if j < t.sat[i] { t.rows[i][j - i] as usize } else { i };
            assert_eq!(got, want, "({i},{j})");
        }
    }

    #[test]
    fn variable_update_of_deltas() {
        let de = engine(2, 4);
        let g = de.grid();
        let out = de.variable_update(&QuantizedDensity::point(g, 3.0), &QuantizedDensity::point(g, -1.0)).unwrap();
        assert!((out.mass[g.index(2.0)] - 1.0).abs() < 1e-10);
        let out = de.variable_update(&QuantizedDensity::point(g, 20.0), &QuantizedDensity::point(g, 20.0)).unwrap();
        assert!((out.mass[g.len() - 1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn variable_update_matches_direct_convolution() {
        let de = DensityEvolution::new(
            Ensemble::new(vec![(2, 0.3), (3, 0.7)], vec![(6, 1.0)]).unwrap(),
            DeParams { quantizer_bits: 7, ..DeParams::default() },
        )
        .unwrap();
        let g = de.grid();
        let c = bpsk_taylor_linear_density(0.8, g);
        let q = bpsk_taylor_linear_density(1.1, g);
        let got = de.variable_update(&c, &q).unwrap();
        let k = g.half_bins as isize;
        let conv = |x: &[f64], y: &[f64]| {
            // full linear convolution on index offsets, saturated at the end
            let mut out = vec![0.0; x.len() + y.len() - 1];
            for (i, a) in x.iter().enumerate() {
                for (j, b) in y.iter().enumerate() {
                    out[i + j] += a * b;
                }
            }
            out
        };
        let c2 = conv(&c.mass, &q.mass);
        let c3 = conv(&c2, &q.mass);
        let mut want = QuantizedDensity::zeros(g);
        for (terms, w, v) in [(2isize, 0.3, &c2), (3, 0.7, &c3)] {
            for (s, m) in v.iter().enumerate() {
                let idx = (s as isize - terms * k).clamp(-k, k) + k;
                want.mass[idx as usize] += w * m;
            }
        }
        assert!(got.total_variation(&want).unwrap() < 1e-12);
    }

    #[test]
    fn check_update_examples() {
        let de = engine(2, 3);
        let g = de.grid();
        let zero = de.check_update(&QuantizedDensity::point(g, 0.0)).unwrap();
        assert!((zero.mass[g.half_bins] - 1.0).abs() < 1e-12);
        let top = QuantizedDensity::point(g, 25.0);
        let out = de.check_update(&top).unwrap();
        // two saturated inputs leave the top bin only by the clipping loss
        let expected = 2.0 * ((12.5f64).tanh().powi(2)).atanh();
        assert!((out.mean() - expected).abs() < g.delta());
        let mut pm = QuantizedDensity::zeros(g);
        pm.mass[g.index(4.0)] = 0.7;
        pm.mass[g.index(-4.0)] = 0.3;
        let out = de.check_update(&pm).unwrap();
        let neg: f64 = out.mass[..g.half_bins].iter().sum();
        assert!((neg - 2.0 * 0.7 * 0.3).abs() < 1e-12);
        let mut with_zero = pm.clone();
        with_zero.mass[g.half_bins] = 0.2;
        with_zero.mass[g.index(4.0)] = 0.5;
        let out = de.check_update(&with_zero).unwrap();
        assert!(out.mass[g.half_bins] >= 1.0 - 0.8 * 0.8 - 1e-12);
    }

    #[test]
    fn check_update_matches_brute_force() {
        let de = DensityEvolution::new(Ensemble::regular(3, 4).unwrap(), DeParams { quantizer_bits: 8, ..DeParams::default() }).unwrap();
        let g = de.grid();
        let mut x = bpsk_taylor_linear_density(1.0, g);
        x.mass[g.half_bins] += 0.01;
        x.normalize();
        let got = de.check_update(&x).unwrap();
        let d = g.delta();
        let pair = |a: &QuantizedDensity, b: &QuantizedDensity| {
            let mut out = QuantizedDensity::zeros(g);
            for (i, pa) in a.mass.iter().enumerate() {
                for (j, pb) in b.mass.iter().enumerate() {
                    let (la, lb) = (g.center(i), g.center(j));
                    let v = 2.0 * ((la / 2.0).tanh() * (lb / 2.0).tanh()).atanh();
                    let t = (v.abs() / d).round().copysign(v);
                    out.mass[(t as isize + g.half_bins as isize) as usize] += pa * pb;
                }
            }
            out
        };
        let want = pair(&pair(&x, &x), &x);
        assert!(got.total_variation(&want).unwrap() < 1e-12);
    }

    #[test]
    fn perfect_and_useless_channels() {
        let de = engine(3, 6);
        let g = de.grid();
        let r = de.run(&QuantizedDensity::point(g, 25.0)).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.trajectory[0], 0.0);
        let r = de.run(&QuantizedDensity::point(g, 0.0)).unwrap();
        assert!(!r.converged);
        assert!(r.trajectory.iter().all(|&e| (e - 0.5).abs() < 1e-12));
    }

    #[test]
    fn mass_is_conserved_and_trajectory_monotone() {
        let de = engine(3, 6);
        let g = de.grid();
        let chan = bpsk_taylor_linear_density(0.62, g);
        let mut v = chan.clone();
        for _ in 0..30 {
            let q = de.check_update(&v).unwrap();
            assert!((q.total() - 1.0).abs() < 1e-10);
            v = de.variable_update(&chan, &q).unwrap();
            assert!((v.total() - 1.0).abs() < 1e-10);
        }
        let r = de.run(&chan).unwrap();
        assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn sign_flip_symmetry() {
        let de = engine(3, 6);
        let g = de.grid();
        let chan = bpsk_taylor_linear_density(0.7, g);
        let q = de.check_update(&chan).unwrap();
        let qf = de.check_update(&chan.flipped()).unwrap();
        // an odd number of inputs flips the sign of the output
        assert!(q.flipped().total_variation(&qf).unwrap() < 1e-12);
    }

    #[test]
    fn above_threshold_run_fails() {
        let de = engine(3, 6);
        let g = de.grid();
        let a = crate::approx_llr::fit_optimized_linear(0.66).unwrap();
        assert!(!de.run(&bpsk_linear_density(a, 0.66, g)).unwrap().converged);
        let a = crate::approx_llr::fit_optimized_linear(0.62).unwrap();
        assert!(de.run(&bpsk_linear_density(a, 0.62, g)).unwrap().converged);
    }

    #[test]
    fn inverted_bracket_is_rejected() {
        let de = engine(3, 6);
        let m = BicmChannel::new(ConstellationKind::Bpsk, "taylor:1".parse().unwrap(), 0.5);
        assert!(matches!(de_threshold(&de, &m, 5.0, 3.0, 0.01), Err(Error::Bracket(_))));
        assert!(matches!(de_threshold(&de, &m, 6.0, 7.0, 0.01), Err(Error::Bracket(_))));
    }
}
