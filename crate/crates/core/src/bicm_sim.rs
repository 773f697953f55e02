//! Monte Carlo BER/FER of the coded BICM chain: encode, interleave, map,
//! Rayleigh channel, demap with a chosen LLR method, de-interleave, decode.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_llr::{LlrMethod, SymbolDemapper};
use crate::channel::{stream_id, stream_rng, transmit, ChannelParams};
use crate::constellation::{snr_to_sigma, Constellation, ConstellationKind, SnrSpec};
use crate::density_evolution::{
    default_guess, find_threshold, fixed_point_taylor_threshold, BicmChannel, DeParams, DensityEvolution,
    THRESHOLD_RESOLUTION_DB,
};
use crate::error::{Error, Result};
use crate::exact_llr::{Csi, ExactDemapper};
use crate::ldpc::{BpDecoder, Encoder, ParityCheckMatrix};
use crate::llr_density::DensitySource;

/// Seeded uniform random permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<u32>,
}

impl Interleaver {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut perm: Vec<u32> = (0..len as u32).collect();
        perm.shuffle(&mut stream_rng(seed, u64::MAX));
        Self { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[u32] {
        &self.perm
    }

    /// `out[j] = input[π(j)]`.
    pub fn interleave<T: Copy>(&self, input: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| input[p as usize]).collect()
    }

    pub fn deinterleave<T: Copy + Default>(&self, input: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); input.len()];
        for (&p, &x) in self.perm.iter().zip(input) {
            out[p as usize] = x;
        }
        out
    }
}

/// Bit-to-symbol plumbing for one code length. Codewords whose length is not
/// a multiple of `m` are padded with zeros that the receiver discards.
#[derive(Debug, Clone)]
pub struct BicmMapper {
    constellation: Constellation,
    code_len: usize,
    interleaver: Interleaver,
    point_of_label: Vec<usize>,
}

impl BicmMapper {
    pub fn new(constellation: &Constellation, code_len: usize, interleaver_seed: u64) -> Self {
        let m = constellation.bits();
        let padded = code_len.div_ceil(m) * m;
        let point_of_label = (0..constellation.len() as u8).map(|l| constellation.index_of_label(l)).collect();
        Self {
            constellation: constellation.clone(),
            code_len,
            interleaver: Interleaver::new(padded, interleaver_seed),
            point_of_label,
        }
    }

    pub fn padding(&self) -> usize {
        self.interleaver.len() - self.code_len
    }

    pub fn symbols_per_frame(&self) -> usize {
        self.interleaver.len() / self.constellation.bits()
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    /// Interleaves, groups `m` bits per symbol (first bit most significant)
    /// and maps each label to its point.
    pub fn map_frame(&self, bits: &[u8]) -> Vec<Complex64> {
        debug_assert_eq!(bits.len(), self.code_len);
        let mut padded = bits.to_vec();
        padded.resize(self.interleaver.len(), 0);
        let m = self.constellation.bits();
        self.interleaver
            .interleave(&padded)
            .chunks(m)
            .map(|g| {
                let label = g.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1));
                self.constellation.points()[self.point_of_label[label as usize]]
            })
            .collect()
    }

    /// Bit LLRs in code-bit order.
    pub fn demap_frame(&self, ys: &[Complex64], demapper: &dyn SymbolDemapper) -> Vec<f64> {
        let m = self.constellation.bits();
        let mut inter = vec![0.0; ys.len() * m];
        for (y, out) in ys.iter().zip(inter.chunks_mut(m)) {
            demapper.demap(*y, out);
        }
        let mut llr = self.interleaver.deinterleave(&inter);
        llr.truncate(self.code_len);
        llr
    }

    /// Hard decisions of a noiseless frame, for round-trip checks.
    pub fn unmap_frame(&self, symbols: &[Complex64]) -> Vec<u8> {
        let m = self.constellation.bits();
        let mut inter = Vec::with_capacity(symbols.len() * m);
        for s in symbols {
            let p = self.constellation.points().iter().position(|x| (x - s).norm_sqr() < 1e-18).expect("a point");
            let label = self.constellation.labels()[p];
            inter.extend((1..=m).map(|i| self.constellation.label_bit(label, i)));
        }
        let mut bits = self.interleaver.deinterleave(&inter);
        bits.truncate(self.code_len);
        bits
    }
}

/// What is transmitted in each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameMode {
    /// All-zero codeword behind i.i.d. sign adapters.
    AllZero,
    /// Encoded random information; `adapters` toggles the sign adapters.
    Random { adapters: bool },
}

/// Noise level at which fitted approximations are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitPolicy {
    /// One fit for the whole sweep, at this SNR in dB.
    Fixed(f64),
    /// Fixed at the method's density-evolution threshold, computed on start.
    Threshold,
    /// Refit at every SNR point.
    PerPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kind: ConstellationKind,
    pub code: PathBuf,
    #[serde(with = "display_fromstr")]
    pub llr: LlrMethod,
    pub snr_db: Vec<f64>,
    pub max_iterations: usize,
    /// Decoder clip; defaults to 25, or 35 for cubic approximations.
    pub clip: Option<f64>,
    pub min_frame_errors: u64,
    pub max_frames: u64,
    pub seed: u64,
    pub interleaver_seed: u64,
    pub mode: FrameMode,
    pub fit: FitPolicy,
    /// Frames simulated between stop-rule checks.
    pub batch: usize,
    /// End the sweep after the first point without bit errors.
    pub stop_when_error_free: bool,
    /// End the sweep after the first point whose BER is below this value.
    #[serde(default)]
    pub stop_below_ber: Option<f64>,
}

mod display_fromstr {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

impl SimConfig {
    pub fn new(kind: ConstellationKind, code: impl Into<PathBuf>, llr: LlrMethod, snr_db: Vec<f64>) -> Self {
        Self {
            kind,
            code: code.into(),
            llr,
            snr_db,
            max_iterations: 100,
            clip: None,
            min_frame_errors: 100,
            max_frames: 100_000,
            seed: 1,
            interleaver_seed: 1,
            mode: FrameMode::AllZero,
            fit: FitPolicy::Threshold,
            batch: 64,
            stop_when_error_free: false,
            stop_below_ber: None,
        }
    }

    pub fn clip(&self) -> f64 {
        self.clip.unwrap_or(DeParams::for_method(&self.llr).l_max)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.snr_db.is_empty() {
            return bad("snr_db list is empty".into());
        }
        if let Some(x) = self.snr_db.iter().find(|x| !x.is_finite()) {
            return bad(format!("SNR {x} is not finite"));
        }
        if self.min_frame_errors == 0 || self.max_frames == 0 || self.batch == 0 || self.max_iterations == 0 {
            return bad("stop rules, batch and max_iterations must be positive".into());
        }
        if let Some(b) = self.stop_below_ber.filter(|b| !(*b > 0.0 && *b < 1.0)) {
            return bad(format!("stop_below_ber {b} must lie in (0, 1)"));
        }
        if !(self.clip() > 0.0) {
            return bad(format!("clip {} must be positive", self.clip()));
        }
        let c = Constellation::new(self.kind);
        match &self.llr {
            LlrMethod::Hou | LlrMethod::OptLinear if self.kind != ConstellationKind::Bpsk => {
                bad(format!("{} is defined for BPSK only, not {}", self.llr, self.kind))
            }
            LlrMethod::Taylor(o) => o.validate(&c).map_err(|e| Error::Config(e.to_string())),
            _ => Ok(()),
        }
    }

    /// Parses `key = value` lines. A relative `code` path is resolved
    /// against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("key '{}' given twice", k.trim())));
            }
        }
        let mut take = |k: &str| kv.remove(k);
        let need = |v: Option<String>, k: &str| v.ok_or_else(|| Error::Config(format!("missing key '{k}'")));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value for {k}: '{v}'")))
        }

        let kind: ConstellationKind = num("kind", &need(take("kind"), "kind")?)?;
        let code = PathBuf::from(need(take("code"), "code")?);
        let code = if code.is_relative() { base_dir.join(code) } else { code };
        let llr: LlrMethod =
            need(take("llr"), "llr")?.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let snr_db = parse_snr_list(&need(take("snr_db"), "snr_db")?)?;
        let mut cfg = SimConfig::new(kind, code, llr, snr_db);
        if let Some(v) = take("max_iterations") {
            cfg.max_iterations = num("max_iterations", &v)?;
        }
        if let Some(v) = take("clip") {
            cfg.clip = Some(num("clip", &v)?);
        }
        if let Some(v) = take("min_frame_errors") {
            cfg.min_frame_errors = num("min_frame_errors", &v)?;
        }
        if let Some(v) = take("max_frames") {
            cfg.max_frames = num("max_frames", &v)?;
        }
        if let Some(v) = take("seed") {
            cfg.seed = num("seed", &v)?;
            cfg.interleaver_seed = cfg.seed;
        }
        if let Some(v) = take("interleaver_seed") {
            cfg.interleaver_seed = num("interleaver_seed", &v)?;
        }
        if let Some(v) = take("batch") {
            cfg.batch = num("batch", &v)?;
        }
        if let Some(v) = take("stop_when_error_free") {
            cfg.stop_when_error_free = num("stop_when_error_free", &v)?;
        }
        if let Some(v) = take("stop_below_ber") {
            cfg.stop_below_ber = Some(num("stop_below_ber", &v)?);
        }
        let adapters = take("adapters").map(|v| num::<bool>("adapters", &v)).transpose()?;
        if let Some(v) = take("mode") {
            cfg.mode = match v.as_str() {
                "allzero" => FrameMode::AllZero,
                "random" => FrameMode::Random { adapters: adapters.unwrap_or(true) },
                _ => return Err(Error::Config(format!("mode must be allzero or random, got '{v}'"))),
            };
        }
        if adapters == Some(false) && cfg.mode == FrameMode::AllZero {
            return Err(Error::Config("the all-zero mode needs sign adapters".into()));
        }
        let fit = take("fit");
        let fit_snr = take("fit_snr_db");
        cfg.fit = match (fit.as_deref(), fit_snr.as_deref()) {
            (Some("per-point"), None) => FitPolicy::PerPoint,
            (Some("fixed") | None, Some("auto") | None) => FitPolicy::Threshold,
            (Some("fixed") | None, Some(s)) => FitPolicy::Fixed(num("fit_snr_db", s)?),
            (f, s) => return Err(Error::Config(format!("invalid fit combination {f:?} / fit_snr_db {s:?}"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = crate::error::read_file(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

impl fmt::Display for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind = {}", self.kind)?;
        writeln!(f, "code = {}", self.code.display())?;
        writeln!(f, "llr = {}", self.llr)?;
        let snrs: Vec<String> = self.snr_db.iter().map(|x| format!("{x}")).collect();
        writeln!(f, "snr_db = {}", snrs.join(", "))?;
        writeln!(f, "max_iterations = {}", self.max_iterations)?;
        if let Some(c) = self.clip {
            writeln!(f, "clip = {c}")?;
        }
        writeln!(f, "min_frame_errors = {}", self.min_frame_errors)?;
        writeln!(f, "max_frames = {}", self.max_frames)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "interleaver_seed = {}", self.interleaver_seed)?;
        match self.mode {
            FrameMode::AllZero => writeln!(f, "mode = allzero")?,
            FrameMode::Random { adapters } => writeln!(f, "mode = random\nadapters = {adapters}")?,
        }
        match self.fit {
            FitPolicy::Fixed(s) => writeln!(f, "fit = fixed\nfit_snr_db = {s}")?,
            FitPolicy::Threshold => writeln!(f, "fit = fixed\nfit_snr_db = auto")?,
            FitPolicy::PerPoint => writeln!(f, "fit = per-point")?,
        }
        writeln!(f, "batch = {}", self.batch)?;
        writeln!(f, "stop_when_error_free = {}", self.stop_when_error_free)?;
        if let Some(b) = self.stop_below_ber {
            writeln!(f, "stop_below_ber = {b}")?;
        }
        Ok(())
    }
}

/// Comma/space separated values, or `start:step:stop` ranges.
pub fn parse_snr_list(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad SNR list '{s}'"));
    let mut out = Vec::new();
    for tok in s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let parts: Vec<f64> =
            tok.split(':').map(|p| p.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        match parts[..] {
            [x] => out.push(x),
            [a, step, b] if step > 0.0 && b >= a => {
                let n = ((b - a) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| a + i as f64 * step));
            }
            _ => return Err(bad()),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    frames: u64,
    bit_errors: u64,
    frame_errors: u64,
    iterations: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.frames += o.frames;
        self.bit_errors += o.bit_errors;
        self.frame_errors += o.frame_errors;
        self.iterations += o.iterations;
        self
    }
}

/// A prepared simulation: code, encoder, decoder and mapper built once.
pub struct Simulation {
    config: SimConfig,
    constellation: Constellation,
    code: ParityCheckMatrix,
    encoder: Encoder,
    decoder: BpDecoder,
    mapper: BicmMapper,
    fit_sigma: Option<f64>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        let code = ParityCheckMatrix::read(&config.code)?;
        Self::with_code(config, code)
    }

    pub fn with_code(config: SimConfig, code: ParityCheckMatrix) -> Result<Self> {
        config.validate()?;
        let constellation = Constellation::new(config.kind);
        let encoder = Encoder::new(&code)?;
        let decoder = BpDecoder::new(&code, config.max_iterations, config.clip())?;
        let mapper = BicmMapper::new(&constellation, code.n(), config.interleaver_seed);
        let mut sim = Self { config, constellation, code, encoder, decoder, mapper, fit_sigma: None };
        sim.fit_sigma = sim.resolve_fit_sigma()?;
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn code(&self) -> &ParityCheckMatrix {
        &self.code
    }

    pub fn mapper(&self) -> &BicmMapper {
        &self.mapper
    }

    /// Information bits per frame.
    pub fn k(&self) -> usize {
        self.encoder.k()
    }

    pub fn rate(&self) -> f64 {
        self.encoder.rate()
    }

    /// Noise level the approximation is fitted at, when fixed for the sweep.
    pub fn fit_sigma(&self) -> Option<f64> {
        self.fit_sigma
    }

    pub fn sigma(&self, snr_db: f64) -> Result<f64> {
        snr_to_sigma(&self.constellation, SnrSpec::natural(self.config.kind, snr_db, self.rate()))
    }

    fn resolve_fit_sigma(&self) -> Result<Option<f64>> {
        if self.config.llr == LlrMethod::Exact {
            return Ok(None);
        }
        match self.config.fit {
            FitPolicy::PerPoint => Ok(None),
            FitPolicy::Fixed(db) => Ok(Some(self.sigma(db)?)),
            FitPolicy::Threshold => {
                let ensemble = self.code.ensemble()?;
                let engine = DensityEvolution::new(ensemble, DeParams::for_method(&self.config.llr))?;
                let (kind, rate) = (self.config.kind, self.rate());
                let snr = match (&self.config.llr, kind) {
                    (LlrMethod::Taylor(o), ConstellationKind::Pam8 | ConstellationKind::Qam16) => {
                        fixed_point_taylor_threshold(
                            &engine,
                            kind,
                            o,
                            rate,
                            None,
                            DensitySource::default(),
                            THRESHOLD_RESOLUTION_DB,
                            10,
                        )?
                        .threshold
                        .snr_db
                    }
                    (m, _) => {
                        let model = BicmChannel::new(kind, m.clone(), rate);
                        find_threshold(&engine, &model, default_guess(kind, rate), 0.25, THRESHOLD_RESOLUTION_DB)?
                            .snr_db
                    }
                };
                info!("approximation fitted at the threshold {snr:.3} dB");
                Ok(Some(self.sigma(snr)?))
            }
        }
    }

    /// The demapper used at true noise level `sigma`.
    pub fn demapper(&self, sigma: f64) -> Result<Box<dyn SymbolDemapper>> {
        match &self.config.llr {
            LlrMethod::Exact => Ok(Box::new(ExactDemapper::new(&self.constellation, sigma, Csi::Unknown))),
            m => m.demapper(&self.constellation, self.fit_sigma.unwrap_or(sigma)),
        }
    }

    fn frame(&self, demapper: &dyn SymbolDemapper, params: &ChannelParams, point: usize, frame: u64) -> Result<Tally> {
        let n = self.code.n();
        let mut rng = stream_rng(self.config.seed, stream_id(point as u64, frame));
        let adapters = !matches!(self.config.mode, FrameMode::Random { adapters: false });
        let flips: Vec<u8> = if adapters { (0..n).map(|_| rng.random_range(0..2u8)).collect() } else { vec![0; n] };
        let codeword = match self.config.mode {
            FrameMode::AllZero => vec![0u8; n],
            FrameMode::Random { .. } => {
                let info: Vec<u8> = (0..self.k()).map(|_| rng.random_range(0..2u8)).collect();
                self.encoder.encode(&info)?
            }
        };
        let sent: Vec<u8> = codeword.iter().zip(&flips).map(|(c, t)| c ^ t).collect();
        let two_d = self.constellation.is_two_dimensional();
        let ys: Vec<Complex64> =
            self.mapper.map_frame(&sent).into_iter().map(|x| transmit(x, params, two_d, &mut rng).y).collect();
        let mut llr = self.mapper.demap_frame(&ys, demapper);
        for (l, &t) in llr.iter_mut().zip(&flips) {
            if t == 1 {
                *l = -*l;
            }
        }
        let out = self.decoder.decode(&llr)?;
        let bit_errors =
            self.encoder.info_positions().iter().filter(|&&p| out.bits[p] != codeword[p]).count() as u64;
        Ok(Tally { frames: 1, bit_errors, frame_errors: u64::from(bit_errors > 0), iterations: out.iterations as u64 })
    }

    /// Simulates SNR point number `index` until a stop rule fires.
    pub fn run_point(&self, index: usize) -> Result<BerRecord> {
        let snr_db = self.config.snr_db[index];
        let sigma = self.sigma(snr_db)?;
        let demapper = self.demapper(sigma)?;
        let params = ChannelParams { sigma, csi_at_rx: false };
        let mut total = Tally::default();
        while total.frame_errors < self.config.min_frame_errors && total.frames < self.config.max_frames {
            let batch = (self.config.batch as u64).min(self.config.max_frames - total.frames);
            let start = total.frames;
            let t = (start..start + batch)
                .into_par_iter()
                .map(|f| self.frame(demapper.as_ref(), &params, index, f))
                .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
            total = total.merge(t);
        }
        let info_bits = (total.frames * self.k() as u64) as f64;
        Ok(BerRecord {
            snr_db,
            frames: total.frames,
            bit_errors: total.bit_errors,
            frame_errors: total.frame_errors,
            ber: total.bit_errors as f64 / info_bits,
            fer: total.frame_errors as f64 / total.frames as f64,
            mean_iterations: total.iterations as f64 / total.frames as f64,
        })
    }

    /// Runs the sweep, handing each record to `emit` as soon as it is done.
    pub fn run(&self, mut emit: impl FnMut(&BerRecord) -> Result<()>) -> Result<Vec<BerRecord>> {
        let mut out = Vec::new();
        for i in 0..self.config.snr_db.len() {
            let r = self.run_point(i)?;
            info!("{:.3} dB: {} frames, BER {:.3e}, FER {:.3e}", r.snr_db, r.frames, r.ber, r.fer);
            emit(&r)?;
            out.push(r);
            if (self.config.stop_when_error_free && r.bit_errors == 0)
                || self.config.stop_below_ber.is_some_and(|b| r.ber < b)
            {
                break;
            }
        }
        Ok(out)
    }
}

/// Builds the simulation described by `config` and runs it.
pub fn run_ber(config: &SimConfig) -> Result<Vec<BerRecord>> {
    Simulation::new(config.clone())?.run(|_| Ok(()))
}

/// SNR at which a BER curve crosses `target`, by log-linear interpolation
/// between the two bracketing points. `None` if the curve never crosses.
pub fn snr_at_ber(records: &[BerRecord], target: f64) -> Option<f64> {
    records.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        // an error-free point gives no slope to interpolate on
        (a.ber >= target && b.ber < target && b.ber > 0.0).then(|| {
            let t = (target.ln() - a.ber.ln()) / (b.ber.ln() - a.ber.ln());
            a.snr_db + t * (b.snr_db - a.snr_db)
        })
    })
}
