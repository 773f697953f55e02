//! Command-line front end. Every subcommand writes its output atomically and
//! leaves a `<out>.manifest.json` next to it; `replay` re-runs a manifest.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::approx_llr::{BitApprox, LlrMethod};
use crate::bicm_sim::{BerRecord, SimConfig, Simulation};
use crate::constellation::{snr_to_sigma, Constellation, ConstellationKind, SnrSpec};
use crate::density_evolution::{
    de_threshold, default_guess, find_threshold, fixed_point_taylor_threshold, BicmChannel, ChannelModel, DeParams,
    DensityEvolution, Ensemble, THRESHOLD_RESOLUTION_DB,
};
use crate::error::{Error, Result};
use crate::exact_llr::{Csi, ExactDemapper};
use crate::ldpc::sample_code;
use crate::llr_density::{bit_channel_density, DensitySource, LlrGrid, MIN_MC_SAMPLES};

pub mod exit {
    pub const USAGE: u8 = 2;
    pub const MISSING_FILE: u8 = 3;
    pub const INVALID: u8 = 4;
    pub const BRACKET: u8 = 5;
    pub const NUMERICAL: u8 = 6;
    pub const IO: u8 = 7;
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => exit::MISSING_FILE,
        Error::Io(_) => exit::IO,
        Error::Bracket(_) => exit::BRACKET,
        Error::NoConvergence { .. } | Error::Derivative(_) | Error::NotARoot(..) | Error::Construction(_) => {
            exit::NUMERICAL
        }
        Error::BitIndex { .. }
        | Error::InvalidParameter(_)
        | Error::SnrConvention { .. }
        | Error::GridMismatch
        | Error::TooFewSamples(_)
        | Error::Parse(_)
        | Error::Config(_) => exit::INVALID,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bicm-llr", version, about = "LLR approximations, density evolution and BER for LDPC-coded BICM over Rayleigh fading")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads (default: BICM_LLR_THREADS, else all cores).
    #[arg(long, global = true, env = "BICM_LLR_THREADS")]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Points and labels of a constellation.
    Constellation {
        #[arg(long)]
        kind: ConstellationKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bit LLRs on a grid of channel outputs.
    LlrTable(LlrTableArgs),
    /// Coefficients of an LLR approximation.
    Fit(FitArgs),
    /// Quantized LLR density of one bit channel or of the BICM mixture.
    Pdf(PdfArgs),
    /// Density-evolution threshold of an ensemble under an LLR method.
    DeThreshold(DeArgs),
    /// Random LDPC code without 4-cycles.
    CodeGen(CodeGenArgs),
    /// Monte Carlo BER/FER sweep from a key=value config.
    Ber {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-runs the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write here instead of the recorded output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct LlrTableArgs {
    #[arg(long)]
    pub kind: ConstellationKind,
    /// SNR in dB (Eb/N0 with --rate for BPSK, Es/N0 otherwise).
    #[arg(long)]
    pub snr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    /// Approximation tabulated next to the exact LLR.
    #[arg(long)]
    pub method: Option<LlrMethod>,
    /// SNR the approximation is fitted at (default: --snr).
    #[arg(long)]
    pub fit_snr: Option<f64>,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    pub y_min: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub y_max: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub kind: ConstellationKind,
    #[arg(long)]
    pub snr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long)]
    pub method: LlrMethod,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum SourceArg {
    Transform,
    Mc,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Quantizer bits b; the grid has 2^b − 1 bins.
    #[arg(long, default_value_t = 11)]
    pub quant_bits: u32,
    /// Largest representable LLR (default 25, or 35 for cubic methods).
    #[arg(long)]
    pub l_max: Option<f64>,
    #[arg(long, value_enum, default_value_t = SourceArg::Transform)]
    pub source: SourceArg,
    /// Monte Carlo samples when --source mc.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl GridArgs {
    fn source(&self) -> Result<DensitySource> {
        match self.source {
            SourceArg::Transform => Ok(DensitySource::default()),
            SourceArg::Mc if self.samples < MIN_MC_SAMPLES => Err(Error::TooFewSamples(self.samples)),
            SourceArg::Mc => Ok(DensitySource::MonteCarlo { samples: self.samples, seed: self.seed }),
        }
    }

    fn params(&self, method: &LlrMethod) -> DeParams {
        let mut p = DeParams::for_method(method);
        p.quantizer_bits = self.quant_bits;
        if let Some(l) = self.l_max {
            p.l_max = l;
        }
        p
    }
}

#[derive(Debug, Args)]
pub struct PdfArgs {
    #[arg(long)]
    pub kind: ConstellationKind,
    #[arg(long)]
    pub snr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long, default_value = "true")]
    pub method: LlrMethod,
    /// Bit channel (1-based); the BICM mixture when omitted.
    #[arg(long)]
    pub bit: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeArgs {
    #[arg(long)]
    pub kind: ConstellationKind,
    #[arg(long, default_value = "true")]
    pub method: LlrMethod,
    /// Ensemble file with `v d frac` / `c d frac` lines.
    #[arg(long, conflicts_with = "regular")]
    pub ensemble: Option<PathBuf>,
    /// Regular ensemble `dv,dc`.
    #[arg(long)]
    pub regular: Option<String>,
    /// Lower end of the bisection bracket in dB.
    #[arg(long, allow_hyphen_values = true, requires = "hi")]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "lo")]
    pub hi: Option<f64>,
    /// Start of the outward bracket search when --lo/--hi are absent.
    #[arg(long, allow_hyphen_values = true)]
    pub guess: Option<f64>,
    /// Alternate Taylor fits and thresholds until they agree.
    #[arg(long)]
    pub fixed_point: bool,
    /// Fit the approximation once at this SNR and hold it fixed.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "fixed_point")]
    pub fit_snr: Option<f64>,
    #[arg(long, default_value_t = THRESHOLD_RESOLUTION_DB)]
    pub resolution: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CodeGenArgs {
    /// Regular profile `dv,dc`.
    #[arg(long, conflicts_with = "ensemble")]
    pub profile: Option<String>,
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Sidecar written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn path_for(out: &Path) -> PathBuf {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&crate::error::read_file(path)?).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Formats with 9 significant digits, `.` decimal point.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let s = format!("{:.*}", (8 - exp).max(0) as usize, x);
        // rounding may carry into a new digit; that is still 9 significant
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Csv {
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        Ok(Self { w })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.w.write_record(fields).map_err(csv_err)
    }

    fn into_bytes(self) -> Result<Vec<u8>> {
        self.w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn sigma_for(kind: ConstellationKind, snr: f64, rate: f64) -> Result<f64> {
    snr_to_sigma(&Constellation::new(kind), SnrSpec::natural(kind, snr, rate))
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("expected 'dv,dc', got '{s}'"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// Output bytes plus manifest details for one subcommand.
struct Output {
    bytes: Vec<u8>,
    parameters: serde_json::Value,
    seed: Option<u64>,
}

fn cmd_constellation(kind: ConstellationKind) -> Result<Output> {
    let c = Constellation::new(kind);
    let mut csv = Csv::new(&["index", "label", "bits", "re", "im"])?;
    for (i, (p, &l)) in c.points().iter().zip(c.labels()).enumerate() {
        let bits: String = (1..=c.bits()).map(|b| char::from(b'0' + c.label_bit(l, b))).collect();
        csv.row(&[i.to_string(), l.to_string(), bits, fmt_sig(p.re), fmt_sig(p.im)])?;
    }
    Ok(Output {
        bytes: csv.into_bytes()?,
        parameters: serde_json::json!({ "kind": kind.to_string(), "avg_energy": c.avg_energy() }),
        seed: None,
    })
}

fn cmd_llr_table(a: &LlrTableArgs) -> Result<Output> {
    if a.points < 2 || !(a.y_min < a.y_max) {
        return Err(Error::InvalidParameter("need --points ≥ 2 and --y-min < --y-max".into()));
    }
    let c = Constellation::new(a.kind);
    let sigma = sigma_for(a.kind, a.snr, a.rate)?;
    let exact = ExactDemapper::new(&c, sigma, Csi::Unknown);
    let approx = match &a.method {
        None | Some(LlrMethod::Exact) => None,
        Some(m) => Some(m.demapper(&c, sigma_for(a.kind, a.fit_snr.unwrap_or(a.snr), a.rate)?)?),
    };
    let m = c.bits();
    let mut header = vec!["y_re".to_string(), "y_im".to_string()];
    header.extend((1..=m).map(|b| format!("exact_{b}")));
    if approx.is_some() {
        header.extend((1..=m).map(|b| format!("approx_{b}")));
    }
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>())?;
    let axis: Vec<f64> =
        (0..a.points).map(|i| a.y_min + (a.y_max - a.y_min) * i as f64 / (a.points - 1) as f64).collect();
    let ims: &[f64] = if c.is_two_dimensional() { &axis } else { &[0.0] };
    let (mut le, mut la) = (vec![0.0; m], vec![0.0; m]);
    for &im in ims {
        for &re in &axis {
            let y = Complex64::new(re, im);
            exact.demap(y, &mut le);
            let mut row = vec![fmt_sig(re), fmt_sig(im)];
            row.extend(le.iter().map(|&x| fmt_sig(x)));
            if let Some(d) = &approx {
                d.demap(y, &mut la);
                row.extend(la.iter().map(|&x| fmt_sig(x)));
            }
            csv.row(&row)?;
        }
    }
    Ok(Output {
        bytes: csv.into_bytes()?,
        parameters: serde_json::json!({
            "kind": a.kind.to_string(), "snr_db": a.snr, "rate": a.rate, "sigma": sigma,
            "method": a.method.as_ref().map(|m| m.to_string()), "fit_snr_db": a.fit_snr.unwrap_or(a.snr),
            "y_min": a.y_min, "y_max": a.y_max, "points": a.points,
        }),
        seed: None,
    })
}

fn cmd_fit(a: &FitArgs) -> Result<Output> {
    if a.method == LlrMethod::Exact {
        return Err(Error::InvalidParameter("the exact LLR has no coefficients to fit".into()));
    }
    let c = Constellation::new(a.kind);
    let sigma = sigma_for(a.kind, a.snr, a.rate)?;
    let approx = match &a.method {
        LlrMethod::Taylor(o) => crate::approx_llr::fit_taylor(&c, sigma, o)?,
        LlrMethod::Hou if a.kind == ConstellationKind::Bpsk => crate::approx_llr::ApproxLlr::hou(sigma),
        LlrMethod::OptLinear if a.kind == ConstellationKind::Bpsk => {
            crate::approx_llr::ApproxLlr::optimized_linear(sigma)?
        }
        m => return Err(Error::InvalidParameter(format!("{m} is defined for BPSK only"))),
    };
    let mut csv = Csv::new(&[
        "bit", "piece", "center_re", "center_im", "lo", "hi", "fold_re", "fold_im", "power_re", "power_im",
        "coefficient",
    ])?;
    let inf = f64::INFINITY;
    for (b, bit) in approx.bits.iter().enumerate() {
        let mut emit = |piece: usize, center: (f64, f64), lo: f64, hi: f64, fold: (bool, bool), l: u32, mm: u32, v: f64| {
            csv.row(&[
                (b + 1).to_string(),
                piece.to_string(),
                fmt_sig(center.0),
                fmt_sig(center.1),
                fmt_sig(lo),
                fmt_sig(hi),
                u8::from(fold.0).to_string(),
                u8::from(fold.1).to_string(),
                l.to_string(),
                mm.to_string(),
                fmt_sig(v),
            ])
        };
        match bit {
            BitApprox::Linear { alpha } => emit(0, (0.0, 0.0), -inf, inf, (false, false), 1, 0, *alpha)?,
            BitApprox::Cubic { alpha, beta } => {
                emit(0, (0.0, 0.0), -inf, inf, (false, false), 1, 0, *alpha)?;
                emit(0, (0.0, 0.0), -inf, inf, (false, false), 3, 0, *beta)?;
            }
            BitApprox::Piecewise(p) => {
                let folded = p.parity != crate::approx_llr::Parity::None;
                for (k, piece) in p.pieces.iter().enumerate() {
                    for (pow, &v) in piece.coeffs.iter().enumerate() {
                        if v != 0.0 {
                            emit(k, (piece.center, 0.0), piece.lo, piece.hi, (folded, false), pow as u32, 0, v)?;
                        }
                    }
                }
            }
            BitApprox::Poly2D(p) => {
                for &(l, mm, v) in &p.terms {
                    emit(0, p.center, -inf, inf, (p.fold_re, p.fold_im), l, mm, v)?;
                }
            }
        }
    }
    Ok(Output {
        bytes: csv.into_bytes()?,
        parameters: serde_json::json!({
            "kind": a.kind.to_string(), "snr_db": a.snr, "rate": a.rate, "sigma": sigma,
            "method": a.method.to_string(),
        }),
        seed: None,
    })
}

fn cmd_pdf(a: &PdfArgs) -> Result<Output> {
    let c = Constellation::new(a.kind);
    let sigma = sigma_for(a.kind, a.snr, a.rate)?;
    let params = a.grid.params(&a.method);
    let grid = LlrGrid::from_bits(params.quantizer_bits, params.l_max);
    let source = a.grid.source()?;
    let d = match a.bit {
        Some(bit) => {
            let demapper = a.method.demapper(&c, sigma)?;
            bit_channel_density(&c, bit, demapper.as_ref(), sigma, grid, source)?
        }
        None => {
            let mut model = BicmChannel::new(a.kind, a.method.clone(), a.rate);
            model.source = source;
            model.density(sigma, grid)?
        }
    };
    let mut csv = Csv::new(&["llr", "mass", "density"])?;
    let delta = grid.delta();
    for (i, &m) in d.mass.iter().enumerate() {
        csv.row(&[fmt_sig(grid.center(i)), fmt_sig(m), fmt_sig(m / delta)])?;
    }
    Ok(Output {
        bytes: csv.into_bytes()?,
        parameters: serde_json::json!({
            "kind": a.kind.to_string(), "snr_db": a.snr, "rate": a.rate, "sigma": sigma,
            "method": a.method.to_string(), "bit": a.bit, "quant_bits": params.quantizer_bits,
            "l_max": params.l_max, "source": a.grid.source, "samples": a.grid.samples,
        }),
        seed: (a.grid.source == SourceArg::Mc).then_some(a.grid.seed),
    })
}

fn cmd_de(a: &DeArgs) -> Result<Output> {
    let ensemble = match (&a.ensemble, &a.regular) {
        (Some(p), _) => Ensemble::parse(&crate::error::read_file(p)?)?,
        (None, Some(r)) => {
            let (dv, dc) = parse_pair(r)?;
            Ensemble::regular(dv, dc)?
        }
        (None, None) => return Err(Error::InvalidParameter("give --ensemble or --regular".into())),
    };
    let rate = ensemble.design_rate();
    let params = a.grid.params(&a.method);
    let engine = DensityEvolution::new(ensemble.clone(), params)?;
    let source = a.grid.source()?;
    let mut model = BicmChannel::new(a.kind, a.method.clone(), rate);
    model.source = source;
    let c = Constellation::new(a.kind);
    if a.method != LlrMethod::Exact && a.kind != ConstellationKind::Bpsk {
        // validates the method against the constellation before any DE runs
        a.method.demapper(&c, 1.0)?;
    }
    let search = |model: &BicmChannel| match (a.lo, a.hi) {
        (Some(lo), Some(hi)) => de_threshold(&engine, model, lo, hi, a.resolution),
        _ => find_threshold(&engine, model, a.guess.unwrap_or(default_guess(a.kind, rate)), 0.25, a.resolution),
    };
    let mut csv = Csv::new(&["method", "round", "fit_snr_db", "threshold_db", "sigma", "converged"])?;
    let method = a.method.to_string();
    if a.fixed_point {
        let LlrMethod::Taylor(orders) = &a.method else {
            return Err(Error::InvalidParameter("--fixed-point needs a taylor method".into()));
        };
        let start = if let (Some(lo), Some(hi)) = (a.lo, a.hi) {
            let mut exact = BicmChannel::new(a.kind, LlrMethod::Exact, rate);
            exact.source = source;
            Some(de_threshold(&engine, &exact, lo, hi, a.resolution)?.snr_db)
        } else {
            a.guess
        };
        let fp = fixed_point_taylor_threshold(&engine, a.kind, orders, rate, start, source, a.resolution, 10)?;
        for (round, w) in fp.trajectory.windows(2).enumerate() {
            let sigma = model.sigma(w[1])?;
            let done = fp.converged || round + 2 < fp.trajectory.len();
            csv.row(&[
                method.clone(),
                (round + 1).to_string(),
                fmt_sig(w[0]),
                fmt_sig(w[1]),
                fmt_sig(sigma),
                done.to_string(),
            ])?;
        }
    } else {
        if let Some(f) = a.fit_snr {
            model.fixed = Some(match &a.method {
                LlrMethod::Taylor(o) => crate::approx_llr::fit_taylor(&c, model.sigma(f)?, o)?,
                LlrMethod::Hou => crate::approx_llr::ApproxLlr::hou(model.sigma(f)?),
                LlrMethod::OptLinear => crate::approx_llr::ApproxLlr::optimized_linear(model.sigma(f)?)?,
                LlrMethod::Exact => return Err(Error::InvalidParameter("--fit-snr needs an approximation".into())),
            });
        }
        let t = search(&model)?;
        csv.row(&[
            method.clone(),
            "0".into(),
            a.fit_snr.map(fmt_sig).unwrap_or_default(),
            fmt_sig(t.snr_db),
            fmt_sig(t.sigma),
            t.converged.to_string(),
        ])?;
        info!("threshold {:.3} dB", t.snr_db);
    }
    Ok(Output {
        bytes: csv.into_bytes()?,
        parameters: serde_json::json!({
            "kind": a.kind.to_string(), "method": method, "ensemble": ensemble.to_string(),
            "design_rate": rate, "lo": a.lo, "hi": a.hi, "guess": a.guess, "fixed_point": a.fixed_point,
            "fit_snr_db": a.fit_snr, "resolution_db": a.resolution, "quant_bits": params.quantizer_bits,
            "l_max": params.l_max, "source": a.grid.source, "samples": a.grid.samples,
        }),
        seed: (a.grid.source == SourceArg::Mc).then_some(a.grid.seed),
    })
}

fn cmd_code_gen(a: &CodeGenArgs) -> Result<Output> {
    let ensemble = match (&a.profile, &a.ensemble) {
        (Some(p), _) => {
            let (dv, dc) = parse_pair(p)?;
            Ensemble::regular(dv, dc)?
        }
        (None, Some(f)) => Ensemble::parse(&crate::error::read_file(f)?)?,
        (None, None) => return Err(Error::InvalidParameter("give --profile or --ensemble".into())),
    };
    let h = sample_code(&ensemble, a.n, a.seed)?;
    info!("{} x {} code, girth ≥ {}", h.m_rows(), h.n(), h.girth_lower_bound());
    Ok(Output {
        bytes: h.to_string().into_bytes(),
        parameters: serde_json::json!({
            "ensemble": ensemble.to_string(), "n": a.n, "m_rows": h.m_rows(),
            "girth_lower_bound": h.girth_lower_bound(),
        }),
        seed: Some(a.seed),
    })
}

fn cmd_ber(config: &Path, out: &Path) -> Result<Output> {
    let cfg = SimConfig::read(config)?;
    let sim = Simulation::new(cfg.clone())?;
    let header = ["snr_db", "frames", "bit_errors", "frame_errors", "ber", "fer", "mean_iterations"];
    let row = |r: &BerRecord| {
        [
            fmt_sig(r.snr_db),
            r.frames.to_string(),
            r.bit_errors.to_string(),
            r.frame_errors.to_string(),
            fmt_sig(r.ber),
            fmt_sig(r.fer),
            fmt_sig(r.mean_iterations),
        ]
        .join(",")
    };
    // records land in a sibling temp file as they finish; the final rename
    // happens in the caller
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut partial = tempfile::Builder::new().prefix(".ber-partial").tempfile_in(dir)?;
    writeln!(partial, "{}", header.join(","))?;
    let records = sim.run(|r| {
        writeln!(partial, "{}", row(r))?;
        partial.flush()?;
        Ok(())
    })?;
    let mut csv = Csv::new(&header)?;
    for r in &records {
        csv.row(&row(r).split(',').map(String::from).collect::<Vec<_>>())?;
    }
    Ok(Output {
        bytes: csv.into_bytes()?,
        parameters: serde_json::json!({
            "config": serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?,
            "code_n": sim.code().n(), "info_bits": sim.k(), "rate": sim.rate(), "fit_sigma": sim.fit_sigma(),
        }),
        seed: Some(cfg.seed),
    })
}

fn dispatch(cmd: &Command) -> Result<(String, &Path, Output)> {
    Ok(match cmd {
        Command::Constellation { kind, out } => ("constellation".into(), out, cmd_constellation(*kind)?),
        Command::LlrTable(a) => ("llr-table".into(), &a.out, cmd_llr_table(a)?),
        Command::Fit(a) => ("fit".into(), &a.out, cmd_fit(a)?),
        Command::Pdf(a) => ("pdf".into(), &a.out, cmd_pdf(a)?),
        Command::DeThreshold(a) => ("de-threshold".into(), &a.out, cmd_de(a)?),
        Command::CodeGen(a) => ("code-gen".into(), &a.out, cmd_code_gen(a)?),
        Command::Ber { config, out } => ("ber".into(), out, cmd_ber(config, out)?),
        Command::Replay { .. } => unreachable!("handled by the caller"),
    })
}

/// Replaces the value of `--out` (or `--out=…`) in a recorded argument list.
fn with_out(args: &[String], out: &Path) -> Vec<String> {
    let mut v = Vec::with_capacity(args.len());
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") {
            v.push(a.clone());
        }
    }
    v.push("--out".into());
    v.push(out.display().to_string());
    v
}

fn execute(args: Vec<String>) -> Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("bicm-llr".to_string()).chain(args.iter().cloned()))
        .map_err(|e| Error::Config(e.to_string()))?;
    if let Command::Replay { manifest, out } = &cli.command {
        let m = RunManifest::read(manifest)?;
        let recorded = match out {
            Some(o) => with_out(&m.args, o),
            None => m.args.clone(),
        };
        return execute(recorded);
    }
    let (name, out, output) = dispatch(&cli.command)?;
    write_atomic(out, &output.bytes)?;
    let manifest = RunManifest {
        subcommand: name,
        args,
        parameters: output.parameters,
        seed: output.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        outputs: vec![out.to_path_buf()],
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    write_atomic(&RunManifest::path_for(out), json.as_bytes())?;
    info!("wrote {}", out.display());
    Ok(())
}

/// Parses `argv` (including the program name), runs one subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = argv.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(argv.into_iter().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
