//! Python bindings: constellations, exact and approximate LLRs, LLR
//! densities, density-evolution thresholds, LDPC codes and BER runs.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;

use bicm_llr::approx_llr::{fit_taylor, ApproxLlr, BitApprox, LlrMethod, SymbolDemapper};
use bicm_llr::bicm_sim::{BerRecord, SimConfig, Simulation};
use bicm_llr::constellation::{self as cons, ConstellationKind, SnrSpec};
use bicm_llr::density_evolution::{
    default_guess, de_threshold as de_bracket, find_threshold, fixed_point_taylor_threshold, BicmChannel, DeParams,
    DensityEvolution, Ensemble, THRESHOLD_RESOLUTION_DB,
};
use bicm_llr::error::Error;
use bicm_llr::exact_llr::{Csi, ExactDemapper};
use bicm_llr::ldpc::{sample_code, BpDecoder, Encoder, ParityCheckMatrix};
use bicm_llr::llr_density::{bicm_channel_density, bit_channel_density, DensitySource, LlrGrid};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => PyFileNotFoundError::new_err(io.to_string()),
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn kind(s: &str) -> PyResult<ConstellationKind> {
    s.parse().map_err(py_err)
}

fn method(s: &str) -> PyResult<LlrMethod> {
    s.parse().map_err(py_err)
}

fn ensemble(profile: &str) -> PyResult<Ensemble> {
    // "dv,dc" for regular ensembles, otherwise the v/c line format
    if let Some((a, b)) = profile.split_once(',') {
        if let (Ok(dv), Ok(dc)) = (a.trim().parse(), b.trim().parse()) {
            return Ensemble::regular(dv, dc).map_err(py_err);
        }
    }
    Ensemble::parse(profile).map_err(py_err)
}

/// σ for an SNR in dB: Eb/N0 with `rate` for BPSK, Es/N0 otherwise.
#[pyfunction]
#[pyo3(signature = (kind_name, snr_db, rate=0.5))]
fn snr_to_sigma(kind_name: &str, snr_db: f64, rate: f64) -> PyResult<f64> {
    let k = kind(kind_name)?;
    cons::snr_to_sigma(&cons::Constellation::new(k), SnrSpec::natural(k, snr_db, rate)).map_err(py_err)
}

#[pyclass(frozen)]
struct Constellation {
    inner: cons::Constellation,
}

#[pymethods]
impl Constellation {
    #[new]
    fn new(kind_name: &str) -> PyResult<Self> {
        Ok(Self { inner: cons::Constellation::new(kind(kind_name)?) })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn bits(&self) -> usize {
        self.inner.bits()
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points().iter().map(|p| (p.re, p.im)).collect()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    fn avg_energy(&self) -> f64 {
        self.inner.avg_energy()
    }

    fn __repr__(&self) -> String {
        format!("Constellation('{}')", self.inner.kind())
    }
}

enum Inner {
    Exact(ExactDemapper),
    Approx(ApproxLlr),
}

impl Inner {
    fn as_dyn(&self) -> &dyn SymbolDemapper {
        match self {
            Inner::Exact(d) => d,
            Inner::Approx(a) => a,
        }
    }
}

/// Bit-LLR computer for one constellation and method.
///
/// `sigma` is the true noise level; approximations are fitted at
/// `fit_sigma` (defaults to `sigma`).
#[pyclass(frozen)]
struct Demapper {
    inner: Inner,
    method: String,
}

#[pymethods]
impl Demapper {
    #[new]
    #[pyo3(signature = (kind_name, method_name, sigma, fit_sigma=None))]
    fn new(kind_name: &str, method_name: &str, sigma: f64, fit_sigma: Option<f64>) -> PyResult<Self> {
        let c = cons::Constellation::new(kind(kind_name)?);
        let m = method(method_name)?;
        let fit = fit_sigma.unwrap_or(sigma);
        let inner = match &m {
            LlrMethod::Exact => Inner::Exact(ExactDemapper::new(&c, sigma, Csi::Unknown)),
            LlrMethod::Taylor(o) => Inner::Approx(fit_taylor(&c, fit, o).map_err(py_err)?),
            LlrMethod::Hou | LlrMethod::OptLinear if c.kind() != ConstellationKind::Bpsk => {
                return Err(PyValueError::new_err(format!("{m} is defined for BPSK only")));
            }
            LlrMethod::Hou => Inner::Approx(ApproxLlr::hou(fit)),
            LlrMethod::OptLinear => Inner::Approx(ApproxLlr::optimized_linear(fit).map_err(py_err)?),
        };
        Ok(Self { inner, method: m.to_string() })
    }

    #[getter]
    fn method(&self) -> String {
        self.method.clone()
    }

    #[getter]
    fn bits(&self) -> usize {
        self.inner.as_dyn().bits()
    }

    /// LLRs for each output sample, one row of `bits` values per sample.
    #[pyo3(signature = (y_re, y_im=None))]
    fn llrs(&self, y_re: Vec<f64>, y_im: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let im = y_im.unwrap_or_else(|| vec![0.0; y_re.len()]);
        if im.len() != y_re.len() {
            return Err(PyValueError::new_err("y_re and y_im differ in length"));
        }
        let d = self.inner.as_dyn();
        Ok(y_re
            .iter()
            .zip(&im)
            .map(|(&r, &i)| {
                let mut out = vec![0.0; d.bits()];
                d.demap(Complex64::new(r, i), &mut out);
                out
            })
            .collect())
    }

    /// Fitted coefficients as `(bit, piece, center_re, center_im, lo, hi,
    /// power_re, power_im, value)` tuples; empty for the exact LLR.
    #[allow(clippy::type_complexity)]
    fn coefficients(&self) -> Vec<(usize, usize, f64, f64, f64, f64, u32, u32, f64)> {
        let Inner::Approx(a) = &self.inner else { return Vec::new() };
        let inf = f64::INFINITY;
        let mut out = Vec::new();
        for (b, bit) in a.bits.iter().enumerate() {
            match bit {
                BitApprox::Linear { alpha } => out.push((b + 1, 0, 0.0, 0.0, -inf, inf, 1, 0, *alpha)),
                BitApprox::Cubic { alpha, beta } => {
                    out.push((b + 1, 0, 0.0, 0.0, -inf, inf, 1, 0, *alpha));
                    out.push((b + 1, 0, 0.0, 0.0, -inf, inf, 3, 0, *beta));
                }
                BitApprox::Piecewise(p) => {
                    for (k, q) in p.pieces.iter().enumerate() {
                        for (pow, &v) in q.coeffs.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                            out.push((b + 1, k, q.center, 0.0, q.lo, q.hi, pow as u32, 0, v));
                        }
                    }
                }
                BitApprox::Poly2D(p) => {
                    for &(l, m, v) in &p.terms {
                        out.push((b + 1, 0, p.center.0, p.center.1, -inf, inf, l, m, v));
                    }
                }
            }
        }
        out
    }
}

/// Adapter-symmetrized LLR density on the DE grid, as `(llr, mass)` lists.
/// `bit = None` gives the BICM mixture over all bits.
#[pyfunction]
#[pyo3(signature = (kind_name, method_name, sigma, bit=None, fit_sigma=None, quant_bits=11, l_max=None))]
fn llr_density(
    kind_name: &str,
    method_name: &str,
    sigma: f64,
    bit: Option<usize>,
    fit_sigma: Option<f64>,
    quant_bits: u32,
    l_max: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let c = cons::Constellation::new(kind(kind_name)?);
    let m = method(method_name)?;
    let grid = LlrGrid::from_bits(quant_bits, l_max.unwrap_or(DeParams::for_method(&m).l_max));
    let d = m.demapper(&c, if m == LlrMethod::Exact { sigma } else { fit_sigma.unwrap_or(sigma) }).map_err(py_err)?;
    let src = DensitySource::default();
    let q = match bit {
        Some(b) => bit_channel_density(&c, b, d.as_ref(), sigma, grid, src),
        None => bicm_channel_density(&c, d.as_ref(), sigma, grid, src),
    }
    .map_err(py_err)?;
    Ok(((0..grid.len()).map(|i| grid.center(i)).collect(), q.mass))
}

/// DE threshold in dB. `profile` is `"dv,dc"` or an ensemble in the
/// `v <degree> <fraction>` / `c <degree> <fraction>` line format.
#[pyfunction]
#[pyo3(signature = (kind_name, method_name, profile, lo_db=None, hi_db=None, resolution_db=THRESHOLD_RESOLUTION_DB))]
fn de_threshold(
    py: Python<'_>,
    kind_name: &str,
    method_name: &str,
    profile: &str,
    lo_db: Option<f64>,
    hi_db: Option<f64>,
    resolution_db: f64,
) -> PyResult<f64> {
    let (k, m, e) = (kind(kind_name)?, method(method_name)?, ensemble(profile)?);
    py.detach(|| {
        let rate = e.design_rate();
        let engine = DensityEvolution::new(e, DeParams::for_method(&m))?;
        let model = BicmChannel::new(k, m, rate);
        match (lo_db, hi_db) {
            (Some(lo), Some(hi)) => de_bracket(&engine, &model, lo, hi, resolution_db),
            _ => find_threshold(&engine, &model, default_guess(k, rate), 0.25, resolution_db),
        }
        .map(|t| t.snr_db)
    })
    .map_err(py_err)
}

/// Alternates Taylor fitting and DE until the threshold settles. Returns the
/// threshold trajectory in dB (start, then one value per round) and whether
/// it converged.
#[pyfunction]
#[pyo3(signature = (kind_name, orders, profile, start_db=None, max_rounds=10))]
fn fixed_point_threshold(
    py: Python<'_>,
    kind_name: &str,
    orders: &str,
    profile: &str,
    start_db: Option<f64>,
    max_rounds: usize,
) -> PyResult<(Vec<f64>, bool)> {
    let k = kind(kind_name)?;
    let m = method(&format!("taylor:{orders}"))?;
    let LlrMethod::Taylor(o) = &m else { unreachable!() };
    let e = ensemble(profile)?;
    py.detach(|| {
        let rate = e.design_rate();
        let engine = DensityEvolution::new(e, DeParams::for_method(&m))?;
        let src = DensitySource::default();
        fixed_point_taylor_threshold(&engine, k, o, rate, start_db, src, THRESHOLD_RESOLUTION_DB, max_rounds)
    })
    .map(|fp| (fp.trajectory, fp.converged))
    .map_err(py_err)
}

/// Sparse parity-check matrix with encoder and BP decoder.
#[pyclass(frozen)]
struct LdpcCode {
    h: ParityCheckMatrix,
    encoder: Encoder,
}

impl LdpcCode {
    fn wrap(h: ParityCheckMatrix) -> PyResult<Self> {
        let encoder = Encoder::new(&h).map_err(py_err)?;
        Ok(Self { h, encoder })
    }
}

#[pymethods]
impl LdpcCode {
    /// Random code from a profile (`"dv,dc"` or ensemble text) with 4-cycles
    /// removed.
    #[staticmethod]
    #[pyo3(signature = (profile, n, seed=1))]
    fn sample(py: Python<'_>, profile: &str, n: usize, seed: u64) -> PyResult<Self> {
        let e = ensemble(profile)?;
        let h = py.detach(|| sample_code(&e, n, seed)).map_err(py_err)?;
        Self::wrap(h)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Self::wrap(text.parse().map_err(py_err)?)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Self::wrap(ParityCheckMatrix::read(&path).map_err(py_err)?)
    }

    fn to_text(&self) -> String {
        self.h.to_string()
    }

    #[getter]
    fn n(&self) -> usize {
        self.h.n()
    }

    #[getter]
    fn m_rows(&self) -> usize {
        self.h.m_rows()
    }

    #[getter]
    fn k(&self) -> usize {
        self.encoder.k()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.encoder.rate()
    }

    fn girth_lower_bound(&self) -> u32 {
        self.h.girth_lower_bound()
    }

    fn syndrome_is_zero(&self, bits: Vec<u8>) -> PyResult<bool> {
        if bits.len() != self.h.n() {
            return Err(PyValueError::new_err(format!("expected {} bits", self.h.n())));
        }
        Ok(self.h.syndrome_is_zero(&bits))
    }

    fn encode(&self, info: Vec<u8>) -> PyResult<Vec<u8>> {
        self.encoder.encode(&info).map_err(py_err)
    }

    /// Flooding sum-product decoding; returns `(bits, iterations, converged)`.
    #[pyo3(signature = (llr, max_iterations=100, clip=25.0))]
    fn decode(&self, py: Python<'_>, llr: Vec<f64>, max_iterations: usize, clip: f64) -> PyResult<(Vec<u8>, usize, bool)> {
        py.detach(|| BpDecoder::new(&self.h, max_iterations, clip)?.decode(&llr))
            .map(|r| (r.bits, r.iterations, r.converged))
            .map_err(py_err)
    }
}

/// BER sweep from the text of a simulation config; relative code paths are
/// resolved against `base_dir`. Returns one dict per SNR point.
#[pyfunction]
#[pyo3(signature = (config_text, base_dir=PathBuf::from(".")))]
fn ber(py: Python<'_>, config_text: &str, base_dir: PathBuf) -> PyResult<Vec<Py<PyAny>>> {
    let cfg = SimConfig::parse(config_text, &base_dir).map_err(py_err)?;
    let records: Vec<BerRecord> =
        py.detach(|| Simulation::new(cfg).and_then(|s| s.run(|_| Ok(())))).map_err(py_err)?;
    records
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("frames", r.frames)?;
            d.set_item("bit_errors", r.bit_errors)?;
            d.set_item("frame_errors", r.frame_errors)?;
            d.set_item("ber", r.ber)?;
            d.set_item("fer", r.fer)?;
            d.set_item("mean_iterations", r.mean_iterations)?;
            Ok(d.into_any().unbind())
        })
        .collect()
}

#[pymodule]
fn bicm_llr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Constellation>()?;
    m.add_class::<Demapper>()?;
    m.add_class::<LdpcCode>()?;
    m.add_function(wrap_pyfunction!(snr_to_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(llr_density, m)?)?;
    m.add_function(wrap_pyfunction!(de_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(ber, m)?)?;
    Ok(())
}
