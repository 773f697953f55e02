use num_complex::Complex64;
use rand::Rng;

use bicm_llr::approx_llr::{fit_taylor, LlrMethod, SymbolDemapper};
use bicm_llr::bicm_sim::{BerRecord, BicmMapper, FitPolicy, FrameMode, SimConfig, Simulation};
use bicm_llr::channel::{stream_rng, transmit, ChannelParams};
use bicm_llr::constellation::{snr_to_sigma, Constellation, ConstellationKind, SnrSpec};
use bicm_llr::exact_llr::{Csi, ExactDemapper};
use bicm_llr::ldpc::{sample_regular, ParityCheckMatrix};

fn code(n: usize) -> ParityCheckMatrix {
    sample_regular(3, 4, n, 17).unwrap()
}

fn config(kind: ConstellationKind, llr: &str, snr: Vec<f64>) -> SimConfig {
    let mut c = SimConfig::new(kind, "unused", llr.parse().unwrap(), snr);
    c.seed = 5;
    c
}

fn run(cfg: SimConfig, h: &ParityCheckMatrix) -> Vec<BerRecord> {
    Simulation::with_code(cfg, h.clone()).unwrap().run(|_| Ok(())).unwrap()
}

/// Two-sided gap between frame error rates, in units of the pooled binomial
/// standard deviation.
fn fer_z(a: &BerRecord, b: &BerRecord) -> f64 {
    let p = (a.frame_errors + b.frame_errors) as f64 / (a.frames + b.frames) as f64;
    let sd = (p * (1.0 - p) * (1.0 / a.frames as f64 + 1.0 / b.frames as f64)).sqrt();
    (a.fer - b.fer).abs() / sd.max(1e-12)
}

#[test]
fn noiseless_limit_has_no_errors() {
    let h = code(400);
    for (kind, llr) in [(ConstellationKind::Qam16, "true"), (ConstellationKind::Pam8, "true"), (ConstellationKind::Bpsk, "hou")] {
        let mut cfg = config(kind, llr, vec![60.0]);
        cfg.max_frames = 8;
        cfg.fit = FitPolicy::PerPoint;
        let r = run(cfg, &h)[0];
        assert_eq!((r.frames, r.bit_errors, r.frame_errors), (8, 0, 0), "{kind}");
    }
}

#[test]
fn records_are_reproducible_and_consistent() {
    let h = code(800);
    let mut cfg = config(ConstellationKind::Pam8, "taylor:1", vec![8.5, 9.0]);
    cfg.fit = FitPolicy::Fixed(7.91);
    cfg.min_frame_errors = 15;
    cfg.max_frames = 400;
    let a = run(cfg.clone(), &h);
    let b = run(cfg.clone(), &h);
    assert_eq!(a, b);
    cfg.seed += 1;
    assert_ne!(run(cfg, &h), a);
    let k = Simulation::with_code(config(ConstellationKind::Pam8, "true", vec![9.0]), h.clone()).unwrap().k();
    for r in &a {
        assert!((r.ber - r.bit_errors as f64 / (r.frames as f64 * k as f64)).abs() < 1e-15);
        assert!((r.fer - r.frame_errors as f64 / r.frames as f64).abs() < 1e-15);
        assert!(r.frame_errors <= r.frames && r.bit_errors >= r.frame_errors);
    }
}

#[test]
fn ber_decreases_with_snr() {
    let h = code(800);
    let mut cfg = config(ConstellationKind::Qam16, "true", vec![3.5, 4.5, 5.5]);
    cfg.min_frame_errors = 30;
    cfg.max_frames = 600;
    let r = run(cfg, &h);
    for w in r.windows(2) {
        assert!(w[1].fer <= w[0].fer || fer_z(&w[0], &w[1]) < 2.0, "{w:?}");
    }
    assert!(r[0].ber > r[2].ber);
}

#[test]
fn all_zero_fast_path_matches_random_codewords() {
    let h = code(1200);
    for (kind, llr, snr, fit) in [
        (ConstellationKind::Pam8, "taylor:1", 8.4, 7.91),
        (ConstellationKind::Qam16, "taylor:3,2,3,2", 5.0, 4.83),
    ] {
        let mut cfg = config(kind, llr, vec![snr]);
        cfg.fit = FitPolicy::Fixed(fit);
        cfg.min_frame_errors = 60;
        cfg.max_frames = 1500;
        let zero = run(cfg.clone(), &h)[0];
        cfg.mode = FrameMode::Random { adapters: true };
        cfg.seed = 99;
        let random = run(cfg, &h)[0];
        assert!(zero.frame_errors >= 30 && random.frame_errors >= 30, "{zero:?} {random:?}");
        let z = fer_z(&zero, &random);
        assert!(z < 2.0, "{kind}: all-zero {zero:?} vs random {random:?} (z = {z:.2})");
    }
}

#[test]
fn qam16_taylor_signs_agree_with_exact() {
    let qam = Constellation::new(ConstellationKind::Qam16);
    let sigma = snr_to_sigma(&qam, SnrSpec::es_n0(4.89)).unwrap();
    let exact = ExactDemapper::new(&qam, sigma, Csi::Unknown);
    let approx = fit_taylor(&qam, sigma, &"3,2,3,2".parse().unwrap()).unwrap();
    let params = ChannelParams { sigma, csi_at_rx: false };
    let mut rng = stream_rng(3, 0);
    let (mut agree, mut counted) = (0usize, 0usize);
    let (mut le, mut la) = ([0.0; 4], [0.0; 4]);
    for _ in 0..100_000 {
        let x = qam.points()[rng.random_range(0..16)];
        let y = transmit(x, &params, true, &mut rng).y;
        exact.demap(y, &mut le);
        approx.demap(y, &mut la);
        for (e, a) in le.iter().zip(&la) {
            if e.abs() > 0.1 {
                counted += 1;
                agree += usize::from(e.signum() == a.signum());
            }
        }
    }
    let frac = agree as f64 / counted as f64;
    assert!(frac >= 0.99, "{frac}");
}

#[test]
fn demapping_keeps_bit_order_across_methods() {
    let qam = Constellation::new(ConstellationKind::Qam16);
    // 1202 is not a multiple of 4, so the mapper pads
    let mapper = BicmMapper::new(&qam, 1202, 7);
    assert_eq!(mapper.padding(), 2);
    let mut rng = stream_rng(8, 0);
    let bits: Vec<u8> = (0..1202).map(|_| rng.random_range(0..2)).collect();
    let ys: Vec<Complex64> = mapper.map_frame(&bits);
    assert_eq!(mapper.unmap_frame(&ys), bits);
    let sigma = 0.05;
    let exact = ExactDemapper::new(&qam, sigma, Csi::Unknown);
    let LlrMethod::Taylor(o) = "taylor:3".parse().unwrap() else { unreachable!() };
    let approx = fit_taylor(&qam, snr_to_sigma(&qam, SnrSpec::es_n0(4.87)).unwrap(), &o).unwrap();
    for d in [&exact as &dyn SymbolDemapper, &approx] {
        let llr = mapper.demap_frame(&ys, d);
        assert_eq!(llr.len(), 1202);
        let hard: Vec<u8> = llr.iter().map(|&l| u8::from(l < 0.0)).collect();
        assert_eq!(hard, bits);
    }
}
