//! Gray-labeled BPSK, 8-PAM and 16-QAM signal sets and SNR conversions.
//!
//! Points are left unnormalized (odd integers per axis); the noise standard
//! deviation carries all of the scaling.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstellationKind {
    Bpsk,
    Pam8,
    Qam16,
}

impl ConstellationKind {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ConstellationKind::Bpsk => 1,
            ConstellationKind::Pam8 => 3,
            ConstellationKind::Qam16 => 4,
        }
    }

    pub fn is_two_dimensional(self) -> bool {
        self == ConstellationKind::Qam16
    }
}

impl fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstellationKind::Bpsk => "bpsk",
            ConstellationKind::Pam8 => "pam8",
            ConstellationKind::Qam16 => "qam16",
        })
    }
}

impl FromStr for ConstellationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ConstellationKind::Bpsk),
            "pam8" | "8pam" | "8-pam" => Ok(ConstellationKind::Pam8),
            "qam16" | "16qam" | "16-qam" => Ok(ConstellationKind::Qam16),
            other => Err(Error::Parse(format!("unknown constellation '{other}'"))),
        }
    }
}

/// A labeled signal set. Label bit 1 is the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<Complex64>,
    labels: Vec<u8>,
    avg_energy: f64,
}

// 8-PAM, levels -7..7: the sign bit first, then an inner/outer bit, then
// the bit that separates {±3, ±5} from {±1, ±7}.
const PAM8_LEVELS: [(f64, u8); 8] = [
    (-7.0, 0b111),
    (-5.0, 0b110),
    (-3.0, 0b100),
    (-1.0, 0b101),
    (1.0, 0b001),
    (3.0, 0b000),
    (5.0, 0b010),
    (7.0, 0b011),
];

// 2-bit Gray code per 16-QAM axis.
const QAM_REAL_AXIS: [(f64, u8); 4] = [(-3.0, 0b00), (-1.0, 0b01), (1.0, 0b11), (3.0, 0b10)];
const QAM_IMAG_AXIS: [(f64, u8); 4] = [(3.0, 0b00), (1.0, 0b01), (-1.0, 0b11), (-3.0, 0b10)];

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        let (points, labels): (Vec<Complex64>, Vec<u8>) = match kind {
            ConstellationKind::Bpsk => {
                (vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)], vec![0, 1])
            }
            ConstellationKind::Pam8 => PAM8_LEVELS
                .iter()
                .map(|&(x, l)| (Complex64::new(x, 0.0), l))
                .unzip(),
            ConstellationKind::Qam16 => {
                let mut pts = Vec::with_capacity(16);
                for &(re, lr) in &QAM_REAL_AXIS {
                    for &(im, li) in &QAM_IMAG_AXIS {
                        pts.push((Complex64::new(re, im), (lr << 2) | li));
                    }
                }
                pts.into_iter().unzip()
            }
        };
        let avg_energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        Self { kind, points, labels, avg_energy }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Bits per symbol `m`.
    pub fn bits(&self) -> usize {
        self.kind.bits_per_symbol()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn avg_energy(&self) -> f64 {
        self.avg_energy
    }

    pub fn is_two_dimensional(&self) -> bool {
        self.kind.is_two_dimensional()
    }

    /// Value of bit `i` (1-based, MSB first) in `label`.
    #[inline]
    pub fn label_bit(&self, label: u8, i: usize) -> u8 {
        (label >> (self.bits() - i)) & 1
    }

    /// Value of bit `i` of the point with index `point`.
    #[inline]
    pub fn bit_of(&self, point: usize, i: usize) -> u8 {
        self.label_bit(self.labels[point], i)
    }

    pub fn check_bit(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.bits() {
            return Err(Error::BitIndex { index: i, bits: self.bits() });
        }
        Ok(())
    }

    /// Indices of the points whose bit `i` equals `w`.
    pub fn subset_indices(&self, i: usize, w: u8) -> Result<Vec<usize>> {
        self.check_bit(i)?;
        Ok((0..self.len()).filter(|&p| self.bit_of(p, i) == w).collect())
    }

    /// The points whose bit `i` equals `w`.
    pub fn bit_subset(&self, i: usize, w: u8) -> Result<Vec<Complex64>> {
        Ok(self.subset_indices(i, w)?.into_iter().map(|p| self.points[p]).collect())
    }

    /// Index of the point carrying `label`.
    pub fn index_of_label(&self, label: u8) -> usize {
        self.labels.iter().position(|&l| l == label).expect("labels are a bijection")
    }

    /// Pairs of neighboring point indices (adjacent levels in 1-D, grid
    /// neighbors in 2-D).
    pub fn neighbor_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for a in 0..self.len() {
            for b in (a + 1)..self.len() {
                let d = self.points[a] - self.points[b];
                if (d.norm_sqr() - 4.0).abs() < 1e-12 {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SnrConvention {
    /// Energy per information bit; `rate` is the code rate.
    EbN0 { rate: f64 },
    /// Energy per transmitted symbol.
    EsN0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrSpec {
    pub value_db: f64,
    pub convention: SnrConvention,
}

impl SnrSpec {
    pub fn eb_n0(value_db: f64, rate: f64) -> Self {
        Self { value_db, convention: SnrConvention::EbN0 { rate } }
    }

    pub fn es_n0(value_db: f64) -> Self {
        Self { value_db, convention: SnrConvention::EsN0 }
    }

    /// The convention the toolkit uses for `kind`: `Eb/N0` for BPSK and
    /// `Es/N0` otherwise.
    pub fn natural(kind: ConstellationKind, value_db: f64, rate: f64) -> Self {
        match kind {
            ConstellationKind::Bpsk => Self::eb_n0(value_db, rate),
            _ => Self::es_n0(value_db),
        }
    }

    fn validate(&self, kind: ConstellationKind) -> Result<()> {
        if !self.value_db.is_finite() {
            return Err(Error::InvalidParameter(format!("SNR {} dB is not finite", self.value_db)));
        }
        match (kind, self.convention) {
            (ConstellationKind::Bpsk, SnrConvention::EbN0 { rate }) => {
                if !(rate > 0.0 && rate <= 1.0) {
                    return Err(Error::InvalidParameter(format!("code rate {rate} not in (0, 1]")));
                }
                Ok(())
            }
            (ConstellationKind::Pam8 | ConstellationKind::Qam16, SnrConvention::EsN0) => Ok(()),
            (kind, c) => Err(Error::SnrConvention {
                convention: match c {
                    SnrConvention::EbN0 { .. } => "Eb/N0".into(),
                    SnrConvention::EsN0 => "Es/N0".into(),
                },
                kind: kind.to_string(),
            }),
        }
    }
}

/// Noise standard deviation per real dimension for the given SNR.
pub fn snr_to_sigma(c: &Constellation, snr: SnrSpec) -> Result<f64> {
    snr.validate(c.kind())?;
    let lin = 10f64.powf(snr.value_db / 10.0);
    let var = match snr.convention {
        SnrConvention::EbN0 { rate } => c.avg_energy() / (2.0 * rate * c.bits() as f64 * lin),
        SnrConvention::EsN0 => c.avg_energy() / (2.0 * lin),
    };
    Ok(var.sqrt())
}

/// Inverse of [`snr_to_sigma`]: returns the SNR in dB under `convention`.
pub fn sigma_to_snr(c: &Constellation, sigma: f64, convention: SnrConvention) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    SnrSpec { value_db: 0.0, convention }.validate(c.kind())?;
    let lin = match convention {
        SnrConvention::EbN0 { rate } => c.avg_energy() / (2.0 * rate * c.bits() as f64 * sigma * sigma),
        SnrConvention::EsN0 => c.avg_energy() / (2.0 * sigma * sigma),
    };
    Ok(10.0 * lin.log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [ConstellationKind; 3] =
        [ConstellationKind::Bpsk, ConstellationKind::Pam8, ConstellationKind::Qam16];

    #[test]
    fn energies() {
        assert_eq!(Constellation::new(ConstellationKind::Bpsk).avg_energy(), 1.0);
        assert_eq!(Constellation::new(ConstellationKind::Pam8).avg_energy(), 21.0);
        assert_eq!(Constellation::new(ConstellationKind::Qam16).avg_energy(), 10.0);
    }

    #[test]
    fn labels_are_bijective() {
        for kind in KINDS {
            let c = Constellation::new(kind);
            assert_eq!(c.len(), 1 << c.bits());
            let mut l = c.labels().to_vec();
            l.sort();
            assert_eq!(l, (0..c.len() as u8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn gray_adjacency() {
        for kind in KINDS {
            let c = Constellation::new(kind);
            let pairs = c.neighbor_pairs();
            let expected = match kind {
                ConstellationKind::Bpsk => 1,
                ConstellationKind::Pam8 => 7,
                ConstellationKind::Qam16 => 24,
            };
            assert_eq!(pairs.len(), expected);
            for (a, b) in pairs {
                assert_eq!((c.labels()[a] ^ c.labels()[b]).count_ones(), 1, "{kind} {a} {b}");
            }
        }
    }

    #[test]
    fn pam_levels_and_qam_grid() {
        let pam = Constellation::new(ConstellationKind::Pam8);
        let mut levels: Vec<f64> = pam.points().iter().map(|p| p.re).collect();
        levels.sort_by(f64::total_cmp);
        assert_eq!(levels, vec![-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0]);
        let qam = Constellation::new(ConstellationKind::Qam16);
        for p in qam.points() {
            assert!([1.0, 3.0].contains(&p.re.abs()) && [1.0, 3.0].contains(&p.im.abs()));
        }
    }

    #[test]
    fn subsets() {
        let bpsk = Constellation::new(ConstellationKind::Bpsk);
        assert_eq!(bpsk.bit_subset(1, 0).unwrap(), vec![Complex64::new(1.0, 0.0)]);
        let qam = Constellation::new(ConstellationKind::Qam16);
        assert_eq!(qam.bit_subset(2, 0).unwrap().len(), 8);
        assert!(matches!(qam.bit_subset(5, 0), Err(Error::BitIndex { .. })));
        assert!(matches!(qam.bit_subset(0, 0), Err(Error::BitIndex { .. })));
        for kind in KINDS {
            let c = Constellation::new(kind);
            for i in 1..=c.bits() {
                let mut all = c.subset_indices(i, 0).unwrap();
                let one = c.subset_indices(i, 1).unwrap();
                assert_eq!(all.len(), one.len());
                all.extend(one);
                all.sort();
                assert_eq!(all, (0..c.len()).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn sigma_from_snr() {
        let bpsk = Constellation::new(ConstellationKind::Bpsk);
        let s = snr_to_sigma(&bpsk, SnrSpec::eb_n0(3.81, 0.5)).unwrap();
        assert!((s - 0.6449).abs() < 1e-4);
        let pam = Constellation::new(ConstellationKind::Pam8);
        let s = snr_to_sigma(&pam, SnrSpec::es_n0(7.91)).unwrap();
        assert!((s - (21.0 / (2.0 * 10f64.powf(0.791))).sqrt()).abs() < 1e-14);
        assert!((s - 1.3035).abs() < 1e-4);
    }

    #[test]
    fn mismatched_convention() {
        let pam = Constellation::new(ConstellationKind::Pam8);
        assert!(matches!(
            snr_to_sigma(&pam, SnrSpec::eb_n0(7.0, 0.5)),
            Err(Error::SnrConvention { .. })
        ));
        let bpsk = Constellation::new(ConstellationKind::Bpsk);
        assert!(snr_to_sigma(&bpsk, SnrSpec::es_n0(3.0)).is_err());
        assert!(snr_to_sigma(&bpsk, SnrSpec::eb_n0(3.0, 1.5)).is_err());
    }

    proptest! {
        #[test]
        fn snr_round_trip(db in -10.0f64..30.0, rate in 0.05f64..1.0, k in 0usize..3) {
            let c = Constellation::new(KINDS[k]);
            let spec = SnrSpec::natural(c.kind(), db, rate);
            let s = snr_to_sigma(&c, spec).unwrap();
            let back = sigma_to_snr(&c, s, spec.convention).unwrap();
            prop_assert!((back - db).abs() <= 1e-12 * db.abs().max(1.0));
        }
    }
}
