//! Finite-length LDPC codes: random construction without 4-cycles, a
//! Gaussian-elimination encoder and a flooding sum-product decoder.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::stream_rng;
use crate::density_evolution::Ensemble;
use crate::error::{Error, Result};

/// Sparse parity-check matrix with row and column adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n: usize,
    rows: Vec<Vec<u32>>,
    cols: Vec<Vec<u32>>,
    girth_lower_bound: u32,
}

impl ParityCheckMatrix {
    /// Builds a matrix from row adjacency lists. Entries are sorted; repeated
    /// entries are rejected.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<u32>>) -> Result<Self> {
        let mut cols = vec![Vec::new(); n];
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Construction(format!("row {r} repeats a column")));
            }
            for &c in row.iter() {
                let c = c as usize;
                if c >= n {
                    return Err(Error::Construction(format!("row {r} column {c} >= n = {n}")));
                }
                cols[c].push(r as u32);
            }
        }
        let mut h = Self { n, rows, cols, girth_lower_bound: 4 };
        if h.count_four_cycles() == 0 {
            h.girth_lower_bound = 6;
        }
        Ok(h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn cols(&self) -> &[Vec<u32>] {
        &self.cols
    }

    pub fn edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// 6 when the Tanner graph has no 4-cycles, else 4.
    pub fn girth_lower_bound(&self) -> u32 {
        self.girth_lower_bound
    }

    /// `1 − m/n`; the true rate is at least this.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.m_rows() as f64 / self.n as f64
    }

    pub fn syndrome_is_zero(&self, bits: &[u8]) -> bool {
        self.rows.iter().all(|row| row.iter().fold(0u8, |acc, &c| acc ^ (bits[c as usize] & 1)) == 0)
    }

    /// Number of column pairs sharing two or more rows (4-cycles).
    pub fn count_four_cycles(&self) -> usize {
        let mut pairs: HashMap<(u32, u32), usize> = HashMap::new();
        for col in &self.cols {
            for (i, &a) in col.iter().enumerate() {
                for &b in &col[i + 1..] {
                    *pairs.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
        }
        pairs.values().map(|&k| k * (k - 1) / 2).sum()
    }

    /// Edge-perspective degree distribution of this graph.
    pub fn ensemble(&self) -> Result<Ensemble> {
        let e = self.edges() as f64;
        let profile = |lists: &[Vec<u32>]| {
            let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
            lists.iter().for_each(|l| *counts.entry(l.len()).or_default() += l.len());
            counts.into_iter().map(|(d, k)| (d, k as f64 / e)).collect::<Vec<_>>()
        };
        Ensemble::new(profile(&self.cols), profile(&self.rows))
    }

    /// GF(2) rank of H.
    pub fn rank(&self) -> usize {
        Gf2Echelon::new(self).pivots.len()
    }

    pub fn read(path: &Path) -> Result<Self> {
        crate::error::read_file(path)?.parse()
    }
}

/// Text format: a header line `n m_rows`, then one line per row holding its
/// column indices. Blank lines and `#` comments are ignored.
impl fmt::Display for ParityCheckMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.n, self.m_rows())?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                write!(line, "{c}")?;
            }
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for ParityCheckMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty code file".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("bad header '{header}'")))?;
        let [n, m] = nums[..] else {
            return Err(Error::Parse(format!("header needs 'n m_rows', got '{header}'")));
        };
        let rows: Vec<Vec<u32>> = lines
            .map(|l| {
                l.split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse(format!("bad row '{l}'")))
            })
            .collect::<Result<_>>()?;
        if rows.len() != m {
            return Err(Error::Parse(format!("header says {m} rows, found {}", rows.len())));
        }
        Self::from_rows(n, rows)
    }
}

/// Splits `total` items by `fractions` with largest-remainder rounding.
fn apportion(total: usize, fractions: &[(usize, f64)]) -> Vec<(usize, usize)> {
    let raw: Vec<f64> = fractions.iter().map(|&(_, f)| f * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().cycle().take(short) {
        counts[i] += 1;
    }
    fractions.iter().zip(counts).map(|(&(d, _), k)| (d, k)).collect()
}

/// Per-node degrees for an ensemble at block length `n`.
fn degree_sequences(ensemble: &Ensemble, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let var: Vec<usize> = apportion(n, &Ensemble::node_fractions(&ensemble.lambda))
        .into_iter()
        .flat_map(|(d, k)| std::iter::repeat_n(d, k))
        .collect();
    let edges: usize = var.iter().sum();
    let check_fracs = Ensemble::node_fractions(&ensemble.rho);
    let mean_dc: f64 = check_fracs.iter().map(|&(d, f)| d as f64 * f).sum();
    let m = (edges as f64 / mean_dc).round() as usize;
    if m == 0 {
        return Err(Error::Construction("no check nodes".into()));
    }
    let mut chk: Vec<usize> = apportion(m, &check_fracs)
        .into_iter()
        .flat_map(|(d, k)| std::iter::repeat_n(d, k))
        .collect();
    // Residue balancing: move single edges between rows until the counts agree.
    let mut diff = edges as isize - chk.iter().sum::<usize>() as isize;
    if diff.unsigned_abs() > m {
        return Err(Error::Construction(format!("edge residue {diff} exceeds {m} rows")));
    }
    let mut i = 0;
    while diff != 0 {
        if diff > 0 {
            chk[m - 1 - i] += 1;
            diff -= 1;
        } else {
            chk[i] -= 1;
            diff += 1;
        }
        i += 1;
    }
    Ok((var, chk))
}

/// Socket graph used while removing short cycles.
struct Sockets {
    /// Check endpoint of each edge; edge `e` leaves variable `edge_var[e]`.
    edge_check: Vec<u32>,
    var_edges: Vec<Vec<usize>>,
    check_vars: Vec<Vec<u32>>,
}

impl Sockets {
    /// Parallel edges plus 4-cycles through variable `v`.
    fn defects(&self, v: usize) -> usize {
        let checks: Vec<u32> = self.var_edges[v].iter().map(|&e| self.edge_check[e]).collect();
        let mut bad = 0;
        let mut shared: HashMap<u32, usize> = HashMap::new();
        for (i, &c) in checks.iter().enumerate() {
            bad += checks[..i].iter().filter(|&&p| p == c).count();
            if checks[..i].contains(&c) {
                continue;
            }
            let mut others: Vec<u32> =
                self.check_vars[c as usize].iter().copied().filter(|&w| w as usize != v).collect();
            others.sort_unstable();
            others.dedup();
            for w in others {
                *shared.entry(w).or_default() += 1;
            }
        }
        bad + shared.values().map(|&k| k * (k - 1) / 2).sum::<usize>()
    }

    fn move_edge(&mut self, e: usize, v: u32, to: u32) {
        let from = self.edge_check[e];
        let list = &mut self.check_vars[from as usize];
        let pos = list.iter().position(|&x| x == v).expect("edge present");
        list.swap_remove(pos);
        self.check_vars[to as usize].push(v);
        self.edge_check[e] = to;
    }
}

const MAX_SWEEPS: usize = 200;
const TRIES_PER_EDGE: usize = 50;

/// Samples a code from the ensemble's degree profile by random socket
/// matching, then removes parallel edges and 4-cycles by edge swaps.
/// Deterministic in `seed`.
pub fn sample_code(ensemble: &Ensemble, n: usize, seed: u64) -> Result<ParityCheckMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("block length must be positive".into()));
    }
    let (var_deg, chk_deg) = degree_sequences(ensemble, n)?;
    let mut rng = stream_rng(seed, 0);
    let mut check_sockets: Vec<u32> =
        chk_deg.iter().enumerate().flat_map(|(c, &d)| std::iter::repeat_n(c as u32, d)).collect();
    check_sockets.shuffle(&mut rng);
    let edge_var: Vec<u32> =
        var_deg.iter().enumerate().flat_map(|(v, &d)| std::iter::repeat_n(v as u32, d)).collect();
    let mut var_edges = vec![Vec::new(); n];
    let mut check_vars = vec![Vec::new(); chk_deg.len()];
    for (e, (&v, &c)) in edge_var.iter().zip(&check_sockets).enumerate() {
        var_edges[v as usize].push(e);
        check_vars[c as usize].push(v);
    }
    let mut g = Sockets { edge_check: check_sockets, var_edges, check_vars };

    let total_edges = edge_var.len();
    let mut remaining = 0;
    for sweep in 0..MAX_SWEEPS {
        let bad: Vec<usize> = (0..n).filter(|&v| g.defects(v) > 0).collect();
        remaining = bad.len();
        if bad.is_empty() {
            break;
        }
        log::debug!("sweep {sweep}: {} variables on short cycles", bad.len());
        for v in bad {
            for k in 0..g.var_edges[v].len() {
                let e = g.var_edges[v][k];
                for _ in 0..TRIES_PER_EDGE {
                    let before_v = g.defects(v);
                    if before_v == 0 {
                        break;
                    }
                    let f = rng.random_range(0..total_edges);
                    let w = edge_var[f] as usize;
                    let (ce, cf) = (g.edge_check[e], g.edge_check[f]);
                    if w == v || ce == cf {
                        continue;
                    }
                    let before = before_v + g.defects(w);
                    g.move_edge(e, v as u32, cf);
                    g.move_edge(f, w as u32, ce);
                    if g.defects(v) + g.defects(w) < before {
                        continue;
                    }
                    g.move_edge(f, w as u32, cf);
                    g.move_edge(e, v as u32, ce);
                }
            }
        }
    }
    if (0..n).any(|v| g.defects(v) > 0) {
        return Err(Error::Construction(format!(
            "{remaining} variables still on 4-cycles after {MAX_SWEEPS} sweeps (n = {n})"
        )));
    }
    let mut rows: Vec<Vec<u32>> = g.check_vars;
    rows.iter_mut().for_each(|r| r.sort_unstable());
    ParityCheckMatrix::from_rows(n, rows)
}

/// `(d_v, d_c)`-regular shortcut for [`sample_code`].
pub fn sample_regular(dv: usize, dc: usize, n: usize, seed: u64) -> Result<ParityCheckMatrix> {
    if (n * dv) % dc != 0 {
        return Err(Error::InvalidParameter(format!("n·d_v = {} not divisible by d_c = {dc}", n * dv)));
    }
    sample_code(&Ensemble::regular(dv, dc)?, n, seed)
}

/// Reduced row echelon form of H over GF(2) on bit-packed rows.
struct Gf2Echelon {
    words: usize,
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
}

impl Gf2Echelon {
    fn new(h: &ParityCheckMatrix) -> Self {
        let words = h.n.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = h
            .rows
            .iter()
            .map(|r| {
                let mut w = vec![0u64; words];
                r.iter().for_each(|&c| w[c as usize / 64] ^= 1 << (c % 64));
                w
            })
            .collect();
        let mut pivots = Vec::new();
        let mut top = 0;
        for col in 0..h.n {
            if top == rows.len() {
                break;
            }
            let (wi, bit) = (col / 64, 1u64 << (col % 64));
            let Some(p) = (top..rows.len()).find(|&r| rows[r][wi] & bit != 0) else {
                continue;
            };
            rows.swap(top, p);
            let pivot = std::mem::take(&mut rows[top]);
            for (r, row) in rows.iter_mut().enumerate() {
                if r != top && row[wi] & bit != 0 {
                    row[wi..].iter_mut().zip(&pivot[wi..]).for_each(|(a, b)| *a ^= b);
                }
            }
            rows[top] = pivot;
            pivots.push(col);
            top += 1;
        }
        // dependent rows reduce to zero and are discarded
        rows.truncate(top);
        Self { words, rows, pivots }
    }
}

/// Systematic encoder: information bits occupy the non-pivot columns of the
/// reduced echelon form of H.
#[derive(Debug, Clone)]
pub struct Encoder {
    n: usize,
    words: usize,
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
    info_positions: Vec<usize>,
}

impl Encoder {
    pub fn new(h: &ParityCheckMatrix) -> Result<Self> {
        let ech = Gf2Echelon::new(h);
        let mut is_pivot = vec![false; h.n];
        ech.pivots.iter().for_each(|&p| is_pivot[p] = true);
        let info_positions: Vec<usize> = (0..h.n).filter(|&c| !is_pivot[c]).collect();
        if info_positions.is_empty() {
            return Err(Error::Construction("H has full column rank; no information bits".into()));
        }
        Ok(Self { n: h.n, words: ech.words, rows: ech.rows, pivots: ech.pivots, info_positions })
    }

    /// Number of information bits `n − rank(H)`.
    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::InvalidParameter(format!("expected {} info bits, got {}", self.k(), info.len())));
        }
        let mut packed = vec![0u64; self.words];
        let mut word = vec![0u8; self.n];
        for (&pos, &b) in self.info_positions.iter().zip(info) {
            let b = b & 1;
            word[pos] = b;
            packed[pos / 64] |= (b as u64) << (pos % 64);
        }
        // Each echelon row has one pivot; its other columns are information
        // positions, so the pivot bit is the parity of the row over them.
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            word[p] = (ones & 1) as u8;
        }
        Ok(word)
    }

    /// Reads the information bits back out of a codeword.
    pub fn extract(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub bits: Vec<u8>,
    pub iterations: usize,
    /// True exactly when `bits` has zero syndrome.
    pub converged: bool,
}

/// `φ(x) = −ln tanh(x/2)`, its own inverse on `(0, ∞)`.
#[inline]
fn phi(x: f64) -> f64 {
    if x < 1e-300 {
        return f64::INFINITY;
    }
    (2.0 / x.exp_m1()).ln_1p()
}

/// Flooding sum-product decoder. The graph is flattened once and shared by
/// reference, so one decoder serves many threads.
#[derive(Debug, Clone)]
pub struct BpDecoder {
    n: usize,
    /// Check-major edge layout: edges of row `r` are `row_start[r]..row_start[r+1]`.
    row_start: Vec<usize>,
    edge_var: Vec<u32>,
    /// Edge ids grouped by variable.
    var_start: Vec<usize>,
    var_edges: Vec<u32>,
    pub max_iterations: usize,
    pub clip: f64,
}

impl BpDecoder {
    pub fn new(h: &ParityCheckMatrix, max_iterations: usize, clip: f64) -> Result<Self> {
        if !(clip > 0.0 && clip.is_finite()) {
            return Err(Error::InvalidParameter(format!("clip {clip} must be positive")));
        }
        let mut row_start = vec![0];
        let mut edge_var = Vec::with_capacity(h.edges());
        for row in &h.rows {
            edge_var.extend_from_slice(row);
            row_start.push(edge_var.len());
        }
        let mut per_var = vec![Vec::new(); h.n];
        for (e, &v) in edge_var.iter().enumerate() {
            per_var[v as usize].push(e as u32);
        }
        let mut var_start = vec![0];
        let mut var_edges = Vec::with_capacity(edge_var.len());
        for list in per_var {
            var_edges.extend(list);
            var_start.push(var_edges.len());
        }
        Ok(Self { n: h.n, row_start, edge_var, var_start, var_edges, max_iterations, clip })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.row_start
            .windows(2)
            .all(|w| self.edge_var[w[0]..w[1]].iter().fold(0u8, |a, &v| a ^ bits[v as usize]) == 0)
    }

    /// Check update `sign · φ(Σ_{i≠j} φ(|m_i|))` with leave-one-out sums
    /// from prefix and suffix sums.
    fn check_update_phi(&self, msgs: &[f64], out: &mut [f64], mags: &mut Vec<f64>, suffix: &mut Vec<f64>) {
        let negative = msgs.iter().filter(|m| m.is_sign_negative()).count();
        mags.clear();
        mags.extend(msgs.iter().map(|m| phi(m.abs())));
        suffix.clear();
        suffix.resize(msgs.len() + 1, 0.0);
        for j in (0..msgs.len()).rev() {
            suffix[j] = suffix[j + 1] + mags[j];
        }
        let mut prefix = 0.0;
        for (j, m) in msgs.iter().enumerate() {
            let flip = (negative - usize::from(m.is_sign_negative())) % 2 == 1;
            let mag = phi(prefix + suffix[j + 1]).min(self.clip);
            out[j] = if flip { -mag } else { mag };
            prefix += mags[j];
        }
    }

    pub fn decode(&self, llr: &[f64]) -> Result<DecodeResult> {
        if llr.len() != self.n {
            return Err(Error::InvalidParameter(format!("expected {} LLRs, got {}", self.n, llr.len())));
        }
        if let Some(i) = llr.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("LLR {i} is not finite")));
        }
        let clip = self.clip;
        let ch: Vec<f64> = llr.iter().map(|&l| l.clamp(-clip, clip)).collect();
        let mut bits: Vec<u8> = ch.iter().map(|&l| u8::from(l < 0.0)).collect();
        if self.syndrome_ok(&bits) {
            return Ok(DecodeResult { bits, iterations: 0, converged: true });
        }
        let e_total = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| ch[v as usize]).collect();
        let mut c2v = vec![0.0; e_total];
        let mut tanh = Vec::new();
        let mut suffix = Vec::new();
        for it in 1..=self.max_iterations {
            // tanh rule; outputs whose product is within 1e-9 of ±1 are
            // recomputed in the φ domain, where they keep full precision
            for w in self.row_start.windows(2) {
                let msgs = &v2c[w[0]..w[1]];
                tanh.clear();
                tanh.extend(msgs.iter().map(|m| {
                    let e = (-m.abs()).exp();
                    (1.0 - e) / (1.0 + e)
                }));
                let negative = msgs.iter().filter(|m| m.is_sign_negative()).count();
                suffix.clear();
                suffix.resize(msgs.len() + 1, 1.0);
                for j in (0..msgs.len()).rev() {
                    suffix[j] = suffix[j + 1] * tanh[j];
                }
                let mut prefix = 1.0;
                let mut saturated = false;
                for j in 0..msgs.len() {
                    let p = prefix * suffix[j + 1];
                    let flip = (negative - usize::from(msgs[j].is_sign_negative())) % 2 == 1;
                    let mag = if 1.0 - p > 1e-9 {
                        ((1.0 + p) / (1.0 - p)).ln().min(clip)
                    } else {
                        saturated = true;
                        clip
                    };
                    c2v[w[0] + j] = if flip { -mag } else { mag };
                    prefix *= tanh[j];
                }
                if saturated {
                    self.check_update_phi(msgs, &mut c2v[w[0]..w[1]], &mut tanh, &mut suffix);
                }
            }
            // variable update and decision
            for v in 0..self.n {
                let edges = &self.var_edges[self.var_start[v]..self.var_start[v + 1]];
                let total = ch[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                for &e in edges {
                    v2c[e as usize] = (total - c2v[e as usize]).clamp(-clip, clip);
                }
                bits[v] = u8::from(total.clamp(-clip, clip) < 0.0);
            }
            debug_assert!(v2c.iter().chain(&c2v).all(|m| m.abs() <= clip));
            if self.syndrome_ok(&bits) {
                return Ok(DecodeResult { bits, iterations: it, converged: true });
            }
        }
        Ok(DecodeResult { bits, iterations: self.max_iterations, converged: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_is_an_involution() {
        for &x in &[1e-6, 0.01, 0.5, 1.0, 3.0, 10.0, 25.0] {
            assert!((phi(phi(x)) - x).abs() / x < 1e-9, "{x}");
        }
        assert!((phi(1.0) + (0.5f64).tanh().ln()).abs() < 1e-14);
    }

    #[test]
    fn apportion_sums() {
        let a = apportion(10, &[(2, 0.33), (3, 0.33), (4, 0.34)]);
        assert_eq!(a.iter().map(|p| p.1).sum::<usize>(), 10);
    }

    #[test]
    fn text_round_trip() {
        let h = ParityCheckMatrix::from_rows(6, vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 0]]).unwrap();
        let back: ParityCheckMatrix = h.to_string().parse().unwrap();
        assert_eq!(h, back);
        assert!("3 1\n0 1 7\n".parse::<ParityCheckMatrix>().is_err());
        assert!("3 2\n0 1\n".parse::<ParityCheckMatrix>().is_err());
    }

    #[test]
    fn four_cycle_counting() {
        let h = ParityCheckMatrix::from_rows(4, vec![vec![0, 1], vec![0, 1, 2], vec![2, 3]]).unwrap();
        assert_eq!(h.count_four_cycles(), 1);
        assert_eq!(h.girth_lower_bound(), 4);
    }

    #[test]
    fn hamming_encoder() {
        let h = ParityCheckMatrix::from_rows(
            7,
            vec![vec![0, 1, 2, 4], vec![0, 1, 3, 5], vec![0, 2, 3, 6]],
        )
        .unwrap();
        let enc = Encoder::new(&h).unwrap();
        assert_eq!(enc.k(), 4);
        for m in 0..16u8 {
            let info: Vec<u8> = (0..4).map(|i| (m >> i) & 1).collect();
            let cw = enc.encode(&info).unwrap();
            assert!(h.syndrome_is_zero(&cw));
            assert_eq!(enc.extract(&cw), info);
        }
    }

    #[test]
    fn dependent_rows_are_dropped() {
        let h = ParityCheckMatrix::from_rows(4, vec![vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        assert_eq!(h.rank(), 2);
        assert_eq!(Encoder::new(&h).unwrap().k(), 2);
    }
}
