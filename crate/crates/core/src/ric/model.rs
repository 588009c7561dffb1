//! Fixed-point discretized logistic mixtures and their quantized CDFs.
//!
//! Units: sample values and means are in Q12 symbol units, scales in Q12,
//! weights in Q16 (summing to exactly 65536), sigmoid outputs in Q24, so a
//! mixture CDF is an integer in `[0, 2^40]`.
//!
//! A symbol `v` in `0..A` is coded in two steps: its bucket `v >> low_bits`
//! and then its position inside the bucket. Both steps use frequencies
//! quantized to a total of 2^16 with every symbol keeping at least one
//! count, so any symbol stays decodable.

use super::fixed::{bit_length, SigmoidTable, LUT_RANGE, T_FRAC};
use super::rangecoder::{RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};

pub const Q12: i64 = 1 << 12;
pub const WEIGHT_ONE: u32 = 1 << 16;
/// Smallest scale, about 1e-3 symbols.
pub const SIGMA_MIN_Q12: i64 = 5;
pub const SIGMA_MAX_Q12: i64 = 1 << 30;
pub const FREQ_BITS: u32 = 16;
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;
pub const CDF_ONE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QComponent {
    /// Q16.
    pub weight: u32,
    /// Offset from the predicted value, Q12.
    pub offset: i64,
    /// Q12.
    pub sigma: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMixture {
    pub components: Vec<QComponent>,
}

impl QMixture {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.components.len() > 64 {
            return Err(Error::CorruptInput(format!(
                "mixture with {} components",
                self.components.len()
            )));
        }
        let mut sum = 0u64;
        for c in &self.components {
            if c.weight == 0 || !(SIGMA_MIN_Q12..=SIGMA_MAX_Q12).contains(&c.sigma) || c.offset.abs() > 1 << 40 {
                return Err(Error::CorruptInput(format!("bad mixture component {c:?}")));
            }
            sum += c.weight as u64;
        }
        if sum != WEIGHT_ONE as u64 {
            return Err(Error::CorruptInput(format!("mixture weights sum to {sum}")));
        }
        Ok(())
    }

    /// Single component of the given scale.
    pub fn single(sigma: i64) -> Self {
        QMixture {
            components: vec![QComponent {
                weight: WEIGHT_ONE,
                offset: 0,
                sigma: sigma.clamp(SIGMA_MIN_Q12, SIGMA_MAX_Q12),
            }],
        }
    }
}

/// Two-level split of the alphabet `0..size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabet {
    pub size: u32,
    pub low_bits: u32,
    pub buckets: u32,
}

impl Alphabet {
    /// Alphabet `0..=span`.
    pub fn new(span: u32) -> Self {
        let size = span + 1;
        let bits = bit_length((size - 1) as u64);
        let low_bits = bits / 2;
        let buckets = size.div_ceil(1 << low_bits);
        Alphabet {
            size,
            low_bits,
            buckets,
        }
    }

    pub fn width(&self) -> u32 {
        1 << self.low_bits
    }

    fn bucket_range(&self, b: u32) -> (u32, u32) {
        let lo = b << self.low_bits;
        (lo, (lo + self.width()).min(self.size))
    }
}

#[derive(Debug, Clone, Copy)]
struct Comp {
    weight: u64,
    mean: i64,
    sigma: i64,
    inv: i64,
}

/// Mixture placed at a concrete prediction, ready to evaluate.
#[derive(Debug, Clone)]
pub struct Conditional<'a> {
    table: &'a SigmoidTable,
    comps: Vec<Comp>,
    alphabet: Alphabet,
}

const T_MAX: i64 = LUT_RANGE << T_FRAC;

impl<'a> Conditional<'a> {
    /// `pred` is the predicted value in Q12 symbol units.
    pub fn new(table: &'a SigmoidTable, mix: &QMixture, pred: i64, alphabet: Alphabet) -> Self {
        let comps = mix
            .components
            .iter()
            .map(|c| Comp {
                weight: c.weight as u64,
                mean: pred + c.offset,
                sigma: c.sigma,
                inv: (1i64 << 40) / c.sigma,
            })
            .collect();
        Conditional { table, comps, alphabet }
    }

    /// Mixture CDF at the lower edge of symbol `j` (`j - 1/2`), with the
    /// tails folded: `edge(0) = 0`, `edge(size) = 2^40`.
    pub fn edge(&self, j: u32) -> u64 {
        if j == 0 {
            return 0;
        }
        if j >= self.alphabet.size {
            return CDF_ONE;
        }
        let x = ((j as i64) << 12) - Q12 / 2;
        let mut acc = 0u64;
        for c in &self.comps {
            let d = x - c.mean;
            let lim = c.sigma * LUT_RANGE;
            let t = if d >= lim {
                T_MAX
            } else if d <= -lim {
                -T_MAX
            } else {
                (d * c.inv) >> 24
            };
            acc += c.weight * self.table.eval(t);
        }
        acc.min(CDF_ONE)
    }

    fn bucket_cdf(&self, out: &mut Vec<u32>) {
        let a = self.alphabet;
        let edges: Vec<u64> = (0..=a.buckets)
            .map(|b| self.edge((b << a.low_bits).min(a.size)))
            .collect();
        quantize(&edges, out);
    }

    fn low_cdf(&self, b: u32, out: &mut Vec<u32>) {
        let (lo, hi) = self.alphabet.bucket_range(b);
        let edges: Vec<u64> = (lo..=hi).map(|j| self.edge(j)).collect();
        quantize(&edges, out);
    }

    /// Quantized probability of `v` as a pair of stage frequencies.
    pub fn frequencies(&self, v: u32) -> (u32, u32) {
        let mut c = Vec::new();
        let b = v >> self.alphabet.low_bits;
        self.bucket_cdf(&mut c);
        let f1 = c[b as usize + 1] - c[b as usize];
        self.low_cdf(b, &mut c);
        let i = (v - (b << self.alphabet.low_bits)) as usize;
        (f1, c[i + 1] - c[i])
    }

    /// Exact probability of `v` under the quantized model.
    pub fn probability(&self, v: u32) -> f64 {
        let (a, b) = self.frequencies(v);
        a as f64 / FREQ_TOTAL as f64 * (b as f64 / FREQ_TOTAL as f64)
    }

    /// `-log2` of [`probability`](Self::probability).
    pub fn cost(&self, v: u32) -> f64 {
        let (a, b) = self.frequencies(v);
        2.0 * FREQ_BITS as f64 - (a as f64).log2() - (b as f64).log2()
    }

    /// Codes `v` and returns its cost in bits.
    pub fn encode(&self, enc: &mut RangeEncoder, v: u32) -> Result<f64> {
        if v >= self.alphabet.size {
            return Err(Error::CorruptInput(format!(
                "symbol {v} outside alphabet of {}",
                self.alphabet.size
            )));
        }
        let mut c = Vec::new();
        let b = v >> self.alphabet.low_bits;
        self.bucket_cdf(&mut c);
        code_step(enc, &c, b as usize);
        let f1 = c[b as usize + 1] - c[b as usize];
        self.low_cdf(b, &mut c);
        let i = (v - (b << self.alphabet.low_bits)) as usize;
        code_step(enc, &c, i);
        let f2 = c[i + 1] - c[i];
        Ok(2.0 * FREQ_BITS as f64 - (f1 as f64).log2() - (f2 as f64).log2())
    }

    pub fn decode(&self, dec: &mut RangeDecoder<'_>) -> u32 {
        let mut c = Vec::new();
        self.bucket_cdf(&mut c);
        let b = decode_step(dec, &c) as u32;
        self.low_cdf(b, &mut c);
        (b << self.alphabet.low_bits) + decode_step(dec, &c) as u32
    }
}

/// Cumulative counts from cumulative masses: `C(i) = floor(M(i) (T - n) / M(n)) + i`.
/// Every symbol keeps at least one count; zero total mass gives a uniform table.
pub fn quantize(edges: &[u64], out: &mut Vec<u32>) {
    out.clear();
    let n = edges.len() - 1;
    let base = edges[0];
    let total = edges[n] - base;
    let spare = (FREQ_TOTAL as u64) - n as u64;
    for (i, &e) in edges.iter().enumerate() {
        let c = if total == 0 {
            i as u64 * FREQ_TOTAL as u64 / n as u64
        } else {
            (e - base) * spare / total + i as u64
        };
        out.push(c as u32);
    }
}

fn code_step(enc: &mut RangeEncoder, cdf: &[u32], i: usize) {
    if cdf.len() > 2 {
        enc.encode(cdf[i], cdf[i + 1] - cdf[i], FREQ_TOTAL);
    }
}

fn decode_step(dec: &mut RangeDecoder<'_>, cdf: &[u32]) -> usize {
    if cdf.len() <= 2 {
        return 0;
    }
    let t = dec.decode_target(FREQ_TOTAL);
    let i = cdf.partition_point(|&c| c <= t) - 1;
    dec.consume(cdf[i], cdf[i + 1] - cdf[i]);
    i
}

/// Frequency-count model that learns as it codes.
#[derive(Debug, Clone)]
pub struct AdaptiveModel {
    freqs: Vec<u32>,
    total: u32,
}

const ADAPT_INC: u32 = 32;
const ADAPT_LIMIT: u32 = 1 << 16;

impl AdaptiveModel {
    pub fn new(n: usize) -> Self {
        AdaptiveModel {
            freqs: vec![1; n],
            total: n as u32,
        }
    }

    fn start(&self, s: usize) -> u32 {
        self.freqs[..s].iter().sum()
    }

    fn update(&mut self, s: usize) {
        self.freqs[s] += ADAPT_INC;
        self.total += ADAPT_INC;
        if self.total > ADAPT_LIMIT {
            self.total = 0;
            for f in &mut self.freqs {
                *f = f.div_ceil(2);
                self.total += *f;
            }
        }
    }

    /// Codes `s` and returns its cost in bits.
    pub fn encode(&mut self, enc: &mut RangeEncoder, s: usize) -> f64 {
        let bits = self.cost(s);
        if self.freqs.len() > 1 {
            enc.encode(self.start(s), self.freqs[s], self.total);
        }
        self.update(s);
        bits
    }

    /// Cost without coding, updating the model as `encode` would.
    pub fn account(&mut self, s: usize) -> f64 {
        let bits = self.cost(s);
        self.update(s);
        bits
    }

    fn cost(&self, s: usize) -> f64 {
        if self.freqs.len() > 1 {
            (self.total as f64).log2() - (self.freqs[s] as f64).log2()
        } else {
            0.0
        }
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder<'_>) -> usize {
        if self.freqs.len() <= 1 {
            self.update(0);
            return 0;
        }
        let t = dec.decode_target(self.total);
        let mut acc = 0;
        let mut s = 0;
        while acc + self.freqs[s] <= t {
            acc += self.freqs[s];
            s += 1;
        }
        dec.consume(acc, self.freqs[s]);
        self.update(s);
        s
    }
}
