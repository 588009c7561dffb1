//! Platform-independent arithmetic for the entropy model.
//!
//! Nothing here calls libm: `det_exp` uses only IEEE-exact basic operations,
//! and the sigmoid is a 4096-interval lookup table evaluated with integer
//! linear interpolation. Encoder and decoder therefore agree bit-for-bit on
//! every probability regardless of platform.

use std::sync::OnceLock;

/// Intervals in the sigmoid table.
pub const LUT_INTERVALS: usize = 4096;
/// The table covers `t` in `[-LUT_RANGE, LUT_RANGE]`.
pub const LUT_RANGE: i64 = 16;
/// Fractional bits of the table arguments.
pub const T_FRAC: u32 = 16;
/// Fractional bits of table outputs.
pub const P_FRAC: u32 = 24;

const T_MAX: i64 = LUT_RANGE << T_FRAC;
// (2 * 16 * 2^16) / 4096 = 2^9 argument units per interval
const STEP_BITS: u32 = 9;

#[allow(clippy::excessive_precision)]
const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;

/// `exp(x)` from +, -, *, / and exact power-of-two scaling only.
///
/// Cody-Waite reduction to `|r| <= ln2/2`, then a degree-13 Taylor
/// polynomial; relative error is below 1e-15 over the range used here.
pub fn det_exp(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -745.0 {
        return 0.0;
    }
    let nf = {
        let y = x * std::f64::consts::LOG2_E;
        // round half away from zero without calling libm
        let t = y.trunc();
        let frac = y - t;
        if frac >= 0.5 {
            t + 1.0
        } else if frac <= -0.5 {
            t - 1.0
        } else {
            t
        }
    };
    let r = (x - nf * LN2_HI) - nf * LN2_LO;
    let mut p = 1.0;
    for i in (1..=13).rev() {
        p = 1.0 + p * r / i as f64;
    }
    let n = nf as i64;
    // split the scaling so intermediate powers stay normal
    let (a, b) = (n / 2, n - n / 2);
    p * pow2(a) * pow2(b)
}

fn pow2(n: i64) -> f64 {
    if n < -1022 {
        return 0.0;
    }
    f64::from_bits(((n + 1023) as u64) << 52)
}

/// `1 / (1 + exp(-t))` via [`det_exp`].
pub fn det_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + det_exp(-t))
    } else {
        let e = det_exp(t);
        e / (1.0 + e)
    }
}

/// Sigmoid samples at `t_i = -16 + 32 i / 4096`, in Q24.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmoidTable {
    values: Vec<u32>,
}

impl SigmoidTable {
    pub fn new() -> Self {
        let scale = (1u64 << P_FRAC) as f64;
        let values = (0..=LUT_INTERVALS)
            .map(|i| {
                let t = -(LUT_RANGE as f64) + 2.0 * LUT_RANGE as f64 * i as f64 / LUT_INTERVALS as f64;
                (det_sigmoid(t) * scale + 0.5).floor() as u32
            })
            .collect();
        SigmoidTable { values }
    }

    /// Test hook: a copy with entry `index` overwritten.
    pub fn corrupted(&self, index: usize, value: u32) -> Self {
        let mut t = self.clone();
        t.values[index] = value;
        t
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// `sigmoid(t)` in Q24 for `t` in Q16, saturating outside the table.
    #[inline]
    pub fn eval(&self, t: i64) -> u64 {
        let t = t.clamp(-T_MAX, T_MAX);
        let u = (t + T_MAX) as u64;
        let idx = (u >> STEP_BITS) as usize;
        if idx >= LUT_INTERVALS {
            return self.values[LUT_INTERVALS] as u64;
        }
        let frac = (u & ((1 << STEP_BITS) - 1)) as i64;
        let (a, b) = (self.values[idx] as i64, self.values[idx + 1] as i64);
        (a + (((b - a) * frac) >> STEP_BITS)) as u64
    }

    /// Entries are nondecreasing and stay within one unit of the f64 sigmoid.
    pub fn check(&self) -> Result<(), String> {
        if self.values.len() != LUT_INTERVALS + 1 {
            return Err(format!("table has {} entries", self.values.len()));
        }
        let reference = SigmoidTable::new();
        for (i, (&v, &r)) in self.values.iter().zip(&reference.values).enumerate() {
            if (v as i64 - r as i64).abs() > 1 {
                return Err(format!("entry {i} is {v}, expected {r}"));
            }
            if i > 0 && v < self.values[i - 1] {
                return Err(format!("entry {i} decreases"));
            }
        }
        Ok(())
    }
}

impl Default for SigmoidTable {
    fn default() -> Self {
        SigmoidTable::new()
    }
}

/// Process-wide table used by the codec.
pub fn sigmoid_table() -> &'static SigmoidTable {
    static TABLE: OnceLock<SigmoidTable> = OnceLock::new();
    TABLE.get_or_init(SigmoidTable::new)
}

/// Minimal bits needed to hold `v` (0 for 0).
pub fn bit_length(v: u64) -> u32 {
    64 - v.leading_zeros()
}
