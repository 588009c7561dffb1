//! Byte-oriented range coder with carry propagation (the LZMA scheme).
//!
//! The encoder keeps a 33-bit `low`; a pending byte plus a run of 0xFF bytes
//! is held back until it is known whether a carry will ripple into them.
//! The range is renormalized to at least 2^24, so any total up to 2^16
//! keeps at least 8 bits of precision per symbol.

const TOP: u32 = 1 << 24;
/// Largest frequency total accepted by `encode` / `decode_target`.
pub const MAX_TOTAL: u32 = 1 << 16;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        RangeEncoder::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Codes the interval `[start, start + size)` out of `total`.
    pub fn encode(&mut self, start: u32, size: u32, total: u32) {
        debug_assert!(size > 0 && start + size <= total && total <= MAX_TOTAL);
        let r = self.range / total;
        self.low += r as u64 * start as u64;
        self.range = r * size;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }

    /// Bytes emitted so far (excluding held-back bytes).
    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    r: u32,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            code: 0,
            range: u32::MAX,
            r: 0,
            buf,
            pos: 0,
        };
        for _ in 0..5 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    /// Past the end the stream reads as zeros; the per-section checksum
    /// catches any resulting desync.
    fn next_byte(&mut self) -> u8 {
        let b = self.buf.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative-frequency target in `0..total` for the next symbol.
    pub fn decode_target(&mut self, total: u32) -> u32 {
        self.r = self.range / total;
        (self.code / self.r).min(total - 1)
    }

    /// Consumes the symbol found for the last target.
    pub fn consume(&mut self, start: u32, size: u32) {
        self.code = self.code.wrapping_sub(self.r.wrapping_mul(start));
        self.range = self.r.wrapping_mul(size);
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte() as u32;
        }
    }

    /// Bytes read past the end of the buffer.
    pub fn overrun(&self) -> usize {
        self.pos.saturating_sub(self.buf.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cdf_of(freqs: &[u32]) -> Vec<u32> {
        let mut c = vec![0];
        for f in freqs {
            c.push(c.last().unwrap() + f);
        }
        c
    }

    #[test]
    fn roundtrip_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..20 {
            let n = rng.random_range(2..300);
            let total = if trial % 2 == 0 {
                MAX_TOTAL
            } else {
                rng.random_range(n as u32..MAX_TOTAL)
            };
            // random positive freqs summing to total
            let mut freqs = vec![1u32; n];
            for _ in 0..(total as usize - n) {
                let i = if rng.random::<f64>() < 0.5 {
                    0
                } else {
                    rng.random_range(0..n)
                };
                freqs[i] += 1;
            }
            let cdf = cdf_of(&freqs);
            let syms: Vec<usize> = (0..5000)
                .map(|_| {
                    let t = rng.random_range(0..total);
                    cdf.partition_point(|&c| c <= t) - 1
                })
                .collect();
            let mut enc = RangeEncoder::new();
            for &s in &syms {
                enc.encode(cdf[s], freqs[s], total);
            }
            let bytes = enc.finish();
            let mut dec = RangeDecoder::new(&bytes);
            for &s in &syms {
                let t = dec.decode_target(total);
                let got = cdf.partition_point(|&c| c <= t) - 1;
                assert_eq!(got, s);
                dec.consume(cdf[got], freqs[got]);
            }
            assert_eq!(dec.overrun(), 0);
        }
    }

    #[test]
    fn carry_heavy_stream() {
        // symbols at the very top of the range force long 0xFF runs and carries
        let total = MAX_TOTAL;
        let mut enc = RangeEncoder::new();
        let syms: Vec<u32> = (0..20000).map(|i| if i % 97 == 0 { 0 } else { total - 2 }).collect();
        for &s in &syms {
            enc.encode(s, if s == 0 { total - 2 } else { 2 }, total);
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes);
        for &s in &syms {
            let t = dec.decode_target(total);
            let (start, size) = if t < total - 2 { (0, total - 2) } else { (total - 2, 2) };
            assert_eq!(start, s);
            dec.consume(start, size);
        }
    }

    #[test]
    fn size_tracks_information() {
        let total = MAX_TOTAL;
        let mut enc = RangeEncoder::new();
        // 10000 symbols of probability 1/256: 80000 bits
        for i in 0..10000u32 {
            enc.encode((i % 256) * 256, 256, total);
        }
        let bytes = enc.finish();
        assert!(bytes.len() >= 10000 && bytes.len() <= 10000 + 8, "{}", bytes.len());
    }
}
