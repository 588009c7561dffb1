//! Dyadic plane pyramid: level `i - 1` keeps the upper-left sample of every
//! 2x2 block of level `i`.

use crate::error::{Error, Result};
use crate::raw::PlaneStack;

pub const LEVELS: usize = 5;
/// Plane dimensions must be multiples of this.
pub const ALIGN: usize = 1 << (LEVELS - 1);

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    /// `levels[0]` is the coarsest, `levels[4]` the full-resolution stack.
    pub levels: Vec<PlaneStack<u16>>,
}

fn subsample(x: &PlaneStack<u16>) -> PlaneStack<u16> {
    let (w, h) = (x.width / 2, x.height / 2);
    let planes = x.planes.clone().map(|p| {
        let mut out = Vec::with_capacity(w * h);
        for r in 0..h {
            out.extend((0..w).map(|c| p[2 * r * x.width + 2 * c]));
        }
        out
    });
    PlaneStack {
        width: w,
        height: h,
        planes,
    }
}

pub fn build_pyramid(x: &PlaneStack<u16>) -> Result<Pyramid> {
    if x.width == 0 || x.height == 0 || x.width % ALIGN != 0 || x.height % ALIGN != 0 {
        return Err(Error::Dimension(format!(
            "pyramid planes must be nonempty multiples of {ALIGN}, got {}x{}",
            x.width, x.height
        )));
    }
    let mut levels = vec![x.clone()];
    for _ in 1..LEVELS {
        let next = subsample(levels.last().unwrap());
        levels.push(next);
    }
    levels.reverse();
    Ok(Pyramid { levels })
}

impl Pyramid {
    pub fn level(&self, i: usize) -> &PlaneStack<u16> {
        &self.levels[i]
    }

    pub fn full(&self) -> &PlaneStack<u16> {
        &self.levels[LEVELS - 1]
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
pub fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn round_up(v: usize) -> usize {
    v.div_ceil(ALIGN) * ALIGN
}

/// Reflect-pads every plane to multiples of [`ALIGN`].
pub fn pad_stack(x: &PlaneStack<u16>) -> PlaneStack<u16> {
    let (w, h) = (round_up(x.width), round_up(x.height));
    if (w, h) == (x.width, x.height) {
        return x.clone();
    }
    let planes = x.planes.clone().map(|p| {
        let mut out = Vec::with_capacity(w * h);
        for r in 0..h {
            let sr = reflect(r, x.height);
            out.extend((0..w).map(|c| p[sr * x.width + reflect(c, x.width)]));
        }
        out
    });
    PlaneStack {
        width: w,
        height: h,
        planes,
    }
}

pub fn crop_stack(x: &PlaneStack<u16>, width: usize, height: usize) -> PlaneStack<u16> {
    let planes = x.planes.clone().map(|p| {
        let mut out = Vec::with_capacity(width * height);
        for r in 0..height {
            out.extend_from_slice(&p[r * x.width..r * x.width + width]);
        }
        out
    });
    PlaneStack { width, height, planes }
}

/// Bilinear 2x upsample of a parent plane at child position `(r, c)`,
/// returned as four times the interpolated value (exact integer). Even
/// coordinates sit on parent samples; odd ones average the two neighbours,
/// replicating the last row/column at the border.
#[inline]
pub fn upsample_q2(parent: &[u16], pw: usize, ph: usize, r: usize, c: usize) -> i64 {
    let (r0, r1) = if r % 2 == 0 {
        (r / 2, r / 2)
    } else {
        (r / 2, (r / 2 + 1).min(ph - 1))
    };
    let (c0, c1) = if c % 2 == 0 {
        (c / 2, c / 2)
    } else {
        (c / 2, (c / 2 + 1).min(pw - 1))
    };
    parent[r0 * pw + c0] as i64
        + parent[r0 * pw + c1] as i64
        + parent[r1 * pw + c0] as i64
        + parent[r1 * pw + c1] as i64
}
