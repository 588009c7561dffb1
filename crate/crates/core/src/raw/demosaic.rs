use super::{Channel, NormalizedRaw, RawMeta, RgbImage};
use crate::error::{Error, Result};

/// Source rows (or columns) in sub-plane coordinates that bracket a full
/// resolution coordinate. One entry when the coordinate lands on a site of
/// the sub-plane, two when it falls halfway between sites.
fn bracket(pos: usize, offset: usize, len: usize) -> ([usize; 2], usize) {
    let d = pos as isize - offset as isize;
    let clamp = |v: isize| v.clamp(0, len as isize - 1) as usize;
    if d % 2 == 0 {
        ([clamp(d / 2), 0], 1)
    } else {
        let lo = d.div_euclid(2);
        ([clamp(lo), clamp(lo + 1)], 2)
    }
}

/// Bilinear estimate of sub-plane `ch` at mosaic position (row, col). Sites
/// outside the mosaic are replaced by the nearest same-colour site.
fn interpolate(x: &NormalizedRaw, ch: Channel, row: usize, col: usize) -> f64 {
    let (oy, ox) = x.meta.pattern.channel_offsets()[ch.index()];
    let (pw, ph) = (x.width / 2, x.height / 2);
    let (rows, nr) = bracket(row, oy, ph);
    let (cols, nc) = bracket(col, ox, pw);
    let mut sum = 0.0;
    for &r in &rows[..nr] {
        for &c in &cols[..nc] {
            sum += x.get(2 * r + oy, 2 * c + ox);
        }
    }
    sum / (nr * nc) as f64
}

/// Bilinear demosaic with edge replication.
///
/// Every mosaic site keeps its own sample untouched in the matching output
/// channel, so [`mosaic`] of the result returns the input bit-exactly. Red and
/// blue are interpolated from their 2 or 4 nearest same-colour sites; green at
/// a red/blue site is the mean of its 4 orthogonal green neighbours. RYYB
/// mosaics are treated as RGGB with yellow in the green role.
pub fn demosaic(x: &NormalizedRaw) -> Result<RgbImage> {
    if x.width % 2 != 0 || x.height % 2 != 0 || x.width == 0 || x.height == 0 {
        return Err(Error::Dimension(format!(
            "demosaic needs even dimensions, got {}x{}",
            x.width, x.height
        )));
    }
    let pattern = x.meta.pattern;
    let mut out = RgbImage::filled(x.width, x.height, [0.0; 3]);
    for row in 0..x.height {
        for col in 0..x.width {
            let i = row * x.width + col;
            let site = pattern.channel_at(row, col);
            let own = x.samples[i];
            let r = if site == Channel::R {
                own
            } else {
                interpolate(x, Channel::R, row, col)
            };
            let b = if site == Channel::B {
                own
            } else {
                interpolate(x, Channel::B, row, col)
            };
            let g = match site {
                Channel::Gr | Channel::Gb => own,
                _ => 0.5 * (interpolate(x, Channel::Gr, row, col) + interpolate(x, Channel::Gb, row, col)),
            };
            out.set_pixel(i, [r, g, b]);
        }
    }
    Ok(out)
}

/// Samples each site's colour from `y`, clamped to [0, 1].
pub fn mosaic(y: &RgbImage, meta: RawMeta) -> Result<NormalizedRaw> {
    if y.width % 2 != 0 || y.height % 2 != 0 {
        return Err(Error::Dimension(format!(
            "mosaic needs even dimensions, got {}x{}",
            y.width, y.height
        )));
    }
    let mut samples = Vec::with_capacity(y.len());
    for row in 0..y.height {
        for col in 0..y.width {
            let c = meta.pattern.color_at(row, col);
            let v = y.planes[c][row * y.width + col];
            samples.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        }
    }
    NormalizedRaw::new(y.width, y.height, meta, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw::Pattern;
    use proptest::prelude::*;

    fn meta(p: Pattern) -> RawMeta {
        RawMeta::new(p, 12, 0, 4095).unwrap()
    }

    #[test]
    fn constant_mosaic_gives_constant_rgb() {
        let x = NormalizedRaw::new(6, 4, meta(Pattern::Grbg), vec![0.37; 24]).unwrap();
        let y = demosaic(&x).unwrap();
        for p in &y.planes {
            assert!(p.iter().all(|&v| v == 0.37));
        }
    }

    #[test]
    fn per_colour_constants() {
        let rgb = RgbImage::filled(4, 4, [1.0, 0.5, 0.0]);
        let x = mosaic(&rgb, meta(Pattern::Rggb)).unwrap();
        let y = demosaic(&x).unwrap();
        assert!(y.planes[0].iter().all(|&v| v == 1.0));
        assert!(y.planes[1].iter().all(|&v| v == 0.5));
        assert!(y.planes[2].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_interior_weights() {
        // value = row * 4 + col, scaled
        let samples: Vec<f64> = (0..16).map(|v| v as f64 / 16.0).collect();
        let x = NormalizedRaw::new(4, 4, meta(Pattern::Rggb), samples.clone()).unwrap();
        let y = demosaic(&x).unwrap();
        let at = |r: usize, c: usize| samples[r * 4 + c];
        // (1,1) is a blue site in RGGB
        let i = 5;
        let r = (at(0, 0) + at(0, 2) + at(2, 0) + at(2, 2)) / 4.0;
        let g = (at(0, 1) + at(1, 0) + at(1, 2) + at(2, 1)) / 4.0;
        assert!((y.planes[0][i] - r).abs() < 1e-15);
        assert!((y.planes[1][i] - g).abs() < 1e-15);
        assert_eq!(y.planes[2][i], at(1, 1));
        // (0,1) is a green site on a red row: red from left/right, blue from below
        assert!((y.planes[0][1] - (at(0, 0) + at(0, 2)) / 2.0).abs() < 1e-15);
        assert!((y.planes[2][1] - at(1, 1)).abs() < 1e-15);
    }

    #[test]
    fn constant_rgb_mosaic_quads() {
        let rgb = RgbImage::filled(4, 2, [0.2, 0.4, 0.6]);
        let x = mosaic(&rgb, meta(Pattern::Rggb)).unwrap();
        assert_eq!(x.samples, vec![0.2, 0.4, 0.2, 0.4, 0.4, 0.6, 0.4, 0.6]);
    }

    #[test]
    fn grbg_is_column_shifted_rggb() {
        let rgb = RgbImage::from_fn(8, 4, |r, c| {
            let v = (r * 8 + c) as f64 / 64.0;
            [v, 0.5 * v, 0.25 * v]
        });
        let a = mosaic(&rgb, meta(Pattern::Rggb)).unwrap();
        let b = mosaic(&rgb, meta(Pattern::Grbg)).unwrap();
        // site map: GRBG at col c has the colour RGGB has at col c+1
        for r in 0..4 {
            for c in 0..7 {
                assert_eq!(Pattern::Grbg.color_at(r, c), Pattern::Rggb.color_at(r, c + 1));
                let ch = Pattern::Grbg.color_at(r, c);
                assert_eq!(b.get(r, c), rgb.planes[ch][r * 8 + c]);
            }
        }
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn odd_dimension_error() {
        let x = NormalizedRaw {
            width: 3,
            height: 2,
            meta: meta(Pattern::Rggb),
            samples: vec![0.0; 6],
        };
        assert!(matches!(demosaic(&x), Err(Error::Dimension(_))));
    }

    fn arb_mosaic() -> impl Strategy<Value = NormalizedRaw> {
        (1usize..=32, 1usize..=32, 0usize..5).prop_flat_map(|(hw, hh, p)| {
            let n = 4 * hw * hh;
            proptest::collection::vec(0.0f64..=1.0, n)
                .prop_map(move |s| NormalizedRaw::new(2 * hw, 2 * hh, meta(Pattern::ALL[p]), s).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mosaic_after_demosaic_is_identity(x in arb_mosaic()) {
            let y = demosaic(&x).unwrap();
            let back = mosaic(&y, x.meta).unwrap();
            prop_assert_eq!(back.samples, x.samples);
        }

        #[test]
        fn demosaic_has_no_overshoot(x in arb_mosaic()) {
            let lo = x.samples.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let y = demosaic(&x).unwrap();
            for p in &y.planes {
                for &v in p {
                    prop_assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
                }
            }
        }
    }
}
