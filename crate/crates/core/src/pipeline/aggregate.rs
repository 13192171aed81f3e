use crate::error::{Error, Result};
use crate::tensor::{Image, NNField};

/// Patch voting at pixel level.
///
/// For each output pixel `p`, every neighbor `x` in the `(2r+1)^2` window
/// around `p` votes with the source pixel its match implies for `p`, namely
/// `nnf(x) + (p - x)`. Votes are averaged per channel and rounded half away
/// from zero. Coordinates are clamped at the borders.
pub fn aggregate_output(source: &Image, nnf: &NNField, patch_radius: usize) -> Result<Image> {
    if (nnf.target_height(), nnf.target_width()) != (source.height(), source.width()) {
        return Err(Error::dims(format!(
            "field targets {}x{} but the source image is {}x{}",
            nnf.target_height(),
            nnf.target_width(),
            source.height(),
            source.width()
        )));
    }
    let (h, w) = (nnf.height(), nnf.width());
    let (th, tw) = (source.height(), source.width());
    let r = patch_radius as isize;
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    Ok(Image::from_fn(h, w, |pr, pc| {
        let mut sum = [0.0f64; 3];
        for dy in -r..=r {
            let xr = (pr as isize + dy).clamp(0, h as isize - 1);
            for dx in -r..=r {
                let xc = (pc as isize + dx).clamp(0, w as isize - 1);
                let q = nnf.get(xr as usize, xc as usize);
                let yr = (q.row as isize + pr as isize - xr).clamp(0, th as isize - 1);
                let yc = (q.col as isize + pc as isize - xc).clamp(0, tw as isize - 1);
                let px = source.get(yr as usize, yc as usize);
                for k in 0..3 {
                    sum[k] += f64::from(px[k]);
                }
            }
        }
        sum.map(|s| (s / n).round() as u8)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Coord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    #[test]
    fn identity_field_reproduces_source() {
        let src = noise(9, 7, 1);
        let out = aggregate_output(&src, &NNField::identity(9, 7), 2).unwrap();
        assert_eq!(out, src);
    }

    #[test]
    fn constant_field_into_flat_corner() {
        // Votes land within 2 pixels of the origin, so a flat 3x3 corner
        // makes every output pixel equal source(0, 0).
        let src = Image::from_fn(6, 6, |r, c| if r < 3 && c < 3 { [10, 20, 30] } else { [200, 0, 9] });
        let nnf = NNField::from_fn(5, 4, 6, 6, |_, _| Coord::new(0, 0)).unwrap();
        let out = aggregate_output(&src, &nnf, 2).unwrap();
        assert!(out.pixels().iter().all(|&p| p == [10, 20, 30]));
    }

    #[test]
    fn matches_direct_double_loop() {
        let src = noise(8, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nnf = NNField::random(8, 8, 8, 8, &mut rng).unwrap();
        let out = aggregate_output(&src, &nnf, 2).unwrap();
        let cl = |v: i64| v.clamp(0, 7) as usize;
        for pr in 0..8i64 {
            for pc in 0..8i64 {
                let mut acc = [0u32; 3];
                for dy in -2..=2i64 {
                    for dx in -2..=2i64 {
                        let (xr, xc) = (cl(pr + dy), cl(pc + dx));
                        let q = nnf.get(xr, xc);
                        let yr = cl(q.row as i64 + pr - xr as i64);
                        let yc = cl(q.col as i64 + pc - xc as i64);
                        let px = src.get(yr, yc);
                        for k in 0..3 {
                            acc[k] += u32::from(px[k]);
                        }
                    }
                }
                // Integer round-half-up equals round-half-away for non-negative sums.
                let want = acc.map(|s| ((2 * s + 25) / 50) as u8);
                assert_eq!(out.get(pr as usize, pc as usize), want);
            }
        }
    }

    #[test]
    fn rejects_bounds_mismatch() {
        let src = noise(4, 4, 4);
        assert!(aggregate_output(&src, &NNField::identity(5, 5), 2).is_err());
    }
}
