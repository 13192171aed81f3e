//! PatchMatch over two pairs of normalized feature maps.
//!
//! A field maps positions of the source pair `(a, a2)` to positions of the
//! target pair `(b, b2)`. The bidirectional cost sums patch distances over
//! both pairs; the single-direction cost keeps only the `(a2, b2)` pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{clamp_index, Coord, FeatureMap, NNField};

/// Largest target grid side accepted by [`exhaustive_nnf`].
pub const EXHAUSTIVE_LIMIT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchSettings {
    /// Patches are `(2 * patch_radius + 1)` squared.
    pub patch_radius: usize,
    /// Number of propagation + random-search sweeps.
    pub iterations: usize,
    /// Largest random-search displacement.
    pub search_radius: usize,
    pub seed: u64,
    pub bidirectional: bool,
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings {
            patch_radius: 1,
            iterations: 10,
            search_radius: 6,
            seed: 0,
            bidirectional: true,
        }
    }
}

/// The four maps one field is matched over. `a`/`a2` share a grid, as do
/// `b`/`b2`; `a` is compared with `b` and `a2` with `b2`.
#[derive(Debug, Clone, Copy)]
pub struct Quad<'a> {
    pub a: &'a FeatureMap,
    pub a2: &'a FeatureMap,
    pub b: &'a FeatureMap,
    pub b2: &'a FeatureMap,
}

impl<'a> Quad<'a> {
    pub fn new(a: &'a FeatureMap, a2: &'a FeatureMap, b: &'a FeatureMap, b2: &'a FeatureMap) -> Self {
        Quad { a, a2, b, b2 }
    }

    fn validate(&self) -> Result<()> {
        let hw = |m: &FeatureMap| (m.height(), m.width());
        if hw(self.a) != hw(self.a2) {
            return Err(Error::dims(format!(
                "source maps differ in size: {:?} vs {:?}",
                self.a.dims(),
                self.a2.dims()
            )));
        }
        if hw(self.b) != hw(self.b2) {
            return Err(Error::dims(format!(
                "target maps differ in size: {:?} vs {:?}",
                self.b.dims(),
                self.b2.dims()
            )));
        }
        if self.a.channels() != self.b.channels() || self.a2.channels() != self.b2.channels() {
            return Err(Error::dims("compared maps differ in channel count".to_string()));
        }
        Ok(())
    }

    fn source_hw(&self) -> (usize, usize) {
        (self.a.height(), self.a.width())
    }

    fn target_hw(&self) -> (usize, usize) {
        (self.b.height(), self.b.width())
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Patch distance between `p` in the source grid and `q` in the target grid.
/// Patch samples outside a grid are clamped to its border.
pub fn patch_cost(p: Coord, q: Coord, maps: &Quad<'_>, radius: usize, bidirectional: bool) -> f64 {
    bounded_cost(p, q, maps, radius, bidirectional, f64::INFINITY)
}

/// As [`patch_cost`], but may stop early and return any value `>= bound`
/// once the partial sum reaches `bound`.
fn bounded_cost(p: Coord, q: Coord, maps: &Quad<'_>, radius: usize, bidirectional: bool, bound: f64) -> f64 {
    let (sh, sw) = maps.source_hw();
    let (th, tw) = maps.target_hw();
    let r = radius as isize;
    let mut total = 0.0;
    for dy in -r..=r {
        let xr = clamp_index(p.row as isize + dy, sh);
        let yr = clamp_index(q.row as isize + dy, th);
        for dx in -r..=r {
            let xc = clamp_index(p.col as isize + dx, sw);
            let yc = clamp_index(q.col as isize + dx, tw);
            if bidirectional {
                total += sq_dist(maps.a.pixel(xr, xc), maps.b.pixel(yr, yc));
            }
            total += sq_dist(maps.a2.pixel(xr, xc), maps.b2.pixel(yr, yc));
        }
        if total >= bound {
            return total;
        }
    }
    total
}

/// Sum of patch costs over every source position.
pub fn total_cost(nnf: &NNField, maps: &Quad<'_>, radius: usize, bidirectional: bool) -> f64 {
    let mut total = 0.0;
    for r in 0..nnf.height() {
        for c in 0..nnf.width() {
            total += patch_cost(Coord::new(r, c), nnf.get(r, c), maps, radius, bidirectional);
        }
    }
    total
}

/// A field plus the total cost after initialization and after each sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub nnf: NNField,
    pub cost_trace: Vec<f64>,
}

/// Randomized PatchMatch. Odd sweeps (1st, 3rd, ...) scan top-left to
/// bottom-right propagating from the left and upper neighbors; even sweeps
/// scan in reverse from the right and lower neighbors. Each visited position
/// then tries random candidates around its current best at radii
/// `search_radius, search_radius / 2, ..., 1`.
///
/// Without an initial field the search starts from a uniformly random one.
pub fn patchmatch(maps: &Quad<'_>, init: Option<&NNField>, settings: &MatchSettings) -> Result<MatchOutcome> {
    maps.validate()?;
    if settings.iterations == 0 || settings.search_radius == 0 {
        return Err(Error::Config(
            "patchmatch needs at least one sweep and a positive search radius".into(),
        ));
    }
    let (sh, sw) = maps.source_hw();
    let (th, tw) = maps.target_hw();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut nnf = match init {
        Some(f) => {
            if (f.height(), f.width()) != (sh, sw) || (f.target_height(), f.target_width()) != (th, tw) {
                return Err(Error::dims(format!(
                    "initial field is {}x{} -> {}x{}, maps need {sh}x{sw} -> {th}x{tw}",
                    f.height(),
                    f.width(),
                    f.target_height(),
                    f.target_width()
                )));
            }
            f.clone()
        }
        None => NNField::random(sh, sw, th, tw, &mut rng)?,
    };
    let (radius, bidir) = (settings.patch_radius, settings.bidirectional);
    let mut costs: Vec<f64> = (0..sh * sw)
        .map(|i| patch_cost(Coord::new(i / sw, i % sw), nnf.targets()[i], maps, radius, bidir))
        .collect();
    let mut trace = vec![costs.iter().sum()];

    for sweep in 0..settings.iterations {
        let forward = sweep % 2 == 0;
        let step: isize = if forward { -1 } else { 1 };
        for k in 0..sh * sw {
            let idx = if forward { k } else { sh * sw - 1 - k };
            let p = Coord::new(idx / sw, idx % sw);
            let mut best = nnf.get(p.row, p.col);
            let mut best_cost = costs[idx];

            let consider = |cand: Coord, best: &mut Coord, best_cost: &mut f64| {
                if cand == *best {
                    return;
                }
                let c = bounded_cost(p, cand, maps, radius, bidir, *best_cost);
                if c < *best_cost {
                    *best = cand;
                    *best_cost = c;
                }
            };

            // Propagation: a neighbor's match, shifted back by the neighbor offset.
            let nc = p.col as isize + step;
            if nc >= 0 && nc < sw as isize {
                let q = nnf.get(p.row, nc as usize);
                consider(q.offset_clamped(0, -step, th, tw), &mut best, &mut best_cost);
            }
            let nr = p.row as isize + step;
            if nr >= 0 && nr < sh as isize {
                let q = nnf.get(nr as usize, p.col);
                consider(q.offset_clamped(-step, 0, th, tw), &mut best, &mut best_cost);
            }

            let mut r = settings.search_radius as isize;
            while r >= 1 {
                let dr = rng.gen_range(-r..=r);
                let dc = rng.gen_range(-r..=r);
                consider(best.offset_clamped(dr, dc, th, tw), &mut best, &mut best_cost);
                r /= 2;
            }

            nnf.set(p.row, p.col, best);
            costs[idx] = best_cost;
        }
        trace.push(costs.iter().sum());
    }
    Ok(MatchOutcome { nnf, cost_trace: trace })
}

/// Exact minimizer of [`patch_cost`] at every source position; ties go to
/// the first target in row-major order. Only for target grids up to
/// [`EXHAUSTIVE_LIMIT`] on a side.
pub fn exhaustive_nnf(maps: &Quad<'_>, radius: usize, bidirectional: bool) -> Result<NNField> {
    maps.validate()?;
    let (sh, sw) = maps.source_hw();
    let (th, tw) = maps.target_hw();
    if th > EXHAUSTIVE_LIMIT || tw > EXHAUSTIVE_LIMIT {
        return Err(Error::GridTooLarge {
            height: th,
            width: tw,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    NNField::from_fn(sh, sw, th, tw, |r, c| {
        let p = Coord::new(r, c);
        let mut best = Coord::new(0, 0);
        let mut best_cost = f64::INFINITY;
        for qr in 0..th {
            for qc in 0..tw {
                let q = Coord::new(qr, qc);
                let cost = patch_cost(p, q, maps, radius, bidirectional);
                if cost < best_cost {
                    best = q;
                    best_cost = cost;
                }
            }
        }
        best
    })
}
