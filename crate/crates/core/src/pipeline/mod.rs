//! The full coarse-to-fine analogy: feature extraction, bidirectional NNF
//! search at every level, latent feature reconstruction, NNF upsampling and
//! pixel-level patch aggregation.

mod aggregate;
pub mod wls;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

pub use aggregate::aggregate_output;
pub use wls::{wls_refine, WlsParams};

use crate::deconv::{deconvolve, DeconvSettings, StopReason};
use crate::error::{Error, Result};
use crate::fuse::{blend, weight_map, AlphaSchedule, SigmoidParams};
use crate::matching::{patchmatch, MatchOutcome, MatchSettings, Quad};
use crate::net::Network;
use crate::tensor::{normalize, upsample_nnf, warp, FeatureMap, Image, NNField};

/// Radius of the pixel-level voting window (5x5 patches).
pub const OUTPUT_PATCH_RADIUS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Full,
    /// Keep only color and tone from the transfer: both outputs are WLS-refined
    /// against their structure image.
    ColorTransfer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Patch radius per level.
    pub patch_radius: BTreeMap<usize, usize>,
    /// Random-search radius per level. The coarsest level always searches
    /// the whole target grid.
    pub search_radius: BTreeMap<usize, usize>,
    pub sweeps: usize,
    pub alpha: AlphaSchedule,
    pub sigmoid: SigmoidParams,
    pub deconv: DeconvSettings,
    pub wls: WlsParams,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            patch_radius: BTreeMap::from([(5, 1), (4, 1), (3, 1), (2, 2), (1, 2)]),
            search_radius: BTreeMap::from([(4, 6), (3, 6), (2, 4), (1, 4)]),
            sweeps: 10,
            alpha: AlphaSchedule::default(),
            sigmoid: SigmoidParams::default(),
            deconv: DeconvSettings::default(),
            wls: WlsParams::default(),
            seed: 0,
            mode: Mode::Full,
        }
    }
}

impl PipelineConfig {
    /// Patch side length (`2r + 1`) at `level`.
    pub fn patch_side(&self, level: usize) -> Option<usize> {
        self.patch_radius.get(&level).map(|r| 2 * r + 1)
    }

    /// Checks that every level of a `levels`-deep network is configured.
    pub fn validate(&self, levels: usize) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Config("at least one PatchMatch sweep is required".into()));
        }
        for level in 1..=levels {
            if !self.patch_radius.contains_key(&level) {
                return Err(Error::Config(format!("no patch radius for level {level}")));
            }
        }
        for level in 1..levels {
            match self.search_radius.get(&level) {
                Some(0) | None => {
                    return Err(Error::Config(format!("no positive search radius for level {level}")))
                }
                Some(_) => {}
            }
            if self.alpha.effective(level).is_none() {
                return Err(Error::Config(format!("no alpha for level {level}")));
            }
        }
        self.deconv.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvTrace {
    pub losses: Vec<f64>,
    pub stop: StopReason,
}

/// What happened at one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiagnostics {
    pub level: usize,
    /// Total NNF cost after initialization and after each sweep.
    pub ab_costs: Vec<f64>,
    pub ba_costs: Vec<f64>,
    /// Deconvolutions reconstructing level `level - 1`; absent at level 1.
    pub ab_deconv: Option<DeconvTrace>,
    pub ba_deconv: Option<DeconvTrace>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Coarsest level first.
    pub levels: Vec<LevelDiagnostics>,
}

impl Diagnostics {
    /// One `key=value` record per line. Floats use shortest round-trip form,
    /// so identical runs give identical text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for lv in &self.levels {
            for (dir, costs) in [("ab", &lv.ab_costs), ("ba", &lv.ba_costs)] {
                for (sweep, c) in costs.iter().enumerate() {
                    let _ = writeln!(out, "kind=nnf_cost level={} dir={dir} sweep={sweep} value={c:?}", lv.level);
                }
            }
            for (dir, trace) in [("ab", &lv.ab_deconv), ("ba", &lv.ba_deconv)] {
                let Some(trace) = trace else { continue };
                for (step, l) in trace.losses.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "kind=deconv_loss level={} dir={dir} step={step} value={l:?}",
                        lv.level - 1
                    );
                }
                let _ = writeln!(
                    out,
                    "kind=deconv_stop level={} dir={dir} reason={:?}",
                    lv.level - 1,
                    trace.stop
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyResult {
    /// Structure of A with the appearance of B'.
    pub a_prime: Image,
    /// Structure of B' with the appearance of A.
    pub b: Image,
    /// Pixel-level field from A's grid into B''s grid.
    pub phi_ab: NNField,
    /// Pixel-level field from B''s grid into A's grid.
    pub phi_ba: NNField,
    pub diagnostics: Diagnostics,
    /// Wall time spent per level, coarsest first. Not deterministic.
    pub timings: Vec<(usize, Duration)>,
}

fn derive_seed(base: u64, level: usize, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = base
        .wrapping_add((level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reconstructs the latent features one level down: warp the known map at
/// `level` through `nnf`, deconvolve into level `level - 1`, and blend with
/// `content` (the known map at `level - 1` on the source grid).
fn reconstruct(
    net: &Network,
    level: usize,
    known: &FeatureMap,
    nnf: &NNField,
    content: &FeatureMap,
    cfg: &PipelineConfig,
) -> Result<(FeatureMap, DeconvTrace)> {
    let target = warp(known, nnf)?;
    let subnet = net.subnet(level - 1, level)?;
    let settings = DeconvSettings {
        seed: derive_seed(cfg.seed, level, 2),
        ..cfg.deconv
    };
    let detail = deconvolve(&subnet, content.dims(), &target, &settings)?;
    let alpha = cfg
        .alpha
        .effective(level - 1)
        .ok_or_else(|| Error::Config(format!("no alpha for level {}", level - 1)))?;
    let weights = weight_map(content, alpha, &cfg.sigmoid);
    let fused = blend(content, &detail.features, &weights)?;
    Ok((
        fused,
        DeconvTrace {
            losses: detail.loss_trace,
            stop: detail.stop,
        },
    ))
}

/// Runs the whole analogy for `a` and `b_prime`.
pub fn run(a: &Image, b_prime: &Image, net: &Network, cfg: &PipelineConfig) -> Result<AnalogyResult> {
    let levels = net.levels();
    cfg.validate(levels)?;
    let (feats_a, feats_bp) = rayon::join(|| net.forward(a), || net.forward(b_prime));
    let (feats_a, feats_bp) = (feats_a?, feats_bp?);

    let mut a_prime = feats_a[levels - 1].clone();
    let mut b = feats_bp[levels - 1].clone();
    let mut phi_ab: Option<NNField> = None;
    let mut phi_ba: Option<NNField> = None;
    let mut diagnostics = Diagnostics::default();
    let mut timings = Vec::with_capacity(levels);

    for level in (1..=levels).rev() {
        let started = Instant::now();
        let (fa, fbp) = (&feats_a[level - 1], &feats_bp[level - 1]);
        let (na, na2, nb, nb2) = (normalize(fa), normalize(&a_prime), normalize(&b), normalize(fbp));
        let search_radius = if level == levels {
            fa.height().max(fa.width()).max(fbp.height()).max(fbp.width())
        } else {
            cfg.search_radius[&level]
        };
        let settings = |stream| MatchSettings {
            patch_radius: cfg.patch_radius[&level],
            iterations: cfg.sweeps,
            search_radius,
            seed: derive_seed(cfg.seed, level, stream),
            bidirectional: true,
        };
        let (ab, ba): (Result<MatchOutcome>, Result<MatchOutcome>) = rayon::join(
            || patchmatch(&Quad::new(&na, &na2, &nb, &nb2), phi_ab.as_ref(), &settings(0)),
            || patchmatch(&Quad::new(&nb2, &nb, &na2, &na), phi_ba.as_ref(), &settings(1)),
        );
        let (ab, ba) = (ab.map_err(|e| e.at_level(level))?, ba.map_err(|e| e.at_level(level))?);

        let mut record = LevelDiagnostics {
            level,
            ab_costs: ab.cost_trace,
            ba_costs: ba.cost_trace,
            ab_deconv: None,
            ba_deconv: None,
        };

        if level > 1 {
            let (fa_fine, fbp_fine) = (&feats_a[level - 2], &feats_bp[level - 2]);
            let (ra, rb) = rayon::join(
                || reconstruct(net, level, fbp, &ab.nnf, fa_fine, cfg),
                || reconstruct(net, level, fa, &ba.nnf, fbp_fine, cfg),
            );
            let (ra, rb) = (ra.map_err(|e| e.at_level(level))?, rb.map_err(|e| e.at_level(level))?);
            a_prime = ra.0;
            b = rb.0;
            record.ab_deconv = Some(ra.1);
            record.ba_deconv = Some(rb.1);
            let (ah, aw) = (fa_fine.height(), fa_fine.width());
            let (bh, bw) = (fbp_fine.height(), fbp_fine.width());
            phi_ab = Some(upsample_nnf(&ab.nnf, ah, aw, bh, bw)?);
            phi_ba = Some(upsample_nnf(&ba.nnf, bh, bw, ah, aw)?);
        } else {
            phi_ab = Some(ab.nnf);
            phi_ba = Some(ba.nnf);
        }
        diagnostics.levels.push(record);
        timings.push((level, started.elapsed()));
    }

    let (mut phi_ab, mut phi_ba) = (phi_ab.unwrap(), phi_ba.unwrap());
    if (phi_ab.height(), phi_ab.width()) != (a.height(), a.width())
        || (phi_ab.target_height(), phi_ab.target_width()) != (b_prime.height(), b_prime.width())
    {
        phi_ab = upsample_nnf(&phi_ab, a.height(), a.width(), b_prime.height(), b_prime.width())?;
        phi_ba = upsample_nnf(&phi_ba, b_prime.height(), b_prime.width(), a.height(), a.width())?;
    }

    let mut a_prime_img = aggregate_output(b_prime, &phi_ab, OUTPUT_PATCH_RADIUS)?;
    let mut b_img = aggregate_output(a, &phi_ba, OUTPUT_PATCH_RADIUS)?;
    if cfg.mode == Mode::ColorTransfer {
        a_prime_img = wls_refine(a, &a_prime_img, &cfg.wls)?;
        b_img = wls_refine(b_prime, &b_img, &cfg.wls)?;
    }

    Ok(AnalogyResult {
        a_prime: a_prime_img,
        b: b_img,
        phi_ab,
        phi_ba,
        diagnostics,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_constants() {
        let cfg = PipelineConfig::default();
        let sides: Vec<_> = (1..=5).rev().map(|l| cfg.patch_side(l).unwrap()).collect();
        assert_eq!(sides, vec![3, 3, 3, 5, 5]);
        let radii: Vec<_> = (1..=4).rev().map(|l| cfg.search_radius[&l]).collect();
        assert_eq!(radii, vec![6, 6, 4, 4]);
        assert_eq!(cfg.sigmoid, SigmoidParams { kappa: 300.0, tau: 0.05 });
        assert!(cfg.validate(5).is_ok());
        assert!(cfg.validate(6).is_err());
    }

    #[test]
    fn seeds_differ_by_level_and_stream() {
        let s = derive_seed(0, 3, 0);
        assert_ne!(s, derive_seed(0, 3, 1));
        assert_ne!(s, derive_seed(0, 2, 0));
        assert_ne!(s, derive_seed(1, 3, 0));
        assert_eq!(s, derive_seed(0, 3, 0));
    }
}
