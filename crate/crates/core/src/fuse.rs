//! Latent feature reconstruction: response-driven weight maps and the
//! content/detail blend.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{response_magnitude, FeatureMap, ScalarMap};

pub const MIN_ALPHA_OFFSET: f64 = -0.1;
pub const MAX_ALPHA_OFFSET: f64 = 0.2;

/// Per-level content weights plus a global offset.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSchedule {
    per_level: BTreeMap<usize, f64>,
    offset: f64,
}

impl Default for AlphaSchedule {
    /// `{0.8, 0.7, 0.6, 0.1}` for levels 4, 3, 2, 1; no offset.
    fn default() -> Self {
        AlphaSchedule {
            per_level: BTreeMap::from([(4, 0.8), (3, 0.7), (2, 0.6), (1, 0.1)]),
            offset: 0.0,
        }
    }
}

impl AlphaSchedule {
    pub fn new(per_level: BTreeMap<usize, f64>, offset: f64) -> Result<Self> {
        if let Some((l, a)) = per_level.iter().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha for level {l} is {a}, outside [0, 1]")));
        }
        AlphaSchedule { per_level, offset: 0.0 }.with_offset(offset)
    }

    /// Same-scene pairs with different tone: the default schedule shifted by +0.1.
    pub fn photo() -> Self {
        AlphaSchedule::default().with_offset(0.1).unwrap()
    }

    /// Near-identical pairs: every level fully content-weighted.
    pub fn identical() -> Self {
        AlphaSchedule {
            per_level: (1..=4).map(|l| (l, 1.0)).collect(),
            offset: 0.0,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Result<Self> {
        if !(MIN_ALPHA_OFFSET..=MAX_ALPHA_OFFSET).contains(&offset) {
            return Err(Error::Config(format!(
                "alpha offset {offset} outside [{MIN_ALPHA_OFFSET}, {MAX_ALPHA_OFFSET}]"
            )));
        }
        self.offset = offset;
        Ok(self)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn base(&self, level: usize) -> Option<f64> {
        self.per_level.get(&level).copied()
    }

    /// `clamp(base + offset, 0, 1)`, or `None` if the level has no entry.
    pub fn effective(&self, level: usize) -> Option<f64> {
        self.base(level).map(|a| (a + self.offset).clamp(0.0, 1.0))
    }

    /// Levels with an explicit entry, with their base values.
    pub fn levels(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.per_level.iter().map(|(&l, &a)| (l, a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidParams {
    pub kappa: f64,
    pub tau: f64,
}

impl Default for SigmoidParams {
    fn default() -> Self {
        SigmoidParams { kappa: 300.0, tau: 0.05 }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `alpha * sigmoid(kappa * (m - tau))` with `m` the max-normalized squared
/// response of `features`.
pub fn weight_map(features: &FeatureMap, alpha: f64, params: &SigmoidParams) -> ScalarMap {
    response_magnitude(features).map(|m| alpha * sigmoid(params.kappa * (m - params.tau)))
}

/// `content * w + detail * (1 - w)` per position, shared across channels.
pub fn blend(content: &FeatureMap, detail: &FeatureMap, weights: &ScalarMap) -> Result<FeatureMap> {
    if content.dims() != detail.dims() {
        return Err(Error::dims(format!(
            "content {:?} and detail {:?} differ",
            content.dims(),
            detail.dims()
        )));
    }
    if (weights.height(), weights.width()) != (content.height(), content.width()) {
        return Err(Error::dims(format!(
            "weight map {}x{} does not cover {:?}",
            weights.height(),
            weights.width(),
            content.dims()
        )));
    }
    let ch = content.channels();
    let mut out = content.clone();
    for ((o, d), &w) in out
        .data_mut()
        .chunks_exact_mut(ch)
        .zip(detail.data().chunks_exact(ch))
        .zip(weights.data())
    {
        for (ov, dv) in o.iter_mut().zip(d) {
            *ov = *ov * w + dv * (1.0 - w);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_schedule_values() {
        let s = AlphaSchedule::default();
        assert_eq!(s.effective(4), Some(0.8));
        assert_eq!(s.effective(3), Some(0.7));
        assert_eq!(s.effective(2), Some(0.6));
        assert_eq!(s.effective(1), Some(0.1));
        assert_eq!(s.effective(5), None);
    }

    #[test]
    fn offsets_clamp_and_validate() {
        let s = AlphaSchedule::default().with_offset(0.2).unwrap();
        assert_eq!(s.effective(4), Some(1.0));
        assert!((s.effective(1).unwrap() - 0.3).abs() < 1e-15);
        assert!(AlphaSchedule::default().with_offset(0.3).is_err());
        assert!(AlphaSchedule::default().with_offset(-0.2).is_err());
        assert!((AlphaSchedule::photo().effective(2).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(AlphaSchedule::identical().effective(1), Some(1.0));
    }

    /// Two positions: one at the max response, one tuned so that the
    /// normalized magnitude is exactly tau.
    fn two_position_map(tau: f64) -> FeatureMap {
        FeatureMap::from_vec(1, 2, 1, vec![1.0, tau.sqrt()]).unwrap()
    }

    #[test]
    fn weight_map_midpoint_and_top() {
        let params = SigmoidParams::default();
        let w = weight_map(&two_position_map(0.25), 0.6, &SigmoidParams { tau: 0.25, ..params });
        assert!((w.get(0, 1) - 0.3).abs() < 1e-12);

        let w = weight_map(&two_position_map(0.25), 0.6, &params);
        let expected = 0.6 / (1.0 + (-285.0f64).exp());
        assert!((w.get(0, 0) - 0.6).abs() < 1e-12);
        assert!((w.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_gives_zero_weights() {
        let w = weight_map(&two_position_map(0.5), 0.0, &SigmoidParams::default());
        assert!(w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blend_extremes_and_midpoint() {
        let content = FeatureMap::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let detail = FeatureMap::from_vec(2, 2, 1, vec![5.0, 0.0, -3.0, 8.0]).unwrap();
        assert_eq!(blend(&content, &detail, &ScalarMap::filled(2, 2, 1.0)).unwrap(), content);
        assert_eq!(blend(&content, &detail, &ScalarMap::filled(2, 2, 0.0)).unwrap(), detail);
        let mid = blend(&content, &detail, &ScalarMap::filled(2, 2, 0.5)).unwrap();
        assert_eq!(mid.data(), &[3.0, 1.0, 0.0, 6.0]);
    }

    #[test]
    fn blend_rejects_mismatch() {
        let a = FeatureMap::zeros(2, 2, 1);
        let b = FeatureMap::zeros(2, 2, 2);
        assert!(blend(&a, &b, &ScalarMap::filled(2, 2, 0.5)).is_err());
        assert!(blend(&a, &a, &ScalarMap::filled(2, 3, 0.5)).is_err());
    }

    proptest! {
        #[test]
        fn blend_is_convex(vals in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.0f64..=1.0), 6)) {
            let c = FeatureMap::from_vec(2, 3, 1, vals.iter().map(|v| v.0).collect()).unwrap();
            let d = FeatureMap::from_vec(2, 3, 1, vals.iter().map(|v| v.1).collect()).unwrap();
            let w = ScalarMap::from_vec(2, 3, vals.iter().map(|v| v.2).collect()).unwrap();
            let out = blend(&c, &d, &w).unwrap();
            for ((o, a), b) in out.data().iter().zip(c.data()).zip(d.data()) {
                prop_assert!(*o >= a.min(*b) - 1e-12 && *o <= a.max(*b) + 1e-12);
            }
        }

        #[test]
        fn weight_map_is_monotone_and_bounded(
            norms in proptest::collection::vec(0.0f64..5.0, 2..20),
            alpha in 0.0f64..=1.0,
        ) {
            let n = norms.len();
            let f = FeatureMap::from_vec(1, n, 1, norms.clone()).unwrap();
            let w = weight_map(&f, alpha, &SigmoidParams::default());
            for i in 0..n {
                prop_assert!(w.get(0, i) >= 0.0 && w.get(0, i) <= alpha);
                for j in 0..n {
                    if norms[i] * norms[i] > norms[j] * norms[j] {
                        prop_assert!(w.get(0, i) >= w.get(0, j));
                    }
                }
            }
        }
    }
}
