//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use deep_analogy::net::{Conv, LayerDescriptor, LayerKind};
use deep_analogy::tensor::normalize;
use deep_analogy::{FeatureMap, Image, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform `[-1, 1)` features.
pub fn random_map(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap {
    let mut rng = rng(seed);
    FeatureMap::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn random_unit_map(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap {
    normalize(&random_map(h, w, c, seed))
}

/// `out(r, c) = src(r - dr, c - dc)` with border clamp, so `src(p)` reappears
/// at `p + (dr, dc)`.
pub fn shifted(src: &FeatureMap, dr: isize, dc: isize) -> FeatureMap {
    let (h, w, _) = src.dims();
    FeatureMap::from_fn(h, w, src.channels(), |r, c, k| {
        let sr = (r as isize - dr).clamp(0, h as isize - 1) as usize;
        let sc = (c as isize - dc).clamp(0, w as isize - 1) as usize;
        src.get(sr, sc, k)
    })
}

/// Smooth color gradients with a few hard edges and per-pixel texture, so
/// every 5x5 neighborhood is distinct.
pub fn test_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = rng(seed);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    Image::from_fn(h, w, |r, c| {
        let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
        let band = if (x + 0.5 * y + phase * 0.1) % 0.5 < 0.25 { 60.0 } else { 0.0 };
        let base = [
            80.0 + 90.0 * x + band,
            60.0 + 80.0 * (6.0 * y + phase).sin().abs() + 0.5 * band,
            120.0 + 60.0 * (4.0 * x * y + phase).cos(),
        ];
        base.map(|v| (v + rng.gen_range(-35.0..35.0)).clamp(0.0, 255.0).round() as u8)
    })
}

pub fn translate_image(src: &Image, dr: isize, dc: isize) -> Image {
    let (h, w) = (src.height() as isize, src.width() as isize);
    Image::from_fn(src.height(), src.width(), |r, c| {
        let sr = (r as isize - dr).clamp(0, h - 1) as usize;
        let sc = (c as isize - dc).clamp(0, w - 1) as usize;
        src.get(sr, sc)
    })
}

pub fn conv(name: &str, out: usize, inp: usize, k: usize, stride: usize, pad: usize, seed: u64) -> LayerKind {
    let mut rng = rng(seed);
    let scale = (2.0 / (inp * k * k) as f64).sqrt();
    let weight = (0..out * inp * k * k).map(|_| rng.gen_range(-1.0..1.0) * scale * 1.7).collect();
    let bias = (0..out).map(|_| rng.gen_range(-0.1..0.1)).collect();
    LayerKind::Conv(Conv::new(name, out, inp, k, k, stride, pad, weight, bias))
}

/// A network whose level 1 follows `body` and whose level 2 is one more
/// relu, so `subnet(0, 1)` is exactly `body`.
pub fn network_from(body: Vec<LayerKind>) -> Network {
    let mut layers: Vec<LayerDescriptor> = body
        .into_iter()
        .map(|kind| LayerDescriptor { kind, tag: None })
        .collect();
    layers.last_mut().unwrap().tag = Some("level1".into());
    layers.push(LayerDescriptor {
        kind: LayerKind::Relu,
        tag: Some("level2".into()),
    });
    Network::new([0.0; 3], layers).expect("valid test network")
}

/// Smallest distance from a non-differentiable point over the layers of
/// `body` at input `x`: pre-activation magnitude for ReLU, gap between the
/// two largest window entries for max-pooling.
pub fn kink_margin(body: &[LayerKind], x: &FeatureMap) -> f64 {
    let mut margin = f64::INFINITY;
    let mut act = x.clone();
    for (i, kind) in body.iter().enumerate() {
        match kind {
            LayerKind::Relu => {
                margin = act.data().iter().fold(margin, |m, v| m.min(v.abs()));
            }
            LayerKind::MaxPool { kernel, stride } => {
                let (h, w, ch) = act.dims();
                for r in (0..=h - kernel).step_by(*stride) {
                    for c in (0..=w - kernel).step_by(*stride) {
                        for k in 0..ch {
                            let mut vals: Vec<f64> = (0..*kernel)
                                .flat_map(|dy| (0..*kernel).map(move |dx| (dy, dx)))
                                .map(|(dy, dx)| act.get(r + dy, c + dx, k))
                                .collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            // Tied zeros from a ReLU stay zero under small probes.
                            if vals[0] != 0.0 {
                                margin = margin.min(vals[0] - vals[1]);
                            }
                        }
                    }
                }
            }
            LayerKind::Conv(_) => {}
        }
        act = network_from(body[..=i].to_vec()).subnet(0, 1).unwrap().forward(x).unwrap();
    }
    margin
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &FeatureMap, step: f64, f: impl Fn(&FeatureMap) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.data().len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + step;
            let up = f(&probe);
            probe.data_mut()[i] = orig - step;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
