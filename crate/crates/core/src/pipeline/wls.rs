//! Weighted-least-squares edge-preserving smoothing and the color-transfer
//! refinement built on it.
//!
//! The filter solves `(I + L) u = g` per channel, where `L` is the graph
//! Laplacian of the 4-connected pixel grid with edge weights
//! `lambda / (|d log Y|^alpha + eps)` taken from the guide's log-luminance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Image;

const LOG_EPSILON: f64 = 1e-4;
const WEIGHT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsParams {
    /// Overall smoothness.
    pub lambda: f64,
    /// Sensitivity to guide gradients.
    pub alpha: f64,
    /// Required `||Mx - b|| / ||b||` at the solution.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for WlsParams {
    fn default() -> Self {
        WlsParams {
            lambda: 1.0,
            alpha: 1.2,
            tolerance: 1e-6,
            max_iterations: 20_000,
        }
    }
}

/// A three-channel real image, row-major.
pub type Planes = Vec<[f64; 3]>;

pub fn image_to_planes(img: &Image) -> Planes {
    img.pixels()
        .iter()
        .map(|p| [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])])
        .collect()
}

/// Clamps to `[0, 255]` and rounds half away from zero.
pub fn planes_to_image(height: usize, width: usize, planes: &[[f64; 3]]) -> Result<Image> {
    let pixels = planes
        .iter()
        .map(|p| p.map(|v| v.clamp(0.0, 255.0).round() as u8))
        .collect();
    Image::from_pixels(height, width, pixels)
}

/// The symmetric positive-definite system matrix, stored as edge weights.
struct Operator {
    height: usize,
    width: usize,
    /// Weight between `(r, c)` and `(r, c + 1)`.
    horizontal: Vec<f64>,
    /// Weight between `(r, c)` and `(r + 1, c)`.
    vertical: Vec<f64>,
    diagonal: Vec<f64>,
}

impl Operator {
    fn from_guide(guide: &Image, lambda: f64, alpha: f64) -> Self {
        let (h, w) = (guide.height(), guide.width());
        let log_lum: Vec<f64> = guide
            .pixels()
            .iter()
            .map(|p| {
                let y = (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0;
                (y + LOG_EPSILON).ln()
            })
            .collect();
        let weight = |d: f64| lambda / (d.abs().powf(alpha) + WEIGHT_EPSILON);
        let mut horizontal = vec![0.0; h * w];
        let mut vertical = vec![0.0; h * w];
        let mut diagonal = vec![1.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if c + 1 < w {
                    let wt = weight(log_lum[i + 1] - log_lum[i]);
                    horizontal[i] = wt;
                    diagonal[i] += wt;
                    diagonal[i + 1] += wt;
                }
                if r + 1 < h {
                    let wt = weight(log_lum[i + w] - log_lum[i]);
                    vertical[i] = wt;
                    diagonal[i] += wt;
                    diagonal[i + w] += wt;
                }
            }
        }
        Operator {
            height: h,
            width: w,
            horizontal,
            vertical,
            diagonal,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let w = self.width;
        for (i, o) in out.iter_mut().enumerate() {
            let (r, c) = (i / w, i % w);
            let mut v = self.diagonal[i] * x[i];
            if c + 1 < w {
                v -= self.horizontal[i] * x[i + 1];
            }
            if c > 0 {
                v -= self.horizontal[i - 1] * x[i - 1];
            }
            if r + 1 < self.height {
                v -= self.vertical[i] * x[i + w];
            }
            if r > 0 {
                v -= self.vertical[i - w] * x[i - w];
            }
            *o = v;
        }
    }

    fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut mx = vec![0.0; x.len()];
        self.apply(x, &mut mx);
        norm(&mx.iter().zip(b).map(|(m, bi)| bi - m).collect::<Vec<_>>())
    }

    /// Jacobi-preconditioned conjugate gradients.
    fn solve(&self, b: &[f64], params: &WlsParams) -> Result<Vec<f64>> {
        let n = b.len();
        let b_norm = norm(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x: Vec<f64> = b.to_vec();
        let mut r = vec![0.0; n];
        self.apply(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let mut z: Vec<f64> = r.iter().zip(&self.diagonal).map(|(ri, d)| ri / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let target = 0.1 * params.tolerance * b_norm;
        let mut iterations = 0;
        while iterations < params.max_iterations && norm(&r) > target {
            self.apply(&p, &mut ap);
            let step = rz / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += step * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= step * api);
            z.iter_mut()
                .zip(&r)
                .zip(&self.diagonal)
                .for_each(|((zi, ri), d)| *zi = ri / d);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            iterations += 1;
        }
        let residual = self.residual_norm(&x, b) / b_norm;
        if residual.is_nan() || residual > params.tolerance {
            return Err(Error::SolverDiverged { residual, iterations });
        }
        Ok(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Smooths `input` (same grid as `guide`) while keeping the guide's edges.
pub fn wls_filter(input: &[[f64; 3]], guide: &Image, params: &WlsParams) -> Result<Planes> {
    if input.len() != guide.height() * guide.width() {
        return Err(Error::dims(format!(
            "input has {} pixels, guide is {}x{}",
            input.len(),
            guide.height(),
            guide.width()
        )));
    }
    let op = Operator::from_guide(guide, params.lambda, params.alpha);
    let channels: Vec<Vec<f64>> = (0..3)
        .into_par_iter()
        .map(|k| {
            let b: Vec<f64> = input.iter().map(|p| p[k]).collect();
            op.solve(&b, params)
        })
        .collect::<Result<_>>()?;
    Ok((0..input.len())
        .map(|i| [channels[0][i], channels[1][i], channels[2][i]])
        .collect())
}

/// `WLS(A', A) + A - WLS(A, A)`: the tone of `a_prime` on the detail of `a`.
pub fn wls_refine(a: &Image, a_prime: &Image, params: &WlsParams) -> Result<Image> {
    if (a.height(), a.width()) != (a_prime.height(), a_prime.width()) {
        return Err(Error::dims(format!(
            "guide is {}x{} but the transfer result is {}x{}",
            a.height(),
            a.width(),
            a_prime.height(),
            a_prime.width()
        )));
    }
    let base = image_to_planes(a);
    let smooth_prime = wls_filter(&image_to_planes(a_prime), a, params)?;
    let smooth_base = wls_filter(&base, a, params)?;
    let out: Planes = base
        .iter()
        .zip(smooth_prime.iter().zip(&smooth_base))
        .map(|(b, (sp, sb))| [0, 1, 2].map(|k| b[k] + (sp[k] - sb[k])))
        .collect();
    planes_to_image(a.height(), a.width(), &out)
}
