//! Forward and input-gradient kernels for the three supported layer kinds.

use rayon::prelude::*;

use crate::tensor::FeatureMap;

/// A 2-D convolution with zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out, in, kh, kw]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Same weights laid out `[kh, kw, in, out]` so the inner loops run over
    /// contiguous output channels.
    packed: Vec<f64>,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Self {
        assert_eq!(weight.len(), out_channels * in_channels * kernel_h * kernel_w);
        assert_eq!(bias.len(), out_channels);
        let mut packed = vec![0.0; weight.len()];
        for o in 0..out_channels {
            for i in 0..in_channels {
                for ky in 0..kernel_h {
                    for kx in 0..kernel_w {
                        let src = ((o * in_channels + i) * kernel_h + ky) * kernel_w + kx;
                        let dst = ((ky * kernel_w + kx) * in_channels + i) * out_channels + o;
                        packed[dst] = weight[src];
                    }
                }
            }
        }
        Conv {
            name: name.into(),
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            weight,
            bias,
            packed,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((
            window_count(h + 2 * self.padding, self.kernel_h, self.stride)?,
            window_count(w + 2 * self.padding, self.kernel_w, self.stride)?,
        ))
    }

    #[inline]
    fn tap(&self, ky: usize, kx: usize) -> &[f64] {
        let n = self.in_channels * self.out_channels;
        let start = (ky * self.kernel_w + kx) * n;
        &self.packed[start..start + n]
    }

    pub(crate) fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let (h, w, ic) = x.dims();
        let (oh, ow) = self.output_hw(h, w).expect("shape checked by caller");
        let oc = self.out_channels;
        let (s, p) = (self.stride as isize, self.padding as isize);
        let mut out = vec![0.0; oh * ow * oc];
        out.par_chunks_mut(ow * oc).enumerate().for_each(|(oy, row)| {
            for ox in 0..ow {
                let acc = &mut row[ox * oc..(ox + 1) * oc];
                acc.copy_from_slice(&self.bias);
                for ky in 0..self.kernel_h {
                    let iy = oy as isize * s + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..self.kernel_w {
                        let ix = ox as isize * s + kx as isize - p;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let input = x.pixel(iy as usize, ix as usize);
                        let tap = self.tap(ky, kx);
                        for (i, &v) in input.iter().enumerate().take(ic) {
                            for (a, &wv) in acc.iter_mut().zip(&tap[i * oc..(i + 1) * oc]) {
                                *a += v * wv;
                            }
                        }
                    }
                }
            }
        });
        FeatureMap::from_vec(oh, ow, oc, out).expect("conv output shape")
    }

    /// Gradient w.r.t. the input: the transposed convolution of `grad_out`.
    pub(crate) fn backward(&self, input_hw: (usize, usize), grad_out: &FeatureMap) -> FeatureMap {
        let (h, w) = input_hw;
        let (oh, ow, oc) = grad_out.dims();
        let ic = self.in_channels;
        let (s, p) = (self.stride as isize, self.padding as isize);
        let mut grad = vec![0.0; h * w * ic];
        grad.par_chunks_mut(w * ic).enumerate().for_each(|(iy, row)| {
            for ix in 0..w {
                let g = &mut row[ix * ic..(ix + 1) * ic];
                for ky in 0..self.kernel_h {
                    let t = iy as isize + p - ky as isize;
                    if t < 0 || t % s != 0 || t / s >= oh as isize {
                        continue;
                    }
                    let oy = (t / s) as usize;
                    for kx in 0..self.kernel_w {
                        let t = ix as isize + p - kx as isize;
                        if t < 0 || t % s != 0 || t / s >= ow as isize {
                            continue;
                        }
                        let ox = (t / s) as usize;
                        let go = grad_out.pixel(oy, ox);
                        let tap = self.tap(ky, kx);
                        for (i, gi) in g.iter_mut().enumerate() {
                            *gi += tap[i * oc..(i + 1) * oc]
                                .iter()
                                .zip(go)
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                    }
                }
            }
        });
        FeatureMap::from_vec(h, w, ic, grad).expect("conv grad shape")
    }
}

/// Number of windows of `kernel` that fit in `len` at `stride`:
/// `floor((len - kernel) / stride) + 1`.
pub(crate) fn window_count(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || len < kernel {
        return None;
    }
    Some((len - kernel) / stride + 1)
}

pub(crate) fn relu_forward(x: &FeatureMap) -> FeatureMap {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub(crate) fn relu_backward(x: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    let mut grad = grad_out.clone();
    for (g, &v) in grad.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

/// Max pooling output plus, for every output element, the flat index of the
/// input element that won. Ties go to the first maximum in row-major order.
pub(crate) fn maxpool_forward(x: &FeatureMap, kernel: usize, stride: usize) -> (FeatureMap, Vec<usize>) {
    let (h, w, ch) = x.dims();
    let oh = window_count(h, kernel, stride).expect("shape checked by caller");
    let ow = window_count(w, kernel, stride).expect("shape checked by caller");
    let mut out = Vec::with_capacity(oh * ow * ch);
    let mut argmax = Vec::with_capacity(oh * ow * ch);
    for oy in 0..oh {
        for ox in 0..ow {
            for c in 0..ch {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let (iy, ix) = (oy * stride + ky, ox * stride + kx);
                        let v = x.get(iy, ix, c);
                        if best_idx == usize::MAX || v > best {
                            best = v;
                            best_idx = (iy * w + ix) * ch + c;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (FeatureMap::from_vec(oh, ow, ch, out).expect("pool output shape"), argmax)
}

pub(crate) fn maxpool_backward(input_dims: (usize, usize, usize), argmax: &[usize], grad_out: &FeatureMap) -> FeatureMap {
    let (h, w, ch) = input_dims;
    let mut grad = FeatureMap::zeros(h, w, ch);
    let data = grad.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        data[idx] += g;
    }
    grad
}
