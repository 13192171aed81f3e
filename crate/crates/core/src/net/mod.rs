//! A small feed-forward convolutional network: conv, ReLU and max-pool
//! layers, with pyramid tags marking the feature levels.
//!
//! Levels are numbered from 1 (finest tag) to [`Network::levels`] (coarsest
//! tag). Level 0 denotes the preprocessed network input.

pub mod format;
mod layers;
pub mod toy;

use std::collections::HashMap;

pub use layers::Conv;

use crate::error::{Error, FormatError, Result};
use crate::tensor::{FeatureMap, Image};
use format::{Directive, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv(Conv),
    Relu,
    MaxPool { kernel: usize, stride: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDescriptor {
    pub kind: LayerKind,
    /// Pyramid label attached to this layer's output, e.g. `relu3_1`.
    pub tag: Option<String>,
}

impl LayerDescriptor {
    fn output_dims(&self, (h, w, c): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        match &self.kind {
            LayerKind::Conv(conv) => {
                if c != conv.in_channels {
                    return Err(Error::dims(format!(
                        "conv `{}` expects {} channels, input has {c}",
                        conv.name, conv.in_channels
                    )));
                }
                let (oh, ow) = conv.output_hw(h, w).ok_or_else(|| {
                    Error::dims(format!("conv `{}` kernel does not fit a {h}x{w} input", conv.name))
                })?;
                Ok((oh, ow, conv.out_channels))
            }
            LayerKind::Relu => Ok((h, w, c)),
            LayerKind::MaxPool { kernel, stride } => {
                let oh = layers::window_count(h, *kernel, *stride);
                let ow = layers::window_count(w, *kernel, *stride);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok((oh, ow, c)),
                    _ => Err(Error::dims(format!("{kernel}x{kernel} pool does not fit a {h}x{w} input"))),
                }
            }
        }
    }
}

/// What a backward pass needs to remember about one layer.
enum Saved {
    Conv { input_hw: (usize, usize) },
    Relu { input: FeatureMap },
    MaxPool { input_dims: (usize, usize, usize), argmax: Vec<usize> },
}

fn apply(layer: &LayerDescriptor, x: &FeatureMap) -> (FeatureMap, Option<Vec<usize>>) {
    match &layer.kind {
        LayerKind::Conv(conv) => (conv.forward(x), None),
        LayerKind::Relu => (layers::relu_forward(x), None),
        LayerKind::MaxPool { kernel, stride } => {
            let (y, arg) = layers::maxpool_forward(x, *kernel, *stride);
            (y, Some(arg))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    mean: [f64; 3],
    layers: Vec<LayerDescriptor>,
    /// For each level `L` (index `L - 1`), the index of the layer it tags.
    tag_layers: Vec<usize>,
}

impl Network {
    pub const MIN_LEVELS: usize = 2;

    /// Validates channel chaining (starting from 3 RGB channels) and the tag count.
    pub fn new(mean: [f64; 3], layers: Vec<LayerDescriptor>) -> Result<Self, FormatError> {
        let mut channels = 3;
        for layer in &layers {
            if let LayerKind::Conv(conv) = &layer.kind {
                if conv.in_channels != channels {
                    return Err(FormatError::ChannelChain {
                        layer: conv.name.clone(),
                        expected: conv.in_channels,
                        found: channels,
                    });
                }
                channels = conv.out_channels;
            }
        }
        let tag_layers: Vec<usize> = layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.tag.is_some())
            .map(|(i, _)| i)
            .collect();
        if tag_layers.len() < Self::MIN_LEVELS {
            return Err(FormatError::TooFewTags {
                required: Self::MIN_LEVELS,
                found: tag_layers.len(),
            });
        }
        Ok(Network {
            mean,
            layers,
            tag_layers,
        })
    }

    pub fn mean(&self) -> [f64; 3] {
        self.mean
    }

    pub fn layers(&self) -> &[LayerDescriptor] {
        &self.layers
    }

    pub fn levels(&self) -> usize {
        self.tag_layers.len()
    }

    /// Tags ordered fine to coarse.
    pub fn tags(&self) -> Vec<&str> {
        self.tag_layers
            .iter()
            .map(|&i| self.layers[i].tag.as_deref().unwrap())
            .collect()
    }

    pub fn level_of(&self, tag: &str) -> Option<usize> {
        self.tag_layers
            .iter()
            .position(|&i| self.layers[i].tag.as_deref() == Some(tag))
            .map(|i| i + 1)
    }

    pub fn conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Conv(_)))
            .count()
    }

    /// Layer index range `(start, end)` that maps level `from` to level `to`.
    fn span(&self, from: usize, to: usize) -> Result<(usize, usize)> {
        if from >= to || to > self.levels() {
            return Err(Error::Config(format!(
                "no subnet from level {from} to level {to} in a {}-level network",
                self.levels()
            )));
        }
        let start = if from == 0 { 0 } else { self.tag_layers[from - 1] + 1 };
        Ok((start, self.tag_layers[to - 1] + 1))
    }

    /// Product of pooling strides between the input and level `level`.
    pub fn pooling_factor(&self, level: usize) -> usize {
        let end = if level == 0 { 0 } else { self.tag_layers[level - 1] + 1 };
        self.layers[..end]
            .iter()
            .map(|l| match l.kind {
                LayerKind::MaxPool { stride, .. } => stride,
                _ => 1,
            })
            .product()
    }

    /// Shape of the features at `level` for an `h x w` input image.
    pub fn level_dims(&self, level: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        let mut dims = (h, w, 3);
        if level == 0 {
            return Ok(dims);
        }
        let (_, end) = self.span(0, level)?;
        for layer in &self.layers[..end] {
            dims = layer.output_dims(dims)?;
        }
        Ok(dims)
    }

    /// RGB in `[0, 255]` minus the per-channel mean: the level-0 map.
    pub fn preprocess(&self, img: &Image) -> FeatureMap {
        FeatureMap::from_fn(img.height(), img.width(), 3, |r, c, k| {
            f64::from(img.get(r, c)[k]) - self.mean[k]
        })
    }

    /// Feature maps for levels `1..=levels()`, finest first.
    pub fn forward(&self, img: &Image) -> Result<Vec<FeatureMap>> {
        let factor = self.pooling_factor(self.levels());
        if !img.height().is_multiple_of(factor) || !img.width().is_multiple_of(factor) {
            return Err(Error::dims(format!(
                "image is {}x{} but both sides must be divisible by {factor}",
                img.height(),
                img.width()
            )));
        }
        self.level_dims(self.levels(), img.height(), img.width())?;
        let mut x = self.preprocess(img);
        let mut out = Vec::with_capacity(self.levels());
        let last = *self.tag_layers.last().unwrap();
        for layer in &self.layers[..=last] {
            x = apply(layer, &x).0;
            if layer.tag.is_some() {
                out.push(x.clone());
            }
        }
        Ok(out)
    }

    /// The layers strictly after level `from` up to and including level `to`.
    pub fn subnet(&self, from: usize, to: usize) -> Result<Subnet<'_>> {
        let (start, end) = self.span(from, to)?;
        Ok(Subnet {
            layers: &self.layers[start..end],
            from,
            to,
        })
    }
}

/// Parses a manifest and a weight file into a validated network.
pub fn load_network(manifest: &[u8], weights: &[u8]) -> Result<Network, FormatError> {
    let text = std::str::from_utf8(manifest).map_err(|_| FormatError::Utf8 {
        what: "manifest".into(),
    })?;
    let manifest = format::parse_manifest(text)?;
    let mut pool: HashMap<String, Tensor> = HashMap::new();
    for t in format::decode_weights(weights)? {
        if pool.contains_key(&t.name) {
            return Err(FormatError::Syntax {
                line: 0,
                message: format!("duplicate tensor `{}` in weight file", t.name),
            });
        }
        pool.insert(t.name.clone(), t);
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (directive, tag) in manifest.layers {
        let kind = match directive {
            Directive::Conv(spec) => {
                let (weight, bias) = format::take_conv_tensors(&spec, &mut pool)?;
                LayerKind::Conv(Conv::new(
                    spec.name,
                    spec.out_channels,
                    spec.in_channels,
                    spec.kernel_h,
                    spec.kernel_w,
                    spec.stride,
                    spec.padding,
                    weight,
                    bias,
                ))
            }
            Directive::Relu => LayerKind::Relu,
            Directive::MaxPool { kernel, stride } => LayerKind::MaxPool { kernel, stride },
        };
        layers.push(LayerDescriptor { kind, tag });
    }
    if let Some(name) = pool.into_keys().min() {
        return Err(FormatError::UnusedTensor { name });
    }
    Network::new(manifest.mean, layers)
}

/// The segment of a network between two adjacent (or any ordered) levels.
#[derive(Debug, Clone, Copy)]
pub struct Subnet<'a> {
    layers: &'a [LayerDescriptor],
    from: usize,
    to: usize,
}

impl<'a> Subnet<'a> {
    pub fn from_level(&self) -> usize {
        self.from
    }

    pub fn to_level(&self) -> usize {
        self.to
    }

    pub fn layers(&self) -> &'a [LayerDescriptor] {
        self.layers
    }

    pub fn output_dims(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        self.layers.iter().try_fold(input, |d, l| l.output_dims(d))
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.output_dims(x.dims())?;
        Ok(self.layers.iter().fold(x.clone(), |acc, l| apply(l, &acc).0))
    }

    fn forward_saved(&self, x: &FeatureMap) -> (FeatureMap, Vec<Saved>) {
        let mut saved = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in self.layers {
            let (next, argmax) = apply(layer, &cur);
            saved.push(match &layer.kind {
                LayerKind::Conv(_) => Saved::Conv {
                    input_hw: (cur.height(), cur.width()),
                },
                LayerKind::Relu => Saved::Relu { input: cur },
                LayerKind::MaxPool { .. } => Saved::MaxPool {
                    input_dims: cur.dims(),
                    argmax: argmax.unwrap(),
                },
            });
            cur = next;
        }
        (cur, saved)
    }

    fn backward_saved(&self, saved: Vec<Saved>, grad_out: FeatureMap) -> FeatureMap {
        let mut grad = grad_out;
        for (layer, s) in self.layers.iter().zip(saved).rev() {
            grad = match (&layer.kind, s) {
                (LayerKind::Conv(conv), Saved::Conv { input_hw }) => conv.backward(input_hw, &grad),
                (LayerKind::Relu, Saved::Relu { input }) => layers::relu_backward(&input, &grad),
                (LayerKind::MaxPool { .. }, Saved::MaxPool { input_dims, argmax }) => {
                    layers::maxpool_backward(input_dims, &argmax, &grad)
                }
                _ => unreachable!("saved state follows layer order"),
            };
        }
        grad
    }

    /// Vector-Jacobian product: the gradient w.r.t. `x` of any scalar loss
    /// whose gradient w.r.t. the subnet output is `grad_out`.
    pub fn backward(&self, x: &FeatureMap, grad_out: &FeatureMap) -> Result<FeatureMap> {
        let out_dims = self.output_dims(x.dims())?;
        if grad_out.dims() != out_dims {
            return Err(Error::dims(format!(
                "upstream gradient is {:?} but the subnet output is {out_dims:?}",
                grad_out.dims()
            )));
        }
        let (_, saved) = self.forward_saved(x);
        Ok(self.backward_saved(saved, grad_out.clone()))
    }

    /// `||subnet(x) - target||^2` and its gradient w.r.t. `x`, sharing one
    /// forward pass.
    pub fn loss_and_grad(&self, x: &FeatureMap, target: &FeatureMap) -> Result<(f64, FeatureMap)> {
        let out_dims = self.output_dims(x.dims())?;
        if target.dims() != out_dims {
            return Err(Error::dims(format!(
                "target is {:?} but the subnet output is {out_dims:?}",
                target.dims()
            )));
        }
        let (y, saved) = self.forward_saved(x);
        let mut residual = y;
        for (r, t) in residual.data_mut().iter_mut().zip(target.data()) {
            *r -= t;
        }
        let loss = residual.data().iter().map(|v| v * v).sum();
        residual.data_mut().iter_mut().for_each(|v| *v *= 2.0);
        Ok((loss, self.backward_saved(saved, residual)))
    }

    pub fn loss(&self, x: &FeatureMap, target: &FeatureMap) -> Result<f64> {
        let y = self.forward(x)?;
        if y.dims() != target.dims() {
            return Err(Error::dims(format!(
                "target is {:?} but the subnet output is {:?}",
                target.dims(),
                y.dims()
            )));
        }
        Ok(y.squared_distance(target))
    }
}
