//! Value types shared by every stage: feature maps, nearest-neighbor fields
//! and 8-bit RGB images, plus the coordinate-level primitives built on them.

use rand::Rng;

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero by [`normalize`].
pub const NORM_EPSILON: f64 = 1e-12;

/// A `height x width x channels` tensor stored row-major by (row, col, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::dims(format!(
                "feature map dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::dims(format!(
                "{}x{}x{} feature map needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        FeatureMap {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    /// The channel vector at one spatial position.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.dims() == other.dims()
    }

    /// Sum of squared differences against a map of the same shape.
    pub fn squared_distance(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Population mean and standard deviation over every element.
    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let var = self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// A single-channel real-valued grid (weight maps, response magnitudes).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dims(format!(
                "{height}x{width} scalar map needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(ScalarMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        ScalarMap {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarMap {
        ScalarMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// An integer grid position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub const fn new(row: usize, col: usize) -> Self {
        Coord { row, col }
    }

    /// Adds a signed offset and saturates into `[0, height) x [0, width)`.
    #[inline]
    pub fn offset_clamped(self, dr: isize, dc: isize, height: usize, width: usize) -> Coord {
        Coord {
            row: clamp_index(self.row as isize + dr, height),
            col: clamp_index(self.col as isize + dc, width),
        }
    }
}

#[inline]
pub(crate) fn clamp_index(v: isize, len: usize) -> usize {
    v.clamp(0, len as isize - 1) as usize
}

/// A nearest-neighbor field: for every position of a `height x width`
/// source grid, a coordinate inside a `target_height x target_width` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NNField {
    height: usize,
    width: usize,
    target_height: usize,
    target_width: usize,
    targets: Vec<Coord>,
}

impl NNField {
    pub fn from_fn(
        height: usize,
        width: usize,
        target_height: usize,
        target_width: usize,
        mut f: impl FnMut(usize, usize) -> Coord,
    ) -> Result<Self> {
        check_grid(height, width)?;
        check_grid(target_height, target_width)?;
        let mut targets = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let q = f(r, c);
                if q.row >= target_height || q.col >= target_width {
                    return Err(Error::dims(format!(
                        "target ({}, {}) at source ({r}, {c}) lies outside {target_height}x{target_width}",
                        q.row, q.col
                    )));
                }
                targets.push(q);
            }
        }
        Ok(NNField {
            height,
            width,
            target_height,
            target_width,
            targets,
        })
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        target_height: usize,
        target_width: usize,
        targets: Vec<Coord>,
    ) -> Result<Self> {
        if targets.len() != height * width {
            return Err(Error::dims(format!(
                "{height}x{width} field needs {} targets, got {}",
                height * width,
                targets.len()
            )));
        }
        Self::from_fn(height, width, target_height, target_width, |r, c| {
            targets[r * width + c]
        })
    }

    pub fn identity(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, height, width, Coord::new)
            .expect("identity field dims must be positive")
    }

    /// Every target drawn uniformly over the full target grid.
    pub fn random<R: Rng + ?Sized>(
        height: usize,
        width: usize,
        target_height: usize,
        target_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::from_fn(height, width, target_height, target_width, |_, _| {
            Coord::new(rng.gen_range(0..target_height), rng.gen_range(0..target_width))
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn target_height(&self) -> usize {
        self.target_height
    }

    pub fn target_width(&self) -> usize {
        self.target_width
    }

    pub fn targets(&self) -> &[Coord] {
        &self.targets
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Coord {
        self.targets[row * self.width + col]
    }

    /// Panics if `q` is outside the target bounds.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, q: Coord) {
        assert!(
            q.row < self.target_height && q.col < self.target_width,
            "target out of bounds"
        );
        self.targets[row * self.width + col] = q;
    }

    pub fn is_identity(&self) -> bool {
        self.height == self.target_height
            && self.width == self.target_width
            && self
                .targets
                .iter()
                .enumerate()
                .all(|(i, q)| q.row == i / self.width && q.col == i % self.width)
    }
}

fn check_grid(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::dims(format!("grid dims must be positive, got {height}x{width}")));
    }
    Ok(())
}

/// An RGB raster with 8-bit channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn from_pixels(height: usize, width: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        check_grid(height, width)?;
        if pixels.len() != height * width {
            return Err(Error::dims(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Image {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    /// Row-major interleaved RGB bytes.
    pub fn to_rgb_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    pub fn from_rgb_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(Error::dims(format!(
                "{height}x{width} RGB image needs {} bytes, got {}",
                height * width * 3,
                bytes.len()
            )));
        }
        let pixels = bytes.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        Self::from_pixels(height, width, pixels)
    }

    /// Largest absolute per-channel difference.
    pub fn max_abs_diff(&self, other: &Image) -> u8 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |k| a[k].abs_diff(b[k])))
            .max()
            .unwrap_or(0)
    }
}

/// Samples `src` through `nnf`: `out(p, c) = src(nnf(p), c)`.
pub fn warp(src: &FeatureMap, nnf: &NNField) -> Result<FeatureMap> {
    if nnf.target_height() != src.height() || nnf.target_width() != src.width() {
        return Err(Error::dims(format!(
            "field targets a {}x{} grid but the source map is {}x{}",
            nnf.target_height(),
            nnf.target_width(),
            src.height(),
            src.width()
        )));
    }
    let channels = src.channels();
    let mut data = Vec::with_capacity(nnf.height() * nnf.width() * channels);
    for q in nnf.targets() {
        data.extend_from_slice(src.pixel(q.row, q.col));
    }
    FeatureMap::from_vec(nnf.height(), nnf.width(), channels, data)
}

/// Nearest-neighbor upsampling of a field to a finer source and target grid.
///
/// Each fine position inherits the target of the coarse cell containing it,
/// rescaled by the target-grid ratio, plus its own offset inside that cell.
/// Results are clamped into the new target bounds.
pub fn upsample_nnf(
    nnf: &NNField,
    new_height: usize,
    new_width: usize,
    new_target_height: usize,
    new_target_width: usize,
) -> Result<NNField> {
    check_grid(new_height, new_width)?;
    check_grid(new_target_height, new_target_width)?;
    let (h, w) = (nnf.height(), nnf.width());
    let (th, tw) = (nnf.target_height(), nnf.target_width());
    NNField::from_fn(new_height, new_width, new_target_height, new_target_width, |r, c| {
        let cr = ((r * h) / new_height).min(h - 1);
        let cc = ((c * w) / new_width).min(w - 1);
        let dr = r as isize - ((cr * new_height) / h) as isize;
        let dc = c as isize - ((cc * new_width) / w) as isize;
        let q = nnf.get(cr, cc);
        let scaled = Coord::new(
            (q.row * new_target_height) / th,
            (q.col * new_target_width) / tw,
        );
        scaled.offset_clamped(dr, dc, new_target_height, new_target_width)
    })
}

/// Scales every channel vector to unit Euclidean norm; vectors with norm at
/// or below [`NORM_EPSILON`] become zero.
pub fn normalize(src: &FeatureMap) -> FeatureMap {
    let mut out = src.clone();
    for v in out.data.chunks_exact_mut(src.channels) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > NORM_EPSILON {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    out
}

/// Squared channel norm per position, divided by its spatial maximum.
/// An all-zero map yields all zeros.
pub fn response_magnitude(src: &FeatureMap) -> ScalarMap {
    let sq: Vec<f64> = src
        .data
        .chunks_exact(src.channels)
        .map(|v| v.iter().map(|x| x * x).sum())
        .collect();
    let max = sq.iter().copied().fold(0.0f64, f64::max);
    let data = if max > 0.0 {
        sq.into_iter().map(|v| v / max).collect()
    } else {
        vec![0.0; sq.len()]
    };
    ScalarMap {
        height: src.height,
        width: src.width,
        data,
    }
}
