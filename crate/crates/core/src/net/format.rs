//! The `DIAW` binary weight container and the line-oriented network manifest.
//!
//! Weight file layout (little-endian):
//!
//! ```text
//! magic "DIAW" | version u32 (=1) | tensor count u32
//! per tensor: name length u16 | name (utf-8) | ndim u8 | dims u32 x ndim | f32 x product(dims)
//! ```
//!
//! Manifest directives, one per line, `#` starts a comment:
//!
//! ```text
//! mean R G B
//! conv <name> <outC> <inC> <kH> <kW> <stride> <pad>
//! relu
//! maxpool <k> <stride>
//! tag <label>
//! ```

use std::collections::HashMap;

use crate::error::FormatError;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"DIAW";
pub const WEIGHTS_VERSION: u32 = 1;

/// One named tensor from a weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        Tensor {
            name: name.into(),
            dims,
            data,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::Truncated { what: what() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: impl FnOnce() -> String) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: impl FnOnce() -> String) -> Result<u16, FormatError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: impl FnOnce() -> String) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<Vec<Tensor>, FormatError> {
    let mut rd = Reader { bytes, pos: 0 };
    let magic = rd.take(4, || "magic".into())?;
    if magic != WEIGHTS_MAGIC {
        return Err(FormatError::BadMagic {
            expected: WEIGHTS_MAGIC,
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = rd.u32(|| "version".into())?;
    if version != WEIGHTS_VERSION {
        return Err(FormatError::UnsupportedVersion {
            expected: WEIGHTS_VERSION,
            found: version,
        });
    }
    let count = rd.u32(|| "tensor count".into())? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for index in 0..count {
        let name_len = rd.u16(|| format!("name length of tensor #{index}"))? as usize;
        let raw = rd.take(name_len, || format!("name of tensor #{index}"))?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| FormatError::Utf8 {
                what: format!("name of tensor #{index}"),
            })?
            .to_string();
        let ndim = rd.u8(|| format!("rank of `{name}`"))? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(rd.u32(|| format!("dims of `{name}`"))? as usize);
        }
        let len: usize = dims.iter().product();
        let raw = rd.take(len.saturating_mul(4), || format!("payload of `{name}`"))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    if rd.pos != bytes.len() {
        return Err(FormatError::Syntax {
            line: 0,
            message: format!("{} trailing bytes after the last tensor", bytes.len() - rd.pos),
        });
    }
    Ok(tensors)
}

pub fn encode_weights(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// A conv directive before its weights are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Conv(ConvSpec),
    Relu,
    MaxPool { kernel: usize, stride: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub mean: [f64; 3],
    /// Layers with their optional pyramid tag.
    pub layers: Vec<(Directive, Option<String>)>,
}

pub fn parse_manifest(text: &str) -> Result<Manifest, FormatError> {
    let mut mean = None;
    let mut layers: Vec<(Directive, Option<String>)> = Vec::new();
    let mut seen_tags = Vec::<String>::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut words = content.split_whitespace();
        let Some(kind) = words.next() else { continue };
        let args: Vec<&str> = words.collect();
        let syntax = |message: String| FormatError::Syntax { line, message };
        let expect_args = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(format!("`{kind}` takes {n} arguments, got {}", args.len())))
            }
        };
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| syntax(format!("`{s}` is not a non-negative integer")))
        };
        match kind {
            "mean" => {
                expect_args(3)?;
                if mean.is_some() {
                    return Err(syntax("duplicate `mean` directive".into()));
                }
                let mut m = [0.0; 3];
                for (slot, s) in m.iter_mut().zip(&args) {
                    *slot = s
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| syntax(format!("`{s}` is not a finite number")))?;
                }
                mean = Some(m);
            }
            "conv" => {
                expect_args(7)?;
                let spec = ConvSpec {
                    name: args[0].to_string(),
                    out_channels: int(args[1])?,
                    in_channels: int(args[2])?,
                    kernel_h: int(args[3])?,
                    kernel_w: int(args[4])?,
                    stride: int(args[5])?,
                    padding: int(args[6])?,
                };
                if spec.out_channels == 0
                    || spec.in_channels == 0
                    || spec.kernel_h == 0
                    || spec.kernel_w == 0
                    || spec.stride == 0
                {
                    return Err(syntax(format!(
                        "conv `{}` needs positive channels, kernel and stride",
                        spec.name
                    )));
                }
                if layers
                    .iter()
                    .any(|(d, _)| matches!(d, Directive::Conv(c) if c.name == spec.name))
                {
                    return Err(syntax(format!("duplicate conv name `{}`", spec.name)));
                }
                layers.push((Directive::Conv(spec), None));
            }
            "relu" => {
                expect_args(0)?;
                layers.push((Directive::Relu, None));
            }
            "maxpool" => {
                expect_args(2)?;
                let (kernel, stride) = (int(args[0])?, int(args[1])?);
                if kernel == 0 || stride == 0 {
                    return Err(syntax("maxpool needs positive kernel and stride".into()));
                }
                layers.push((Directive::MaxPool { kernel, stride }, None));
            }
            "tag" => {
                expect_args(1)?;
                let tag = args[0].to_string();
                if seen_tags.contains(&tag) {
                    return Err(syntax(format!("duplicate tag `{tag}`")));
                }
                match layers.last_mut() {
                    Some((_, slot @ None)) => *slot = Some(tag.clone()),
                    _ => return Err(FormatError::DanglingTag { line, tag }),
                }
                seen_tags.push(tag);
            }
            other => {
                return Err(FormatError::UnknownLayerKind {
                    line,
                    kind: other.to_string(),
                })
            }
        }
    }
    Ok(Manifest {
        mean: mean.unwrap_or([0.0; 3]),
        layers,
    })
}

/// Removes and returns the tensors named `<conv>.weight` / `<conv>.bias`,
/// checked against the conv's declared shape.
pub(crate) fn take_conv_tensors(
    spec: &ConvSpec,
    pool: &mut HashMap<String, Tensor>,
) -> Result<(Vec<f64>, Vec<f64>), FormatError> {
    let wanted = [
        (
            format!("{}.weight", spec.name),
            vec![spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w],
        ),
        (format!("{}.bias", spec.name), vec![spec.out_channels]),
    ];
    let mut out = Vec::with_capacity(2);
    for (name, dims) in wanted {
        let tensor = pool.remove(&name).ok_or_else(|| FormatError::MissingTensor {
            layer: spec.name.clone(),
            tensor: name.clone(),
        })?;
        if tensor.dims != dims {
            return Err(FormatError::ShapeMismatch {
                layer: spec.name.clone(),
                expected: dims.iter().product(),
                found: tensor.data.len(),
            });
        }
        out.push(tensor.data.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>());
    }
    let bias = out.pop().unwrap();
    let weight = out.pop().unwrap();
    Ok((weight, bias))
}
