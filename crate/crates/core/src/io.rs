//! Binary dump of a nearest-neighbor field.
//!
//! Little-endian: magic `DNNF`, version u32 (=1), then height, width,
//! target height and target width as u32, then row-major `(row, col)` u32
//! pairs.

use crate::error::{Error, FormatError, Result};
use crate::tensor::{Coord, NNField};

pub const NNF_MAGIC: [u8; 4] = *b"DNNF";
pub const NNF_VERSION: u32 = 1;

pub fn encode_nnf(nnf: &NNField) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + nnf.targets().len() * 8);
    out.extend_from_slice(&NNF_MAGIC);
    for v in [
        NNF_VERSION,
        nnf.height() as u32,
        nnf.width() as u32,
        nnf.target_height() as u32,
        nnf.target_width() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for q in nnf.targets() {
        out.extend_from_slice(&(q.row as u32).to_le_bytes());
        out.extend_from_slice(&(q.col as u32).to_le_bytes());
    }
    out
}

pub fn decode_nnf(bytes: &[u8]) -> Result<NNField> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| {
                FormatError::Truncated {
                    what: "field dump".into(),
                }
                .into()
            })
    };
    let magic = bytes.get(..4).ok_or_else(|| FormatError::Truncated {
        what: "field magic".into(),
    })?;
    if magic != NNF_MAGIC {
        return Err(FormatError::BadMagic {
            expected: NNF_MAGIC,
            found: [magic[0], magic[1], magic[2], magic[3]],
        }
        .into());
    }
    let version = word(4)?;
    if version != NNF_VERSION {
        return Err(FormatError::UnsupportedVersion {
            expected: NNF_VERSION,
            found: version,
        }
        .into());
    }
    let [h, w, th, tw] = [word(8)?, word(12)?, word(16)?, word(20)?].map(|v| v as usize);
    let expected = 24 + h * w * 8;
    if bytes.len() != expected {
        return Err(Error::Format(FormatError::Truncated {
            what: format!("field payload ({} of {expected} bytes)", bytes.len()),
        }));
    }
    let targets = (0..h * w)
        .map(|i| Ok(Coord::new(word(24 + 8 * i)? as usize, word(28 + 8 * i)? as usize)))
        .collect::<Result<Vec<_>>>()?;
    NNField::from_vec(h, w, th, tw, targets)
}
