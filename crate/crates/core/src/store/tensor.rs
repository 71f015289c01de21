//! `RFT1` feature tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"RFT1" | u32 L | u32 H | u32 W | u32 meta_len | meta_len bytes of UTF-8 JSON | L*H*W f32
//! ```
//!
//! The JSON metadata object carries `image_id`, `layer_id` and `scale_tag`.
//! Values are stored channel-major: all of channel 0's H×W grid (row-major),
//! then channel 1, and so on.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"RFT1";

const HEADER_LEN: usize = 4 + 4 * 4;

/// Activations of one layer for one image at one scale or patch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub image_id: String,
    pub layer_id: String,
    pub scale_tag: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    image_id: String,
    layer_id: String,
    scale_tag: String,
}

impl FeatureTensor {
    pub fn new(
        image_id: impl Into<String>,
        layer_id: impl Into<String>,
        scale_tag: impl Into<String>,
        (channels, height, width): (usize, usize, usize),
        data: Vec<f32>,
    ) -> Result<Self> {
        let t = FeatureTensor {
            image_id: image_id.into(),
            layer_id: layer_id.into(),
            scale_tag: scale_tag.into(),
            channels,
            height,
            width,
            data,
        };
        t.validate()?;
        Ok(t)
    }

    /// A fully-connected activation vector, stored as D×1×1.
    pub fn from_fc(
        image_id: impl Into<String>,
        layer_id: impl Into<String>,
        scale_tag: impl Into<String>,
        data: Vec<f32>,
    ) -> Result<Self> {
        let d = data.len();
        Self::new(image_id, layer_id, scale_tag, (d, 1, 1), data)
    }

    pub fn spatial_len(&self) -> usize {
        self.height * self.width
    }

    /// Activation of channel `l` at row `y`, column `x`.
    #[inline]
    pub fn at(&self, l: usize, y: usize, x: usize) -> f32 {
        self.data[(l * self.height + y) * self.width + x]
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {}x{}x{}",
                self.channels, self.height, self.width
            )));
        }
        let expected = self
            .channels
            .checked_mul(self.height)
            .and_then(|v| v.checked_mul(self.width))
            .ok_or_else(|| Error::InvalidArgument("tensor dimensions overflow".into()))?;
        if self.data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.data.len(),
            });
        }
        if let Some(index) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let dim = |v: usize| {
            u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} exceeds u32")))
        };
        let meta = serde_json::to_vec(&TensorMeta {
            image_id: self.image_id.clone(),
            layer_id: self.layer_id.clone(),
            scale_tag: self.scale_tag.clone(),
        })?;
        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + 4 * self.data.len());
        out.extend_from_slice(&TENSOR_MAGIC);
        out.extend_from_slice(&dim(self.channels)?.to_le_bytes());
        out.extend_from_slice(&dim(self.height)?.to_le_bytes());
        out.extend_from_slice(&dim(self.width)?.to_le_bytes());
        out.extend_from_slice(&dim(meta.len())?.to_le_bytes());
        out.extend_from_slice(&meta);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                what: "tensor header",
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        if found != TENSOR_MAGIC {
            return Err(Error::BadMagic {
                expected: TENSOR_MAGIC,
                found,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                what: "tensor header",
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let (channels, height, width, meta_len) = (u32_at(4), u32_at(8), u32_at(12), u32_at(16));
        let meta_end = HEADER_LEN + meta_len;
        if bytes.len() < meta_end {
            return Err(Error::Truncated {
                what: "tensor metadata",
                expected: meta_end,
                found: bytes.len(),
            });
        }
        let meta: TensorMeta = serde_json::from_slice(&bytes[HEADER_LEN..meta_end])
            .map_err(|e| Error::Format(format!("tensor metadata: {e}")))?;

        let count = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
        let payload = &bytes[meta_end..];
        if payload.len() < 4 * count {
            return Err(Error::Truncated {
                what: "tensor payload",
                expected: 4 * count,
                found: payload.len(),
            });
        }
        if payload.len() != 4 * count {
            return Err(Error::Format(format!(
                "tensor payload length {} does not match {}x{}x{} float32 values",
                payload.len(),
                channels,
                height,
                width
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureTensor::new(
            meta.image_id,
            meta.layer_id,
            meta.scale_tag,
            (channels, height, width),
            data,
        )
    }
}

/// Serializes `t` to `path`. Non-finite values are rejected before anything is written.
pub fn write_tensor(t: &FeatureTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = t.to_bytes()?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureTensor::from_bytes(&bytes)
}

/// Reads only the `(L, H, W)` header fields of a tensor file.
pub fn read_tensor_shape(path: impl AsRef<Path>) -> Result<(usize, usize, usize)> {
    let path = path.as_ref();
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match f.read(&mut head[got..]).map_err(|e| Error::io(path, e))? {
            0 => break,
            n => got += n,
        }
    }
    if got >= 4 && head[..4] != TENSOR_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&head[..4]);
        return Err(Error::BadMagic {
            expected: TENSOR_MAGIC,
            found,
        });
    }
    if got < HEADER_LEN {
        return Err(Error::Truncated {
            what: "tensor header",
            expected: HEADER_LEN,
            found: got,
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(head[off..off + 4].try_into().unwrap()) as usize;
    Ok((u32_at(4), u32_at(8), u32_at(12)))
}
