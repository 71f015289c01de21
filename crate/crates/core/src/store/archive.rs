//! `RMA1` single-file model archives.
//!
//! ```text
//! b"RMA1" | u8 kind | u32 meta_len | meta_len bytes of UTF-8 JSON | f64 payload (LE) to end of file
//! ```
//!
//! Payload layouts:
//! * codebook: `k*dim` centroids, row-major
//! * gmm: `k` weights, `k*dim` means, `k*dim` variances
//! * pca: `input_dim` mean, `target_dim*input_dim` basis, `target_dim` eigenvalues

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"RMA1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Codebook,
    Gmm,
    Pca,
}

impl ModelKind {
    fn byte(self) -> u8 {
        match self {
            ModelKind::Codebook => 0,
            ModelKind::Gmm => 1,
            ModelKind::Pca => 2,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ModelKind::Codebook),
            1 => Ok(ModelKind::Gmm),
            2 => Ok(ModelKind::Pca),
            other => Err(Error::Format(format!("unknown model kind byte {other}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Codebook => "codebook",
            ModelKind::Gmm => "gmm",
            ModelKind::Pca => "pca",
        })
    }
}

/// Identifies the data a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub dataset_id: String,
    pub layer_id: String,
    pub seed: u64,
}

impl TrainingFingerprint {
    /// Refuses a model trained on another dataset or layer unless `force` is set.
    pub fn check_compatible(&self, dataset_id: &str, layer_id: &str, force: bool) -> Result<()> {
        if force || (self.dataset_id == dataset_id && self.layer_id == layer_id) {
            return Ok(());
        }
        Err(Error::FingerprintMismatch(format!(
            "model trained on dataset {:?} layer {:?}, used with dataset {dataset_id:?} layer {layer_id:?} (pass --force to override)",
            self.dataset_id, self.layer_id
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    /// Input descriptor dimension.
    pub descriptor_dim: usize,
    /// Number of components (codebook, gmm) or target dimension (pca).
    pub size: usize,
    pub fingerprint: TrainingFingerprint,
    #[serde(default)]
    pub whiten: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub kind: ModelKind,
    pub meta: ArchiveMeta,
    pub payload: Vec<f64>,
}

impl ModelArchive {
    pub fn expected_payload_len(kind: ModelKind, meta: &ArchiveMeta) -> usize {
        let (d, k) = (meta.descriptor_dim, meta.size);
        match kind {
            ModelKind::Codebook => k * d,
            ModelKind::Gmm => k + 2 * k * d,
            ModelKind::Pca => d + k * d + k,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let expected = Self::expected_payload_len(self.kind, &self.meta);
        if self.payload.len() != expected {
            return Err(Error::Internal(format!(
                "{} archive payload has {} values, expected {expected}",
                self.kind,
                self.payload.len()
            )));
        }
        let meta = serde_json::to_vec(&self.meta)?;
        let meta_len = u32::try_from(meta.len())
            .map_err(|_| Error::Internal("archive metadata too large".into()))?;
        let mut out = Vec::with_capacity(9 + meta.len() + 8 * self.payload.len());
        out.extend_from_slice(&ARCHIVE_MAGIC);
        out.push(self.kind.byte());
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(&meta);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 {
            return Err(Error::Truncated {
                what: "archive header",
                expected: 9,
                found: bytes.len(),
            });
        }
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        if found != ARCHIVE_MAGIC {
            return Err(Error::BadMagic {
                expected: ARCHIVE_MAGIC,
                found,
            });
        }
        let kind = ModelKind::from_byte(bytes[4])?;
        let meta_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let meta_end = 9 + meta_len;
        if bytes.len() < meta_end {
            return Err(Error::Truncated {
                what: "archive metadata",
                expected: meta_end,
                found: bytes.len(),
            });
        }
        let meta: ArchiveMeta = serde_json::from_slice(&bytes[9..meta_end])
            .map_err(|e| Error::Format(format!("archive metadata: {e}")))?;
        let expected = Self::expected_payload_len(kind, &meta);
        let payload = &bytes[meta_end..];
        if payload.len() != 8 * expected {
            return Err(Error::Truncated {
                what: "archive payload",
                expected: 8 * expected,
                found: payload.len(),
            });
        }
        let payload: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(index) = payload.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ModelArchive { kind, meta, payload })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub(crate) fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "expected a {kind} archive, found {}",
                self.kind
            )));
        }
        Ok(())
    }
}
