use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{GlobalDescriptor, Provenance};
use crate::error::{Error, Result};
use crate::numeric::norm::check_finite;
use crate::numeric::DistanceMetric;
use crate::store::DatasetManifest;

pub const INDEX_MAGIC: [u8; 4] = *b"RIX1";

/// Reference descriptors of one dataset, sorted by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    pub dataset_id: String,
    pub fingerprint: String,
    pub metric: DistanceMetric,
    pub entries: Vec<GlobalDescriptor>,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    dataset_id: String,
    fingerprint: String,
    metric: DistanceMetric,
    dim: usize,
    entries: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    image_id: String,
    provenance: Provenance,
}

/// Builds an index holding exactly one descriptor per manifest image.
pub fn build_index(
    manifest: &DatasetManifest,
    descriptors: Vec<GlobalDescriptor>,
    metric: DistanceMetric,
    fingerprint: impl Into<String>,
) -> Result<DescriptorIndex> {
    let mut entries = descriptors;
    entries.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for pair in entries.windows(2) {
        if pair[0].image_id == pair[1].image_id {
            return Err(Error::InvalidArgument(format!(
                "duplicate descriptor for image {:?}",
                pair[0].image_id
            )));
        }
    }
    for e in &entries {
        if manifest.entry(&e.image_id).is_none() {
            return Err(Error::InvalidArgument(format!(
                "descriptor for {:?} is not in manifest {:?}",
                e.image_id, manifest.dataset_id
            )));
        }
    }
    if entries.len() != manifest.len() {
        let missing: Vec<&str> = manifest
            .entries
            .iter()
            .map(|e| e.image_id.as_str())
            .filter(|id| entries.binary_search_by(|d| d.image_id.as_str().cmp(id)).is_err())
            .take(5)
            .collect();
        return Err(Error::InvalidArgument(format!(
            "{} manifest image(s) have no descriptor, e.g. {missing:?}",
            manifest.len() - entries.len()
        )));
    }
    let index = DescriptorIndex {
        dataset_id: manifest.dataset_id.clone(),
        fingerprint: fingerprint.into(),
        metric,
        entries,
    };
    index.validate()?;
    Ok(index)
}

impl DescriptorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, GlobalDescriptor::dim)
    }

    pub fn get(&self, image_id: &str) -> Option<&GlobalDescriptor> {
        self.entries
            .binary_search_by(|e| e.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for e in &self.entries {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.dim(),
                });
            }
            check_finite(&e.vector)?;
            self.metric.check_domain(&e.vector).map_err(|err| {
                Error::InvalidArgument(format!(
                    "descriptor {:?} is not valid under {}: {err}",
                    e.image_id, self.metric
                ))
            })?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = IndexHeader {
            dataset_id: self.dataset_id.clone(),
            fingerprint: self.fingerprint.clone(),
            metric: self.metric,
            dim: self.dim(),
            entries: self
                .entries
                .iter()
                .map(|e| HeaderEntry {
                    image_id: e.image_id.clone(),
                    provenance: e.provenance.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let header_len =
            u32::try_from(header.len()).map_err(|_| Error::Internal("index header too large".into()))?;
        let mut out = Vec::with_capacity(8 + header.len() + 8 * self.dim() * self.len());
        out.extend_from_slice(&INDEX_MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for e in &self.entries {
            for v in &e.vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated {
                what: "index header",
                expected: 8,
                found: bytes.len(),
            });
        }
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        if found != INDEX_MAGIC {
            return Err(Error::BadMagic {
                expected: INDEX_MAGIC,
                found,
            });
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header_end = 8 + header_len;
        if bytes.len() < header_end {
            return Err(Error::Truncated {
                what: "index header",
                expected: header_end,
                found: bytes.len(),
            });
        }
        let header: IndexHeader = serde_json::from_slice(&bytes[8..header_end])
            .map_err(|e| Error::Format(format!("index header: {e}")))?;
        let payload = &bytes[header_end..];
        let expected = 8 * header.dim * header.entries.len();
        if payload.len() != expected {
            return Err(Error::Truncated {
                what: "index payload",
                expected,
                found: payload.len(),
            });
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let entries = header
            .entries
            .into_iter()
            .map(|h| GlobalDescriptor {
                image_id: h.image_id,
                provenance: h.provenance,
                vector: values.by_ref().take(header.dim).collect(),
            })
            .collect();
        let index = DescriptorIndex {
            dataset_id: header.dataset_id,
            fingerprint: header.fingerprint,
            metric: header.metric,
            entries,
        };
        index.validate()?;
        Ok(index)
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
}
