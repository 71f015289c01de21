//! Multi-scale concatenation and multi-patch pooling.

use std::cmp::Ordering;

use super::{GlobalDescriptor, Method, PostPipeline, Provenance};
use crate::error::{Error, Result};

/// Number of crops/flips produced per image in patch mode.
pub const PATCH_COUNT: usize = 20;

const SCALE_ORDER: [&str; 3] = ["scale1", "scale2", "scale3"];

/// Concatenation order of scale tags: `scale1 < scale2 < scale3`, then any
/// other tag lexicographically.
pub fn scale_order(a: &str, b: &str) -> Ordering {
    let rank = |t: &str| SCALE_ORDER.iter().position(|s| *s == t).unwrap_or(SCALE_ORDER.len());
    rank(a).cmp(&rank(b)).then_with(|| a.cmp(b))
}

/// Concatenates one image's per-scale descriptors in fixed scale order, then
/// applies `post` (PCA and final L2).
pub fn concat_multiscale(descriptors: &[GlobalDescriptor], post: &PostPipeline) -> Result<GlobalDescriptor> {
    let first = descriptors
        .first()
        .ok_or_else(|| Error::InvalidArgument("no descriptors to concatenate".into()))?;
    for d in descriptors {
        if d.image_id != first.image_id {
            return Err(Error::InvalidArgument(format!(
                "cannot concatenate descriptors of different images {:?} and {:?}",
                first.image_id, d.image_id
            )));
        }
        if d.provenance.method != first.provenance.method {
            return Err(Error::InvalidArgument(format!(
                "cannot concatenate {} and {} descriptors",
                first.provenance.method, d.provenance.method
            )));
        }
    }
    let mut ordered: Vec<&GlobalDescriptor> = descriptors.iter().collect();
    ordered.sort_by(|a, b| scale_order(a.provenance.scale_tags.join("+").as_str(), b.provenance.scale_tags.join("+").as_str()));
    for pair in ordered.windows(2) {
        if pair[0].provenance.scale_tags == pair[1].provenance.scale_tags {
            return Err(Error::InvalidArgument(format!(
                "duplicate scale {:?} for image {:?}",
                pair[0].provenance.scale_tags, first.image_id
            )));
        }
    }

    let raw: Vec<f64> = ordered.iter().flat_map(|d| d.vector.iter().copied()).collect();
    let raw_dim = raw.len();
    if let Some(p) = &post.pca {
        if p.input_dim() != raw_dim {
            return Err(Error::DimensionMismatch {
                expected: p.input_dim(),
                got: raw_dim,
            });
        }
    }
    let vector = post.apply(raw)?;
    Ok(GlobalDescriptor {
        image_id: first.image_id.clone(),
        provenance: Provenance {
            method: first.provenance.method,
            layer_id: first.provenance.layer_id.clone(),
            scale_tags: ordered
                .iter()
                .flat_map(|d| d.provenance.scale_tags.iter().cloned())
                .collect(),
            raw_dim,
            final_dim: vector.len(),
        },
        vector,
    })
}

/// Pools the FC vectors of the [`PATCH_COUNT`] patches of one image
/// componentwise: max, mean, or `[max ‖ mean]`.
pub fn multipatch_pool(patch_vectors: &[Vec<f64>], pool: Method) -> Result<Vec<f64>> {
    match pool {
        Method::Max | Method::Mean | Method::Hybrid => {}
        Method::Spoc | Method::Crow => {
            return Err(Error::InvalidArgument(
                "spatial weighting based pooling not applicable to patch sets".into(),
            ))
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "{} is not a pooling method; patch sets support max, mean and hybrid pooling",
                other.label()
            )))
        }
    }
    if patch_vectors.len() != PATCH_COUNT {
        return Err(Error::InvalidArgument(format!(
            "multi-patch pooling expects {PATCH_COUNT} patch vectors, got {}",
            patch_vectors.len()
        )));
    }
    let dim = patch_vectors[0].len();
    if let Some(bad) = patch_vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    let mut max = vec![f64::NEG_INFINITY; dim];
    let mut sum = vec![0.0; dim];
    for v in patch_vectors {
        for ((m, s), x) in max.iter_mut().zip(sum.iter_mut()).zip(v) {
            *m = m.max(*x);
            *s += x;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / PATCH_COUNT as f64).collect();
    Ok(match pool {
        Method::Max => max,
        Method::Mean => mean,
        _ => {
            max.extend(mean);
            max
        }
    })
}
