//! Feature tensor → global descriptor.
//!
//! Every method follows the same pipeline: optional L2 normalization of the
//! local activations ([`PreL2`]), the pooling or encoding step itself, then the
//! shared post-processing of an optional PCA projection and a final L2
//! normalization ([`PostPipeline`]).

pub mod encoding;
pub mod fusion;
pub mod local;
pub mod pooling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{Codebook, GmmModel};
use crate::error::{Error, Result};
use crate::numeric::norm::{check_finite, l2_normalize_in_place};
use crate::numeric::PcaModel;
use crate::store::FeatureTensor;

pub use encoding::{encode_bow, encode_ifk, encode_vlad};
pub use fusion::{concat_multiscale, multipatch_pool, scale_order, PATCH_COUNT};
pub use local::{FeatureMap, PreL2};
pub use pooling::{pool_crow, pool_hybrid, pool_max, pool_mean, pool_spoc, spoc_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(alias = "maxpool")]
    Max,
    #[serde(alias = "meanpool")]
    Mean,
    #[serde(alias = "hybridpool")]
    Hybrid,
    Spoc,
    Crow,
    Bow,
    Ifk,
    Vlad,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Max,
        Method::Mean,
        Method::Hybrid,
        Method::Spoc,
        Method::Crow,
        Method::Bow,
        Method::Ifk,
        Method::Vlad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Max => "max",
            Method::Mean => "mean",
            Method::Hybrid => "hybrid",
            Method::Spoc => "spoc",
            Method::Crow => "crow",
            Method::Bow => "bow",
            Method::Ifk => "ifk",
            Method::Vlad => "vlad",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Max => "Max pooling",
            Method::Mean => "Mean pooling",
            Method::Hybrid => "Hybrid pooling",
            Method::Spoc => "SPoC",
            Method::Crow => "CroW",
            Method::Bow => "BoW",
            Method::Ifk => "IFK",
            Method::Vlad => "VLAD",
        }
    }

    pub fn is_encoder(self) -> bool {
        matches!(self, Method::Bow | Method::Ifk | Method::Vlad)
    }

    /// Descriptor length produced for `channels` input channels and `k` model components.
    pub fn output_dim(self, channels: usize, k: usize) -> usize {
        match self {
            Method::Max | Method::Mean | Method::Spoc | Method::Crow => channels,
            Method::Hybrid => 2 * channels,
            Method::Bow => k,
            Method::Vlad => channels * k,
            Method::Ifk => 2 * channels * k,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| Error::InvalidArgument(format!("unknown aggregation method {s:?}")))
    }
}

/// Trained model consumed by an encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderModel {
    Codebook(Codebook),
    Gmm(GmmModel),
}

impl EncoderModel {
    pub fn k(&self) -> usize {
        match self {
            EncoderModel::Codebook(c) => c.k(),
            EncoderModel::Gmm(g) => g.k(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EncoderModel::Codebook(c) => c.dim(),
            EncoderModel::Gmm(g) => g.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostPipeline {
    pub pca: Option<PcaModel>,
    pub final_l2: bool,
}

impl Default for PostPipeline {
    fn default() -> Self {
        PostPipeline {
            pca: None,
            final_l2: true,
        }
    }
}

impl PostPipeline {
    pub fn none() -> Self {
        PostPipeline {
            pca: None,
            final_l2: false,
        }
    }

    pub fn apply(&self, raw: Vec<f64>) -> Result<Vec<f64>> {
        let mut v = match &self.pca {
            Some(p) => p.apply_slice(&raw)?,
            None => raw,
        };
        if self.final_l2 {
            l2_normalize_in_place(&mut v);
        }
        check_finite(&v)?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationSpec {
    pub method: Method,
    pub model: Option<EncoderModel>,
    pub pre_l2: PreL2,
    pub post: PostPipeline,
}

impl AggregationSpec {
    /// A pooling spec with default normalization and no PCA.
    pub fn pooling(method: Method) -> Self {
        AggregationSpec {
            method,
            model: None,
            pre_l2: PreL2::Descriptor,
            post: PostPipeline::default(),
        }
    }

    pub fn encoder(method: Method, model: EncoderModel) -> Self {
        AggregationSpec {
            method,
            model: Some(model),
            pre_l2: PreL2::Descriptor,
            post: PostPipeline::default(),
        }
    }

    pub fn with_post(mut self, post: PostPipeline) -> Self {
        self.post = post;
        self
    }

    pub fn with_pre_l2(mut self, pre_l2: PreL2) -> Self {
        self.pre_l2 = pre_l2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.method, &self.model) {
            (Method::Bow | Method::Vlad, Some(EncoderModel::Codebook(_))) => Ok(()),
            (Method::Ifk, Some(EncoderModel::Gmm(_))) => Ok(()),
            (Method::Bow | Method::Vlad, _) => Err(Error::MissingModel(format!(
                "{} requires codebook model",
                self.method.label()
            ))),
            (Method::Ifk, _) => Err(Error::MissingModel("IFK requires gmm model".into())),
            (_, Some(_)) => Err(Error::InvalidArgument(format!(
                "{} is a pooling method and takes no model",
                self.method.label()
            ))),
            (_, None) => Ok(()),
        }
    }

    /// Descriptor before the post pipeline.
    pub fn raw_descriptor(&self, t: &FeatureTensor) -> Result<Vec<f64>> {
        self.validate()?;
        let fm = FeatureMap::prepare(t, self.pre_l2)?;
        let raw = match (self.method, &self.model) {
            (Method::Max, _) => pool_max(&fm),
            (Method::Mean, _) => pool_mean(&fm),
            (Method::Hybrid, _) => pool_hybrid(&fm),
            (Method::Spoc, _) => pool_spoc(&fm),
            (Method::Crow, _) => pool_crow(&fm),
            (Method::Bow, Some(EncoderModel::Codebook(cb))) => encode_bow(&fm, cb)?,
            (Method::Vlad, Some(EncoderModel::Codebook(cb))) => encode_vlad(&fm, cb)?,
            (Method::Ifk, Some(EncoderModel::Gmm(g))) => encode_ifk(&fm, g)?,
            _ => unreachable!("validated above"),
        };
        check_finite(&raw)?;
        Ok(raw)
    }

    pub fn raw_dim(&self, channels: usize) -> usize {
        self.method
            .output_dim(channels, self.model.as_ref().map_or(0, EncoderModel::k))
    }
}

/// Where a descriptor came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub layer_id: String,
    pub scale_tags: Vec<String>,
    pub raw_dim: usize,
    pub final_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalDescriptor {
    pub image_id: String,
    pub vector: Vec<f64>,
    pub provenance: Provenance,
}

impl GlobalDescriptor {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Aggregates one tensor: normalization, pooling/encoding, then the post pipeline.
pub fn aggregate(t: &FeatureTensor, spec: &AggregationSpec) -> Result<GlobalDescriptor> {
    let raw = spec.raw_descriptor(t)?;
    let raw_dim = raw.len();
    let vector = spec.post.apply(raw)?;
    Ok(GlobalDescriptor {
        image_id: t.image_id.clone(),
        provenance: Provenance {
            method: spec.method,
            layer_id: t.layer_id.clone(),
            scale_tags: vec![t.scale_tag.clone()],
            raw_dim,
            final_dim: vector.len(),
        },
        vector,
    })
}

/// Aggregates the FC vectors of an image's patches (multi-patch pooling),
/// then applies the post pipeline.
pub fn aggregate_patches(patches: &[FeatureTensor], spec: &AggregationSpec) -> Result<GlobalDescriptor> {
    let first = patches
        .first()
        .ok_or_else(|| Error::InvalidArgument("no patch tensors".into()))?;
    let vectors = patches
        .iter()
        .map(|t| {
            if t.image_id != first.image_id {
                return Err(Error::InvalidArgument(format!(
                    "patch set mixes images {:?} and {:?}",
                    first.image_id, t.image_id
                )));
            }
            let fm = FeatureMap::prepare(t, spec.pre_l2)?;
            if fm.spatial_len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "multi-patch pooling expects D×1×1 vectors, {:?} is {}×{}×{}",
                    t.scale_tag, t.channels, t.height, t.width
                )));
            }
            Ok(fm.maps.column(0).to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = multipatch_pool(&vectors, spec.method)?;
    let raw_dim = raw.len();
    let vector = spec.post.apply(raw)?;
    Ok(GlobalDescriptor {
        image_id: first.image_id.clone(),
        provenance: Provenance {
            method: spec.method,
            layer_id: first.layer_id.clone(),
            scale_tags: patches.iter().map(|t| t.scale_tag.clone()).collect(),
            raw_dim,
            final_dim: vector.len(),
        },
        vector,
    })
}
