use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aggregation::{Method, PreL2, PATCH_COUNT};
use crate::error::{Error, Result};
use crate::numeric::DistanceMetric;

pub const DEFAULT_BOW_K: usize = 1000;
pub const DEFAULT_VLAD_K: usize = 100;
pub const DEFAULT_GMM_K: usize = 100;
pub const DEFAULT_PCA_DIM: usize = 32;
pub const DEFAULT_TRAIN_CAP: usize = 500_000;

/// PCA target dimension, or no PCA at all. Serialized as a number or `"none"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PcaDim {
    None,
    Dim(usize),
}

impl Default for PcaDim {
    fn default() -> Self {
        PcaDim::Dim(DEFAULT_PCA_DIM)
    }
}

impl PcaDim {
    pub fn get(self) -> Option<usize> {
        match self {
            PcaDim::None => None,
            PcaDim::Dim(d) => Some(d),
        }
    }
}

impl fmt::Display for PcaDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcaDim::None => f.write_str("none"),
            PcaDim::Dim(d) => write!(f, "{d}"),
        }
    }
}

impl FromStr for PcaDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(PcaDim::None);
        }
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .map(PcaDim::Dim)
            .ok_or_else(|| Error::InvalidArgument(format!("PCA dimension must be a positive integer or \"none\", got {s:?}")))
    }
}

impl Serialize for PcaDim {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PcaDim::None => s.serialize_str("none"),
            PcaDim::Dim(d) => s.serialize_u64(*d as u64),
        }
    }
}

impl<'de> Deserialize<'de> for PcaDim {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(serde::de::Error::custom("PCA dimension must be positive")),
            Raw::Num(n) => Ok(PcaDim::Dim(n)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Axes of a pipeline sweep. Empty axes fall back to the base config value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub methods: Vec<Method>,
    pub dims: Vec<PcaDim>,
    pub metrics: Vec<DistanceMetric>,
    pub layers: Vec<String>,
    pub scale_sets: Vec<Vec<String>>,
}

fn default_scales() -> Vec<String> {
    vec!["full".to_string()]
}

fn default_true() -> bool {
    true
}

fn default_max_iters() -> usize {
    100
}

fn default_kmeans_tol() -> f64 {
    1e-6
}

fn default_gmm_tol() -> f64 {
    1e-5
}

fn default_train_cap() -> usize {
    DEFAULT_TRAIN_CAP
}

fn default_network() -> String {
    "cnn".to_string()
}

/// One experiment configuration, read from JSON and overridable from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub layer_id: String,
    #[serde(default = "default_scales")]
    pub scale_tags: Vec<String>,
    /// Pool the FC vectors of the 20 patches `patch00..patch19` instead of reading `scale_tags`.
    #[serde(default)]
    pub patch_mode: bool,
    pub method: Method,
    #[serde(default)]
    pub pre_l2: PreL2,
    #[serde(default = "default_true")]
    pub final_l2: bool,
    /// Codebook size or GMM components; defaults to 1000 (BoW) or 100 (VLAD, IFK).
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub pca_dim: PcaDim,
    #[serde(default)]
    pub whiten: bool,
    #[serde(default = "default_metric")]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Label written to the combined results table.
    #[serde(default = "default_network")]
    pub network: String,
    #[serde(default)]
    pub codebook: Option<PathBuf>,
    #[serde(default)]
    pub gmm: Option<PathBuf>,
    #[serde(default)]
    pub pca_model: Option<PathBuf>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_kmeans_tol")]
    pub kmeans_tol: f64,
    #[serde(default = "default_gmm_tol")]
    pub gmm_tol: f64,
    /// Upper bound on local descriptors used to train codebooks and GMMs.
    #[serde(default = "default_train_cap")]
    pub train_cap: usize,
    /// Accept models trained on another dataset or layer.
    #[serde(default)]
    pub force: bool,
    /// File with one query image id per line; all images when absent.
    #[serde(default)]
    pub query_list: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Sweep,
}

fn default_metric() -> DistanceMetric {
    DistanceMetric::Euclidean
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, layer_id: impl Into<String>, method: Method, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            layer_id: layer_id.into(),
            scale_tags: default_scales(),
            patch_mode: false,
            method,
            pre_l2: PreL2::Descriptor,
            final_l2: true,
            k: None,
            pca_dim: PcaDim::default(),
            whiten: false,
            metric: DistanceMetric::Euclidean,
            seed: None,
            output_dir: output_dir.into(),
            workers: None,
            network: default_network(),
            codebook: None,
            gmm: None,
            pca_model: None,
            max_iters: default_max_iters(),
            kmeans_tol: default_kmeans_tol(),
            gmm_tol: default_gmm_tol(),
            train_cap: DEFAULT_TRAIN_CAP,
            force: false,
            query_list: None,
            sweep: Sweep::default(),
        }
    }

    /// Reads a JSON config. Relative paths inside it are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        for p in [&mut self.codebook, &mut self.gmm, &mut self.pca_model, &mut self.query_list]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Model size for the configured encoder.
    pub fn effective_k(&self) -> Option<usize> {
        match self.method {
            Method::Bow => Some(self.k.unwrap_or(DEFAULT_BOW_K)),
            Method::Vlad => Some(self.k.unwrap_or(DEFAULT_VLAD_K)),
            Method::Ifk => Some(self.k.unwrap_or(DEFAULT_GMM_K)),
            _ => None,
        }
    }

    /// Tensor tags read per image.
    pub fn input_tags(&self) -> Vec<String> {
        if self.patch_mode {
            (0..PATCH_COUNT).map(|i| format!("patch{i:02}")).collect()
        } else {
            self.scale_tags.clone()
        }
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidArgument("a seed is required for training steps (--seed)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_tags.is_empty() && !self.patch_mode {
            return Err(Error::InvalidArgument("at least one scale tag is required".into()));
        }
        if self.patch_mode && self.method.is_encoder() {
            return Err(Error::InvalidArgument(format!(
                "{} cannot be used in patch mode; patch sets support max, mean and hybrid pooling",
                self.method.label()
            )));
        }
        if self.patch_mode && matches!(self.method, Method::Spoc | Method::Crow) {
            return Err(Error::InvalidArgument(
                "spatial weighting based pooling not applicable to patch sets".into(),
            ));
        }
        if self.k == Some(0) {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if self.train_cap == 0 {
            return Err(Error::InvalidArgument("train_cap must be positive".into()));
        }
        Ok(())
    }

    /// Identifies the descriptor configuration (everything except the metric).
    pub fn descriptor_fingerprint(&self) -> String {
        let k = self.effective_k().map_or(String::new(), |k| format!(" k={k}"));
        let scales = if self.patch_mode {
            "multipatch".to_string()
        } else {
            self.scale_tags.join("+")
        };
        format!(
            "{} {} [{}] {}{} pre_l2={} pca={} final_l2={}",
            self.network, self.layer_id, scales, self.method, k, self.pre_l2, self.pca_dim, self.final_l2
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_gets_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"manifest": "m.json", "layer_id": "conv5", "method": "bow", "output_dir": "out"}"#,
        )
        .unwrap();
        assert_eq!(cfg.effective_k(), Some(1000));
        assert_eq!(cfg.pca_dim, PcaDim::Dim(32));
        assert_eq!(cfg.metric, DistanceMetric::Euclidean);
        assert_eq!(cfg.pre_l2, PreL2::Descriptor);
        assert!(cfg.final_l2);
        assert_eq!(cfg.train_cap, 500_000);
        assert!(cfg.require_seed().is_err());
    }

    #[test]
    fn defaults_per_method() {
        let mut cfg = RunConfig::new("m", "l", Method::Vlad, "o");
        assert_eq!(cfg.effective_k(), Some(100));
        cfg.method = Method::Ifk;
        assert_eq!(cfg.effective_k(), Some(100));
        cfg.method = Method::Spoc;
        assert_eq!(cfg.effective_k(), None);
    }

    #[test]
    fn pca_dim_forms() {
        assert_eq!(serde_json::from_str::<PcaDim>("\"none\"").unwrap(), PcaDim::None);
        assert_eq!(serde_json::from_str::<PcaDim>("16").unwrap(), PcaDim::Dim(16));
        assert!(serde_json::from_str::<PcaDim>("0").is_err());
        assert_eq!(serde_json::to_string(&PcaDim::None).unwrap(), "\"none\"");
        assert_eq!("64".parse::<PcaDim>().unwrap(), PcaDim::Dim(64));
    }

    #[test]
    fn patch_mode_rules() {
        let mut cfg = RunConfig::new("m", "fc7", Method::Mean, "o");
        cfg.patch_mode = true;
        assert_eq!(cfg.input_tags().len(), 20);
        assert_eq!(cfg.input_tags()[7], "patch07");
        assert!(cfg.validate().is_ok());
        cfg.method = Method::Spoc;
        assert!(cfg.validate().unwrap_err().to_string().contains("spatial weighting"));
        cfg.method = Method::Ifk;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = serde_json::from_str::<RunConfig>(
            r#"{"manifest": "m", "layer_id": "l", "method": "max", "output_dir": "o", "pca": 3}"#,
        );
        assert!(err.is_err());
    }
}
