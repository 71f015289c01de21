use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cnnret::aggregation::{Method, PreL2};
use cnnret::experiment::{PcaDim, RunConfig};
use cnnret::numeric::DistanceMetric;
use cnnret::store::ModelKind;
use cnnret::{Error, Result};

/// Global CNN descriptors for remote-sensing image retrieval: train models,
/// aggregate feature tensors, rank and score.
#[derive(Debug, Parser)]
#[command(name = "cnnret", version)]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a codebook, GMM or PCA model and write it under <out>/models.
    Fit {
        #[arg(long, value_enum)]
        kind: Kind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute one global descriptor per manifest image into <out>/descriptors.
    Aggregate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build <out>/index.rix from the descriptor files.
    Index {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rank the index for every query (leave-one-out) into <out>/ranked.jsonl.
    Query {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score the ranked lists; writes <out>/report.json and <out>/report.txt.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run fit, aggregate, index, query and evaluate for every cell of a sweep.
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Write a seeded synthetic dataset (tensors and manifest).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Codebook,
    Gmm,
    Pca,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Codebook => ModelKind::Codebook,
            Kind::Gmm => ModelKind::Gmm,
            Kind::Pca => ModelKind::Pca,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run config; flags below override its fields.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub layer: Option<String>,
    /// Comma-separated scale tags, concatenated in scale order.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<String>>,
    /// Pool the 20 patch vectors patch00..patch19 of each image.
    #[arg(long)]
    pub patch_mode: bool,
    /// max, mean, hybrid, spoc, crow, bow, vlad or ifk.
    #[arg(long)]
    pub method: Option<Method>,
    /// descriptor, channel or off.
    #[arg(long)]
    pub pre_l2: Option<PreL2>,
    #[arg(long)]
    pub no_final_l2: bool,
    /// Codebook size or GMM components.
    #[arg(long)]
    pub k: Option<usize>,
    /// PCA target dimension or "none".
    #[arg(long)]
    pub pca_dim: Option<PcaDim>,
    #[arg(long)]
    pub whiten: bool,
    /// euclidean, cosine, manhattan or chisquare.
    #[arg(long)]
    pub metric: Option<DistanceMetric>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "CNNRET_WORKERS")]
    pub workers: Option<usize>,
    /// Network label for the results table.
    #[arg(long)]
    pub network: Option<String>,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    #[arg(long)]
    pub pca_model: Option<PathBuf>,
    /// Cap on local descriptors used for codebook/GMM training.
    #[arg(long)]
    pub train_cap: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Accept models trained on another dataset or layer.
    #[arg(long)]
    pub force: bool,
    /// File with one query image id per line.
    #[arg(long)]
    pub query_list: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    pub sweep_methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_dims: Option<Vec<PcaDim>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_metrics: Option<Vec<DistanceMetric>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_layers: Option<Vec<String>>,
    /// Scale sets separated by ';', tags within a set by ','.
    #[arg(long)]
    pub sweep_scales: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// One well-separated Gaussian per class.
    Separated,
    /// Shared word centers with small per-class offsets.
    Vocabulary,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "separated")]
    pub preset: Preset,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub channels: usize,
    /// Comma-separated grids as tag:HxW, e.g. scale1:6x6,scale2:9x9.
    #[arg(long, default_value = "full:6x6")]
    pub grids: String,
    #[arg(long, default_value_t = 4)]
    pub words: usize,
    #[arg(long, default_value = "synthetic")]
    pub layer: String,
    #[arg(long)]
    pub dataset_id: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn parse_grids(s: &str) -> Result<Vec<(String, usize, usize)>> {
    s.split(',')
        .map(|g| {
            let bad = || Error::InvalidArgument(format!("grid {g:?} is not tag:HxW"));
            let (tag, hw) = g.split_once(':').ok_or_else(bad)?;
            let (h, w) = hw.split_once('x').ok_or_else(bad)?;
            Ok((
                tag.to_string(),
                h.parse().map_err(|_| bad())?,
                w.parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument(format!("{flag} is required when no --config is given")))
}

impl RunArgs {
    /// Loads the config file (if any) and applies flag overrides.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new(
                required(self.manifest.clone(), "--manifest")?,
                required(self.layer.clone(), "--layer")?,
                required(self.method, "--method")?,
                required(self.out.clone(), "--out")?,
            ),
        };
        if let Some(v) = &self.manifest {
            cfg.manifest = v.clone();
        }
        if let Some(v) = &self.layer {
            cfg.layer_id = v.clone();
        }
        if let Some(v) = &self.scales {
            cfg.scale_tags = v.clone();
        }
        cfg.patch_mode |= self.patch_mode;
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.pre_l2 {
            cfg.pre_l2 = v;
        }
        if self.no_final_l2 {
            cfg.final_l2 = false;
        }
        if let Some(v) = self.k {
            cfg.k = Some(v);
        }
        if let Some(v) = self.pca_dim {
            cfg.pca_dim = v;
        }
        cfg.whiten |= self.whiten;
        if let Some(v) = self.metric {
            cfg.metric = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = Some(v);
        }
        if let Some(v) = &self.network {
            cfg.network = v.clone();
        }
        if let Some(v) = &self.codebook {
            cfg.codebook = Some(v.clone());
        }
        if let Some(v) = &self.gmm {
            cfg.gmm = Some(v.clone());
        }
        if let Some(v) = &self.pca_model {
            cfg.pca_model = Some(v.clone());
        }
        if let Some(v) = self.train_cap {
            cfg.train_cap = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        cfg.force |= self.force;
        if let Some(v) = &self.query_list {
            cfg.query_list = Some(v.clone());
        }
        Ok(cfg)
    }
}

impl SweepArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.sweep_methods {
            cfg.sweep.methods = v.clone();
        }
        if let Some(v) = &self.sweep_dims {
            cfg.sweep.dims = v.clone();
        }
        if let Some(v) = &self.sweep_metrics {
            cfg.sweep.metrics = v.clone();
        }
        if let Some(v) = &self.sweep_layers {
            cfg.sweep.layers = v.clone();
        }
        if let Some(v) = &self.sweep_scales {
            cfg.sweep.scale_sets = v
                .split(';')
                .map(|set| set.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())
                .filter(|set: &Vec<String>| !set.is_empty())
                .collect();
        }
    }
}
