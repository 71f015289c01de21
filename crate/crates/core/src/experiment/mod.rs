//! Workflows over a dataset manifest: model fitting, aggregation, indexing,
//! querying, evaluation and parameter sweeps.
//!
//! Every step reads its inputs from and writes its outputs under
//! `RunConfig::output_dir`, so steps can run as separate commands.

mod config;
mod pipeline;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate, aggregate_patches, concat_multiscale, AggregationSpec, EncoderModel, FeatureMap, GlobalDescriptor,
    Method, PostPipeline,
};
use crate::clustering::{gmm_fit, kmeans_fit, Codebook, GmmModel, GmmParams, KMeansParams};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_run, EvalReport};
use crate::numeric::{fit_pca, DistanceMetric, PcaModel};
use crate::retrieval::{build_index, rank_all, read_ranked_lists, write_ranked_lists, DescriptorIndex, RankedList};
use crate::store::{
    load_manifest, read_tensor, read_tensor_shape, DatasetManifest, FeatureTensor, ManifestEntry, ModelArchive,
    ModelKind, TrainingFingerprint,
};

pub use config::{
    PcaDim, RunConfig, Sweep, DEFAULT_BOW_K, DEFAULT_GMM_K, DEFAULT_PCA_DIM, DEFAULT_TRAIN_CAP, DEFAULT_VLAD_K,
};
pub use pipeline::{run_pipeline, CellOutcome, PipelineSummary, RESULTS_CSV};

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool when `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("workers must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn descriptor_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("descriptors")
}

pub fn index_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("index.rix")
}

pub fn ranked_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("ranked.jsonl")
}

/// Model size used when fitting `kind` under `cfg`.
pub fn model_size(cfg: &RunConfig, kind: ModelKind) -> Result<usize> {
    match kind {
        ModelKind::Codebook => Ok(cfg.k.unwrap_or(if cfg.method == Method::Vlad {
            DEFAULT_VLAD_K
        } else {
            DEFAULT_BOW_K
        })),
        ModelKind::Gmm => Ok(cfg.k.unwrap_or(DEFAULT_GMM_K)),
        ModelKind::Pca => cfg
            .pca_dim
            .get()
            .ok_or_else(|| Error::InvalidArgument("pca_dim is \"none\"; nothing to fit".into())),
    }
}

/// Where `fit` writes a model of `kind` and where later steps look for it
/// when the config names no explicit path.
pub fn default_model_path(cfg: &RunConfig, kind: ModelKind) -> Result<PathBuf> {
    let size = model_size(cfg, kind)?;
    let name = match kind {
        ModelKind::Codebook => format!("codebook-k{size}.rma"),
        ModelKind::Gmm => format!("gmm-k{size}.rma"),
        ModelKind::Pca => format!("pca-{}-d{size}.rma", cfg.method),
    };
    Ok(cfg.output_dir.join("models").join(name))
}

fn configured_model_path(cfg: &RunConfig, kind: ModelKind) -> Result<PathBuf> {
    let explicit = match kind {
        ModelKind::Codebook => &cfg.codebook,
        ModelKind::Gmm => &cfg.gmm,
        ModelKind::Pca => &cfg.pca_model,
    };
    match explicit {
        Some(p) => Ok(p.clone()),
        None => default_model_path(cfg, kind),
    }
}

pub fn encoder_kind(method: Method) -> Option<ModelKind> {
    match method {
        Method::Bow | Method::Vlad => Some(ModelKind::Codebook),
        Method::Ifk => Some(ModelKind::Gmm),
        _ => None,
    }
}

/// Replaces characters that are unsafe in file names.
pub fn file_stem(image_id: &str) -> String {
    let mut s: String = image_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if s.starts_with('.') {
        s.replace_range(..1, "_");
    }
    s
}

fn descriptor_files(manifest: &DatasetManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut seen: HashMap<String, &str> = HashMap::new();
    manifest
        .entries
        .iter()
        .map(|e| {
            let stem = file_stem(&e.image_id);
            if let Some(other) = seen.insert(stem.clone(), &e.image_id) {
                return Err(Error::Manifest(format!(
                    "image ids {other:?} and {:?} map to the same descriptor file {stem:?}",
                    e.image_id
                )));
            }
            Ok(dir.join(format!("{stem}.json")))
        })
        .collect()
}

fn fingerprint(manifest: &DatasetManifest, cfg: &RunConfig, seed: u64) -> TrainingFingerprint {
    TrainingFingerprint {
        dataset_id: manifest.dataset_id.clone(),
        layer_id: cfg.layer_id.clone(),
        seed,
    }
}

/// Fails with a list of every (image, tag) pair the manifest has no tensor for.
pub fn check_tensors(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<()> {
    let tags = cfg.input_tags();
    let mut missing = Vec::new();
    for e in &manifest.entries {
        for tag in &tags {
            if manifest.tensor_path(e, &cfg.layer_id, tag).is_err() {
                missing.push(format!("{}:{tag}", e.image_id));
            }
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    let shown = missing.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
    let more = if missing.len() > 20 { format!(" and {} more", missing.len() - 20) } else { String::new() };
    Err(Error::Manifest(format!(
        "{} missing tensor(s) for layer {:?}: {shown}{more}",
        missing.len(),
        cfg.layer_id
    )))
}

/// Reads the tensors of one image in `cfg.input_tags()` order and checks their metadata.
pub fn load_image_tensors(manifest: &DatasetManifest, entry: &ManifestEntry, cfg: &RunConfig) -> Result<Vec<FeatureTensor>> {
    cfg.input_tags()
        .iter()
        .map(|tag| {
            let path = manifest.tensor_path(entry, &cfg.layer_id, tag)?;
            let t = read_tensor(&path)?;
            if t.image_id != entry.image_id || t.layer_id != cfg.layer_id || t.scale_tag != *tag {
                return Err(Error::Manifest(format!(
                    "{} holds ({:?}, {:?}, {:?}), expected ({:?}, {:?}, {tag:?})",
                    path.display(),
                    t.image_id,
                    t.layer_id,
                    t.scale_tag,
                    entry.image_id,
                    cfg.layer_id
                )));
            }
            Ok(t)
        })
        .collect()
}

/// Local descriptors (after the configured per-descriptor normalization) of all
/// images and input tags, in manifest order. When there are more than
/// `cfg.train_cap`, a seeded uniform subsample of that size is returned.
pub fn training_descriptors(manifest: &DatasetManifest, cfg: &RunConfig, seed: u64) -> Result<Array2<f64>> {
    let tags = cfg.input_tags();
    let shapes: Vec<Vec<(usize, usize, usize)>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            tags.iter()
                .map(|tag| read_tensor_shape(manifest.tensor_path(e, &cfg.layer_id, tag)?))
                .collect()
        })
        .collect::<Result<_>>()?;
    let channels = shapes[0][0].0;
    if let Some(&(l, _, _)) = shapes.iter().flatten().find(|s| s.0 != channels) {
        return Err(Error::DimensionMismatch {
            expected: channels,
            got: l,
        });
    }
    let counts: Vec<usize> = shapes.iter().map(|s| s.iter().map(|&(_, h, w)| h * w).sum()).collect();
    let total: usize = counts.iter().sum();

    let selected: Option<Vec<usize>> = if total > cfg.train_cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e64_5f73_7562);
        let mut idx = rand::seq::index::sample(&mut rng, total, cfg.train_cap).into_vec();
        idx.sort_unstable();
        Some(idx)
    } else {
        None
    };
    let offsets: Vec<usize> = counts
        .iter()
        .scan(0, |acc, &c| {
            let start = *acc;
            *acc += c;
            Some(start)
        })
        .collect();

    let parts: Vec<Vec<f64>> = manifest
        .entries
        .par_iter()
        .zip(offsets.par_iter().zip(counts.par_iter()))
        .map(|(e, (&start, &count))| {
            let keep: Option<&[usize]> = selected.as_deref().map(|sel| {
                let lo = sel.partition_point(|&i| i < start);
                let hi = sel.partition_point(|&i| i < start + count);
                &sel[lo..hi]
            });
            if keep.is_some_and(|k| k.is_empty()) {
                return Ok(Vec::new());
            }
            let mut out = Vec::new();
            let mut pos = start;
            let mut next = 0;
            for t in load_image_tensors(manifest, e, cfg)? {
                let fm = FeatureMap::prepare(&t, cfg.pre_l2)?;
                for row in fm.descriptors().rows() {
                    let take = match keep {
                        None => true,
                        Some(k) => {
                            if next < k.len() && k[next] == pos {
                                next += 1;
                                true
                            } else {
                                false
                            }
                        }
                    };
                    if take {
                        out.extend(row.iter().copied());
                    }
                    pos += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = parts.into_iter().flatten().collect();
    let n = flat.len() / channels;
    Array2::from_shape_vec((n, channels), flat).map_err(|e| Error::Internal(format!("training matrix: {e}")))
}

/// What a fit produced, written next to the model as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub kind: ModelKind,
    pub path: Option<PathBuf>,
    pub descriptor_dim: usize,
    pub size: usize,
    pub training_points: usize,
    pub iterations: usize,
    /// k-means objective, GMM mean log-likelihood, or PCA retained variance per iteration/component.
    pub history: Vec<f64>,
    pub fingerprint: TrainingFingerprint,
}

/// Trains the codebook or GMM of `kind` on the manifest's local descriptors.
pub fn train_encoder(manifest: &DatasetManifest, cfg: &RunConfig, kind: ModelKind) -> Result<(EncoderModel, FitSummary)> {
    let seed = cfg.require_seed()?;
    let size = model_size(cfg, kind)?;
    let x = training_descriptors(manifest, cfg, seed)?;
    log::info!("training {kind} (k={size}) on {} local descriptors of dim {}", x.nrows(), x.ncols());
    let (model, history) = match kind {
        ModelKind::Codebook => {
            let fit = kmeans_fit(
                x.view(),
                &KMeansParams {
                    max_iters: cfg.max_iters,
                    tol: cfg.kmeans_tol,
                    ..KMeansParams::new(size, seed)
                },
            )?;
            (EncoderModel::Codebook(fit.codebook), fit.objective_history)
        }
        ModelKind::Gmm => {
            let fit = gmm_fit(
                x.view(),
                &GmmParams {
                    max_iters: cfg.max_iters,
                    tol: cfg.gmm_tol,
                    ..GmmParams::new(size, seed)
                },
            )?;
            (EncoderModel::Gmm(fit.model), fit.log_likelihood_history)
        }
        ModelKind::Pca => return Err(Error::InvalidArgument("PCA is not an encoder model".into())),
    };
    let summary = FitSummary {
        kind,
        path: None,
        descriptor_dim: x.ncols(),
        size,
        training_points: x.nrows(),
        iterations: history.len(),
        history,
        fingerprint: fingerprint(manifest, cfg, seed),
    };
    Ok((model, summary))
}

/// Fits PCA on the raw (pre-PCA) global descriptors of the reference set.
pub fn train_pca(manifest: &DatasetManifest, cfg: &RunConfig, raw: &[GlobalDescriptor]) -> Result<(PcaModel, FitSummary)> {
    let seed = cfg.seed.unwrap_or(0);
    let target = model_size(cfg, ModelKind::Pca)?;
    let d = raw.first().map_or(0, GlobalDescriptor::dim);
    let flat: Vec<f64> = raw.iter().flat_map(|g| g.vector.iter().copied()).collect();
    let x = Array2::from_shape_vec((raw.len(), d), flat)
        .map_err(|_| Error::InvalidArgument("raw descriptors differ in dimension".into()))?;
    let model = fit_pca(x.view(), target, cfg.whiten)?;
    let summary = FitSummary {
        kind: ModelKind::Pca,
        path: None,
        descriptor_dim: d,
        size: target,
        training_points: raw.len(),
        iterations: 1,
        history: model.eigenvalues.to_vec(),
        fingerprint: fingerprint(manifest, cfg, seed),
    };
    Ok((model, summary))
}

fn save_model(archive: &ModelArchive, summary: &mut FitSummary, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    archive.save(path)?;
    summary.path = Some(path.to_path_buf());
    let json = path.with_extension("json");
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))
}

/// `fit` command: trains one model and writes it to its default path.
pub fn run_fit(cfg: &RunConfig, kind: ModelKind) -> Result<FitSummary> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest)?;
    check_tensors(&manifest, cfg)?;
    let path = default_model_path(cfg, kind)?;
    let (archive, mut summary) = match kind {
        ModelKind::Codebook | ModelKind::Gmm => {
            let (model, s) = train_encoder(&manifest, cfg, kind)?;
            let a = match &model {
                EncoderModel::Codebook(c) => c.to_archive(s.fingerprint.clone()),
                EncoderModel::Gmm(g) => g.to_archive(s.fingerprint.clone()),
            };
            (a, s)
        }
        ModelKind::Pca => {
            let encoder = load_encoder(cfg, &manifest)?;
            let raw = raw_descriptors(&manifest, cfg, encoder.as_ref())?;
            let (model, s) = train_pca(&manifest, cfg, &raw)?;
            (model.to_archive(s.fingerprint.clone()), s)
        }
    };
    save_model(&archive, &mut summary, &path)?;
    Ok(summary)
}

fn read_archive(cfg: &RunConfig, manifest: &DatasetManifest, kind: ModelKind) -> Result<ModelArchive> {
    let path = configured_model_path(cfg, kind)?;
    if !path.exists() {
        return Err(Error::MissingModel(format!(
            "{} requires {kind} model: {} not found (run `fit --kind {kind}`)",
            cfg.method.label(),
            path.display()
        )));
    }
    let a = ModelArchive::load(&path)?;
    a.meta
        .fingerprint
        .check_compatible(&manifest.dataset_id, &cfg.layer_id, cfg.force)?;
    Ok(a)
}

pub fn load_encoder(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<Option<EncoderModel>> {
    match encoder_kind(cfg.method) {
        None => Ok(None),
        Some(ModelKind::Codebook) => Ok(Some(EncoderModel::Codebook(Codebook::from_archive(&read_archive(
            cfg,
            manifest,
            ModelKind::Codebook,
        )?)?))),
        Some(_) => Ok(Some(EncoderModel::Gmm(GmmModel::from_archive(&read_archive(
            cfg,
            manifest,
            ModelKind::Gmm,
        )?)?))),
    }
}

pub fn load_pca(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<Option<PcaModel>> {
    let Some(dim) = cfg.pca_dim.get() else {
        return Ok(None);
    };
    let model = PcaModel::from_archive(&read_archive(cfg, manifest, ModelKind::Pca)?)?;
    if model.target_dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "PCA model projects to {} dimensions, config asks for {dim}",
            model.target_dim()
        )));
    }
    Ok(Some(model))
}

/// Loads every model the config needs, reporting all missing ones at once.
pub fn load_models(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<(Option<EncoderModel>, Option<PcaModel>)> {
    let enc = load_encoder(cfg, manifest);
    let pca = load_pca(cfg, manifest);
    match (enc, pca) {
        (Ok(e), Ok(p)) => Ok((e, p)),
        (Err(Error::MissingModel(a)), Err(Error::MissingModel(b))) => Err(Error::MissingModel(format!("{a}; {b}"))),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

fn image_raw(tensors: &[FeatureTensor], spec: &AggregationSpec, patch_mode: bool) -> Result<GlobalDescriptor> {
    if patch_mode {
        return aggregate_patches(tensors, spec);
    }
    if let [t] = tensors {
        return aggregate(t, spec);
    }
    let per_scale = tensors
        .iter()
        .map(|t| aggregate(t, spec))
        .collect::<Result<Vec<_>>>()?;
    concat_multiscale(&per_scale, &PostPipeline::none())
}

/// Global descriptors before PCA and final normalization, in manifest order.
/// Multiple scales are concatenated raw.
pub fn raw_descriptors(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    encoder: Option<&EncoderModel>,
) -> Result<Vec<GlobalDescriptor>> {
    let spec = AggregationSpec {
        method: cfg.method,
        model: encoder.cloned(),
        pre_l2: cfg.pre_l2,
        post: PostPipeline::none(),
    };
    spec.validate()?;
    manifest
        .entries
        .par_iter()
        .map(|e| image_raw(&load_image_tensors(manifest, e, cfg)?, &spec, cfg.patch_mode))
        .collect()
}

/// Applies PCA and final normalization to raw descriptors.
pub fn finalize(raw: &[GlobalDescriptor], post: &PostPipeline) -> Result<Vec<GlobalDescriptor>> {
    raw.par_iter()
        .map(|g| {
            let vector = post.apply(g.vector.clone())?;
            let mut provenance = g.provenance.clone();
            provenance.final_dim = vector.len();
            Ok(GlobalDescriptor {
                image_id: g.image_id.clone(),
                vector,
                provenance,
            })
        })
        .collect()
}

pub fn write_descriptors(manifest: &DatasetManifest, dir: &Path, descriptors: &[GlobalDescriptor]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = descriptor_files(manifest, dir)?;
    let by_id: HashMap<&str, &GlobalDescriptor> = descriptors.iter().map(|g| (g.image_id.as_str(), g)).collect();
    files
        .par_iter()
        .zip(&manifest.entries)
        .try_for_each(|(path, e)| {
            let g = by_id
                .get(e.image_id.as_str())
                .ok_or_else(|| Error::Internal(format!("no descriptor for {:?}", e.image_id)))?;
            let mut text = serde_json::to_string(g)?;
            text.push('\n');
            fs::write(path, text).map_err(|err| Error::io(path, err))
        })
}

pub fn read_descriptors(manifest: &DatasetManifest, dir: &Path) -> Result<Vec<GlobalDescriptor>> {
    let files = descriptor_files(manifest, dir)?;
    let missing: Vec<&str> = files
        .iter()
        .zip(&manifest.entries)
        .filter(|(p, _)| !p.exists())
        .map(|(_, e)| e.image_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} image(s) have no descriptor file in {} (run `aggregate`), e.g. {:?}",
            missing.len(),
            dir.display(),
            &missing[..missing.len().min(5)]
        )));
    }
    files
        .par_iter()
        .zip(&manifest.entries)
        .map(|(p, e)| {
            let text = fs::read_to_string(p).map_err(|err| Error::io(p, err))?;
            let g: GlobalDescriptor = serde_json::from_str(&text)?;
            if g.image_id != e.image_id {
                return Err(Error::Format(format!(
                    "{} holds image {:?}, expected {:?}",
                    p.display(),
                    g.image_id,
                    e.image_id
                )));
            }
            Ok(g)
        })
        .collect()
}

/// Final descriptors for every manifest image using already-trained models.
pub fn compute_descriptors(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    encoder: Option<&EncoderModel>,
    pca: Option<PcaModel>,
) -> Result<Vec<GlobalDescriptor>> {
    let raw = raw_descriptors(manifest, cfg, encoder)?;
    finalize(
        &raw,
        &PostPipeline {
            pca,
            final_l2: cfg.final_l2,
        },
    )
}

/// `aggregate` command: writes one descriptor file per image.
pub fn run_aggregate(cfg: &RunConfig) -> Result<Vec<GlobalDescriptor>> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest)?;
    check_tensors(&manifest, cfg)?;
    let (encoder, pca) = load_models(cfg, &manifest)?;
    let descriptors = compute_descriptors(&manifest, cfg, encoder.as_ref(), pca)?;
    write_descriptors(&manifest, &descriptor_dir(cfg), &descriptors)?;
    Ok(descriptors)
}

/// `index` command.
pub fn run_index(cfg: &RunConfig) -> Result<DescriptorIndex> {
    let manifest = load_manifest(&cfg.manifest)?;
    let descriptors = read_descriptors(&manifest, &descriptor_dir(cfg))?;
    let index = build_index(&manifest, descriptors, cfg.metric, cfg.descriptor_fingerprint())?;
    index.save(index_path(cfg))?;
    Ok(index)
}

/// Query ids from `cfg.query_list`, or every indexed image.
pub fn query_ids(cfg: &RunConfig, index: &DescriptorIndex) -> Result<Vec<String>> {
    let Some(path) = &cfg.query_list else {
        return Ok(index.entries.iter().map(|e| e.image_id.clone()).collect());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = BTreeSet::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        if index.get(line).is_none() {
            return Err(Error::InvalidArgument(format!("query {line:?} is not in the index")));
        }
        ids.insert(line.to_string());
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument(format!("query list {} is empty", path.display())));
    }
    Ok(ids.into_iter().collect())
}

/// Ranks the index for each query (leave-one-out).
pub fn rank_queries(cfg: &RunConfig, index: &DescriptorIndex) -> Result<Vec<RankedList>> {
    let ids = query_ids(cfg, index)?;
    let queries: Vec<&GlobalDescriptor> = ids.iter().filter_map(|id| index.get(id)).collect();
    rank_all(index, &queries)
}

/// `query` command.
pub fn run_query(cfg: &RunConfig) -> Result<Vec<RankedList>> {
    let index = DescriptorIndex::load(index_path(cfg))?;
    if index.metric != cfg.metric {
        return Err(Error::InvalidArgument(format!(
            "index was built for {} distance, config asks for {} (rebuild the index)",
            index.metric, cfg.metric
        )));
    }
    let lists = rank_queries(cfg, &index)?;
    write_ranked_lists(ranked_path(cfg), &lists)?;
    Ok(lists)
}

fn config_value(cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("sweep");
        obj.remove("workers");
    }
    Ok(v)
}

/// `evaluate` command: writes `report.json` and `report.txt`.
pub fn run_evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let manifest = load_manifest(&cfg.manifest)?;
    let index = DescriptorIndex::load(index_path(cfg))?;
    let lists = read_ranked_lists(ranked_path(cfg), index.metric)?;
    let mut report = evaluate_run(&index, &manifest, &lists)?;
    report.config = config_value(cfg)?;
    report.write(&cfg.output_dir)?;
    Ok(report)
}

/// Index, rank and score a set of final descriptors in memory.
pub fn evaluate_descriptors(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    descriptors: Vec<GlobalDescriptor>,
    metric: DistanceMetric,
) -> Result<EvalReport> {
    let index = build_index(manifest, descriptors, metric, cfg.descriptor_fingerprint())?;
    let lists = rank_queries(cfg, &index)?;
    let mut report = evaluate_run(&index, manifest, &lists)?;
    let mut cell = cfg.clone();
    cell.metric = metric;
    report.config = config_value(&cell)?;
    Ok(report)
}

/// Trains whatever models the config needs (or loads the ones it names) and
/// scores the result, without writing anything.
pub fn run_in_memory(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest)?;
    check_tensors(&manifest, cfg)?;
    let encoder = match encoder_kind(cfg.method) {
        None => None,
        Some(kind) if configured_model_path(cfg, kind)?.exists() => load_encoder(cfg, &manifest)?,
        Some(kind) => Some(train_encoder(&manifest, cfg, kind)?.0),
    };
    let raw = raw_descriptors(&manifest, cfg, encoder.as_ref())?;
    let pca = match cfg.pca_dim {
        PcaDim::None => None,
        PcaDim::Dim(_) => Some(train_pca(&manifest, cfg, &raw)?.0),
    };
    let descriptors = finalize(
        &raw,
        &PostPipeline {
            pca,
            final_l2: cfg.final_l2,
        },
    )?;
    evaluate_descriptors(&manifest, cfg, descriptors, cfg.metric)
}
