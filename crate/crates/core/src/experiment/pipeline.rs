//! Cartesian sweeps over method, PCA dimension, metric, layer and scale set.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{
    check_tensors, encoder_kind, evaluate_descriptors, file_stem, finalize, load_encoder,
    model_size, raw_descriptors, save_model, train_encoder, train_pca, PcaDim, RunConfig,
};
use crate::aggregation::{EncoderModel, GlobalDescriptor, Method, PostPipeline};
use crate::error::{Error, ErrorClass, Result};
use crate::numeric::DistanceMetric;
use crate::store::{load_manifest, DatasetManifest, ModelKind};

pub const RESULTS_CSV: &str = "results.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub name: String,
    pub layer_id: String,
    pub scale_tags: Vec<String>,
    pub method: Method,
    pub pca_dim: PcaDim,
    pub metric: DistanceMetric,
    /// Final descriptor dimension.
    pub dim: Option<usize>,
    pub anmrr: Option<f64>,
    pub map: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub error_class: Option<ErrorClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub dataset_id: String,
    pub cells: Vec<CellOutcome>,
}

impl PipelineSummary {
    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    /// Class of the first failed cell, if any.
    pub fn failure_class(&self) -> Option<ErrorClass> {
        self.failures().next().and_then(|c| c.error_class)
    }
}

#[derive(Clone)]
struct CellError(String, ErrorClass);

impl From<Error> for CellError {
    fn from(e: Error) -> Self {
        CellError(e.to_string(), e.class())
    }
}

fn axis<T: Clone>(sweep: &[T], base: T) -> Vec<T> {
    if sweep.is_empty() {
        vec![base]
    } else {
        sweep.to_vec()
    }
}

fn scales_label(cfg: &RunConfig) -> String {
    if cfg.patch_mode {
        "multipatch".into()
    } else {
        cfg.scale_tags.join("+")
    }
}

fn obtain_encoder(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    models_dir: &Path,
    cache: &mut HashMap<(ModelKind, usize), std::result::Result<EncoderModel, CellError>>,
) -> std::result::Result<Option<EncoderModel>, CellError> {
    let Some(kind) = encoder_kind(cfg.method) else {
        return Ok(None);
    };
    let explicit = match kind {
        ModelKind::Codebook => cfg.codebook.is_some(),
        _ => cfg.gmm.is_some(),
    };
    if explicit {
        return Ok(load_encoder(cfg, manifest)?);
    }
    let size = model_size(cfg, kind)?;
    cache
        .entry((kind, size))
        .or_insert_with(|| {
            let (model, mut summary) = train_encoder(manifest, cfg, kind)?;
            let archive = match &model {
                EncoderModel::Codebook(c) => c.to_archive(summary.fingerprint.clone()),
                EncoderModel::Gmm(g) => g.to_archive(summary.fingerprint.clone()),
            };
            save_model(&archive, &mut summary, &models_dir.join(format!("{kind}-k{size}.rma")))?;
            Ok(model)
        })
        .clone()
        .map(Some)
}

fn final_descriptors(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    raw: &[GlobalDescriptor],
    models_dir: &Path,
) -> Result<Vec<GlobalDescriptor>> {
    let pca = match cfg.pca_dim {
        PcaDim::None => None,
        PcaDim::Dim(d) if cfg.pca_model.is_some() => {
            let m = super::load_pca(cfg, manifest)?;
            debug_assert!(m.as_ref().is_none_or(|m| m.target_dim() == d));
            m
        }
        PcaDim::Dim(d) => {
            let (model, mut summary) = train_pca(manifest, cfg, raw)?;
            let path = models_dir.join(format!("pca-{}-d{d}.rma", cfg.method));
            save_model(&model.to_archive(summary.fingerprint.clone()), &mut summary, &path)?;
            Some(model)
        }
    };
    finalize(
        raw,
        &PostPipeline {
            pca,
            final_l2: cfg.final_l2,
        },
    )
}

/// Runs every cell of the sweep. Cells that fail are recorded in the summary
/// and the sweep moves on; only setup errors (unreadable manifest, unwritable
/// output directory) abort the whole run.
///
/// Writes `cells/<name>/report.{json,txt}` per successful cell, a combined
/// [`RESULTS_CSV`] and `pipeline.json` listing every cell's outcome.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineSummary> {
    let manifest = load_manifest(&cfg.manifest)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let layers = axis(&cfg.sweep.layers, cfg.layer_id.clone());
    let scale_sets = axis(&cfg.sweep.scale_sets, cfg.scale_tags.clone());
    let methods = axis(&cfg.sweep.methods, cfg.method);
    let dims = axis(&cfg.sweep.dims, cfg.pca_dim);
    let metrics = axis(&cfg.sweep.metrics, cfg.metric);

    let mut cells = Vec::new();
    for layer in &layers {
        for scales in &scale_sets {
            let mut cache = HashMap::new();
            for &method in &methods {
                let mut group = cfg.clone();
                group.sweep = Default::default();
                group.layer_id = layer.clone();
                group.scale_tags = scales.clone();
                group.method = method;
                let models_dir = out.join("models").join(file_stem(&format!("{layer}_{}", scales_label(&group))));

                let raw = (|| {
                    group.validate()?;
                    check_tensors(&manifest, &group)?;
                    let encoder = obtain_encoder(&manifest, &group, &models_dir, &mut cache)?;
                    Ok::<_, CellError>(raw_descriptors(&manifest, &group, encoder.as_ref())?)
                })();

                for &pca_dim in &dims {
                    let mut dim_cfg = group.clone();
                    dim_cfg.pca_dim = pca_dim;
                    let finals = raw.clone().and_then(|r| Ok(final_descriptors(&manifest, &dim_cfg, &r, &models_dir)?));
                    for &metric in &metrics {
                        let mut cell_cfg = dim_cfg.clone();
                        cell_cfg.metric = metric;
                        let name = file_stem(&format!(
                            "{layer}_{}_{method}_{pca_dim}_{metric}",
                            scales_label(&cell_cfg)
                        ));
                        let result = finals.clone().and_then(|f| {
                            let dim = f.first().map_or(0, GlobalDescriptor::dim);
                            let report = evaluate_descriptors(&manifest, &cell_cfg, f, metric)?;
                            report.write(out.join("cells").join(&name))?;
                            Ok((dim, report.anmrr, report.map))
                        });
                        let mut cell = CellOutcome {
                            name,
                            layer_id: layer.clone(),
                            scale_tags: cell_cfg.input_tags(),
                            method,
                            pca_dim,
                            metric,
                            dim: None,
                            anmrr: None,
                            map: None,
                            error: None,
                            error_class: None,
                        };
                        match result {
                            Ok((dim, anmrr, map)) => {
                                log::info!("{}: ANMRR {anmrr:.4} mAP {map:.4}", cell.name);
                                cell.dim = Some(dim);
                                cell.anmrr = Some(anmrr);
                                cell.map = Some(map);
                            }
                            Err(CellError(msg, class)) => {
                                log::error!("{}: {msg}", cell.name);
                                cell.error = Some(msg);
                                cell.error_class = Some(class);
                            }
                        }
                        cells.push(cell);
                    }
                }
            }
        }
    }

    let summary = PipelineSummary {
        dataset_id: manifest.dataset_id.clone(),
        cells,
    };
    write_results_csv(&out.join(RESULTS_CSV), &summary, &cfg.network)?;
    let json = out.join("pipeline.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(summary)
}

fn write_results_csv(path: &Path, summary: &PipelineSummary, network: &str) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["dataset", "network", "layer", "method", "dim", "metric", "anmrr", "map", "scales"])
        .map_err(csv_err)?;
    for c in &summary.cells {
        let (Some(dim), Some(anmrr), Some(map)) = (c.dim, c.anmrr, c.map) else {
            continue;
        };
        w.write_record([
            summary.dataset_id.as_str(),
            network,
            &c.layer_id,
            c.method.label(),
            &dim.to_string(),
            c.metric.name(),
            &anmrr.to_string(),
            &map.to_string(),
            &c.scale_tags.join("+"),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
