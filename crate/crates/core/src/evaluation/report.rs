use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, nmrr};
use crate::error::{Error, Result};
use crate::numeric::DistanceMetric;
use crate::retrieval::{DescriptorIndex, RankedList};
use crate::store::DatasetManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub class_label: String,
    /// Ground-truth size.
    pub ng: usize,
    pub nmrr: f64,
    pub ave_pr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub queries: usize,
    pub anmrr: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub fingerprint: String,
    pub metric: DistanceMetric,
    #[serde(default)]
    pub config: serde_json::Value,
    pub per_query: Vec<QueryScore>,
    pub anmrr: f64,
    pub map: f64,
    pub per_class: BTreeMap<String, ClassScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Scores one ranked list per query against same-class ground truth.
///
/// `gtm` is the largest ground-truth size among the evaluated queries.
/// Aggregates are unweighted means folded in query-id order.
pub fn evaluate_run(
    index: &DescriptorIndex,
    manifest: &DatasetManifest,
    ranked_lists: &[RankedList],
) -> Result<EvalReport> {
    if index.dataset_id != manifest.dataset_id {
        return Err(Error::InvalidArgument(format!(
            "index dataset {:?} does not match manifest {:?}",
            index.dataset_id, manifest.dataset_id
        )));
    }
    if ranked_lists.is_empty() {
        return Err(Error::InvalidArgument("no ranked lists to evaluate".into()));
    }
    let mut lists: Vec<&RankedList> = ranked_lists.iter().collect();
    lists.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    for pair in lists.windows(2) {
        if pair[0].query_id == pair[1].query_id {
            return Err(Error::InvalidArgument(format!(
                "more than one ranked list for query {:?}",
                pair[0].query_id
            )));
        }
    }

    let truths: Vec<(&str, HashSet<&str>)> = lists
        .iter()
        .map(|l| {
            let class = manifest.class_of(&l.query_id).ok_or_else(|| {
                Error::InvalidArgument(format!("query {:?} is not in the manifest", l.query_id))
            })?;
            let gt = manifest.ground_truth(&l.query_id);
            if gt.is_empty() {
                return Err(Error::DegenerateGroundTruth(format!(
                    "query {:?} has no class peers",
                    l.query_id
                )));
            }
            Ok((class, gt))
        })
        .collect::<Result<_>>()?;
    let gtm = truths.iter().map(|(_, gt)| gt.len()).max().unwrap_or(0);

    let per_query = lists
        .iter()
        .zip(&truths)
        .map(|(l, (class, gt))| {
            Ok(QueryScore {
                query_id: l.query_id.clone(),
                class_label: class.to_string(),
                ng: gt.len(),
                nmrr: nmrr(l, gt, gtm)?,
                ave_pr: average_precision(l, gt)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grouped: BTreeMap<&str, Vec<&QueryScore>> = BTreeMap::new();
    for q in &per_query {
        grouped.entry(q.class_label.as_str()).or_default().push(q);
    }
    let per_class = grouped
        .into_iter()
        .map(|(c, qs)| {
            (
                c.to_string(),
                ClassScore {
                    queries: qs.len(),
                    anmrr: mean(qs.iter().map(|q| q.nmrr)),
                    map: mean(qs.iter().map(|q| q.ave_pr)),
                },
            )
        })
        .collect();

    Ok(EvalReport {
        dataset_id: manifest.dataset_id.clone(),
        fingerprint: index.fingerprint.clone(),
        metric: index.metric,
        config: serde_json::Value::Null,
        anmrr: mean(per_query.iter().map(|q| q.nmrr)),
        map: mean(per_query.iter().map(|q| q.ave_pr)),
        per_query,
        per_class,
    })
}

impl EvalReport {
    /// Human-readable summary: aggregate scores and a per-class table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset:     {}", self.dataset_id);
        let _ = writeln!(s, "descriptor:  {}", self.fingerprint);
        let _ = writeln!(s, "metric:      {}", self.metric);
        let _ = writeln!(s, "queries:     {}", self.per_query.len());
        let _ = writeln!(s, "ANMRR:       {:.3}", self.anmrr);
        let _ = writeln!(s, "MAP(%):      {:.2}", 100.0 * self.map);
        let _ = writeln!(s);
        let width = self.per_class.keys().map(String::len).max().unwrap_or(5).max(5);
        let _ = writeln!(s, "{:<width$}  {:>7}  {:>6}  {:>7}", "class", "queries", "ANMRR", "MAP(%)");
        for (c, score) in &self.per_class {
            let _ = writeln!(
                s,
                "{:<width$}  {:>7}  {:>6.3}  {:>7.2}",
                c,
                score.queries,
                score.anmrr,
                100.0 * score.map
            );
        }
        s
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join("report.txt");
        fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))
    }
}
