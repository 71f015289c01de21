use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DescriptorIndex;
use crate::aggregation::GlobalDescriptor;
use crate::error::{Error, Result};
use crate::numeric::DistanceMetric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub image_id: String,
    pub distance: f64,
}

/// References ordered by ascending distance to a query, the query itself excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub metric: DistanceMetric,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.image_id.as_str())
    }
}

/// Ranks every index entry except `q` itself by distance to `q`; ties are
/// ordered by image id.
pub fn query_rank(index: &DescriptorIndex, q: &GlobalDescriptor) -> Result<RankedList> {
    if q.dim() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            got: q.dim(),
        });
    }
    index.metric.check_domain(&q.vector)?;
    let mut items: Vec<RankedItem> = index
        .entries
        .iter()
        .filter(|r| r.image_id != q.image_id)
        .map(|r| RankedItem {
            image_id: r.image_id.clone(),
            distance: index.metric.eval_unchecked(&q.vector, &r.vector),
        })
        .collect();
    items.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    Ok(RankedList {
        query_id: q.image_id.clone(),
        metric: index.metric,
        items,
    })
}

/// Ranks each query in parallel; output order follows `queries`.
pub fn rank_all(index: &DescriptorIndex, queries: &[&GlobalDescriptor]) -> Result<Vec<RankedList>> {
    queries.par_iter().map(|q| query_rank(index, q)).collect()
}

#[derive(Serialize, Deserialize)]
struct RankedLine {
    query: String,
    results: Vec<(String, f64)>,
}

/// One JSON object per line: `{"query": id, "results": [[id, distance], …]}`.
pub fn write_ranked_lists(path: impl AsRef<Path>, lists: &[RankedList]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for l in lists {
        let line = RankedLine {
            query: l.query_id.clone(),
            results: l.items.iter().map(|i| (i.image_id.clone(), i.distance)).collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_ranked_lists(path: impl AsRef<Path>, metric: DistanceMetric) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lists = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RankedLine =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        lists.push(RankedList {
            query_id: parsed.query,
            metric,
            items: parsed
                .results
                .into_iter()
                .map(|(image_id, distance)| RankedItem { image_id, distance })
                .collect(),
        });
    }
    Ok(lists)
}
