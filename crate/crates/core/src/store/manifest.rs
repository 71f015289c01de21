//! Dataset manifests: image ids, class labels and per-scale tensor paths.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub class_label: String,
    /// scale tag (or `layer/scale` key) → tensor file path
    pub tensors: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    dataset_id: String,
    entries: Vec<ManifestEntry>,
}

/// A validated dataset manifest. Entries are sorted by `image_id` and tensor
/// paths are resolved relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub entries: Vec<ManifestEntry>,
    classes: BTreeMap<String, Vec<usize>>,
}

impl DatasetManifest {
    /// Validates and indexes `entries`. Relative tensor paths are joined onto `base`.
    pub fn from_entries(
        dataset_id: impl Into<String>,
        mut entries: Vec<ManifestEntry>,
        base: Option<&Path>,
    ) -> Result<Self> {
        entries.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        for pair in entries.windows(2) {
            if pair[0].image_id == pair[1].image_id {
                return Err(Error::Manifest(format!("duplicate image_id {:?}", pair[0].image_id)));
            }
        }
        let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter_mut().enumerate() {
            if e.image_id.is_empty() {
                return Err(Error::Manifest("empty image_id".into()));
            }
            if e.class_label.is_empty() {
                return Err(Error::Manifest(format!("image {:?} has an empty class_label", e.image_id)));
            }
            for path in e.tensors.values_mut() {
                if let Some(base) = base {
                    if path.is_relative() {
                        *path = base.join(&*path);
                    }
                }
                if !path.exists() {
                    return Err(Error::Manifest(format!(
                        "missing tensor file {} for image {:?}",
                        path.display(),
                        e.image_id
                    )));
                }
            }
            classes.entry(e.class_label.clone()).or_default().push(i);
        }
        if classes.len() < 2 {
            return Err(Error::DegenerateGroundTruth(format!(
                "manifest has {} class(es), at least 2 are required",
                classes.len()
            )));
        }
        if let Some((label, members)) = classes.iter().find(|(_, m)| m.len() < 2) {
            return Err(Error::DegenerateGroundTruth(format!(
                "class {label:?} has {} image(s), at least 2 are required",
                members.len()
            )));
        }
        Ok(DatasetManifest {
            dataset_id: dataset_id.into(),
            entries,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn class_of(&self, image_id: &str) -> Option<&str> {
        self.entry(image_id).map(|e| e.class_label.as_str())
    }

    /// Class label → number of images with that label.
    pub fn class_counts(&self) -> BTreeMap<&str, usize> {
        self.classes.iter().map(|(k, v)| (k.as_str(), v.len())).collect()
    }

    /// Image ids sharing `class_label`.
    pub fn class_members(&self, class_label: &str) -> impl Iterator<Item = &str> {
        self.classes
            .get(class_label)
            .into_iter()
            .flatten()
            .map(|&i| self.entries[i].image_id.as_str())
    }

    /// Ground-truth set of a query: same-class images, the query itself excluded.
    pub fn ground_truth(&self, query_id: &str) -> HashSet<&str> {
        match self.class_of(query_id) {
            Some(label) => self.class_members(label).filter(|id| *id != query_id).collect(),
            None => HashSet::new(),
        }
    }

    /// Finds the tensor file for `scale_tag`, preferring a `layer/scale` key when present.
    pub fn tensor_path(&self, entry: &ManifestEntry, layer_id: &str, scale_tag: &str) -> Result<PathBuf> {
        let layered = format!("{layer_id}/{scale_tag}");
        entry
            .tensors
            .get(&layered)
            .or_else(|| entry.tensors.get(scale_tag))
            .cloned()
            .ok_or_else(|| {
                Error::Manifest(format!(
                    "image {:?} has no tensor for scale {scale_tag:?} (layer {layer_id:?})",
                    entry.image_id
                ))
            })
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    DatasetManifest::from_entries(file.dataset_id, file.entries, path.parent())
}

/// Writes a manifest in the on-disk JSON schema. Paths are written as given.
pub fn save_manifest(
    path: impl AsRef<Path>,
    dataset_id: &str,
    entries: &[ManifestEntry],
) -> Result<()> {
    let path = path.as_ref();
    let file = ManifestFile {
        dataset_id: dataset_id.to_string(),
        entries: entries.to_vec(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(dir: &Path, id: &str, class: &str) -> ManifestEntry {
        let file = dir.join(format!("{id}.rft"));
        fs::write(&file, b"").unwrap();
        ManifestEntry {
            image_id: id.into(),
            class_label: class.into(),
            tensors: BTreeMap::from([("full".to_string(), PathBuf::from(format!("{id}.rft")))]),
        }
    }

    #[test]
    fn loads_and_indexes_classes() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            entry(dir.path(), "d", "B"),
            entry(dir.path(), "a", "A"),
            entry(dir.path(), "c", "B"),
            entry(dir.path(), "b", "A"),
        ];
        let path = dir.path().join("m.json");
        save_manifest(&path, "toy", &entries).unwrap();
        let m = load_manifest(&path).unwrap();
        let ids: Vec<_> = m.entries.iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
        assert_eq!(m.class_counts(), BTreeMap::from([("A", 2), ("B", 2)]));
        assert_eq!(m.ground_truth("a"), HashSet::from(["b"]));
        assert!(m.entries[0].tensors["full"].is_absolute() || m.entries[0].tensors["full"].starts_with(dir.path()));

        // order on disk does not matter
        let mut reversed = entries.clone();
        reversed.reverse();
        save_manifest(&path, "toy", &reversed).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            entry(dir.path(), "a", "A"),
            entry(dir.path(), "a", "B"),
            entry(dir.path(), "b", "A"),
            entry(dir.path(), "c", "B"),
        ];
        let err = DatasetManifest::from_entries("x", entries, Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![entry(dir.path(), "a", "A"), entry(dir.path(), "b", "A")];
        let err = DatasetManifest::from_entries("x", entries, Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("degenerate ground truth"), "{err}");
    }

    #[test]
    fn singleton_class_is_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            entry(dir.path(), "a", "A"),
            entry(dir.path(), "b", "A"),
            entry(dir.path(), "c", "B"),
        ];
        assert!(matches!(
            DatasetManifest::from_entries("x", entries, Some(dir.path())),
            Err(Error::DegenerateGroundTruth(_))
        ));
    }

    #[test]
    fn missing_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = vec![
            entry(dir.path(), "a", "A"),
            entry(dir.path(), "b", "A"),
            entry(dir.path(), "c", "B"),
            entry(dir.path(), "d", "B"),
        ];
        entries[2].tensors.insert("scale2".into(), PathBuf::from("nope.rft"));
        let err = DatasetManifest::from_entries("x", entries, Some(dir.path())).unwrap_err();
        assert!(err.to_string().contains("missing tensor file"), "{err}");
    }

    #[test]
    fn layered_key_preferred() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = vec![
            entry(dir.path(), "a", "A"),
            entry(dir.path(), "b", "A"),
            entry(dir.path(), "c", "B"),
            entry(dir.path(), "d", "B"),
        ];
        fs::write(dir.path().join("a_fc7.rft"), b"").unwrap();
        entries[0].tensors.insert("fc7/full".into(), PathBuf::from("a_fc7.rft"));
        let m = DatasetManifest::from_entries("x", entries, Some(dir.path())).unwrap();
        let e = m.entry("a").unwrap();
        assert!(m.tensor_path(e, "fc7", "full").unwrap().ends_with("a_fc7.rft"));
        assert!(m.tensor_path(e, "conv5", "full").unwrap().ends_with("a.rft"));
        assert!(m.tensor_path(e, "conv5", "scale3").is_err());
    }
}
