//! Seeded synthetic feature tensors with controllable class structure.
//!
//! Every local descriptor is drawn around one of a few shared "word" centers
//! plus a per-class offset of that center. Images of a class share the offsets
//! and (optionally) a preference for one word.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{save_manifest, write_tensor, FeatureTensor, ManifestEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub scale_tag: String,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dataset_id: String,
    pub layer_id: String,
    pub classes: usize,
    pub images_per_class: usize,
    pub channels: usize,
    pub grids: Vec<Grid>,
    pub words: usize,
    /// Std of the shared word centers.
    pub word_scale: f64,
    /// Std of the per-class offset added to each word center.
    pub class_offset: f64,
    /// Std of the isotropic noise around a center.
    pub noise_std: f64,
    /// Extra weight of a class's preferred word in its images' word proportions.
    pub word_bias: f64,
    /// Constant added to every activation.
    pub shift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Well-separated Gaussian classes: one center per class, noise std 1.
    pub fn separated(classes: usize, images_per_class: usize, channels: usize, height: usize, width: usize, seed: u64) -> Self {
        SyntheticSpec {
            dataset_id: "synthetic".into(),
            layer_id: "synthetic".into(),
            classes,
            images_per_class,
            channels,
            grids: vec![Grid {
                scale_tag: "full".into(),
                height,
                width,
            }],
            words: 1,
            word_scale: 0.0,
            class_offset: 3.0,
            noise_std: 1.0,
            word_bias: 0.0,
            shift: 0.0,
            seed,
        }
    }

    /// Classes that share a vocabulary and differ mostly by small per-word offsets.
    pub fn shared_vocabulary(classes: usize, images_per_class: usize, channels: usize, words: usize, seed: u64) -> Self {
        SyntheticSpec {
            dataset_id: "synthetic-vocab".into(),
            words,
            word_scale: 4.0,
            class_offset: 0.8,
            noise_std: 0.7,
            word_bias: 0.3,
            ..Self::separated(classes, images_per_class, channels, 5, 5, seed)
        }
    }

    pub fn with_grids(mut self, grids: &[(&str, usize, usize)]) -> Self {
        self.grids = grids
            .iter()
            .map(|&(tag, height, width)| Grid {
                scale_tag: tag.into(),
                height,
                width,
            })
            .collect();
        self
    }

    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.images_per_class == 0 || self.channels == 0 || self.words == 0 {
            return Err(Error::InvalidArgument("synthetic dataset sizes must be positive".into()));
        }
        if self.grids.is_empty() || self.grids.iter().any(|g| g.height == 0 || g.width == 0) {
            return Err(Error::InvalidArgument("synthetic grids must be non-empty".into()));
        }
        for v in [self.word_scale, self.class_offset, self.noise_std, self.word_bias] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument("synthetic spreads must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn image_id(class: usize, i: usize) -> String {
        format!("c{class:02}_{i:03}")
    }

    pub fn class_label(class: usize) -> String {
        format!("class{class:02}")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub image_id: String,
    pub class_label: String,
    pub tensors: Vec<FeatureTensor>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    /// `class → word → center`, each of length `channels`.
    pub centers: Vec<Vec<Vec<f64>>>,
    pub images: Vec<SyntheticImage>,
}

impl SyntheticDataset {
    /// Smallest distance between the centers of two different classes for the same word.
    pub fn min_class_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.centers.len() {
            for b in a + 1..self.centers.len() {
                for w in 0..self.spec.words {
                    let d = self.centers[a][w]
                        .iter()
                        .zip(&self.centers[b][w])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    best = best.min(d);
                }
            }
        }
        best
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| d.sample(rng)).collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let l = spec.channels;
    let words: Vec<Vec<f64>> = (0..spec.words).map(|_| gaussian_vec(&mut rng, l, spec.word_scale)).collect();
    let centers: Vec<Vec<Vec<f64>>> = (0..spec.classes)
        .map(|_| {
            words
                .iter()
                .map(|w| {
                    let off = gaussian_vec(&mut rng, l, spec.class_offset);
                    w.iter().zip(off).map(|(a, b)| a + b + spec.shift).collect()
                })
                .collect()
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut images = Vec::with_capacity(spec.classes * spec.images_per_class);
    for (c, class_centers) in centers.iter().enumerate() {
        for i in 0..spec.images_per_class {
            let mut props: Vec<f64> = (0..spec.words).map(|_| rng.random::<f64>()).collect();
            props[c % spec.words] += spec.word_bias * spec.words as f64;
            let total: f64 = props.iter().sum();
            let image_id = SyntheticSpec::image_id(c, i);
            let mut tensors = Vec::with_capacity(spec.grids.len());
            for g in &spec.grids {
                let n = g.height * g.width;
                let mut data = vec![0f32; l * n];
                for p in 0..n {
                    let mut u = rng.random::<f64>() * total;
                    let mut w = 0;
                    while w + 1 < spec.words && u >= props[w] {
                        u -= props[w];
                        w += 1;
                    }
                    for (ch, mu) in class_centers[w].iter().enumerate() {
                        let v = if spec.noise_std > 0.0 { mu + noise.sample(&mut rng) } else { *mu };
                        data[ch * n + p] = v as f32;
                    }
                }
                tensors.push(FeatureTensor::new(
                    image_id.clone(),
                    spec.layer_id.clone(),
                    g.scale_tag.clone(),
                    (l, g.height, g.width),
                    data,
                )?);
            }
            images.push(SyntheticImage {
                image_id,
                class_label: SyntheticSpec::class_label(c),
                tensors,
            });
        }
    }
    Ok(SyntheticDataset {
        spec: spec.clone(),
        centers,
        images,
    })
}

/// Writes every tensor under `dir/tensors/` and a manifest with relative
/// paths at `dir/manifest.json`, which is returned.
pub fn write_dataset(data: &SyntheticDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let tensor_dir = dir.join("tensors");
    fs::create_dir_all(&tensor_dir).map_err(|e| Error::io(&tensor_dir, e))?;
    let mut entries = Vec::with_capacity(data.images.len());
    for img in &data.images {
        let mut tensors = BTreeMap::new();
        for t in &img.tensors {
            let rel = PathBuf::from("tensors").join(format!("{}_{}.rft", img.image_id, t.scale_tag));
            write_tensor(t, dir.join(&rel))?;
            tensors.insert(t.scale_tag.clone(), rel);
        }
        entries.push(ManifestEntry {
            image_id: img.image_id.clone(),
            class_label: img.class_label.clone(),
            tensors,
        });
    }
    let path = dir.join("manifest.json");
    save_manifest(&path, &data.spec.dataset_id, &entries)?;
    Ok(path)
}
