//! Fixtures shared by the benches.

use cnnret::aggregation::{FeatureMap, PreL2};
use cnnret::store::FeatureTensor;
use cnnret::synthetic::{generate, SyntheticSpec};
use ndarray::{concatenate, Array2, ArrayView2, Axis};

/// Conv tensors from the shared-vocabulary generator, one per image.
pub fn conv_tensors(images: usize, channels: usize, side: usize, seed: u64) -> Vec<FeatureTensor> {
    let classes = 4;
    let spec = SyntheticSpec::shared_vocabulary(classes, images.div_ceil(classes), channels, 8, seed)
        .with_grids(&[("full", side, side)]);
    generate(&spec)
        .expect("valid synthetic spec")
        .images
        .into_iter()
        .flat_map(|im| im.tensors)
        .take(images)
        .collect()
}

/// All L2-normalized local descriptors of `tensors`, stacked row-wise.
pub fn local_descriptors(tensors: &[FeatureTensor]) -> Array2<f64> {
    let maps: Vec<FeatureMap> = tensors
        .iter()
        .map(|t| FeatureMap::prepare(t, PreL2::Descriptor).expect("finite tensor"))
        .collect();
    let views: Vec<ArrayView2<f64>> = maps.iter().map(FeatureMap::descriptors).collect();
    concatenate(Axis(0), &views).expect("equal channel counts")
}
