//! Normalization, PCA and distance metrics.

pub mod distance;
pub mod norm;
pub mod pca;

pub use distance::{distance, DistanceMetric};
pub use norm::{l2_norm, l2_normalize, l2_normalize_in_place};
pub use pca::{fit_pca, PcaModel};
