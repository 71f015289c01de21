//! Codebook (k-means) and GMM training for the BoW, VLAD and IFK encoders.

pub mod gmm;
pub mod kmeans;

pub use gmm::{gmm_fit, gmm_posteriors, GmmFit, GmmModel, GmmParams, VARIANCE_FLOOR};
pub use kmeans::{kmeans_assign, kmeans_fit, Codebook, KMeansFit, KMeansParams};
