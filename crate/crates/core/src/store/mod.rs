//! On-disk formats: feature tensors, dataset manifests and model archives.

pub mod archive;
pub mod manifest;
pub mod tensor;

pub use archive::{ArchiveMeta, ModelArchive, ModelKind, TrainingFingerprint};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, ManifestEntry};
pub use tensor::{read_tensor, read_tensor_shape, write_tensor, FeatureTensor};
