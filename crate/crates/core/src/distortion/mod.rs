//! Synthetic degradations and the 63×63 / stride-53 tiling protocol.

pub mod blur;
pub mod dataset;
pub mod dct;
pub mod noise;
pub mod scene;
pub mod tiling;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use dataset::{degrade_image, make_dataset, Dataset, DegradationSpec, NoiseKind, NoiseSpec, Sample, SampleMeta};
pub use dct::{dct_compress, quant_table};
pub use noise::{apply_noise, noise_map_linear, noise_map_peaks, noise_map_uniform, SigmaMap};
pub use scene::scene;
pub use tiling::{
    anchors, default_stride, extract_patches, extract_patches_with, merge_patches, PatchGrid, PATCH, STRIDE,
};
