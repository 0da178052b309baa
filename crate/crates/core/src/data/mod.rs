//! Scene directories, image files and the synthetic flat-or-edge generator.

mod dataset;
mod io;
mod synthetic;

pub use dataset::{
    load_dataset, load_frames, load_scene, read_manifest, sample_training_patches, write_manifest, write_scene, Dataset, Frame,
    LoadedFrames, SceneRecord, MANIFEST_FILE, TRAIN_PATCH_CAP, TRAIN_STRIDE,
};
pub use io::{
    image_dimensions, read_disparity, read_mask, read_pfm, read_png_gray, sidecar_path, write_disparity_png, write_mask, write_pfm,
    write_png16, DisparityMeta,
};
pub use synthetic::{
    corrupt_image, generate_synthetic, generate_synthetic_image, pair_values, EdgeGeometry, SyntheticImage, SyntheticImageSpec, SyntheticPair,
    SyntheticSpec,
};
