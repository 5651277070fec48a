//! Image I/O, manifests, patch extraction and batching.

mod manifest;
mod patches;
mod png;

pub use self::png::{load_png, load_png16, load_png8, save_png16, save_png8};
pub use manifest::{
    load_pair, pair_directories, DatasetManifest, ImagePair, ManifestEntry, Pairing, Role,
};
pub use patches::{
    augment, crop_patches, crop_windows, make_lr, read_patch_cache, stack_batch, write_patch_cache,
    Batcher, CropWindow, Dihedral, PatchPair, PATCHES_PER_IMAGE, PATCH_SIZE, SR_SCALE,
};
