//! Procedural synthetic classification datasets with pixel-exact primitive masks.

pub mod dataset;
pub mod glyph;
pub mod render;
pub mod spec;
pub mod texture;

pub use dataset::{
    derive_seed, generate_dataset, image_id, render_dataset_image, Dataset, GenerationSummary,
    Manifest,
};
pub use glyph::{Glyph, Placement};
pub use render::{render_image, render_with_presence, ImageRecord, PrimitiveInstance};
pub use spec::{builtin_specs, DatasetName, DatasetSpec, PlacementRule, PrimitiveSpec};
pub use texture::{Fill, Texture};
