//! Concept extraction from local aggregated descriptors.
//!
//! Activation maps of several layers are upscaled to the input resolution and
//! concatenated into per-pixel descriptors. Minibatch k-means over those
//! descriptors yields concept centroids; a concept's mask in an image is the
//! set of pixels nearest to its centroid. Importance comes from the dot
//! product of aggregated gradients and descriptors, contrasted between images
//! of a class and the rest of the dataset.

pub mod concepts;
pub mod descriptor;
pub mod kmeans;
pub mod pipeline;
pub mod scoring;
pub mod source;

pub use concepts::{fit_concepts, render_examples, ConceptModel, FitConfig, Standardization};
pub use descriptor::{
    compute_descriptor, compute_gradient_field, pixel_sensitivity, select_layers, DescriptorField,
    GradientField, LayerInfo, Sensitivity,
};
pub use pipeline::{
    concept_id, localize_taps, run_eclad, select_images, stream_order, upsample_mask,
    write_localization, EcladConfig, EcladOutput, EcladReport, FieldBuilder, IMPORTANCES_FILE,
    REPORT_FILE,
};
pub use scoring::{
    image_sensitivity, relative_importance, score_concepts, ImageSensitivity, ImportanceReport,
};
pub use source::{
    acts_file_name, grads_file_name, write_tap_dir, NetTapSource, TapDirSource, TapSource,
};
