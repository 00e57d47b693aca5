//! Validation of concept extraction methods against ground-truth primitives.
//!
//! Concept masks are associated with primitive masks through a distance built
//! on the Euclidean distance transform, which keeps growing as masks drift
//! apart, where overlap scores saturate once masks stop intersecting.

pub mod association;
pub mod framework;
pub mod metrics;
pub mod studies;

pub use association::{
    associate, association_distance, image_pairs, importance_correctness,
    representation_correctness, AssociationAccumulator, AssociationMatrix, ConceptAlignment,
    ImagePairs,
};
pub use framework::{
    default_t_dst, overlay, pooled_correctness, validate_ce, ConceptRow, ConceptSource,
    CorrectnessReport, EcladConcepts, InMemoryConcepts, MaskDirConcepts, ValidationConfig,
    CSV_FILE, REPORT_FILE, T_DST_REFERENCE,
};
pub use metrics::{baseline_metrics, normalize_tcav, one_way_dst, two_way_dst, BaselineMetrics};
pub use studies::{
    offset_study, ring_mask, study_glyph, study_mask, surround_study, StudyRow, OFFSET_CENTER,
    RING_WIDTH, STUDY_FRAME, SURROUND_CENTER,
};
