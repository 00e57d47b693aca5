//! Concept extraction with local aggregated descriptors, plus an automatic
//! validation framework for concept-extraction methods built on synthetic
//! datasets with ground-truth primitive masks.

pub mod eclad;
pub mod ectf;
pub mod edt;
pub mod error;
pub mod imageio;
pub mod net;
pub mod resize;
pub mod synth;
pub mod tensor;
pub mod validation;

pub use error::{Error, Result};
pub use resize::{upscale, UpscaleMode};
pub use tensor::{concat_channels, Field2, Mask2, Tensor3};
