//! Deficiency-aware masked transformer for image and video inpainting.
//!
//! Only tokens whose grid cell holds at least one unmasked pixel take part
//! in self-attention. A sliding-window mask activation rule grows the valid
//! region layer by layer, a large-kernel convolutional contextualizer fills
//! newly activated cells, and a masked feature-matching loss transfers an
//! image-inpainting prior into a video model.

pub mod dmt;
pub mod error;
pub mod init;
pub mod masking;
pub mod numerics;
pub mod pipeline;
pub mod training;

pub use error::{CheckpointError, Error, Result};
