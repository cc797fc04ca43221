// Validators use negated comparisons so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod color;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod hbb;
pub mod pipeline;
pub mod raster;
pub mod regions;
pub mod segmentation;
mod textfmt;

pub use error::{Error, Result};
pub use eval::{DetectionSet, GroundTruthSet};
pub use hbb::Hbb;
pub use pipeline::{Mode, PipelineConfig};
pub use raster::{HeightRaster, RgbRaster};
