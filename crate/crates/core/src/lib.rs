//! Temporal consistency for re-rendered video.
//!
//! Stage I aligns per-frame exposure with affine color embeddings. Stage II
//! collapses pixels that track the same surface point into a Unique Video
//! Tensor and optimizes its colors under warp, SSIM and TV terms.

pub mod config;
pub mod error;
pub mod exposure;
pub mod frame;
pub mod mask;
pub mod media_io;
pub mod metrics;
pub mod noise;
pub mod objectives;
pub mod pipeline;
pub mod uvt;
pub mod warp;

pub use config::PipelineConfig;
pub use error::{Error, ErrorKind, Result};
pub use frame::{BoolMap, Frame, Plane, VideoVolume};
