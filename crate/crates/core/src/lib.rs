//! Task-focused visual transform for robot camera streams.
//!
//! Each frame is reduced to the robot gripper and the task-relevant
//! objects, recomposed onto a fixed virtual background. Targets are found
//! once on the first frame of an episode through pluggable detector,
//! segmenter and annotator backends, then propagated frame to frame.
//!
//! The same transform runs in three places:
//!
//! - in-process, through [`recompose::MaskingSession`];
//! - over recorded episodes, through [`dataset::transform_dataset`];
//! - over the network, through the streaming [`service`].
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod backend;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod init;
pub mod mask;
pub mod recompose;
pub mod service;
pub mod synth;
pub mod tracker;
pub mod wire;

pub use error::{Error, Result};
pub use mask::{BoundingBox, Frame, Keypoint, Mask, RleMask};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
