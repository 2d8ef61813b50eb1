//! Raster types and pixel-level mask operations shared by every stage.

mod color;
mod ops;
mod raster;
mod resize;
mod rle;

pub use ops::{
    bbox_of, centroid, connected_components, difference, dilate, intersection, iou, translate, union, union_all,
};
pub(crate) use ops::centroid_f64;
pub use color::rgb_to_hsv;
pub use raster::{BoundingBox, Frame, Keypoint, Mask};
pub use resize::{resize_frame, ResizeFilter};
pub use rle::{decode_rle, encode_rle, RleMask};
