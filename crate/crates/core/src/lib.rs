//! Grasp-point detection for garment unfolding from single depth images.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: depth images, back-projection, normal estimation, voxel grids.
//! - [`wrinkle`]: normal-orientation entropy, multiscale vesselness, peak
//!   extraction and roughness indices.
//! - [`descriptors`]: viewpoint feature histograms and the k-NN key-part
//!   classifier.
//! - [`contours`]: active contours and the mask geometry used by grasp selection.
//! - [`pipeline`]: key-part recognition and neck/waist grasp-point selection.
//! - [`io`]: PCD and PGM files, annotation records, synthetic scenes.
//! - [`eval`]: IoU matching, recall and confusion-matrix reporting.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contours;
pub mod descriptors;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod wrinkle;

mod filter;

pub use contours::{Contour, Mask, SnakeParams};
pub use descriptors::{Classification, GarmentLabel, KnnModel, VfhDescriptor};
pub use geometry::{CameraIntrinsics, DepthImage, NormalMap, Pixel, PointCloud, SphericalNormal};
pub use pipeline::{DetectError, GraspResult, KeyPartDetection, PipelineConfig};
pub use wrinkle::{EntropyMap, PeakList, ScalarMap, VesselnessMap, VesselnessParams};
