//! File formats and synthetic data.

pub mod annotations;
pub mod pcd;
pub mod pgm;
pub mod synth;

use thiserror::Error;

use crate::geometry::{DepthImage, GeometryError, PointCloud, INVALID_DEPTH};

pub use annotations::{load_annotations, parse_annotations, save_annotations, AnnotationError, AnnotationRecord};
pub use pcd::{parse_pcd, write_pcd, PcdData, PcdError, PcdErrorKind};
pub use pgm::{Pgm, PgmError};
pub use synth::{generate_scene, GarmentClass, SyntheticScene, SyntheticSceneSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("cloud has no width/height layout")]
    Unorganized,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-pixel `z` of an organized cloud; invalid or non-positive points become
/// the sentinel.
pub fn cloud_to_depth(cloud: &PointCloud) -> Result<DepthImage, CloudError> {
    let (w, h) = cloud.organized.ok_or(CloudError::Unorganized)?;
    let data = cloud
        .points
        .iter()
        .zip(&cloud.valid)
        .map(|(p, &ok)| if ok && p.z.is_finite() && p.z > 0.0 { p.z } else { INVALID_DEPTH })
        .collect();
    Ok(DepthImage::new(w, h, data)?)
}
