//! Mask overlap ratios, point sets, plane estimation and rigid registration.

mod cloud;
mod plane;
mod registration;

use thiserror::Error;

pub use cloud::PointSet;
pub use plane::{fit_plane_ransac, Plane, PlaneFit};
pub use registration::{kabsch, register_rigid_ransac, Registration, RigidTransform};

use crate::mask::{Mask, MaskError};
use crate::num::Real;
use crate::scene::Observation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("underdetermined: {0} correspondences, need at least 3")]
    Underdetermined(usize),
    #[error("degenerate point set: {0}")]
    Degenerate(&'static str),
    #[error("non-finite point coordinate")]
    NonFinite,
    #[error("correspondence index out of range")]
    BadCorrespondence,
}

fn check_pair(a: &Mask, b: &Mask) -> Result<(), MaskError> {
    if a.dims() != b.dims() {
        return Err(MaskError::GridMismatch(a.dims(), b.dims()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(MaskError::EmptyMask);
    }
    Ok(())
}

/// Intersection over union.
pub fn mask_iou<T: Real>(a: &Mask, b: &Mask) -> Result<T, MaskError> {
    check_pair(a, b)?;
    let inter = a.intersection_count(b);
    Ok(T::of_usize(inter) / T::of_usize(a.len() + b.len() - inter))
}

/// Intersection over the smaller of the two masks.
pub fn mask_iom<T: Real>(a: &Mask, b: &Mask) -> Result<T, MaskError> {
    check_pair(a, b)?;
    Ok(T::of_usize(a.intersection_count(b)) / T::of_usize(a.len().min(b.len())))
}

/// A mask is degenerate when its points rise less than `thickness` above
/// the support plane (flat things such as labels or table patches).
pub fn is_degenerate(mask: &Mask, obs: &Observation, plane: &Plane<f64>, thickness: f64) -> bool {
    let top = mask
        .indices()
        .iter()
        .map(|&i| {
            let p = obs.cloud[i as usize];
            plane.signed_distance(&nalgebra::Point3::new(p[0], p[1], p[2]))
        })
        .fold(0.0f64, f64::max);
    top < thickness
}
