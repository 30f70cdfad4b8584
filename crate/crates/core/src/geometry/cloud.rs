use std::collections::HashSet;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, RigidTransform};
use crate::mask::Mask;
use crate::num::Real;
use crate::scene::Observation;

/// 3-D points, optionally tagged with the linear pixel index each point was
/// read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct PointSet<T: Real> {
    points: Vec<Point3<T>>,
    pixels: Option<Vec<u32>>,
}

impl<T: Real> PointSet<T> {
    pub fn new(points: Vec<Point3<T>>) -> Result<Self, GeometryError> {
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            points,
            pixels: None,
        })
    }

    /// Points with pixel provenance; `pixels` must be as long as `points`.
    pub fn with_pixels(points: Vec<Point3<T>>, pixels: Vec<u32>) -> Result<Self, GeometryError> {
        assert_eq!(points.len(), pixels.len(), "one pixel per point");
        let mut set = Self::new(points)?;
        set.pixels = Some(pixels);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn pixels(&self) -> Option<&[u32]> {
        self.pixels.as_deref()
    }

    pub fn centroid(&self) -> Option<Point3<T>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / T::of_usize(self.points.len())))
    }

    /// Applies a rigid motion; pixel provenance is dropped since the moved
    /// points no longer sit on their source pixels.
    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            pixels: None,
        }
    }

    /// Concatenation of two sets without provenance.
    pub fn union(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Self {
            points,
            pixels: None,
        }
    }

    /// Keeps the first point that falls in each cubic cell of side `cell`.
    pub fn voxel_dedup(&self, cell: T) -> Self {
        assert!(cell > T::zero(), "cell size must be positive");
        let mut seen = HashSet::with_capacity(self.points.len());
        let mut points = Vec::with_capacity(self.points.len());
        let mut pixels = self.pixels.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            let key = [0, 1, 2].map(|k| (p[k] / cell).floor().to_i64().unwrap_or(i64::MAX));
            if seen.insert(key) {
                points.push(*p);
                if let (Some(out), Some(src)) = (pixels.as_mut(), self.pixels.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        Self { points, pixels }
    }
}

impl PointSet<f64> {
    /// The observation's cloud restricted to a mask, with provenance.
    pub fn from_mask(obs: &Observation, mask: &Mask) -> Self {
        let pixels: Vec<u32> = mask.indices().to_vec();
        let points = pixels
            .iter()
            .map(|&i| {
                let p = obs.cloud[i as usize];
                Point3::new(p[0], p[1], p[2])
            })
            .collect();
        Self {
            points,
            pixels: Some(pixels),
        }
    }

    /// The whole observation cloud with provenance.
    pub fn from_observation(obs: &Observation) -> Self {
        Self {
            points: obs
                .cloud
                .iter()
                .map(|p| Point3::new(p[0], p[1], p[2]))
                .collect(),
            pixels: Some((0..obs.cloud.len() as u32).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert_eq!(
            PointSet::new(vec![Point3::new(0.0, f64::NAN, 0.0)]),
            Err(GeometryError::NonFinite)
        );
    }

    #[test]
    fn voxel_dedup_collapses_cells() {
        let pts = vec![
            Point3::new(0.001f32, 0.001, 0.0),
            Point3::new(0.002, 0.003, 0.0),
            Point3::new(0.011, 0.0, 0.0),
        ];
        let set = PointSet::with_pixels(pts, vec![7, 8, 9]).unwrap();
        let d = set.voxel_dedup(0.005);
        assert_eq!(d.len(), 2);
        assert_eq!(d.pixels().unwrap(), &[7, 9]);
    }

    #[test]
    fn centroid_and_transform() {
        let set =
            PointSet::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)]).unwrap();
        assert_eq!(set.centroid().unwrap(), Point3::new(1.0, 0.0, 0.0));
        let t = RigidTransform::from_translation(nalgebra::Vector3::new(0.0, 1.0, 0.0));
        let moved = set.transformed(&t);
        assert_eq!(moved.points()[1], Point3::new(2.0, 1.0, 0.0));
        assert!(PointSet::<f64>::new(vec![]).unwrap().centroid().is_none());
    }
}
