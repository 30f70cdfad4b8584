use nalgebra::{Matrix3, Point3, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GeometryError, PointSet};
use crate::num::Real;

/// Plane `normal · p = offset` with a unit normal pointing to `z >= 0`
/// (upwards for a table).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Plane<T: Real> {
    pub normal: Vector3<T>,
    pub offset: T,
}

impl<T: Real> Plane<T> {
    /// Plane through a point; `None` for a zero normal.
    pub fn from_point_normal(point: &Point3<T>, normal: Vector3<T>) -> Option<Self> {
        let n = normal.try_normalize(T::default_epsilon())?;
        let flip = n.z < T::zero()
            || (n.z == T::zero() && (n.y < T::zero() || (n.y == T::zero() && n.x < T::zero())));
        let n = if flip { -n } else { n };
        Some(Self {
            normal: n,
            offset: n.dot(&point.coords),
        })
    }

    /// Plane `z = height`.
    pub fn horizontal(height: T) -> Self {
        Self {
            normal: Vector3::z(),
            offset: height,
        }
    }

    fn through(a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let scale = (b - a).norm() * (c - a).norm();
        if n.norm() <= scale * T::of(1e-9) {
            return None;
        }
        Self::from_point_normal(a, n)
    }

    /// Positive above the plane.
    pub fn signed_distance(&self, p: &Point3<T>) -> T {
        self.normal.dot(&p.coords) - self.offset
    }

    /// Least-squares plane through the points (smallest principal axis).
    pub fn least_squares(points: &[Point3<T>]) -> Option<Self> {
        if points.len() < 3 {
            return None;
        }
        let n = T::of_usize(points.len());
        let mean = points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords)
            / n;
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p.coords - mean;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let mid = eig.eigenvalues[order[1]];
        let scale = eig.eigenvalues[order[2]];
        if mid <= scale * T::of(1e-12) {
            return None;
        }
        let normal = eig.eigenvectors.column(order[0]).into_owned();
        Self::from_point_normal(&Point3::from(mean), normal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit<T: Real> {
    pub plane: Plane<T>,
    /// Per-point inlier flag, aligned with the input cloud.
    pub inliers: Vec<bool>,
}

impl<T: Real> PlaneFit<T> {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// RANSAC plane fit over `iters` random 3-point samples.
///
/// The inlier set is the consensus of the best sample plane, so for a fixed
/// rng stream the count is monotone in `inlier_dist`; the returned plane is
/// the least-squares refit of that consensus.
pub fn fit_plane_ransac<T: Real, R: Rng + ?Sized>(
    cloud: &PointSet<T>,
    iters: usize,
    inlier_dist: T,
    rng: &mut R,
) -> Result<PlaneFit<T>, GeometryError> {
    let pts = cloud.points();
    if pts.len() < 3 {
        return Err(GeometryError::Degenerate("fewer than 3 points"));
    }
    if Plane::least_squares(pts).is_none() {
        return Err(GeometryError::Degenerate("all points collinear"));
    }
    let mut best: Option<(usize, Plane<T>)> = None;
    for _ in 0..iters.max(1) {
        let idx = sample(rng, pts.len(), 3);
        let Some(plane) =
            Plane::through(&pts[idx.index(0)], &pts[idx.index(1)], &pts[idx.index(2)])
        else {
            continue;
        };
        let count = pts
            .iter()
            .filter(|p| plane.signed_distance(p).abs() <= inlier_dist)
            .count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, plane));
        }
    }
    let plane = match best {
        Some((_, plane)) => plane,
        // every sample was collinear; fall back to the global fit
        None => Plane::least_squares(pts).expect("checked non-collinear above"),
    };
    let inliers: Vec<bool> = pts
        .iter()
        .map(|p| plane.signed_distance(p).abs() <= inlier_dist)
        .collect();
    let support: Vec<Point3<T>> = pts
        .iter()
        .zip(&inliers)
        .filter(|(_, &b)| b)
        .map(|(p, _)| *p)
        .collect();
    let plane = Plane::least_squares(&support).unwrap_or(plane);
    Ok(PlaneFit { plane, inliers })
}
