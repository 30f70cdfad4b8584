use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GeometryError, PointSet};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct RigidTransform<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` about `axis`, then translation.
    pub fn from_axis_angle(axis: Vector3<T>, angle: T, translation: Vector3<T>) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self {
            rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
            translation,
        }
    }

    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Self) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> T {
        let c = (self.rotation.trace() - T::one()) / T::of(2.0);
        c.clamp(-T::one(), T::one()).acos()
    }

    /// Orthonormal with determinant +1, within `tol`.
    pub fn is_proper(&self, tol: T) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        ortho <= tol && (self.rotation.determinant() - T::one()).abs() <= tol
    }
}

/// Least-squares rigid alignment of paired points (orthogonal Procrustes
/// with reflection correction). Needs at least 3 pairs.
pub fn kabsch<T: Real>(src: &[Point3<T>], dst: &[Point3<T>]) -> Option<RigidTransform<T>> {
    assert_eq!(src.len(), dst.len());
    if src.len() < 3 {
        return None;
    }
    let n = T::of_usize(src.len());
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s.coords - cs) * (d.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let mut fix = Matrix3::identity();
    if d < T::zero() {
        fix[(2, 2)] = -T::one();
    }
    let rotation = v * fix * u.transpose();
    if !rotation.iter().all(|x| x.is_finite()) {
        return None;
    }
    Some(RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration<T: Real> {
    pub transform: RigidTransform<T>,
    /// Consensus size over correspondence count.
    pub inlier_fraction: T,
    /// Per-correspondence consensus flag.
    pub inliers: Vec<bool>,
}

/// RANSAC rigid registration over index correspondences `(src_i, dst_i)`.
///
/// Minimal 3-pair samples are scored by the count of pairs with
/// `|T src - dst| < inlier_dist`; the best consensus is refit by least
/// squares until it stops changing.
pub fn register_rigid_ransac<T: Real, R: Rng + ?Sized>(
    src: &PointSet<T>,
    dst: &PointSet<T>,
    correspondences: &[(usize, usize)],
    iters: usize,
    inlier_dist: T,
    rng: &mut R,
) -> Result<Registration<T>, GeometryError> {
    let n = correspondences.len();
    if n < 3 {
        return Err(GeometryError::Underdetermined(n));
    }
    if correspondences
        .iter()
        .any(|&(i, j)| i >= src.len() || j >= dst.len())
    {
        return Err(GeometryError::BadCorrespondence);
    }
    let a: Vec<Point3<T>> = correspondences
        .iter()
        .map(|&(i, _)| src.points()[i])
        .collect();
    let b: Vec<Point3<T>> = correspondences
        .iter()
        .map(|&(_, j)| dst.points()[j])
        .collect();
    let consensus = |t: &RigidTransform<T>| -> Vec<bool> {
        a.iter()
            .zip(&b)
            .map(|(p, q)| (t.apply(p) - q).norm() < inlier_dist)
            .collect()
    };
    let count = |flags: &[bool]| flags.iter().filter(|&&f| f).count();

    let mut best: Option<(RigidTransform<T>, Vec<bool>)> = None;
    let mut best_count = 0;
    for _ in 0..iters.max(1) {
        let idx = sample(rng, n, 3);
        let s: Vec<Point3<T>> = idx.iter().map(|k| a[k]).collect();
        let d: Vec<Point3<T>> = idx.iter().map(|k| b[k]).collect();
        let Some(t) = kabsch(&s, &d) else { continue };
        let flags = consensus(&t);
        let c = count(&flags);
        if best.is_none() || c > best_count {
            best_count = c;
            best = Some((t, flags));
        }
    }
    let (mut transform, mut flags) = best.unwrap_or_else(|| {
        let t = kabsch(&a, &b).unwrap_or_else(RigidTransform::identity);
        let f = consensus(&t);
        (t, f)
    });

    for _ in 0..8 {
        if count(&flags) < 3 {
            break;
        }
        let s: Vec<Point3<T>> = a
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(p, _)| *p)
            .collect();
        let d: Vec<Point3<T>> = b
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(p, _)| *p)
            .collect();
        let Some(refit) = kabsch(&s, &d) else { break };
        let next = consensus(&refit);
        if count(&next) < count(&flags) {
            // keep the refit on the larger set; its own consensus shrank
            transform = refit;
            break;
        }
        let stable = next == flags;
        transform = refit;
        flags = next;
        if stable {
            break;
        }
    }
    let inlier_fraction = T::of_usize(count(&flags)) / T::of_usize(n);
    Ok(Registration {
        transform,
        inlier_fraction,
        inliers: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(0.0..0.05),
                )
            })
            .collect()
    }

    fn identity_pairs(n: usize) -> Vec<(usize, usize)> {
        (0..n).map(|i| (i, i)).collect()
    }

    #[test]
    fn identity_registration() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = random_cloud(&mut rng, 50);
        let set = PointSet::new(pts).unwrap();
        let reg =
            register_rigid_ransac(&set, &set, &identity_pairs(50), 32, 1e-4, &mut rng).unwrap();
        assert_eq!(reg.inlier_fraction, 1.0);
        assert!((reg.transform.rotation - Matrix3::identity()).norm() < 1e-9);
        assert!(reg.transform.translation.norm() < 1e-12);
    }

    #[test]
    fn known_motion_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_cloud(&mut rng, 60);
        let t = RigidTransform::from_axis_angle(
            Vector3::new(0.3, -0.2, 1.0),
            0.7,
            Vector3::new(0.05, -0.02, 0.01),
        );
        let src = PointSet::new(pts).unwrap();
        let dst = src.transformed(&t);
        let reg =
            register_rigid_ransac(&src, &dst, &identity_pairs(60), 64, 1e-4, &mut rng).unwrap();
        assert_eq!(reg.inlier_fraction, 1.0);
        assert!((reg.transform.rotation - t.rotation).norm() < 1e-6);
        assert!((reg.transform.translation - t.translation).norm() < 1e-6);
        assert!(reg.transform.is_proper(1e-9));
    }

    #[test]
    fn split_motion_reports_majority_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_cloud(&mut rng, 100);
        let src = PointSet::new(pts.clone()).unwrap();
        let moved: Vec<Point3<f64>> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i < 60 {
                    p + Vector3::new(0.05, 0.0, 0.0)
                } else {
                    p + Vector3::new(0.0, 0.08, 0.0)
                }
            })
            .collect();
        let dst = PointSet::new(moved).unwrap();
        let reg =
            register_rigid_ransac(&src, &dst, &identity_pairs(100), 256, 0.003, &mut rng).unwrap();
        assert!((reg.inlier_fraction - 0.6).abs() < 1e-12);
    }

    #[test]
    fn underdetermined() {
        let set = PointSet::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let err = register_rigid_ransac(
            &set,
            &set,
            &identity_pairs(2),
            8,
            0.1,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(err.unwrap_err(), GeometryError::Underdetermined(2));
    }

    #[test]
    fn coplanar_points_align() {
        // top surfaces are flat; planar motion must still be exact
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3<f64>> = (0..40)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                    0.03,
                )
            })
            .collect();
        let t = RigidTransform::from_axis_angle(Vector3::z(), 0.2, Vector3::new(0.01, 0.02, 0.0));
        let src = PointSet::new(pts).unwrap();
        let dst = src.transformed(&t);
        let aligned = kabsch(src.points(), dst.points()).unwrap();
        assert!((aligned.rotation - t.rotation).norm() < 1e-9);
        assert!(aligned.is_proper(1e-9));
    }

    #[test]
    fn compose_inverse_and_angle() {
        let t =
            RigidTransform::<f64>::from_axis_angle(Vector3::x(), 0.4, Vector3::new(1.0, 2.0, 3.0));
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        assert!((t.angle() - 0.4).abs() < 1e-12);
    }
}
