//! SE(3) pose representation and closed-form rigid-transform estimation
//! from 3D point correspondences.

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};

use crate::{Error, Result};

/// Rigid transform from the camera frame to the map frame.
///
/// Stored as a unit quaternion plus translation; the quaternion is
/// renormalized on construction so composition chains stay on the manifold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        // Renormalize: long composition chains drift off the unit sphere.
        let q = UnitQuaternion::new_normalize(*rotation.quaternion());
        Pose {
            rotation: q,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from the wire order `tx ty tz qw qx qy qz`.
    pub fn from_parts(t: [f64; 3], q_wxyz: [f64; 4]) -> Self {
        let q = nalgebra::Quaternion::new(q_wxyz[0], q_wxyz[1], q_wxyz[2], q_wxyz[3]);
        Pose::new(
            UnitQuaternion::new_normalize(q),
            Vector3::new(t[0], t[1], t[2]),
        )
    }

    /// Serializes to the wire order `tx ty tz qw qx qy qz`.
    pub fn to_parts(&self) -> ([f64; 3], [f64; 4]) {
        let q = self.rotation.quaternion();
        (
            [self.translation.x, self.translation.y, self.translation.z],
            [q.w, q.i, q.j, q.k],
        )
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
        }
    }

    /// Composition `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Rotation angle in radians between this pose's orientation and another's.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Euclidean distance between the two translations.
    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Angle in radians between corresponding frame axes (0 = x, 1 = y, 2 = z)
    /// of this pose and another. Used by the per-axis rotational error metrics.
    pub fn axis_angle_to(&self, other: &Pose, axis: usize) -> f64 {
        let e = match axis {
            0 => Vector3::x(),
            1 => Vector3::y(),
            _ => Vector3::z(),
        };
        let a = self.rotation * e;
        let b = other.rotation * e;
        a.dot(&b).clamp(-1.0, 1.0).acos()
    }
}

/// Applies the pose to a point: `R·p + t`.
pub fn transform_point(pose: &Pose, p: &Point3<f64>) -> Point3<f64> {
    Point3::from(pose.rotation() * p.coords + pose.translation())
}

/// An ordered set of finite 3D points, the carrier for correspondence
/// endpoints fed to the rigid fit.
#[derive(Clone, Debug, Default)]
pub struct PointSet3 {
    points: Vec<Point3<f64>>,
}

impl PointSet3 {
    pub fn from_points(points: Vec<Point3<f64>>) -> Result<Self> {
        for p in &points {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::DegenerateInput(format!(
                    "non-finite coordinate in point {p:?}"
                )));
            }
        }
        Ok(PointSet3 { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn as_slice(&self) -> &[Point3<f64>] {
        &self.points
    }
}

/// Relative spread below which the cross-covariance is treated as rank
/// deficient (collinear or coincident source points).
const DEGENERACY_RATIO: f64 = 1e-12;

/// Least-squares rigid transform mapping `src` onto `dst`.
///
/// Minimizes `Σ ‖R·srcᵢ + t − dstᵢ‖²` by centroid subtraction and SVD of the
/// cross-covariance, with the usual determinant sign correction so the
/// returned rotation is proper even for reflective noise configurations.
pub fn estimate_rigid_transform(src: &PointSet3, dst: &PointSet3) -> Result<Pose> {
    fit_rigid(src.as_slice(), dst.as_slice())
}

/// Slice-level rigid fit used on hot paths (RANSAC samples, clique refits).
pub fn fit_rigid(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<Pose> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            left: src.len(),
            right: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 point pairs, got {}",
            src.len()
        )));
    }

    let n = src.len() as f64;
    let mut centroid_src = Vector3::zeros();
    let mut centroid_dst = Vector3::zeros();
    for (s, d) in src.iter().zip(dst) {
        centroid_src += s.coords;
        centroid_dst += d.coords;
    }
    centroid_src /= n;
    centroid_dst /= n;

    // Cross-covariance H = Σ (dᵢ − d̄)(sᵢ − s̄)ᵀ, so that R ≈ H on clean data.
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let sc = s.coords - centroid_src;
        let dc = d.coords - centroid_dst;
        h += dc * sc.transpose();
    }

    let svd = h.svd(true, true);
    let sigma = &svd.singular_values;
    if sigma[0] <= 0.0 || sigma[1] < DEGENERACY_RATIO * sigma[0] {
        return Err(Error::DegenerateInput(
            "cross-covariance rank < 2 (collinear or coincident points)".into(),
        ));
    }
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");

    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;

    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = centroid_dst - r * centroid_src;
    Ok(Pose::new(rotation, translation))
}

/// Sum of squared residuals `Σ ‖pose(srcᵢ) − dstᵢ‖²`.
pub fn residual_sum_squares(pose: &Pose, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| (transform_point(pose, s) - d).norm_squared())
        .sum()
}

/// Root-mean-square residual of the fit over the given correspondences.
pub fn residual_rms(pose: &Pose, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
    if src.is_empty() {
        return 0.0;
    }
    (residual_sum_squares(pose, src, dst) / src.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn points(v: &[[f64; 3]]) -> PointSet3 {
        PointSet3::from_points(v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()).unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let axis = Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        let angle = rng.gen_range(-PI..PI);
        let rot = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        let t = Vector3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        Pose::new(rot, t)
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                )
            })
            .collect()
    }

    #[test]
    fn transform_point_identity() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&Pose::identity(), &p), p);
    }

    #[test]
    fn transform_point_half_turn_about_z() {
        let pose = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::z() * PI),
            Vector3::zeros(),
        );
        let q = transform_point(&pose, &Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(q.x, -1.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_point_quarter_turn_with_translation() {
        let pose = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::z() * FRAC_PI_2),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let q = transform_point(&pose, &Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(q.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(q.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pose_inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pose = random_pose(&mut rng);
            let back = pose.compose(&pose.inverse());
            assert!(back.rotation_angle_to(&Pose::identity()) < 1e-9);
            assert!(back.translation().norm() < 1e-9);
        }
    }

    #[test]
    fn rigid_fit_identity_case() {
        let tri = points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let pose = estimate_rigid_transform(&tri, &tri).unwrap();
        assert!(pose.rotation_angle_to(&Pose::identity()) < 1e-12);
        assert!(pose.translation().norm() < 1e-12);
    }

    #[test]
    fn rigid_fit_recovers_constructed_pose() {
        let src = points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let truth = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::z() * FRAC_PI_2),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let dst = PointSet3::from_points(
            src.as_slice()
                .iter()
                .map(|p| transform_point(&truth, p))
                .collect(),
        )
        .unwrap();
        let est = estimate_rigid_transform(&src, &dst).unwrap();
        assert!(est.rotation_angle_to(&truth) < 1e-12);
        assert!(est.translation_distance_to(&truth) < 1e-12);
    }

    #[test]
    fn rigid_fit_rejects_too_few_pairs() {
        let two = points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(matches!(
            estimate_rigid_transform(&two, &two),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn rigid_fit_rejects_collinear_sources() {
        let line = points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!(matches!(
            estimate_rigid_transform(&line, &line),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn point_set_rejects_non_finite() {
        assert!(PointSet3::from_points(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    /// Gradient-free coordinate-descent minimizer over (scaled-axis, t) used
    /// as an independent oracle for the noisy-fit residual. It never touches
    /// the SVD path.
    fn oracle_minimize(src: &[Point3<f64>], dst: &[Point3<f64>], start: &Pose) -> f64 {
        let mut params = {
            let axis = start.rotation().scaled_axis();
            let t = start.translation();
            [axis.x, axis.y, axis.z, t.x, t.y, t.z]
        };
        let eval = |p: &[f64; 6]| {
            let pose = Pose::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(p[0], p[1], p[2])),
                Vector3::new(p[3], p[4], p[5]),
            );
            residual_sum_squares(&pose, src, dst)
        };
        let mut best = eval(&params);
        let mut step = 0.1;
        while step > 1e-10 {
            let mut improved = false;
            for i in 0..6 {
                for sign in [-1.0, 1.0] {
                    let mut cand = params;
                    cand[i] += sign * step;
                    let val = eval(&cand);
                    if val < best {
                        best = val;
                        params = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best
    }

    #[test]
    fn noisy_fit_matches_numeric_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let truth = random_pose(&mut rng);
            let src = random_points(&mut rng, 10);
            let dst: Vec<_> = src
                .iter()
                .map(|p| {
                    let q = transform_point(&truth, p);
                    Point3::new(
                        q.x + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                        q.y + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                        q.z + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    )
                })
                .collect();

            let est = fit_rigid(&src, &dst).unwrap();
            let closed_form_rms = residual_rms(&est, &src, &dst);

            // Start the oracle from a perturbed truth so it converges to the
            // same basin without being handed the answer.
            let start = Pose::new(
                truth.rotation()
                    * UnitQuaternion::from_scaled_axis(Vector3::new(0.05, -0.03, 0.02)),
                truth.translation() + Vector3::new(0.05, -0.05, 0.02),
            );
            let oracle_rms = (oracle_minimize(&src, &dst, &start) / src.len() as f64).sqrt();

            assert!(
                (closed_form_rms - oracle_rms).abs() <= 0.1 * oracle_rms.max(1e-12),
                "closed-form rms {closed_form_rms} vs oracle {oracle_rms}"
            );
        }
    }

    #[test]
    fn round_trip_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let truth = random_pose(&mut rng);
            let n = rng.gen_range(3..12);
            let src = random_points(&mut rng, n);
            let dst: Vec<_> = src.iter().map(|p| transform_point(&truth, p)).collect();
            match fit_rigid(&src, &dst) {
                Ok(est) => {
                    assert!(est.rotation_angle_to(&truth) < 1e-9);
                    assert!(est.translation_distance_to(&truth) < 1e-9);
                }
                // Random triples are occasionally near-collinear.
                Err(Error::DegenerateInput(_)) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn left_invariance_of_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let src = random_points(&mut rng, 8);
        let truth = random_pose(&mut rng);
        let dst: Vec<_> = src
            .iter()
            .map(|p| {
                let q = transform_point(&truth, p);
                Point3::new(q.x + 0.02, q.y - 0.01, q.z + 0.015)
            })
            .collect();
        let base = fit_rigid(&src, &dst).unwrap();
        let base_res = residual_sum_squares(&base, &src, &dst);

        let q = random_pose(&mut rng);
        let src_q: Vec<_> = src.iter().map(|p| transform_point(&q, p)).collect();
        let dst_q: Vec<_> = dst.iter().map(|p| transform_point(&q, p)).collect();
        let moved = fit_rigid(&src_q, &dst_q).unwrap();
        let moved_res = residual_sum_squares(&moved, &src_q, &dst_q);

        assert!((base_res - moved_res).abs() < 1e-9);
    }

    #[test]
    fn fit_is_local_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let src = random_points(&mut rng, 12);
        let truth = random_pose(&mut rng);
        let dst: Vec<_> = src
            .iter()
            .map(|p| {
                let q = transform_point(&truth, p);
                Point3::new(
                    q.x + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    q.y + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    q.z + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                )
            })
            .collect();
        let est = fit_rigid(&src, &dst).unwrap();
        let base = residual_sum_squares(&est, &src, &dst);
        for _ in 0..100 {
            let twist = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let (rot_part, trans_part) = (twist * 1e-3, {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                v.normalize() * 1e-3
            });
            let perturbed = Pose::new(
                UnitQuaternion::from_scaled_axis(rot_part) * est.rotation(),
                est.translation() + trans_part,
            );
            assert!(residual_sum_squares(&perturbed, &src, &dst) + 1e-15 >= base);
        }
    }

    #[test]
    fn rotation_stays_proper_under_reflective_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for _ in 0..50 {
            // Nearly planar sets with heavy noise push the naive solution
            // toward a reflection.
            let src: Vec<_> = (0..6)
                .map(|_| {
                    Point3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.01..0.01),
                    )
                })
                .collect();
            let dst: Vec<_> = src
                .iter()
                .map(|p| {
                    Point3::new(
                        p.x + rng.gen_range(-0.5..0.5),
                        p.y + rng.gen_range(-0.5..0.5),
                        -p.z + rng.gen_range(-0.5..0.5),
                    )
                })
                .collect();
            if let Ok(pose) = fit_rigid(&src, &dst) {
                let det = pose.rotation().to_rotation_matrix().matrix().determinant();
                assert_relative_eq!(det, 1.0, epsilon = 1e-9);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn prop_compose_inverse_is_identity(
            qw in -1.0f64..1.0, qx in -1.0f64..1.0, qy in -1.0f64..1.0, qz in -1.0f64..1.0,
            tx in -50.0f64..50.0, ty in -50.0f64..50.0, tz in -50.0f64..50.0,
        ) {
            proptest::prop_assume!(qw * qw + qx * qx + qy * qy + qz * qz > 1e-6);
            let pose = Pose::from_parts([tx, ty, tz], [qw, qx, qy, qz]);
            let back = pose.compose(&pose.inverse());
            proptest::prop_assert!(back.rotation_angle_to(&Pose::identity()) < 1e-9);
            proptest::prop_assert!(back.translation().norm() < 1e-9);
        }

        #[test]
        fn prop_transform_preserves_distances(
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, tz in -10.0f64..10.0,
            ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0,
            px in -5.0f64..5.0, py in -5.0f64..5.0, pz in -5.0f64..5.0,
            qx in -5.0f64..5.0, qy in -5.0f64..5.0, qz in -5.0f64..5.0,
        ) {
            let pose = Pose::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(ax, ay, az)),
                Vector3::new(tx, ty, tz),
            );
            let p = Point3::new(px, py, pz);
            let q = Point3::new(qx, qy, qz);
            let before = (p - q).norm();
            let after = (transform_point(&pose, &p) - transform_point(&pose, &q)).norm();
            proptest::prop_assert!((before - after).abs() < 1e-9);
        }
    }

    #[test]
    fn pose_wire_order_round_trip() {
        let pose = Pose::from_parts([1.5, -2.0, 0.25], [0.9, 0.1, -0.2, 0.3]);
        let (t, q) = pose.to_parts();
        let again = Pose::from_parts(t, q);
        assert!(pose.rotation_angle_to(&again) < 1e-12);
        assert!(pose.translation_distance_to(&again) < 1e-12);
        // Quaternion comes back unit-norm even though the input was not.
        let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-9);
    }
}
