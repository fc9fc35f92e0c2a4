//! Core geometric types: rigid poses, the three correspondence kinds, their
//! residuals, the unified residual form and the squared-residual cost.
//!
//! Conventions: positions are in meters, reported angles in degrees. A
//! correspondence relates a point `x` in frame 1 to geometry observed in
//! frame 2; a pose `(R, t)` maps frame 1 into frame 2 via `R x + t`.

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Per-entry tolerance for accepting `R Rᵀ = I` and `det R = 1`.
pub const ROTATION_TOL: f64 = 1e-9;
/// Unit vectors are renormalized when within this distance of unit norm,
/// rejected otherwise.
pub const UNIT_NORM_SLACK: f64 = 1e-6;

fn finite3(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Normalizes `v` if it is within [`UNIT_NORM_SLACK`] of unit length.
fn checked_unit(v: Vec3, what: &str) -> Result<Vec3> {
    if !finite3(&v) {
        return Err(Error::InvalidGeometry(format!("{what} has non-finite components")));
    }
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_NORM_SLACK {
        return Err(Error::InvalidGeometry(format!("{what} norm {n} is not within {UNIT_NORM_SLACK} of 1")));
    }
    Ok(v / n)
}

/// A rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    /// Builds a pose, verifying the rotation is orthonormal with unit
    /// determinant within [`ROTATION_TOL`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.iter().all(|x| x.is_finite()) || !finite3(&translation) {
            return Err(Error::InvalidGeometry("pose has non-finite entries".into()));
        }
        let ortho = rotation * rotation.transpose() - Mat3::identity();
        if ortho.iter().any(|x| x.abs() > ROTATION_TOL) {
            return Err(Error::InvalidGeometry("rotation is not orthonormal".into()));
        }
        if (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidGeometry("rotation determinant is not 1".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// Builds a pose without validation. The caller guarantees `rotation`
    /// is a proper rotation.
    pub fn new_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    /// Maps a frame-1 point into frame 2.
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }
}

/// A point `x` in frame 1 matched to a plane in frame 2 given by unit
/// normal `n` and a point `y` on the plane.
#[derive(Debug, Clone, Copy)]
pub struct PointToPlane {
    pub x: Vec3,
    pub n: Vec3,
    pub y: Vec3,
}

impl PointToPlane {
    pub fn new(x: Vec3, n: Vec3, y: Vec3) -> Result<Self> {
        if !finite3(&x) || !finite3(&y) {
            return Err(Error::InvalidGeometry("plane correspondence has non-finite points".into()));
        }
        Ok(Self { x, n: checked_unit(n, "plane normal")?, y })
    }

    /// Signed distance of the transformed point to the plane.
    pub fn residual(&self, pose: &Pose) -> f64 {
        self.n.dot(&(pose.apply(&self.x) - self.y))
    }
}

/// A point `x` in frame 1 matched to a line in frame 2 given by unit
/// direction `d` and a point `y` on the line.
#[derive(Debug, Clone, Copy)]
pub struct PointToLine {
    pub x: Vec3,
    pub d: Vec3,
    pub y: Vec3,
}

impl PointToLine {
    pub fn new(x: Vec3, d: Vec3, y: Vec3) -> Result<Self> {
        if !finite3(&x) || !finite3(&y) {
            return Err(Error::InvalidGeometry("line correspondence has non-finite points".into()));
        }
        Ok(Self { x, d: checked_unit(d, "line direction")?, y })
    }

    /// Perpendicular offset of the transformed point from the line.
    pub fn residual(&self, pose: &Pose) -> Vec3 {
        let v = pose.apply(&self.x) - self.y;
        v - self.d * self.d.dot(&v)
    }
}

/// A point `x` in frame 1 matched to a point `y` in frame 2.
#[derive(Debug, Clone, Copy)]
pub struct PointToPoint {
    pub x: Vec3,
    pub y: Vec3,
}

impl PointToPoint {
    pub fn new(x: Vec3, y: Vec3) -> Result<Self> {
        if !finite3(&x) || !finite3(&y) {
            return Err(Error::InvalidGeometry("point correspondence has non-finite points".into()));
        }
        Ok(Self { x, y })
    }

    pub fn residual(&self, pose: &Pose) -> Vec3 {
        pose.apply(&self.x) - self.y
    }
}

/// A mixed set of correspondences, the solver input.
#[derive(Debug, Clone, Default)]
pub struct CorrespondenceSet {
    pub planes: Vec<PointToPlane>,
    pub lines: Vec<PointToLine>,
    pub points: Vec<PointToPoint>,
}

impl CorrespondenceSet {
    pub fn new(planes: Vec<PointToPlane>, lines: Vec<PointToLine>, points: Vec<PointToPoint>) -> Self {
        Self { planes, lines, points }
    }

    /// Constraint-weighted tally: a plane pins 1 DoF, a line 2, a point 3.
    pub fn effective_count(&self) -> usize {
        self.planes.len() + 2 * self.lines.len() + 3 * self.points.len()
    }

    pub fn element_count(&self) -> usize {
        self.planes.len() + self.lines.len() + self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_count() == 0
    }

    /// Flattens every correspondence into scalar residual rows of the form
    /// `aᵀ R b + aᵀ t + c`. Order is fixed: one row per plane, then three
    /// rows per line (rows of `I − d dᵀ` in order), then three rows per
    /// point (rows of `I₃`).
    pub fn general_rows(&self) -> Vec<GeneralResidual> {
        let mut rows = Vec::with_capacity(self.planes.len() + 3 * self.lines.len() + 3 * self.points.len());
        for p in &self.planes {
            rows.push(GeneralResidual { a: p.n, b: p.x, c: -p.n.dot(&p.y) });
        }
        for l in &self.lines {
            let proj = Mat3::identity() - l.d * l.d.transpose();
            for i in 0..3 {
                let a = Vec3::new(proj[(i, 0)], proj[(i, 1)], proj[(i, 2)]);
                rows.push(GeneralResidual { a, b: l.x, c: -a.dot(&l.y) });
            }
        }
        for p in &self.points {
            for i in 0..3 {
                let a = Vec3::ith_axis(i).into_inner();
                rows.push(GeneralResidual { a, b: p.x, c: -p.y[i] });
            }
        }
        rows
    }

    /// Sum of squared residuals over all correspondences.
    pub fn cost(&self, pose: &Pose) -> f64 {
        let mut c = 0.0;
        for p in &self.planes {
            let r = p.residual(pose);
            c += r * r;
        }
        for l in &self.lines {
            c += l.residual(pose).norm_squared();
        }
        for p in &self.points {
            c += p.residual(pose).norm_squared();
        }
        c
    }
}

/// One scalar residual row `aᵀ R b + aᵀ t + c`; every correspondence kind
/// reduces to rows of this shape.
#[derive(Debug, Clone, Copy)]
pub struct GeneralResidual {
    pub a: Vec3,
    pub b: Vec3,
    pub c: f64,
}

impl GeneralResidual {
    pub fn eval(&self, pose: &Pose) -> f64 {
        self.a.dot(&(pose.rotation * self.b)) + self.a.dot(&pose.translation) + self.c
    }
}

/// Angle of the relative rotation `R_gtᵀ R_est` in degrees, in [0, 180].
///
/// Uses `atan2` of the skew part against the trace so that sub-microdegree
/// errors stay resolvable.
pub fn rotation_error_deg(r_est: &Mat3, r_gt: &Mat3) -> f64 {
    let rel = r_gt.transpose() * r_est;
    let skew = Vec3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = 0.5 * skew.norm();
    let cos = 0.5 * (rel.trace() - 1.0);
    sin.atan2(cos).to_degrees().abs()
}

/// Relative translation error `‖t_gt − t_est‖ / ‖t_gt‖`.
pub fn translation_error_rel(t_est: &Vec3, t_gt: &Vec3) -> Result<f64> {
    let n = t_gt.norm();
    if n == 0.0 {
        return Err(Error::DegenerateMetric);
    }
    Ok((t_gt - t_est).norm() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 1e-3 {
                return v.normalize();
            }
        }
    }

    fn rand_point(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    fn rand_pose(rng: &mut ChaCha8Rng) -> Pose {
        // random unit quaternion, scalar part kept positive
        let q = loop {
            let q = nalgebra::Vector4::new(
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if q.norm() > 1e-3 {
                break q.normalize();
            }
        };
        let (w, x, y, z) = (q[0].abs(), q[1], q[2], q[3]);
        let rot = Mat3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
            2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
        );
        Pose::new(rot, rand_point(rng, 10.0)).unwrap()
    }

    #[test]
    fn plane_residual_identity_pose() {
        let corr = PointToPlane::new(
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, 5.0),
        )
        .unwrap();
        assert_abs_diff_eq!(corr.residual(&Pose::identity()), -2.0);
    }

    #[test]
    fn plane_residual_translation_projection() {
        let corr = PointToPlane::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()).unwrap();
        let pose = Pose::new(Mat3::identity(), Vec3::new(4.0, 5.0, 6.0)).unwrap();
        assert_abs_diff_eq!(corr.residual(&pose), 4.0);
    }

    #[test]
    fn plane_residual_vanishes_on_consistent_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pose = rand_pose(&mut rng);
            let x = rand_point(&mut rng, 10.0);
            let corr = PointToPlane::new(x, rand_unit(&mut rng), pose.apply(&x)).unwrap();
            assert!(corr.residual(&pose).abs() < 1e-12);
        }
    }

    #[test]
    fn line_residual_kills_direction_component() {
        let corr = PointToLine::new(
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::zeros(),
        )
        .unwrap();
        let r = corr.residual(&Pose::identity());
        assert_abs_diff_eq!(r, Vec3::new(1.0, 2.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn line_residual_zero_on_line_and_orthogonal_to_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let pose = rand_pose(&mut rng);
            let x = rand_point(&mut rng, 10.0);
            let d = rand_unit(&mut rng);
            // anchor displaced along the line: residual still zero
            let on_line = PointToLine::new(x, d, pose.apply(&x) + d * rng.random_range(-5.0..5.0)).unwrap();
            assert!(on_line.residual(&pose).norm() < 1e-12);
            // generic anchor: residual orthogonal to d
            let generic = PointToLine::new(x, d, rand_point(&mut rng, 10.0)).unwrap();
            assert!(generic.residual(&pose).dot(&d).abs() <= 1e-12);
        }
    }

    #[test]
    fn point_residual_examples() {
        let same = PointToPoint::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(same.residual(&Pose::identity()), Vec3::zeros());

        let corr = PointToPoint::new(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()).unwrap();
        let pose = Pose::new(Mat3::identity(), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(corr.residual(&pose), Vec3::new(1.0, 1.0, 0.0));
    }

    #[test]
    fn point_residual_vanishes_at_planted_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let pose = rand_pose(&mut rng);
            let x = rand_point(&mut rng, 10.0);
            let corr = PointToPoint::new(x, pose.apply(&x)).unwrap();
            assert!(corr.residual(&pose).norm() < 1e-12);
        }
    }

    #[test]
    fn general_rows_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let one_plane = CorrespondenceSet::new(
            vec![PointToPlane::new(rand_point(&mut rng, 5.0), rand_unit(&mut rng), rand_point(&mut rng, 5.0)).unwrap()],
            vec![],
            vec![],
        );
        assert_eq!(one_plane.general_rows().len(), 1);
        assert_eq!(one_plane.effective_count(), 1);
    }

    #[test]
    fn general_rows_reproduce_direct_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pose = rand_pose(&mut rng);
            let corrs = CorrespondenceSet::new(
                vec![PointToPlane::new(rand_point(&mut rng, 10.0), rand_unit(&mut rng), rand_point(&mut rng, 10.0)).unwrap()],
                vec![PointToLine::new(rand_point(&mut rng, 10.0), rand_unit(&mut rng), rand_point(&mut rng, 10.0)).unwrap()],
                vec![PointToPoint::new(rand_point(&mut rng, 10.0), rand_point(&mut rng, 10.0)).unwrap()],
            );
            let rows = corrs.general_rows();
            assert_eq!(rows.len(), 7);
            assert!((rows[0].eval(&pose) - corrs.planes[0].residual(&pose)).abs() < 1e-12);
            let rl = corrs.lines[0].residual(&pose);
            let rp = corrs.points[0].residual(&pose);
            for i in 0..3 {
                assert!((rows[1 + i].eval(&pose) - rl[i]).abs() < 1e-12);
                assert!((rows[4 + i].eval(&pose) - rp[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plane_row_coefficients() {
        let n = Vec3::new(0.0, 1.0, 0.0);
        let y = Vec3::new(3.0, -2.0, 7.0);
        let corrs = CorrespondenceSet::new(
            vec![PointToPlane::new(Vec3::new(1.0, 1.0, 1.0), n, y).unwrap()],
            vec![],
            vec![],
        );
        let row = corrs.general_rows()[0];
        assert_eq!(row.a, n);
        assert_abs_diff_eq!(row.c, -n.dot(&y));
    }

    #[test]
    fn cost_single_plane_example() {
        let corr = PointToPlane::new(
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, 5.0),
        )
        .unwrap();
        let corrs = CorrespondenceSet::new(vec![corr], vec![], vec![]);
        assert_abs_diff_eq!(corrs.cost(&Pose::identity()), 4.0);
    }

    #[test]
    fn cost_zero_at_planted_pose_and_matches_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let pose = rand_pose(&mut rng);
            let mut planes = vec![];
            let mut lines = vec![];
            let mut points = vec![];
            for _ in 0..3 {
                let x = rand_point(&mut rng, 10.0);
                planes.push(PointToPlane::new(x, rand_unit(&mut rng), pose.apply(&x)).unwrap());
                let x = rand_point(&mut rng, 10.0);
                lines.push(PointToLine::new(x, rand_unit(&mut rng), pose.apply(&x)).unwrap());
                let x = rand_point(&mut rng, 10.0);
                points.push(PointToPoint::new(x, pose.apply(&x)).unwrap());
            }
            let corrs = CorrespondenceSet::new(planes, lines, points);
            assert!(corrs.cost(&pose) < 1e-20);

            let other = rand_pose(&mut rng);
            let direct = corrs.cost(&other);
            let via_rows: f64 = corrs.general_rows().iter().map(|r| r.eval(&other).powi(2)).sum();
            assert!((direct - via_rows).abs() <= 1e-10 * (1.0 + direct));
        }
    }

    #[test]
    fn cost_invariant_under_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pose = rand_pose(&mut rng);
        let mut planes = vec![];
        for _ in 0..6 {
            planes.push(
                PointToPlane::new(rand_point(&mut rng, 10.0), rand_unit(&mut rng), rand_point(&mut rng, 10.0)).unwrap(),
            );
        }
        let corrs = CorrespondenceSet::new(planes.clone(), vec![], vec![]);
        planes.reverse();
        let permuted = CorrespondenceSet::new(planes, vec![], vec![]);
        let (c1, c2) = (corrs.cost(&pose), permuted.cost(&pose));
        assert!((c1 - c2).abs() <= 1e-12 * (1.0 + c1));
    }

    #[test]
    fn rotation_error_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = rand_pose(&mut rng);
        assert!(rotation_error_deg(&pose.rotation, &pose.rotation) < 1e-12);

        let rx90 = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_abs_diff_eq!(rotation_error_deg(&(pose.rotation * rx90), &pose.rotation), 90.0, epsilon = 1e-9);
    }

    #[test]
    fn translation_error_examples() {
        let t_gt = Vec3::new(10.0, 0.0, 0.0);
        let t_est = Vec3::new(9.0, 0.0, 0.0);
        assert_abs_diff_eq!(translation_error_rel(&t_est, &t_gt).unwrap(), 0.1);
        assert!(matches!(
            translation_error_rel(&t_est, &Vec3::zeros()),
            Err(Error::DegenerateMetric)
        ));
    }

    #[test]
    fn unit_norm_validation() {
        let near = Vec3::new(1.0 + 5e-7, 0.0, 0.0);
        let p = PointToPlane::new(Vec3::zeros(), near, Vec3::zeros()).unwrap();
        assert!((p.n.norm() - 1.0).abs() <= 1e-12);
        assert!(PointToPlane::new(Vec3::zeros(), Vec3::new(1.1, 0.0, 0.0), Vec3::zeros()).is_err());
    }
}
